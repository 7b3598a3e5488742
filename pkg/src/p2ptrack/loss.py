"""Regression objective for the 4-DOF motion output.

``gaussian_nll`` is the per-dimension Gaussian negative log-likelihood with a
learned log-scale, ``log s + r^2 / (2 s^2)``, summed over the four dimensions
and averaged over the batch. It is the base density of residual
log-likelihood estimation without the learned flow correction. ``l1`` is the
mean absolute residual. The yaw residual is wrapped to (-pi, pi] first.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from p2ptrack.errors import ShapeMismatch
from p2ptrack.geometry import wrap_angle
from p2ptrack.nn import functional as F
from p2ptrack.nn.tensor import as_tensor


@dataclass
class LossConfig:
    kind: str = "gaussian_nll"
    yaw_weight: float = 1.0
    yaw_wrap: bool = True

    def __post_init__(self):
        if self.kind not in ("gaussian_nll", "l1"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.yaw_weight < 0:
            raise ValueError("yaw_weight must be >= 0")

    @property
    def probabilistic(self) -> bool:
        return self.kind == "gaussian_nll"


def residual(pred_means, target, cfg: LossConfig):
    """pred - target with the yaw column wrapped (a constant shift, gradient 1)."""
    r = F.sub(pred_means, target)
    if not cfg.yaw_wrap:
        return r
    shift = np.zeros_like(r.data)
    shift[:, 3] = wrap_angle(r.data[:, 3]) - r.data[:, 3]
    return F.add(r, shift)


def regression_loss(pred, target, cfg: LossConfig | None = None):
    cfg = cfg or LossConfig()
    pred = as_tensor(pred)
    target = np.asarray(target, dtype=pred.dtype)
    if target.ndim == 1:
        target = target[None]
    want = 8 if cfg.probabilistic else 4
    if pred.ndim != 2 or pred.shape[1] != want or target.shape != (pred.shape[0], 4):
        raise ShapeMismatch(f"{cfg.kind}: prediction {pred.shape} vs target {target.shape} (need B x {want})")
    weights = np.array([1.0, 1.0, 1.0, cfg.yaw_weight], dtype=pred.dtype)
    r = residual(pred[:, :4], target, cfg)
    if cfg.kind == "l1":
        return F.mean(F.mul(F.abs(r), weights))
    log_s = pred[:, 4:]
    nll = F.add(log_s, F.mul(F.mul(F.square(r), F.exp(F.mul(log_s, -2.0))), 0.5))
    return F.mul(F.sum(F.mul(nll, weights)), 1.0 / pred.shape[0])
