"""Central finite-difference check of reverse-mode gradients."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# gradients smaller than this are compared on an absolute scale
GRAD_FLOOR = 1e-6


@dataclass
class GradcheckReport:
    tolerance: float
    max_rel_error: dict = field(default_factory=dict)
    n_checked: dict = field(default_factory=dict)

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.worst <= self.tolerance

    def failures(self):
        return {k: v for k, v in self.max_rel_error.items() if v > self.tolerance}


def relative_error(analytic, numeric, floor=GRAD_FLOOR):
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def finite_diff_check(loss_fn, params, tolerance=1e-4, max_coords=100, h=1e-5, seed=0, exclude=None, floor=GRAD_FLOOR):
    """Compare ``backward`` gradients with central differences.

    ``loss_fn()`` must rebuild the graph and return a scalar Tensor. At most
    ``max_coords`` randomly chosen coordinates are probed per parameter.
    ``exclude`` maps a parameter name to a boolean mask of coordinates to skip
    (e.g. ReLU inputs sitting exactly on the kink). ``floor`` is the smallest
    denominator of the relative error, so gradients below it are compared on
    an absolute scale.
    """
    params = list(params)
    rng = np.random.default_rng(seed)
    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    report = GradcheckReport(tolerance)
    for i, p in enumerate(params):
        name = getattr(p, "name", "") or f"param{i}"
        analytic = np.zeros(p.shape) if p.grad is None else p.grad.astype(np.float64)
        candidates = np.arange(p.size)
        if exclude and name in exclude:
            candidates = candidates[~np.asarray(exclude[name]).reshape(-1)]
        if candidates.size == 0:
            continue
        picks = rng.choice(candidates, size=min(max_coords, candidates.size), replace=False)
        flat = p.data.reshape(-1)
        errs = []
        for j in picks:
            orig = flat[j]
            flat[j] = orig + h
            fp = loss_fn().item()
            flat[j] = orig - h
            fm = loss_fn().item()
            flat[j] = orig
            numeric = (fp - fm) / (2 * h)
            errs.append(relative_error(analytic.reshape(-1)[j], numeric, floor))
        report.max_rel_error[name] = float(np.max(errs))
        report.n_checked[name] = len(picks)
    return report
