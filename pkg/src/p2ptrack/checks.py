"""End-to-end gradient check of a network plus loss at the tiny configuration."""
from __future__ import annotations

import numpy as np

from p2ptrack.loss import LossConfig, regression_loss
from p2ptrack.model import build_model, example_inputs, tiny_config
from p2ptrack.nn.gradcheck import finite_diff_check


def gradcheck_model(variant="p2p_point", tolerance=1e-4, max_coords=20, seed=0, batch=3, loss_kind="gaussian_nll", h=1e-6, floor=1e-5):
    """Finite-difference check of every parameter tensor at 64-bit.

    The zero-initialized output layer would make every upstream gradient zero
    and the check vacuous, so all parameters are first perturbed with small
    random values.

    Some gradients are exactly zero by construction (a shift that a later
    batch norm removes); their central differences are pure rounding noise of
    order 1e-10, hence the absolute floor of ``floor``.
    """
    loss_cfg = LossConfig(kind=loss_kind)
    cfg = tiny_config(variant, probabilistic=loss_cfg.probabilistic)
    model = build_model(cfg, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed + 1)
    for p in model.parameters():
        p.data = p.data + rng.normal(0.0, 0.05, size=p.shape)
    model.train()
    prev, curr = example_inputs(cfg, batch=batch, dtype=np.float64, rng=rng)
    target = rng.normal(0.0, 0.3, size=(batch, 4))

    def loss_fn():
        return regression_loss(model(prev, curr), target, loss_cfg)

    return finite_diff_check(loss_fn, model.parameters(), tolerance=tolerance, max_coords=max_coords, h=h, seed=seed, floor=floor)
