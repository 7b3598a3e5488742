import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from p2ptrack.errors import ShapeMismatch
from p2ptrack.loss import LossConfig, regression_loss, residual
from p2ptrack.nn import Parameter, finite_diff_check

NLL = LossConfig("gaussian_nll")
L1 = LossConfig("l1")


def nll_pred(means, log_s=0.0):
    means = np.atleast_2d(np.asarray(means, dtype=np.float64))
    return np.concatenate([means, np.full_like(means, log_s)], axis=1)


def test_perfect_prediction_unit_scale_is_zero():
    t = np.array([[0.5, -0.2, 0.1, 0.3]])
    assert regression_loss(nll_pred(t), t, NLL).item() == 0.0


def test_unit_residual_gives_half():
    assert regression_loss(nll_pred([1.0, 0, 0, 0]), np.zeros((1, 4)), NLL).item() == pytest.approx(0.5)


def test_yaw_wrap_residual():
    r = residual(np.array([[0, 0, 0, 3.1]]), np.array([[0, 0, 0, -3.1]]), NLL)
    assert r.data[0, 3] == pytest.approx(6.2 - 2 * math.pi, abs=1e-12)
    assert r.data[0, 3] == pytest.approx(-0.0832, abs=1e-4)
    raw = residual(np.array([[0, 0, 0, 3.1]]), np.array([[0, 0, 0, -3.1]]), LossConfig(yaw_wrap=False))
    assert raw.data[0, 3] == pytest.approx(6.2)


def test_l1_is_mean_abs():
    pred = np.array([[1.0, -2.0, 0.0, 0.5], [0.0, 0.0, 1.0, 0.0]])
    assert regression_loss(pred, np.zeros((2, 4)), L1).item() == pytest.approx(4.5 / 8)


def test_batch_mean():
    a = regression_loss(nll_pred([1.0, 0, 0, 0]), np.zeros((1, 4)), NLL).item()
    two = regression_loss(nll_pred([[1.0, 0, 0, 0], [0, 0, 0, 0]]), np.zeros((2, 4)), NLL).item()
    assert two == pytest.approx(a / 2)


def test_yaw_weight():
    cfg = LossConfig("l1", yaw_weight=3.0)
    assert regression_loss(np.array([[0, 0, 0, 0.4]]), np.zeros((1, 4)), cfg).item() == pytest.approx(0.3)


@pytest.mark.parametrize("cfg,pred,target", [
    (NLL, np.zeros((2, 4)), np.zeros((2, 4))),
    (L1, np.zeros((2, 8)), np.zeros((2, 4))),
    (L1, np.zeros((2, 4)), np.zeros((3, 4))),
])
def test_shape_errors(cfg, pred, target):
    with pytest.raises(ShapeMismatch):
        regression_loss(pred, target, cfg)


def test_unknown_kind():
    with pytest.raises(ValueError):
        LossConfig("huber")


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4), st.lists(st.floats(-3, 3), min_size=4, max_size=4),
       st.integers(-2, 2), st.integers(-2, 2))
def test_invariant_to_full_turns(p, t, kp, kt):
    p, t = np.array([p]), np.array([t])
    p2, t2 = p.copy(), t.copy()
    p2[0, 3] += 2 * math.pi * kp
    t2[0, 3] += 2 * math.pi * kt
    for cfg in (NLL, L1):
        pred = nll_pred(p, 0.3) if cfg is NLL else p
        pred2 = nll_pred(p2, 0.3) if cfg is NLL else p2
        assert regression_loss(pred, t, cfg).item() == pytest.approx(regression_loss(pred2, t2, cfg).item(), abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(-3, 3))
def test_nll_bounded_by_minimum_over_scale(r, s):
    # min over s of s + r^2 exp(-2s)/2 is at exp(2s) = r^2, value log|r| + 1/2
    val = regression_loss(nll_pred([r, 0, 0, 0], 0.0) * 0 + np.array([[r, 0, 0, 0, s, 0, 0, 0]]),
                          np.zeros((1, 4)), NLL).item()
    if abs(r) > 1e-6:
        assert val >= math.log(abs(r)) + 0.5 - 1e-9


def test_l1_nonnegative(rng):
    assert regression_loss(rng.normal(size=(5, 4)), rng.normal(size=(5, 4)), L1).item() >= 0


@pytest.mark.parametrize("cfg", [NLL, L1])
def test_gradient_matches_finite_differences(cfg, rng):
    width = 8 if cfg.probabilistic else 4
    pred = Parameter(rng.normal(size=(6, width)))
    target = rng.normal(size=(6, 4))
    target[0, 3] = 3.0
    pred.data[0, 3] = -3.0  # across the wrap
    rep = finite_diff_check(lambda: regression_loss(pred, target, cfg), [pred], tolerance=1e-6, h=1e-5, floor=1e-8)
    assert rep.passed, rep.failures()
