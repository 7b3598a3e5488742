"""AdamW with decoupled weight decay and bias correction."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from p2ptrack.errors import MissingGrad


@dataclass
class OptimizerState:
    lr: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 1e-2
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_step(params, state: OptimizerState):
    """One in-place AdamW update of every trainable parameter.

    ``p <- p - lr*wd*p`` first, then the bias-corrected Adam step.
    """
    trainable = [p for p in params if getattr(p, "trainable", True)]
    for p in trainable:
        if p.grad is None:
            raise MissingGrad(f"parameter {getattr(p, 'name', '') or '<unnamed>'} has no gradient")
    state.step += 1
    b1, b2 = state.betas
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for i, p in enumerate(trainable):
        key = getattr(p, "name", "") or i
        g = p.grad.astype(np.float64)
        m = state.m.get(key)
        if m is None:
            m = np.zeros(p.shape)
            v = np.zeros(p.shape)
        else:
            v = state.v[key]
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.m[key] = m
        state.v[key] = v
        data = p.data.astype(np.float64)
        data = data - state.lr * state.weight_decay * data
        data = data - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data = data.astype(p.dtype)


class AdamW:
    def __init__(self, params, lr=1e-4, betas=(0.9, 0.999), eps=1e-8, weight_decay=1e-2):
        self.params = list(params)
        self.state = OptimizerState(lr=lr, betas=betas, eps=eps, weight_decay=weight_decay)

    @property
    def lr(self):
        return self.state.lr

    @lr.setter
    def lr(self, value):
        self.state.lr = value

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        adamw_step(self.params, self.state)
