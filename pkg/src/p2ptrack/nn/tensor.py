"""Shaped arrays with a gradient slot and a recorded reverse-mode graph."""
from __future__ import annotations

import contextlib
import contextvars

import numpy as np

from p2ptrack.errors import NotScalar

_grad_enabled = contextvars.ContextVar("p2ptrack_grad_enabled", default=True)


@contextlib.contextmanager
def no_grad():
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def grad_enabled() -> bool:
    return _grad_enabled.get()


class Tensor:
    """An ndarray plus an optional gradient and the closure that propagates it.

    ``_backward`` maps the upstream gradient to one gradient per parent (or
    ``None`` for parents that need none).
    """

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        arr = np.asarray(data)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    # operator sugar; implementations live in functional
    def __add__(self, other):
        from p2ptrack.nn import functional as F

        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from p2ptrack.nn import functional as F

        return F.sub(self, other)

    def __rsub__(self, other):
        from p2ptrack.nn import functional as F

        return F.sub(other, self)

    def __mul__(self, other):
        from p2ptrack.nn import functional as F

        return F.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from p2ptrack.nn import functional as F

        return F.mul(self, -1.0)

    def __getitem__(self, idx):
        from p2ptrack.nn import functional as F

        return F.getitem(self, idx)


class Parameter(Tensor):
    """A trainable leaf tensor. ``name`` is filled in by the owning module tree."""

    def __init__(self, data, name: str = "", trainable: bool = True):
        super().__init__(data, requires_grad=trainable)
        self.name = name
        self.trainable = trainable

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape}, dtype={self.dtype})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make(data, parents, backward_fn) -> Tensor:
    """Wrap an op result, recording the graph only when some parent needs grad."""
    if grad_enabled() and any(p.requires_grad for p in parents):
        return Tensor(data, True, tuple(parents), backward_fn)
    return Tensor(data)


def _topo_order(root: Tensor):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor):
    """Populate ``.grad`` on every leaf reachable from the scalar ``loss``.

    Leaf gradients accumulate across calls; call ``zero_grad`` between steps.
    Intermediate tensors do not keep gradients.
    """
    if loss.data.size != 1:
        raise NotScalar(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topo_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
