"""Differentiable kernels.

Layouts follow the usual channel-first convention: ``conv1d`` takes (B, C, L),
``conv2d`` takes (B, C, H, W). Every op checks shapes up front and raises
:class:`ShapeMismatch` naming the offending shapes.
"""
from __future__ import annotations

import contextlib
import contextvars

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from p2ptrack.errors import ShapeMismatch
from p2ptrack.nn.tensor import Tensor, as_tensor, make

_mac_counter = contextvars.ContextVar("p2ptrack_mac_counter", default=None)


class MacCounter:
    def __init__(self):
        self.total = 0


@contextlib.contextmanager
def count_macs():
    """Accumulate multiply-adds of linear/conv kernels run inside the block (whole batch)."""
    counter = MacCounter()
    token = _mac_counter.set(counter)
    try:
        yield counter
    finally:
        _mac_counter.reset(token)


def _add_macs(n):
    c = _mac_counter.get()
    if c is not None:
        c.total += int(n)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_broadcast(a, b, op):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"{op}: cannot broadcast {a.shape} with {b.shape}") from None


# elementwise ----------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    return make(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    return make(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    return make(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)
    return make(out, (x,), lambda g: (g * out,))


def square(x) -> Tensor:
    x = as_tensor(x)
    return make(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,))


def abs(x) -> Tensor:  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    return make(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return make(np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,))


def sum(x, axis=None, keepdims=False) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make(out, (x,), bw)


def mean(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    n = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def detach(x) -> Tensor:
    return Tensor(as_tensor(x).data)


# shape ops ------------------------------------------------------------------

def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeMismatch(f"reshape: cannot view {x.shape} as {shape}") from None
    return make(out, (x,), lambda g: (g.reshape(x.shape),))


def flatten(x, start_axis=1) -> Tensor:
    """Collapse all axes from ``start_axis`` on, in C order."""
    x = as_tensor(x)
    return reshape(x, x.shape[:start_axis] + (-1,))


def permute(x, axes) -> Tensor:
    x = as_tensor(x)
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeMismatch(f"permute: axes {axes} invalid for shape {x.shape}")
    inv = tuple(np.argsort(axes))
    return make(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def concat(xs, axis=0) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    ref = list(xs[0].shape)
    for x in xs[1:]:
        other = list(x.shape)
        if len(other) != len(ref) or any(o != r for i, (o, r) in enumerate(zip(other, ref)) if i != axis % len(ref)):
            raise ShapeMismatch(f"concat along {axis}: incompatible shapes {[t.shape for t in xs]}")
    out = np.concatenate([x.data for x in xs], axis=axis)
    splits = np.cumsum([x.shape[axis] for x in xs])[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return make(out, tuple(xs), bw)


def getitem(x, idx) -> Tensor:
    x = as_tensor(x)
    out = x.data[idx]

    def bw(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        return (full,)

    return make(out, (x,), bw)


def max_pool_over_axis(x, axis) -> Tensor:
    """Max over one axis; the gradient goes to the first maximal entry."""
    x = as_tensor(x)
    idx = np.argmax(x.data, axis=axis)
    out = np.take_along_axis(x.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)

    def bw(g):
        full = np.zeros_like(x.data)
        np.put_along_axis(full, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
        return (full,)

    return make(out, (x,), bw)


# dense kernels --------------------------------------------------------------

def linear(x, W, b=None) -> Tensor:
    """``x @ W.T + b`` over the last axis. W is (out, in)."""
    x, W = as_tensor(x), as_tensor(W)
    if W.ndim != 2 or x.shape[-1] != W.shape[1]:
        raise ShapeMismatch(f"linear: input {x.shape} vs weight {W.shape}")
    if b is not None:
        b = as_tensor(b)
        if b.shape != (W.shape[0],):
            raise ShapeMismatch(f"linear: bias {b.shape} vs weight {W.shape}")
    out = x.data @ W.data.T
    if b is not None:
        out = out + b.data
    _add_macs(out.size * W.shape[1])

    def bw(g):
        g2 = g.reshape(-1, W.shape[0])
        x2 = x.data.reshape(-1, W.shape[1])
        gx = g @ W.data
        gW = g2.T @ x2
        gb = g2.sum(axis=0) if b is not None else None
        return (gx, gW, gb) if b is not None else (gx, gW)

    parents = (x, W, b) if b is not None else (x, W)
    return make(out, parents, bw)


def conv1d(x, W, b=None, stride=1) -> Tensor:
    """Valid (unpadded) 1D convolution. x (B, Cin, L), W (Cout, Cin, k)."""
    x, W = as_tensor(x), as_tensor(W)
    if x.ndim != 3 or W.ndim != 3 or x.shape[1] != W.shape[1]:
        raise ShapeMismatch(f"conv1d: input {x.shape} vs weight {W.shape}")
    if b is not None:
        b = as_tensor(b)
        if b.shape != (W.shape[0],):
            raise ShapeMismatch(f"conv1d: bias {b.shape} vs weight {W.shape}")
    B, C, L = x.shape
    O, _, k = W.shape
    if L < k:
        raise ShapeMismatch(f"conv1d: length {L} shorter than kernel {k}")
    Lo = (L - k) // stride + 1
    if k == 1:
        xs = x.data[:, :, ::stride] if stride > 1 else x.data
        out = np.matmul(W.data[:, :, 0], xs)
    else:
        cols = sliding_window_view(x.data, k, axis=2)[:, :, ::stride]  # (B, C, Lo, k)
        out = np.einsum("bclk,ock->bol", cols, W.data, optimize=True)
    if b is not None:
        out = out + b.data[None, :, None]
    _add_macs(B * O * Lo * C * k)

    def bw(g):
        if k == 1:
            gW = np.einsum("bol,bcl->oc", g, xs, optimize=True)[:, :, None]
            gxs = np.matmul(W.data[:, :, 0].T, g)
            if stride > 1:
                gx = np.zeros_like(x.data)
                gx[:, :, ::stride] = gxs
            else:
                gx = gxs
        else:
            gW = np.einsum("bol,bclk->ock", g, cols, optimize=True)
            gx = np.zeros_like(x.data)
            for j in range(k):
                gx[:, :, j : j + stride * (Lo - 1) + 1 : stride] += np.einsum("oc,bol->bcl", W.data[:, :, j], g)
        grads = [gx, gW]
        if b is not None:
            grads.append(g.sum(axis=(0, 2)))
        return tuple(grads)

    parents = (x, W, b) if b is not None else (x, W)
    return make(out, parents, bw)


def conv2d(x, W, b=None, stride=1, padding=None) -> Tensor:
    """2D convolution, x (B, C, H, W), W (O, C, kh, kw).

    ``padding=None`` means ``k // 2`` (same-size output at stride 1). Output
    size is ``floor((H + 2p - k) / s) + 1``, so stride 2 halves even inputs.
    """
    x, W = as_tensor(x), as_tensor(W)
    if x.ndim != 4 or W.ndim != 4 or x.shape[1] != W.shape[1]:
        raise ShapeMismatch(f"conv2d: input {x.shape} vs weight {W.shape}")
    if b is not None:
        b = as_tensor(b)
        if b.shape != (W.shape[0],):
            raise ShapeMismatch(f"conv2d: bias {b.shape} vs weight {W.shape}")
    B, C, H, Wd = x.shape
    O, _, kh, kw = W.shape
    ph = kh // 2 if padding is None else padding
    pw = kw // 2 if padding is None else padding
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x.data
    Ho = (H + 2 * ph - kh) // stride + 1
    Wo = (Wd + 2 * pw - kw) // stride + 1
    if Ho < 1 or Wo < 1:
        raise ShapeMismatch(f"conv2d: input {x.shape} too small for kernel {W.shape}")
    # (B, C, Ho, Wo, kh, kw) -> (B, Ho, Wo, C, kh, kw) -> rows of patches
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :Ho, :Wo]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(B * Ho * Wo, C * kh * kw)
    Wm = W.data.reshape(O, C * kh * kw)
    out2 = cols @ Wm.T
    if b is not None:
        out2 += b.data
    out = np.ascontiguousarray(out2.reshape(B, Ho, Wo, O).transpose(0, 3, 1, 2))
    _add_macs(B * O * Ho * Wo * C * kh * kw)

    def bw(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(B * Ho * Wo, O)
        gW = (g2.T @ cols).reshape(W.shape)
        gcols = (g2 @ Wm).reshape(B, Ho, Wo, C, kh, kw)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i : i + stride * (Ho - 1) + 1 : stride, j : j + stride * (Wo - 1) + 1 : stride] += gcols[
                    :, :, :, :, i, j
                ].transpose(0, 3, 1, 2)
        gx = gxp[:, :, ph : ph + H, pw : pw + Wd] if (ph or pw) else gxp
        grads = [gx, gW]
        if b is not None:
            grads.append(g2.sum(axis=0))
        return tuple(grads)

    parents = (x, W, b) if b is not None else (x, W)
    return make(out, parents, bw)


def batch_norm(x, gamma, beta, running_mean, running_var, training, momentum=0.1, eps=1e-5) -> Tensor:
    """Normalize over every axis except 1 (channels).

    In training mode batch statistics are used and the running buffers are
    updated in place (unbiased variance, like common frameworks). In
    inference mode it is the affine map ``(x - mean) / sqrt(var + eps) * g + b``.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    C = x.shape[1]
    if gamma.shape != (C,) or beta.shape != (C,):
        raise ShapeMismatch(f"batch_norm: input {x.shape} vs gamma {gamma.shape} beta {beta.shape}")
    axes = tuple(a for a in range(x.ndim) if a != 1)
    bshape = [1] * x.ndim
    bshape[1] = C
    if training:
        m = x.size // C
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var * (m / max(m - 1, 1))
    else:
        mu, var = running_mean, running_var
    invstd = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = (x.data - mu.reshape(bshape)) * invstd.reshape(bshape)
    out = xhat * gamma.data.reshape(bshape) + beta.data.reshape(bshape)

    def bw(g):
        ggamma = (g * xhat).sum(axis=axes)
        gbeta = g.sum(axis=axes)
        gxhat = g * gamma.data.reshape(bshape)
        if training:
            m = x.size // C
            gx = (invstd.reshape(bshape) / m) * (
                m * gxhat
                - gxhat.sum(axis=axes).reshape(bshape)
                - xhat * (gxhat * xhat).sum(axis=axes).reshape(bshape)
            )
        else:
            gx = gxhat * invstd.reshape(bshape)
        return gx, ggamma, gbeta

    return make(out.astype(x.dtype), (x, gamma, beta), bw)
