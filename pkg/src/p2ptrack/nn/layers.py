"""Module tree: parameter naming, train/eval mode, and the conv/linear blocks."""
from __future__ import annotations

import math

import numpy as np

from p2ptrack.nn import functional as F
from p2ptrack.nn.tensor import Parameter, Tensor


class Module:
    """Base class. Child modules and parameters are discovered from attributes.

    Attributes that are lists/tuples of modules are walked too. A module or
    parameter reachable by several paths is reported once, under the first path.
    """

    training = True

    def _children(self):
        for key, val in vars(self).items():
            if isinstance(val, (Module, Parameter)):
                yield key, val
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, (Module, Parameter)):
                        yield f"{key}.{i}", item

    def named_parameters(self, prefix=""):
        seen = set()
        out = []
        self._collect(prefix, seen, out, "params")
        return out

    def named_buffers(self, prefix=""):
        seen = set()
        out = []
        self._collect(prefix, seen, out, "buffers")
        return out

    def _collect(self, prefix, seen, out, kind):
        if kind == "buffers":
            for key, arr in getattr(self, "_buffers", {}).items():
                out.append((f"{prefix}{key}", arr))
        for key, child in self._children():
            if id(child) in seen:
                continue
            seen.add(id(child))
            if isinstance(child, Parameter):
                if kind == "params":
                    out.append((f"{prefix}{key}", child))
            else:
                child._collect(f"{prefix}{key}.", seen, out, kind)

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def assign_names(self):
        for name, p in self.named_parameters():
            p.name = name
        return self

    def modules(self):
        seen, out, stack = set(), [], [self]
        while stack:
            m = stack.pop()
            if id(m) in seen:
                continue
            seen.add(id(m))
            out.append(m)
            stack.extend(c for _, c in reversed(list(m._children())) if isinstance(c, Module))
        return out

    def train(self, mode=True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self):
        """Ordered name -> array for parameters then buffers."""
        state = {name: p.data for name, p in self.named_parameters()}
        for name, arr in self.named_buffers():
            state[name] = arr
        return state

    def load_state_dict(self, state):
        for name, p in self.named_parameters():
            if name not in state:
                raise KeyError(f"missing parameter {name!r} in state")
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ValueError(f"{name}: shape {arr.shape} does not match {p.shape}")
            p.data = arr.astype(p.dtype).copy()
        for name, buf in self.named_buffers():
            if name in state:
                buf[...] = state[name]

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def kaiming_uniform(rng, shape, fan_in, dtype):
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Linear(Module):
    def __init__(self, n_in, n_out, rng, dtype=np.float32, bias=True, zero_init=False):
        w = np.zeros((n_out, n_in), dtype) if zero_init else kaiming_uniform(rng, (n_out, n_in), n_in, dtype)
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(n_out, dtype)) if bias else None

    def forward(self, x):
        return F.linear(x, self.weight, self.bias)


class Conv1d(Module):
    def __init__(self, c_in, c_out, rng, kernel=1, stride=1, dtype=np.float32, bias=True, zero_init=False):
        shape = (c_out, c_in, kernel)
        w = np.zeros(shape, dtype) if zero_init else kaiming_uniform(rng, shape, c_in * kernel, dtype)
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(c_out, dtype)) if bias else None
        self.stride = stride

    def forward(self, x):
        return F.conv1d(x, self.weight, self.bias, stride=self.stride)


class Conv2d(Module):
    def __init__(self, c_in, c_out, rng, kernel=3, stride=1, dtype=np.float32, bias=True):
        shape = (c_out, c_in, kernel, kernel)
        self.weight = Parameter(kaiming_uniform(rng, shape, c_in * kernel * kernel, dtype))
        self.bias = Parameter(np.zeros(c_out, dtype)) if bias else None
        self.stride = stride

    def forward(self, x):
        return F.conv2d(x, self.weight, self.bias, stride=self.stride)


class BatchNorm(Module):
    """Per-channel (axis 1) batch normalization with running statistics."""

    def __init__(self, channels, dtype=np.float32, momentum=0.1, eps=1e-5):
        self.gamma = Parameter(np.ones(channels, dtype))
        self.beta = Parameter(np.zeros(channels, dtype))
        self._buffers = {
            "running_mean": np.zeros(channels, dtype),
            "running_var": np.ones(channels, dtype),
        }
        self.momentum = momentum
        self.eps = eps

    @property
    def running_mean(self):
        return self._buffers["running_mean"]

    @property
    def running_var(self):
        return self._buffers["running_var"]

    def forward(self, x):
        return F.batch_norm(
            x, self.gamma, self.beta, self.running_mean, self.running_var,
            self.training, self.momentum, self.eps,
        )


class ConvBNReLU1d(Module):
    """Kernel-k Conv1d -> BatchNorm -> ReLU."""

    def __init__(self, c_in, c_out, rng, kernel=1, stride=1, dtype=np.float32):
        # no conv bias: batch norm subtracts it again
        self.conv = Conv1d(c_in, c_out, rng, kernel, stride, dtype, bias=False)
        self.bn = BatchNorm(c_out, dtype)

    def forward(self, x):
        return F.relu(self.bn(self.conv(x)))


class ConvBNReLU2d(Module):
    def __init__(self, c_in, c_out, rng, kernel=3, stride=1, dtype=np.float32):
        self.conv = Conv2d(c_in, c_out, rng, kernel, stride, dtype, bias=False)
        self.bn = BatchNorm(c_out, dtype)

    def forward(self, x):
        return F.relu(self.bn(self.conv(x)))


class LinearBNReLU(Module):
    def __init__(self, n_in, n_out, rng, dtype=np.float32):
        self.fc = Linear(n_in, n_out, rng, dtype, bias=False)
        self.bn = BatchNorm(n_out, dtype)

    def forward(self, x):
        return F.relu(self.bn(self.fc(x)))


class Sequential(Module):
    def __init__(self, *layers):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x


def count_parameters(module: Module) -> int:
    return int(sum(p.size for p in module.parameters()))


def as_input(x, dtype) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=dtype))
