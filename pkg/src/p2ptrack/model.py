"""P2P-point / P2P-voxel networks and the preliminary fusion variants.

All variants map a (previous, current) pair of canonical search-region inputs
to a 4-DOF motion ``(dx, dy, dz, dyaw)``:

* ``p2p_point``: shared PointNet embedding per frame -> stack the two global
  features as rows (part-to-part fusion over channels) -> mixer stages that
  alternate kernel-1 convs over the row and channel axes -> max over rows -> MLP.
* ``p2p_voxel``: shared 2D conv embedding of each voxel grid (height folded
  into channels) -> channel concat (part-to-part fusion over cells) -> 2D conv
  neck -> flatten + linear -> MLP.
* ``ablate_merged``: one embedding of the union of both clouds.
* ``ablate_temporal``: as merged, with a 0/1 frame flag as a fourth channel.
* ``ablate_dual_concat``: two embeddings, concatenated feature vector -> MLP.

When ``probabilistic`` is set the head also emits 4 log-scales, giving an
(B, 8) output: means then log-scales.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from p2ptrack.errors import ShapeMismatch, VariantInputMismatch
from p2ptrack.geometry import MotionDelta
from p2ptrack.nn import functional as F
from p2ptrack.nn.layers import (
    Conv1d,
    ConvBNReLU1d,
    ConvBNReLU2d,
    LinearBNReLU,
    Module,
    Sequential,
    as_input,
)
from p2ptrack.nn.tensor import no_grad

VARIANTS = ("p2p_point", "p2p_voxel", "ablate_merged", "ablate_temporal", "ablate_dual_concat")
POINT_VARIANTS = ("p2p_point", "ablate_merged", "ablate_temporal", "ablate_dual_concat")


def _tuplify(x):
    if isinstance(x, (list, tuple)):
        return tuple(_tuplify(v) for v in x)
    return x


@dataclass
class ModelConfig:
    variant: str = "p2p_point"
    n_points: int = 1024
    embed_widths: tuple = (64, 128, 256, 1024)
    # (row width, channel width, repeats) per mixer stage
    mixer_stages: tuple = ((64, 1024, 2), (128, 1024, 2), (256, 1024, 2))
    mixer_order: str = "spatial_first"
    head_widths: tuple = (512, 256, 128, 4)
    voxel_dims: tuple = (128, 128, 20)
    voxel_features: int = 2
    voxel_embed_widths: tuple = (32, 64, 128)
    # stages of (kernel, channels, stride, repeats) groups
    voxel_neck: tuple = (
        ((3, 256, 1, 3),),
        ((3, 512, 2, 1), (3, 512, 1, 2)),
        ((3, 1024, 2, 1), (3, 1024, 1, 2)),
    )
    voxel_linear: int = 1024
    weight_shared_backbone: bool = True
    probabilistic: bool = False
    motion_frame: str = "canonical"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("embed_widths", "mixer_stages", "head_widths", "voxel_dims", "voxel_embed_widths", "voxel_neck"):
            setattr(self, name, _tuplify(getattr(self, name)))
        self.validate()

    def validate(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.head_widths[-1] != 4:
            raise ValueError("head_widths must end in 4 (the 4-DOF output)")
        if self.mixer_order not in ("spatial_first", "channel_first"):
            raise ValueError(f"unknown mixer_order {self.mixer_order!r}")
        if self.motion_frame not in ("canonical", "world"):
            raise ValueError(f"unknown motion_frame {self.motion_frame!r}")

    @property
    def embed_channels(self) -> int:
        return self.embed_widths[-1]

    @property
    def input_channels(self) -> int:
        return 4 if self.variant == "ablate_temporal" else 3

    @property
    def is_voxel(self) -> bool:
        return self.variant == "p2p_voxel"

    def to_dict(self):
        return json.loads(json.dumps(asdict(self)))

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def with_variant(self, variant):
        return replace(self, variant=variant)


def tiny_config(variant="p2p_point", **kw) -> ModelConfig:
    """N=64 points / 16x16x8 grid, C=64: small enough for finite differences."""
    base = dict(
        variant=variant,
        n_points=64,
        embed_widths=(16, 32, 64),
        mixer_stages=((8, 64, 1), (16, 64, 1)),
        head_widths=(32, 16, 4),
        voxel_dims=(16, 16, 8),
        voxel_embed_widths=(8, 8, 16),
        voxel_neck=(((3, 32, 1, 1),), ((3, 32, 2, 1),)),
        voxel_linear=32,
    )
    base.update(kw)
    return ModelConfig(**base)


def desk_config(variant="p2p_point", **kw) -> ModelConfig:
    """Reduced widths for single-core CPU training runs."""
    base = dict(
        variant=variant,
        n_points=256,
        embed_widths=(32, 64, 128),
        mixer_stages=((16, 128, 1), (32, 128, 1), (64, 128, 1)),
        head_widths=(128, 64, 32, 4),
        voxel_dims=(32, 32, 10),
        voxel_embed_widths=(16, 32, 32),
        voxel_neck=(((3, 64, 1, 1),), ((3, 64, 2, 1),), ((3, 128, 2, 1),)),
        voxel_linear=128,
    )
    base.update(kw)
    return ModelConfig(**base)


def _fmt(shape):
    return "×".join(str(s) for s in shape)


class _Trace:
    def __init__(self, sink):
        self.sink = sink

    def __call__(self, label, shape):
        if self.sink is not None:
            self.sink.append((label, _fmt(shape)))


class PointEmbed(Module):
    """Shared per-point kernel-1 conv stack followed by a max over points."""

    def __init__(self, c_in, widths, rng, dtype):
        layers, prev = [], c_in
        for w in widths:
            layers.append(ConvBNReLU1d(prev, w, rng, dtype=dtype))
            prev = w
        self.layers = layers

    def forward(self, pts):
        x = F.permute(pts, (0, 2, 1))  # (B, c, N)
        for layer in self.layers:
            x = layer(x)
        return F.max_pool_over_axis(x, 2)  # (B, C)


class MixerStage(Module):
    """Kernel-1 conv over rows, permute, kernel-1 conv over channels, permute back."""

    def __init__(self, rows_in, rows_out, ch_in, ch_out, repeats, order, rng, dtype):
        self.spatial = [ConvBNReLU1d(rows_in if i == 0 else rows_out, rows_out, rng, dtype=dtype) for i in range(repeats)]
        self.channel = [ConvBNReLU1d(ch_in if i == 0 else ch_out, ch_out, rng, dtype=dtype) for i in range(repeats)]
        self.order = order

    def _rows(self, x):
        for layer in self.spatial:
            x = layer(x)
        return x

    def _channels(self, x):
        x = F.permute(x, (0, 2, 1))
        for layer in self.channel:
            x = layer(x)
        return F.permute(x, (0, 2, 1))

    def forward(self, x):  # (B, D, C)
        if self.order == "spatial_first":
            return self._channels(self._rows(x))
        return self._rows(self._channels(x))


class MotionHead(Module):
    """Kernel-1 conv MLP on a (B, C) feature; last layer zero-initialized."""

    def __init__(self, c_in, widths, rng, dtype, probabilistic=False):
        layers, prev = [], c_in
        for w in widths[:-1]:
            layers.append(ConvBNReLU1d(prev, w, rng, dtype=dtype))
            prev = w
        self.layers = layers
        self.out = Conv1d(prev, widths[-1], rng, dtype=dtype, zero_init=True)
        self.log_scale = Conv1d(prev, widths[-1], rng, dtype=dtype, zero_init=True) if probabilistic else None

    def forward(self, feat):
        B, C = feat.shape
        x = F.reshape(feat, (B, C, 1))
        for layer in self.layers:
            x = layer(x)
        mu = F.reshape(self.out(x), (B, -1))
        if self.log_scale is None:
            return mu
        return F.concat([mu, F.reshape(self.log_scale(x), (B, -1))], axis=1)


class VoxelEmbed(Module):
    """Three stages of (stride-2, stride-1) 3x3 conv blocks; height folded into channels."""

    def __init__(self, c_in, widths, rng, dtype):
        blocks, prev = [], c_in
        for w in widths:
            blocks.append(ConvBNReLU2d(prev, w, rng, 3, 2, dtype))
            blocks.append(ConvBNReLU2d(w, w, rng, 3, 1, dtype))
            prev = w
        self.blocks = blocks

    def forward(self, grid):  # (B, W, L, H, F)
        B, W, L, H, Fc = grid.shape
        x = F.permute(F.reshape(grid, (B, W, L, H * Fc)), (0, 3, 1, 2))
        for blk in self.blocks:
            x = blk(x)
        return x


class _Base(Module):
    def __init__(self, config: ModelConfig):
        self.config = config

    @property
    def dtype(self):
        return self.parameters()[0].dtype

    def _check_points(self, x, label):
        x = as_input(x, self.dtype)
        if x.ndim != 3:
            raise VariantInputMismatch(
                f"{self.config.variant} expects point clouds (B, N, {self.config.input_channels}), got {label} {x.shape}"
            )
        if x.shape[2] != self.config.input_channels:
            raise ShapeMismatch(f"{label}: expected {self.config.input_channels} channels, got {x.shape}")
        return x

    def predict(self, prev, curr):
        """Motion means as MotionDelta list; runs in inference mode without a graph."""
        was = self.training
        self.eval()
        try:
            with no_grad():
                out = self(prev, curr).data
        finally:
            self.train(was)
        return [MotionDelta.from_array(row[:4]) for row in np.asarray(out, dtype=np.float64)]


class P2PPoint(_Base):
    def __init__(self, config, rng, dtype=np.float32):
        super().__init__(config)
        c = config
        self.embed = PointEmbed(c.input_channels, c.embed_widths, rng, dtype)
        self.embed_curr = self.embed if c.weight_shared_backbone else PointEmbed(c.input_channels, c.embed_widths, rng, dtype)
        stages, rows, ch = [], 2, c.embed_channels
        for rows_out, ch_out, repeats in c.mixer_stages:
            stages.append(MixerStage(rows, rows_out, ch, ch_out, repeats, c.mixer_order, rng, dtype))
            rows, ch = rows_out, ch_out
        self.stages = stages
        self.head = MotionHead(ch, c.head_widths, rng, dtype, c.probabilistic)

    def embed_pair(self, prev, curr):
        return self.embed(prev), self.embed_curr(curr)

    def fuse(self, f_prev, f_curr):
        if f_prev.shape != f_curr.shape:
            raise ShapeMismatch(f"fuse: {f_prev.shape} vs {f_curr.shape}")
        B, C = f_prev.shape
        return F.concat([F.reshape(f_prev, (B, 1, C)), F.reshape(f_curr, (B, 1, C))], axis=1)

    def motion_model(self, fpp, trace=None):
        t = _Trace(trace)
        x = fpp
        for stage in self.stages:
            x = stage(x)
            t("neck", x.shape[1:])
        return x

    def head_forward(self, fused, trace=None):
        t = _Trace(trace)
        pooled = F.max_pool_over_axis(fused, 1)
        t("maxpool", (1,) + pooled.shape[1:])
        out = self.head(pooled)
        t("head", (1, 4))
        return out

    def forward(self, prev, curr, trace=None):
        prev = self._check_points(prev, "prev")
        curr = self._check_points(curr, "curr")
        t = _Trace(trace)
        f_prev, f_curr = self.embed_pair(prev, curr)
        t("embed", (1,) + f_prev.shape[1:])
        fpp = self.fuse(f_prev, f_curr)
        t("fuse", fpp.shape[1:])
        return self.head_forward(self.motion_model(fpp, trace), trace)


class P2PVoxel(_Base):
    def __init__(self, config, rng, dtype=np.float32):
        super().__init__(config)
        c = config
        c_in = c.voxel_dims[2] * c.voxel_features
        self.embed = VoxelEmbed(c_in, c.voxel_embed_widths, rng, dtype)
        self.embed_curr = self.embed if c.weight_shared_backbone else VoxelEmbed(c_in, c.voxel_embed_widths, rng, dtype)
        stages, prev = [], 2 * c.voxel_embed_widths[-1]
        for group in c.voxel_neck:
            blocks = []
            for k, ch, s, r in group:
                for _ in range(r):
                    blocks.append(ConvBNReLU2d(prev, ch, rng, k, s, dtype))
                    prev = ch
            stages.append(Sequential(*blocks))
        self.stages = stages
        side_w, side_l = c.voxel_dims[0], c.voxel_dims[1]
        for _ in c.voxel_embed_widths:
            side_w, side_l = (side_w - 1) // 2 + 1, (side_l - 1) // 2 + 1
        for group in c.voxel_neck:
            for _, _, s, r in group:
                for _ in range(r):
                    side_w = (side_w - 1) // s + 1
                    side_l = (side_l - 1) // s + 1
        self.flat_dim = prev * side_w * side_l
        self.fc = LinearBNReLU(self.flat_dim, c.voxel_linear, rng, dtype)
        self.head = MotionHead(c.voxel_linear, c.head_widths, rng, dtype, c.probabilistic)

    def _check_grid(self, x, label):
        x = as_input(x, self.dtype)
        c = self.config
        if x.ndim != 5:
            raise VariantInputMismatch(f"p2p_voxel expects voxel grids (B, W, L, H, F), got {label} {x.shape}")
        if tuple(x.shape[1:]) != tuple(c.voxel_dims) + (c.voxel_features,):
            raise ShapeMismatch(f"{label}: expected grid {tuple(c.voxel_dims) + (c.voxel_features,)}, got {x.shape[1:]}")
        return x

    def embed_pair(self, prev, curr):
        return self.embed(prev), self.embed_curr(curr)

    def fuse(self, f_prev, f_curr):
        if f_prev.shape != f_curr.shape:
            raise ShapeMismatch(f"fuse: {f_prev.shape} vs {f_curr.shape}")
        return F.concat([f_prev, f_curr], axis=1)

    def forward(self, prev, curr, trace=None):
        prev = self._check_grid(prev, "prev")
        curr = self._check_grid(curr, "curr")
        t = _Trace(trace)
        f_prev, f_curr = self.embed_pair(prev, curr)
        t("embed", _hwc(f_prev))
        x = self.fuse(f_prev, f_curr)
        t("fuse", _hwc(x))
        for stage in self.stages:
            x = stage(x)
            t("neck", _hwc(x))
        flat = self.fc(F.flatten(x))
        t("linear", (1,) + flat.shape[1:])
        out = self.head(flat)
        t("head", (1, 4))
        return out


def _hwc(x):
    return (x.shape[2], x.shape[3], x.shape[1])


class MergedPoint(_Base):
    """One embedding over the union cloud (optionally with a frame-flag channel)."""

    def __init__(self, config, rng, dtype=np.float32):
        super().__init__(config)
        self.embed = PointEmbed(config.input_channels, config.embed_widths, rng, dtype)
        self.head = MotionHead(config.embed_channels, config.head_widths, rng, dtype, config.probabilistic)

    def forward(self, prev, curr, trace=None):
        prev = self._check_points(prev, "prev")
        curr = self._check_points(curr, "curr")
        feat = self.embed(F.concat([prev, curr], axis=1))
        _Trace(trace)("embed", (1,) + feat.shape[1:])
        return self.head(feat)


class DualConcat(_Base):
    """Two embeddings, one feature vector per frame, concatenated before the MLP."""

    def __init__(self, config, rng, dtype=np.float32):
        super().__init__(config)
        c = config
        self.embed = PointEmbed(c.input_channels, c.embed_widths, rng, dtype)
        self.embed_curr = self.embed if c.weight_shared_backbone else PointEmbed(c.input_channels, c.embed_widths, rng, dtype)
        self.head = MotionHead(2 * c.embed_channels, c.head_widths, rng, dtype, c.probabilistic)

    def forward(self, prev, curr, trace=None):
        prev = self._check_points(prev, "prev")
        curr = self._check_points(curr, "curr")
        feat = F.concat([self.embed(prev), self.embed_curr(curr)], axis=1)
        _Trace(trace)("concat", (1,) + feat.shape[1:])
        return self.head(feat)


_CLASSES = {
    "p2p_point": P2PPoint,
    "p2p_voxel": P2PVoxel,
    "ablate_merged": MergedPoint,
    "ablate_temporal": MergedPoint,
    "ablate_dual_concat": DualConcat,
}


def build_model(config: ModelConfig, seed=0, dtype=np.float32):
    """Instantiate the network for ``config.variant`` with seeded init."""
    config.validate()
    rng = np.random.default_rng(seed)
    model = _CLASSES[config.variant](config, rng, dtype)
    return model.assign_names()


def forward(model, prev_input, curr_input):
    """Motion prediction for a batch; returns MotionDelta per sample."""
    return model.predict(prev_input, curr_input)


def example_inputs(config: ModelConfig, batch=1, dtype=np.float32, rng=None):
    """Random inputs with the right shape for ``config`` (for accounting and smoke tests)."""
    rng = rng or np.random.default_rng(0)
    if config.is_voxel:
        shape = (batch,) + tuple(config.voxel_dims) + (config.voxel_features,)
        return rng.random(shape).astype(dtype), rng.random(shape).astype(dtype)
    shape = (batch, config.n_points, config.input_channels)
    return rng.normal(size=shape).astype(dtype), rng.normal(size=shape).astype(dtype)
