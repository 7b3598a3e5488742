"""Synthetic tracklets: a cuboid target on a random walk among clutter and distractors.

The target's per-frame motion is a Gaussian canonical-frame translation plus
a Gaussian yaw increment, applied with ``apply_motion``. Its surface is
resampled every frame, uniformly by area over the six faces (no occlusion).
Clutter is uniform in a volume around the whole trajectory and static over
the tracklet, with points falling inside any target box removed. By default
that volume is a thin layer at the target's ground level, which is where most
non-target returns of a road scene lie; ``clutter_z`` widens it. Distractors
are static cuboid shells of the same category size range.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from p2ptrack.data.tracklet import Tracklet
from p2ptrack.geometry import Box3D, MotionDelta, apply_motion, from_canonical, points_in_box

# (min, max) per dimension in meters: l, w, h
SIZE_RANGES = {
    "car": ((3.6, 4.8), (1.6, 2.0), (1.4, 1.7)),
    "human": ((0.5, 0.9), (0.5, 0.8), (1.6, 1.9)),
}
CLUTTER_MARGIN = 6.0
DISTRACTOR_SPREAD = 8.0
MAX_PLACEMENT_TRIES = 100


@dataclass
class SyntheticSceneConfig:
    n_frames: int = 20
    category: str = "car"
    motion_mean: tuple = (0.0, 0.0, 0.0)
    motion_sigma: tuple = (0.3, 0.1, 0.1)
    yaw_rate_sigma: float = 0.05
    surface_points_per_frame: int = 300
    clutter_points_per_frame: int = 1000
    # clutter height band relative to the target's bottom face (metres)
    clutter_z: tuple = (-0.2, 0.05)
    n_distractors: int = 2
    distractor_points: int = 200
    distractor_min_gap: float = 0.5
    sparsity_level: int | None = None
    seed: int = 0

    def __post_init__(self):
        self.motion_mean = tuple(float(v) for v in self.motion_mean)
        self.motion_sigma = tuple(float(v) for v in self.motion_sigma)
        self.clutter_z = tuple(float(v) for v in self.clutter_z)
        if self.clutter_z[1] < self.clutter_z[0]:
            raise ValueError("clutter_z must be (low, high)")
        if self.category not in SIZE_RANGES:
            raise ValueError(f"unknown category {self.category!r}")
        if self.n_frames < 2:
            raise ValueError("n_frames must be >= 2")
        counts = (
            self.surface_points_per_frame,
            self.clutter_points_per_frame,
            self.n_distractors,
            self.distractor_points,
            self.sparsity_level or 0,
        )
        if min(counts) < 0:
            raise ValueError("point and object counts must be >= 0")
        if min(self.motion_sigma) < 0 or self.yaw_rate_sigma < 0 or self.distractor_min_gap < 0:
            raise ValueError("sigmas and gaps must be >= 0")


def sample_shell(box: Box3D, n: int, rng) -> np.ndarray:
    """``n`` points uniform by area on the surface of ``box`` (world frame)."""
    l, w, h = box.l, box.w, box.h
    areas = np.array([w * h, w * h, l * h, l * h, l * w, l * w])
    face = rng.choice(6, size=n, p=areas / areas.sum())
    u = rng.uniform(-0.5, 0.5, size=(n, 3)) * np.array([l, w, h])
    axis = face // 2
    sign = np.where(face % 2 == 0, 0.5, -0.5)
    u[np.arange(n), axis] = sign * np.array([l, w, h])[axis]
    return from_canonical(u, box)


def _random_size(category, rng):
    (l0, l1), (w0, w1), (h0, h1) = SIZE_RANGES[category]
    return rng.uniform(l0, l1), rng.uniform(w0, w1), rng.uniform(h0, h1)


def _radius(box):
    return 0.5 * math.hypot(box.l, box.w)


def gen_synthetic_tracklet(cfg: SyntheticSceneConfig, track_id: str = "") -> Tracklet:
    rng = np.random.default_rng(cfg.seed)
    l, w, h = _random_size(cfg.category, rng)
    box = Box3D(rng.uniform(5.0, 20.0), rng.uniform(-5.0, 5.0), rng.uniform(-1.0, 0.0), w, l, h,
                rng.uniform(-math.pi, math.pi))
    boxes, deltas = [box], []
    for _ in range(cfg.n_frames - 1):
        d = MotionDelta(
            *(rng.normal(m, s) if s > 0 else m for m, s in zip(cfg.motion_mean, cfg.motion_sigma)),
            rng.normal(0.0, cfg.yaw_rate_sigma) if cfg.yaw_rate_sigma > 0 else 0.0,
        )
        deltas.append(d)
        boxes.append(apply_motion(boxes[-1], d, "canonical"))

    centers = np.array([b.center for b in boxes])
    lo = centers.min(0) - CLUTTER_MARGIN
    hi = centers.max(0) + CLUTTER_MARGIN
    # the band spans every height the target's bottom face visits
    lo[2] = centers[:, 2].min() - 0.5 * h + cfg.clutter_z[0]
    hi[2] = centers[:, 2].max() - 0.5 * h + cfg.clutter_z[1]
    clutter = rng.uniform(lo, hi, size=(cfg.clutter_points_per_frame, 3))
    keep = np.ones(len(clutter), bool)
    for b in boxes:
        keep &= ~points_in_box(clutter, b, margin=0.2)
    clutter = clutter[keep]

    static = [clutter]
    placed = []
    for _ in range(cfg.n_distractors):
        for _ in range(MAX_PLACEMENT_TRIES):
            dl, dw, dh = _random_size(cfg.category, rng)
            off = rng.uniform(-DISTRACTOR_SPREAD, DISTRACTOR_SPREAD, size=2)
            cand = Box3D(box.cx + off[0], box.cy + off[1], box.cz - 0.5 * h + 0.5 * dh, dw, dl, dh,
                         rng.uniform(-math.pi, math.pi))
            others = boxes + placed
            gaps = [math.hypot(cand.cx - o.cx, cand.cy - o.cy) - _radius(cand) - _radius(o) for o in others]
            if min(gaps) >= cfg.distractor_min_gap:
                placed.append(cand)
                static.append(sample_shell(cand, cfg.distractor_points, rng))
                break
    static = np.concatenate(static, axis=0)
    static_i = np.concatenate([static, rng.uniform(0, 1, size=(len(static), 1))], axis=1)

    frames = []
    for t, b in enumerate(boxes):
        n = cfg.sparsity_level if (t == 0 and cfg.sparsity_level is not None) else cfg.surface_points_per_frame
        target = sample_shell(b, n, rng)
        target = np.concatenate([target, rng.uniform(0, 1, size=(n, 1))], axis=1)
        frames.append((np.concatenate([target, static_i], axis=0).astype(np.float32), b))
    return Tracklet(frames, category=cfg.category, id=track_id or f"syn{cfg.seed}", deltas=deltas)


def gen_synthetic_dataset(cfg: SyntheticSceneConfig, n_tracklets: int, seed: int = 0) -> list[Tracklet]:
    """``n_tracklets`` independent tracklets with seeds derived from ``seed``."""
    seeds = np.random.SeedSequence(seed).generate_state(n_tracklets)
    out = []
    for i, s in enumerate(seeds):
        c = SyntheticSceneConfig(**{**cfg.__dict__, "seed": int(s)})
        out.append(gen_synthetic_tracklet(c, track_id=f"syn{seed}_{i:04d}"))
    return out
