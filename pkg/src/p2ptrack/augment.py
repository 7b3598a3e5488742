"""Training-time augmentation of a canonical (previous, current) frame pair.

Three perturbations, in order:

1. with probability ``flip_prob`` mirror both frames across the x-z plane
   (y -> -y, yaw -> -yaw);
2. rotate each frame's points and box about the box centre's vertical axis by
   an independent uniform angle in ``rot_range_deg``;
3. translate the current frame's target (points inside the box, plus the box)
   by a Gaussian draw per axis.

The motion label is recomputed from the perturbed boxes, so
``apply_motion(prev_box, delta) == curr_box`` holds for every output.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from p2ptrack.geometry import (
    Box3D,
    MotionDelta,
    points_in_box,
    relative_motion,
    rigid_transform_box,
    rigid_transform_points,
)

# inflation used to decide which points belong to the target
TARGET_MARGIN = 0.1


@dataclass
class AugmentConfig:
    flip_prob: float = 0.5
    rot_range_deg: tuple = (-5.0, 5.0)
    translate_mu_sigma: tuple = ((0.0, 0.3), (0.0, 0.1), (0.0, 0.1))
    rotate_scope: str = "crop"  # or "target"
    translate_scope: str = "target"  # or "crop"
    seed: int = 0

    def __post_init__(self):
        self.rot_range_deg = tuple(float(v) for v in self.rot_range_deg)
        self.translate_mu_sigma = tuple(tuple(float(v) for v in ms) for ms in self.translate_mu_sigma)
        if abs(self.rot_range_deg[0] + self.rot_range_deg[1]) > 1e-12:
            raise ValueError("rot_range_deg must be symmetric")
        if any(s < 0 for _, s in self.translate_mu_sigma):
            raise ValueError("translation sigmas must be >= 0")
        if self.rotate_scope not in ("crop", "target") or self.translate_scope not in ("crop", "target"):
            raise ValueError("scopes must be 'crop' or 'target'")

    @classmethod
    def identity(cls) -> "AugmentConfig":
        return cls(flip_prob=0.0, rot_range_deg=(0.0, 0.0), translate_mu_sigma=((0.0, 0.0),) * 3)


def _flip(points, box: Box3D):
    pts = points.copy()
    pts[:, 1] = -pts[:, 1]
    return pts, box.with_pose(box.cx, -box.cy, box.cz, -box.yaw)


def _rotate_about_center(points, box: Box3D, angle, scope):
    c = box.center
    mask = np.ones(len(points), bool) if scope == "crop" else points_in_box(points, box, TARGET_MARGIN)
    pts = points.copy()
    if mask.any():
        local = pts[mask].copy()
        local[:, :3] -= c
        pts[mask] = rigid_transform_points(local, angle, c)
    new = rigid_transform_box(box.with_pose(0.0, 0.0, 0.0, box.yaw), angle, c)
    return pts, new


def _translate(points, box: Box3D, t, scope):
    mask = np.ones(len(points), bool) if scope == "crop" else points_in_box(points, box, TARGET_MARGIN)
    pts = points.copy()
    pts[mask, :3] += t
    return pts, box.with_pose(box.cx + t[0], box.cy + t[1], box.cz + t[2], box.yaw)


def augment_pair(prev, curr, cfg: AugmentConfig, rng=None, frame="canonical"):
    """Augment ``prev=(points, box)`` and ``curr=(points, box)``.

    Returns ``(prev_points, prev_box, curr_points, curr_box, delta)``.
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    (p_pts, p_box), (c_pts, c_box) = prev, curr
    p_pts = np.asarray(p_pts, dtype=np.float64)
    c_pts = np.asarray(c_pts, dtype=np.float64)
    # draw every random number up front so the stream does not depend on branches
    do_flip = rng.random() < cfg.flip_prob
    lo, hi = (math.radians(v) for v in cfg.rot_range_deg)
    a_prev, a_curr = rng.uniform(lo, hi), rng.uniform(lo, hi)
    t = np.array([rng.normal(mu, sigma) if sigma > 0 else mu for mu, sigma in cfg.translate_mu_sigma])

    if do_flip:
        p_pts, p_box = _flip(p_pts, p_box)
        c_pts, c_box = _flip(c_pts, c_box)
    if hi > lo:
        p_pts, p_box = _rotate_about_center(p_pts, p_box, a_prev, cfg.rotate_scope)
        c_pts, c_box = _rotate_about_center(c_pts, c_box, a_curr, cfg.rotate_scope)
    if np.any(t != 0):
        c_pts, c_box = _translate(c_pts, c_box, t, cfg.translate_scope)
    delta = relative_motion(p_box, c_box, frame)
    return p_pts, p_box, c_pts, c_box, delta


def label_consistent(prev_box: Box3D, curr_box: Box3D, delta: MotionDelta, frame="canonical", tol=1e-9) -> bool:
    from p2ptrack.geometry import apply_motion

    got = apply_motion(prev_box, delta, frame)
    d = np.abs(got.as_array()[:3] - curr_box.as_array()[:3]).max()
    dyaw = abs(math.remainder(got.yaw - curr_box.yaw, 2 * math.pi))
    return d <= tol and dyaw <= tol
