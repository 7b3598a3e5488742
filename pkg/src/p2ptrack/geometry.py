"""Oriented 3D boxes, rigid 4-DOF motion and canonical-frame transforms.

Conventions
-----------
* z is up. ``yaw`` is the rotation about +z, wrapped to (-pi, pi].
* In the box frame, ``l`` spans x (the heading axis), ``w`` spans y and
  ``h`` spans z. The box is closed: boundary points count as inside.
* ``box_corners`` order: bottom face (z = -h/2) counter-clockwise seen from
  above starting at (+l/2, +w/2), then the top face in the same order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from p2ptrack import kernels

MotionFrame = Literal["canonical", "world"]

# slack on containment tests so points on a face survive rotation round-off
CONTAIN_EPS = 1e-9


def wrap_angle(a):
    """Wrap angle(s) to (-pi, pi]."""
    if isinstance(a, np.ndarray):
        return np.pi - np.mod(np.pi - a, 2.0 * np.pi)
    return math.pi - ((math.pi - a) % (2.0 * math.pi))


@dataclass(frozen=True)
class Box3D:
    cx: float
    cy: float
    cz: float
    w: float
    l: float
    h: float
    yaw: float = 0.0

    def __post_init__(self):
        if not (self.w > 0 and self.l > 0 and self.h > 0):
            raise ValueError(f"box size must be positive, got w={self.w} l={self.l} h={self.h}")
        vals = (self.cx, self.cy, self.cz, self.yaw)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box pose {vals}")
        for name in ("cx", "cy", "cz", "w", "l", "h"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "yaw", float(wrap_angle(float(self.yaw))))

    @property
    def center(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.cz])

    @property
    def size(self) -> tuple[float, float, float]:
        return (self.w, self.l, self.h)

    @property
    def volume(self) -> float:
        return self.w * self.l * self.h

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.cz, self.w, self.l, self.h, self.yaw])

    @classmethod
    def from_array(cls, a) -> "Box3D":
        return cls(*(float(v) for v in a[:7]))

    def with_pose(self, cx, cy, cz, yaw) -> "Box3D":
        return Box3D(cx, cy, cz, self.w, self.l, self.h, yaw)


@dataclass(frozen=True)
class MotionDelta:
    dx: float
    dy: float
    dz: float
    dyaw: float

    def __post_init__(self):
        vals = (self.dx, self.dy, self.dz, self.dyaw)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite motion {vals}")
        for name in ("dx", "dy", "dz"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "dyaw", float(wrap_angle(float(self.dyaw))))

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dz, self.dyaw])

    @classmethod
    def from_array(cls, a) -> "MotionDelta":
        return cls(*(float(v) for v in a[:4]))

    @classmethod
    def zero(cls) -> "MotionDelta":
        return cls(0.0, 0.0, 0.0, 0.0)


def _rot2(yaw):
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s], [s, c]])


def box_corners(box: Box3D) -> np.ndarray:
    """8x3 corner array in the documented order."""
    hl, hw, hh = 0.5 * box.l, 0.5 * box.w, 0.5 * box.h
    local = np.array(
        [
            [hl, hw, -hh], [-hl, hw, -hh], [-hl, -hw, -hh], [hl, -hw, -hh],
            [hl, hw, hh], [-hl, hw, hh], [-hl, -hw, hh], [hl, -hw, hh],
        ]
    )
    return from_canonical(local, box)


def to_canonical(points, box: Box3D) -> np.ndarray:
    """Express points in the box frame: translate by -center, rotate by -yaw.

    Extra channels beyond xyz are carried through unchanged.
    """
    pts = np.asarray(points, dtype=np.float64)
    out = pts.copy()
    if pts.shape[0] == 0:
        return out
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    x = pts[:, 0] - box.cx
    y = pts[:, 1] - box.cy
    out[:, 0] = c * x + s * y
    out[:, 1] = -s * x + c * y
    out[:, 2] = pts[:, 2] - box.cz
    return out


def from_canonical(points, box: Box3D) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    out = pts.copy()
    if pts.shape[0] == 0:
        return out
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    x, y = pts[:, 0], pts[:, 1]
    out[:, 0] = c * x - s * y + box.cx
    out[:, 1] = s * x + c * y + box.cy
    out[:, 2] = pts[:, 2] + box.cz
    return out


def points_in_box(points, box: Box3D, margin: float = 0.0) -> np.ndarray:
    """Boolean mask of points inside the closed box, optionally inflated by ``margin`` per side."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    local = to_canonical(pts[:, :3], box)
    half = np.array([0.5 * box.l, 0.5 * box.w, 0.5 * box.h]) + margin + CONTAIN_EPS
    return np.all(np.abs(local) <= half, axis=1)


def iou3d(a: Box3D, b: Box3D) -> float:
    """Volume IoU of two yaw-rotated boxes (BEV polygon clip x height overlap)."""
    return float(kernels.iou3d_pairs(a.as_array()[None], b.as_array()[None])[0])


def iou3d_many(a, b) -> np.ndarray:
    """Pairwise-aligned IoU for two equal-length sequences of boxes (or Nx7 arrays)."""
    aa = np.array([x.as_array() for x in a]) if not isinstance(a, np.ndarray) else a
    bb = np.array([x.as_array() for x in b]) if not isinstance(b, np.ndarray) else b
    if len(aa) == 0:
        return np.zeros(0)
    return kernels.iou3d_pairs(aa.reshape(-1, 7), bb.reshape(-1, 7))


def apply_motion(prev: Box3D, delta: MotionDelta, frame: MotionFrame = "canonical") -> Box3D:
    """Rigid update of a box by a 4-DOF motion; size is kept."""
    d = np.array([delta.dx, delta.dy])
    if frame == "canonical":
        d = _rot2(prev.yaw) @ d
    elif frame != "world":
        raise ValueError(f"unknown motion frame {frame!r}")
    return prev.with_pose(prev.cx + d[0], prev.cy + d[1], prev.cz + delta.dz, prev.yaw + delta.dyaw)


def relative_motion(prev: Box3D, curr: Box3D, frame: MotionFrame = "canonical") -> MotionDelta:
    """Inverse of :func:`apply_motion`: the delta taking ``prev`` to ``curr``."""
    d = np.array([curr.cx - prev.cx, curr.cy - prev.cy])
    if frame == "canonical":
        d = _rot2(-prev.yaw) @ d
    elif frame != "world":
        raise ValueError(f"unknown motion frame {frame!r}")
    return MotionDelta(d[0], d[1], curr.cz - prev.cz, wrap_angle(curr.yaw - prev.yaw))


def box_to_canonical(box: Box3D, ref: Box3D) -> Box3D:
    """Re-express ``box`` in the frame of ``ref``."""
    c = to_canonical(box.center[None], ref)[0]
    return box.with_pose(c[0], c[1], c[2], box.yaw - ref.yaw)


def box_from_canonical(box: Box3D, ref: Box3D) -> Box3D:
    c = from_canonical(box.center[None], ref)[0]
    return box.with_pose(c[0], c[1], c[2], box.yaw + ref.yaw)


def rigid_transform_box(box: Box3D, yaw: float, translation) -> Box3D:
    """Rotate a box about the world z-axis by ``yaw``, then translate."""
    c = _rot2(yaw) @ np.array([box.cx, box.cy])
    t = np.asarray(translation, dtype=np.float64)
    return box.with_pose(c[0] + t[0], c[1] + t[1], box.cz + t[2], box.yaw + yaw)


def rigid_transform_points(points, yaw: float, translation) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).copy()
    xy = pts[:, :2] @ _rot2(yaw).T
    pts[:, :2] = xy + np.asarray(translation, dtype=np.float64)[:2]
    pts[:, 2] = pts[:, 2] + translation[2]
    return pts
