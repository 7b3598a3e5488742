"""Search-region cropping, farthest point sampling and voxelization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from p2ptrack import kernels
from p2ptrack.errors import AlreadyAugmented, EmptyCloud
from p2ptrack.geometry import Box3D, to_canonical


@dataclass(frozen=True)
class SearchRegion:
    x_range: tuple[float, float]
    y_range: tuple[float, float]
    z_range: tuple[float, float]

    def __post_init__(self):
        for lo, hi in (self.x_range, self.y_range, self.z_range):
            if not lo < hi:
                raise ValueError(f"search region needs min < max on every axis, got {self}")

    @property
    def mins(self) -> np.ndarray:
        return np.array([self.x_range[0], self.y_range[0], self.z_range[0]], dtype=np.float64)

    @property
    def maxs(self) -> np.ndarray:
        return np.array([self.x_range[1], self.y_range[1], self.z_range[1]], dtype=np.float64)

    def contains(self, xyz) -> np.ndarray:
        """Half-open test: min-side inclusive, max-side exclusive."""
        xyz = np.asarray(xyz)
        if xyz.shape[0] == 0:
            return np.zeros(0, dtype=bool)
        return np.all((xyz[:, :3] >= self.mins) & (xyz[:, :3] < self.maxs), axis=1)


SEARCH_REGIONS = {
    "car": SearchRegion((-4.8, 4.8), (-4.8, 4.8), (-1.5, 1.5)),
    "human": SearchRegion((-1.92, 1.92), (-1.92, 1.92), (-1.5, 1.5)),
}


@dataclass
class VoxelGrid:
    features: np.ndarray  # (W, L, H, F)
    region: SearchRegion

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.features.shape[:3])


def crop_search_region(frame_points, ref_box: Box3D, region: SearchRegion) -> np.ndarray:
    """Points inside ``region`` around ``ref_box``, returned in the box's canonical frame."""
    local = to_canonical(frame_points, ref_box)
    return local[region.contains(local)]


def farthest_point_sample(pc, k: int, seed=0) -> np.ndarray:
    """Indices of ``k`` farthest-point samples.

    The first index is drawn from ``np.random.default_rng(seed)``; each later one
    maximizes the distance to the chosen set, lowest index on ties. With fewer
    than ``k`` points the selected set is repeated cyclically.
    """
    pc = np.asarray(pc)
    n = pc.shape[0]
    if n == 0:
        raise EmptyCloud("farthest point sampling on an empty cloud")
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    first = int(np.random.default_rng(seed).integers(n))
    return kernels.farthest_point_sample(pc[:, :3], int(k), first)


def add_temporal_feature(pc, t_flag: int) -> np.ndarray:
    pc = np.asarray(pc)
    if pc.ndim != 2 or pc.shape[1] != 3:
        if pc.ndim == 2 and pc.shape[1] > 3:
            raise AlreadyAugmented(f"cloud already has {pc.shape[1]} channels")
        raise ValueError(f"expected an Nx3 cloud, got shape {pc.shape}")
    flag = np.full((pc.shape[0], 1), float(t_flag), dtype=pc.dtype if pc.dtype.kind == "f" else np.float64)
    return np.concatenate([pc, flag], axis=1)


def voxelize(pc, dims=(128, 128, 20), region: SearchRegion = SEARCH_REGIONS["car"]) -> VoxelGrid:
    """Bin points into a (W, L, H) grid over ``region``.

    Features per voxel: occupancy in {0, 1} and the point count divided by
    the grid's maximum count. Points outside the region are dropped.
    """
    pc = np.asarray(pc, dtype=np.float64)
    if pc.size == 0:
        pc = pc.reshape(0, 3)
    counts = voxel_counts(pc, dims, region)
    feats = np.zeros(tuple(dims) + (2,), dtype=np.float64)
    peak = counts.max() if counts.size else 0
    if peak > 0:
        feats[..., 0] = counts > 0
        feats[..., 1] = counts / peak
    return VoxelGrid(feats, region)


def voxel_counts(pc, dims, region: SearchRegion) -> np.ndarray:
    pc = np.asarray(pc, dtype=np.float64)
    if pc.shape[0] == 0:
        return np.zeros(tuple(dims), dtype=np.int32)
    return kernels.voxel_counts(pc[:, :3], region.mins, region.maxs, np.asarray(dims, dtype=np.int64))
