"""Turn canonical search-region crops into network inputs for each variant."""
from __future__ import annotations

import numpy as np

from p2ptrack.errors import EmptyRegion
from p2ptrack.model import ModelConfig
from p2ptrack.pointcloud import SearchRegion, add_temporal_feature, farthest_point_sample, voxelize


def frame_input(points, config: ModelConfig, region: SearchRegion, t_flag: int, seed: int) -> np.ndarray:
    """One frame's input: N x C sampled points, or a W x L x H x F grid."""
    xyz = np.asarray(points, dtype=np.float64)[:, :3]
    if config.is_voxel:
        return voxelize(xyz, config.voxel_dims, region).features
    if len(xyz) == 0:
        raise EmptyRegion("search region is empty")
    pts = xyz[farthest_point_sample(xyz, config.n_points, seed)]
    if config.input_channels == 4:
        pts = add_temporal_feature(pts, t_flag)
    return pts


def pair_input(prev_points, curr_points, config: ModelConfig, region: SearchRegion, seed: int):
    if len(prev_points) == 0 or len(curr_points) == 0:
        raise EmptyRegion(f"empty crop (prev {len(prev_points)}, curr {len(curr_points)} points)")
    ss = np.random.SeedSequence(seed).generate_state(2)
    return (
        frame_input(prev_points, config, region, 0, int(ss[0])),
        frame_input(curr_points, config, region, 1, int(ss[1])),
    )
