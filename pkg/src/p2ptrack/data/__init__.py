"""KITTI-format ingestion and synthetic tracklets."""
from p2ptrack.data.kitti import (
    Calib,
    camera_box_to_lidar,
    lidar_box_to_camera,
    read_calib,
    read_kitti_dataset,
    read_kitti_tracking,
    read_velodyne_bin,
    write_calib,
    write_kitti_sequence,
    write_velodyne_bin,
)
from p2ptrack.data.synthetic import SIZE_RANGES, SyntheticSceneConfig, gen_synthetic_dataset, gen_synthetic_tracklet
from p2ptrack.data.tracklet import Tracklet

__all__ = [
    "Calib",
    "SIZE_RANGES",
    "SyntheticSceneConfig",
    "Tracklet",
    "camera_box_to_lidar",
    "gen_synthetic_dataset",
    "gen_synthetic_tracklet",
    "lidar_box_to_camera",
    "read_calib",
    "read_kitti_dataset",
    "read_kitti_tracking",
    "read_velodyne_bin",
    "write_calib",
    "write_kitti_sequence",
    "write_velodyne_bin",
]
