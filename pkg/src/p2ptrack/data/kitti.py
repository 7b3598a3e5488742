"""KITTI tracking layout: velodyne scans, label_02 text and calib text.

Layout under a root directory::

    velodyne/SSSS/FFFFFF.bin   float32 x, y, z, intensity quadruples
    label_02/SSSS.txt          frame track type trunc occ alpha x1 y1 x2 y2 h w l x y z ry
    calib/SSSS.txt             "key v1 v2 ..." or "key: v1 v2 ..." lines

Camera boxes are y-down with the origin at the bottom-face centre and
``rotation_y`` about the camera y axis. The object's heading direction in the
camera frame is (cos ry, 0, -sin ry). Lidar boxes are z-up with the origin at
the box centre; yaw is the heading angle in the lidar x-y plane.
"""
from __future__ import annotations

import math
import os
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from p2ptrack.data.tracklet import Tracklet
from p2ptrack.errors import MalformedLine, MissingCalib, TruncatedFile
from p2ptrack.geometry import Box3D, wrap_angle

VELO_KEYS = ("Tr_velo_cam", "Tr_velo_to_cam")
RECT_KEYS = ("R_rect", "R0_rect")
CATEGORY_OF_TYPE = {
    "Car": "car",
    "Van": "car",
    "Pedestrian": "human",
    "Person_sitting": "human",
    "Cyclist": "human",
}
TYPE_OF_CATEGORY = {"car": "Car", "human": "Pedestrian"}

# lidar x forward, y left, z up  ->  camera x right, y down, z forward
DEFAULT_VELO_TO_CAM = np.array(
    [[0.0, -1.0, 0.0, 0.0], [0.0, 0.0, -1.0, 0.0], [1.0, 0.0, 0.0, 0.0]]
)


def read_velodyne_bin(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) % 16:
        raise TruncatedFile(f"{path}: {len(raw)} bytes is not a whole number of 16-byte points")
    return np.frombuffer(raw, dtype="<f4").reshape(-1, 4).copy()


def write_velodyne_bin(path, points) -> None:
    pts = np.asarray(points, dtype="<f4").reshape(-1, 4)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(pts.tobytes())


@dataclass
class Calib:
    """Velodyne-to-rectified-camera transform ``X_cam = R_rect (R X_velo + t)``."""

    velo_to_cam: np.ndarray  # 3x4
    r_rect: np.ndarray  # 3x3

    def cam_to_velo(self, xyz) -> np.ndarray:
        r, t = self.velo_to_cam[:, :3], self.velo_to_cam[:, 3]
        unrect = np.linalg.solve(self.r_rect, np.asarray(xyz, dtype=np.float64).T).T
        return (unrect - t) @ r

    def velo_to_cam_points(self, xyz) -> np.ndarray:
        r, t = self.velo_to_cam[:, :3], self.velo_to_cam[:, 3]
        return (np.asarray(xyz, dtype=np.float64) @ r.T + t) @ self.r_rect.T

    def cam_dir_to_velo(self, d) -> np.ndarray:
        unrect = np.linalg.solve(self.r_rect, np.asarray(d, dtype=np.float64))
        return self.velo_to_cam[:, :3].T @ unrect


def read_calib(path) -> Calib:
    values = {}
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            values[parts[0].rstrip(":")] = parts[1:]
    velo = next((values[k] for k in VELO_KEYS if k in values), None)
    if velo is None:
        raise MissingCalib(f"{path}: none of {VELO_KEYS} present")
    rect = next((values[k] for k in RECT_KEYS if k in values), None)
    try:
        velo_to_cam = np.array(velo, dtype=np.float64).reshape(3, 4)
        r_rect = np.eye(3) if rect is None else np.array(rect, dtype=np.float64).reshape(3, 3)
    except ValueError as exc:
        raise MissingCalib(f"{path}: bad calibration matrix ({exc})") from None
    return Calib(velo_to_cam, r_rect)


def write_calib(path, calib: Calib) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fmt = lambda a: " ".join(f"{v:.17g}" for v in np.ravel(a))
    Path(path).write_text(f"R_rect {fmt(calib.r_rect)}\nTr_velo_cam {fmt(calib.velo_to_cam)}\n")


def camera_box_to_lidar(h, w, l, x, y, z, ry, calib: Calib) -> Box3D:
    center = calib.cam_to_velo(np.array([[x, y - 0.5 * h, z]]))[0]
    heading = calib.cam_dir_to_velo(np.array([math.cos(ry), 0.0, -math.sin(ry)]))
    yaw = math.atan2(heading[1], heading[0])
    return Box3D(center[0], center[1], center[2], w, l, h, yaw)


def lidar_box_to_camera(box: Box3D, calib: Calib):
    """(h, w, l, x, y, z, ry) with y at the bottom face, inverse of :func:`camera_box_to_lidar`."""
    c = calib.velo_to_cam_points(box.center[None])[0]
    d = np.array([math.cos(box.yaw), math.sin(box.yaw), 0.0])
    dc = calib.r_rect @ (calib.velo_to_cam[:, :3] @ d)
    ry = wrap_angle(math.atan2(-dc[2], dc[0]))
    return box.h, box.w, box.l, c[0], c[1] + 0.5 * box.h, c[2], ry


def _parse_label_line(path, line_no, line):
    parts = line.split()
    if len(parts) < 17:
        raise MalformedLine(path, line_no, f"expected at least 17 fields, got {len(parts)}")
    try:
        frame, track = int(parts[0]), int(parts[1])
        nums = [float(v) for v in parts[10:17]]
    except ValueError as exc:
        raise MalformedLine(path, line_no, str(exc)) from None
    return frame, track, parts[2], nums


def _runs(frames):
    """Split a sorted frame list into runs of consecutive numbers."""
    runs, cur = [], [frames[0]]
    for f in frames[1:]:
        if f == cur[-1] + 1:
            cur.append(f)
        else:
            runs.append(cur)
            cur = [f]
    runs.append(cur)
    return runs


def read_kitti_tracking(labels_path, calib_path, velodyne_dir=None, seq_name=None) -> list[Tracklet]:
    """Tracklets of one sequence, boxes in the lidar frame.

    A track with missing frames is split at every gap; pieces shorter than two
    frames are dropped. Each piece keeps the size of its first frame. Without
    ``velodyne_dir`` every cloud is empty (0 x 4).
    """
    calib = read_calib(calib_path)
    seq_name = seq_name or Path(labels_path).stem
    per_track = defaultdict(dict)
    types = {}
    with open(labels_path) as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            frame, track, typ, nums = _parse_label_line(labels_path, line_no, line)
            if typ == "DontCare":
                continue
            if frame in per_track[track]:
                raise MalformedLine(labels_path, line_no, f"track {track} repeated in frame {frame}")
            per_track[track][frame] = nums
            types[track] = typ

    cache = {}

    def cloud(frame):
        if velodyne_dir is None:
            return np.zeros((0, 4), np.float32)
        if frame not in cache:
            cache[frame] = read_velodyne_bin(os.path.join(velodyne_dir, f"{frame:06d}.bin"))
        return cache[frame]

    out = []
    for track in sorted(per_track):
        rows = per_track[track]
        for piece, run in enumerate(_runs(sorted(rows))):
            if len(run) < 2:
                continue
            h0, w0, l0 = rows[run[0]][:3]
            frames = []
            for f in run:
                _, _, _, x, y, z, ry = rows[f]
                # the lift uses the frozen height so the bottom face stays where labelled
                frames.append((cloud(f), camera_box_to_lidar(h0, w0, l0, x, y, z, ry, calib)))
            out.append(
                Tracklet(
                    frames,
                    category=CATEGORY_OF_TYPE.get(types[track], types[track].lower()),
                    id=f"{seq_name}:{track}:{piece}",
                )
            )
    return out


def read_kitti_dataset(root, sequences=None, load_points=True) -> list[Tracklet]:
    root = Path(root)
    if sequences is None:
        sequences = sorted(p.stem for p in (root / "label_02").glob("*.txt"))
    out = []
    for seq in sequences:
        seq = f"{int(seq):04d}"
        velo = root / "velodyne" / seq if load_points else None
        out.extend(read_kitti_tracking(root / "label_02" / f"{seq}.txt", root / "calib" / f"{seq}.txt", velo, seq))
    return out


def write_kitti_sequence(root, seq: int, tracklets, calib: Calib | None = None) -> None:
    """Write tracklets sharing one sensor timeline as sequence ``seq``.

    Every tracklet starts at frame 0 and frame ``t``'s cloud is taken from the
    first tracklet that has a frame ``t``.
    """
    root = Path(root)
    calib = calib or Calib(DEFAULT_VELO_TO_CAM.copy(), np.eye(3))
    name = f"{seq:04d}"
    write_calib(root / "calib" / f"{name}.txt", calib)
    lines, written = [], set()
    for track_id, trk in enumerate(tracklets):
        typ = TYPE_OF_CATEGORY.get(trk.category, trk.category.capitalize())
        for t, (pts, box) in enumerate(trk.frames):
            if t not in written:
                write_velodyne_bin(root / "velodyne" / name / f"{t:06d}.bin", np.asarray(pts)[:, :4])
                written.add(t)
            h, w, l, x, y, z, ry = lidar_box_to_camera(box, calib)
            vals = " ".join(f"{v:.17g}" for v in (h, w, l, x, y, z, ry))
            lines.append(f"{t} {track_id} {typ} 0 0 0 0 0 0 0 {vals}")
    (root / "label_02").mkdir(parents=True, exist_ok=True)
    (root / "label_02" / f"{name}.txt").write_text("\n".join(lines) + "\n")
