import math
import struct

import numpy as np
import pytest

from p2ptrack.data import (
    Calib,
    SyntheticSceneConfig,
    Tracklet,
    camera_box_to_lidar,
    gen_synthetic_dataset,
    gen_synthetic_tracklet,
    lidar_box_to_camera,
    read_calib,
    read_kitti_dataset,
    read_kitti_tracking,
    read_velodyne_bin,
    write_calib,
    write_kitti_sequence,
    write_velodyne_bin,
)
from p2ptrack.data.kitti import DEFAULT_VELO_TO_CAM
from p2ptrack.errors import MalformedLine, MissingCalib, TruncatedFile
from p2ptrack.geometry import Box3D, apply_motion, points_in_box

FIXTURE_T = (0.1, -0.2, 0.3)


@pytest.fixture
def calib_file(tmp_path):
    m = DEFAULT_VELO_TO_CAM.copy()
    m[:, 3] = FIXTURE_T
    p = tmp_path / "calib.txt"
    p.write_text("P0: 1 0 0 0 0 1 0 0 0 0 1 0\nR_rect 1 0 0 0 1 0 0 0 1\n"
                 "Tr_velo_cam " + " ".join(repr(float(v)) for v in m.ravel()) + "\n")
    return p


def label(frame, track, typ="Car", h=1.5, w=1.6, l=4.0, x=2.0, y=1.5, z=10.0, ry=0.3):
    return f"{frame} {track} {typ} 0 0 -10 0 0 50 50 {h} {w} {l} {x} {y} {z} {ry}\n"


# ------------------------------------------------------------------ velodyne


def test_velodyne_hand_fixture(tmp_path):
    p = tmp_path / "a.bin"
    p.write_bytes(struct.pack("<8f", 1, 2, 3, 0.5, -1, 0, 4, 1.0))
    assert p.stat().st_size == 32
    pts = read_velodyne_bin(p)
    assert pts.dtype == np.float32
    assert np.array_equal(pts, [[1, 2, 3, 0.5], [-1, 0, 4, 1.0]])


def test_velodyne_empty_and_truncated(tmp_path):
    (tmp_path / "e.bin").write_bytes(b"")
    assert read_velodyne_bin(tmp_path / "e.bin").shape == (0, 4)
    (tmp_path / "t.bin").write_bytes(b"\0" * 17)
    with pytest.raises(TruncatedFile):
        read_velodyne_bin(tmp_path / "t.bin")


def test_velodyne_round_trip_bytes(tmp_path, rng):
    raw = rng.normal(size=(100, 4)).astype("<f4").tobytes()
    (tmp_path / "a.bin").write_bytes(raw)
    write_velodyne_bin(tmp_path / "b.bin", read_velodyne_bin(tmp_path / "a.bin"))
    assert (tmp_path / "b.bin").read_bytes() == raw


# ------------------------------------------------------------------ calib and box conversion


def test_calib_fixture_hand_computation(calib_file):
    calib = read_calib(calib_file)
    box = camera_box_to_lidar(1.5, 1.6, 4.0, 2.0, 1.5, 10.0, 0.3, calib)
    # camera centre (2, 0.75, 10) minus t, then cam (x, y, z) = velo (-y, -z, x)
    assert np.allclose(box.center, [9.7, -1.9, -0.95], atol=1e-6)
    # heading (cos ry, 0, -sin ry) maps to velo (-sin ry, -cos ry)
    assert box.yaw == pytest.approx(-math.pi / 2 - 0.3, abs=1e-6)
    assert (box.w, box.l, box.h) == (1.6, 4.0, 1.5)


def test_identity_calib_lift(tmp_path):
    calib = Calib(np.hstack([np.eye(3), np.zeros((3, 1))]), np.eye(3))
    box = camera_box_to_lidar(2.0, 1.0, 3.0, 1.0, 4.0, 5.0, 0.7, calib)
    assert np.allclose(box.center, [1.0, 3.0, 5.0])
    assert box.yaw == pytest.approx(0.0)


def test_camera_lidar_inverse(calib_file, rng):
    calib = read_calib(calib_file)
    for _ in range(20):
        b = Box3D(*rng.normal(0, 5, 3), 1.6, 4.0, 1.5, rng.uniform(-math.pi, math.pi))
        back = camera_box_to_lidar(*lidar_box_to_camera(b, calib), calib)
        assert np.allclose(back.as_array(), b.as_array(), atol=1e-9)


def test_calib_round_trip_and_alt_keys(tmp_path, calib_file):
    c = read_calib(calib_file)
    write_calib(tmp_path / "c2.txt", c)
    c2 = read_calib(tmp_path / "c2.txt")
    assert np.array_equal(c.velo_to_cam, c2.velo_to_cam) and np.array_equal(c.r_rect, c2.r_rect)
    p = tmp_path / "odom.txt"
    p.write_text("Tr_velo_to_cam: " + " ".join(["1", "0", "0", "0"] * 3) + "\n")
    assert np.array_equal(read_calib(p).r_rect, np.eye(3))


def test_missing_calib(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("P0 1 2 3\n")
    with pytest.raises(MissingCalib):
        read_calib(p)


# ------------------------------------------------------------------ labels


def test_single_line_label(tmp_path, calib_file):
    p = tmp_path / "0000.txt"
    p.write_text(label(0, 0) + label(1, 0, x=2.5))
    (trk,) = read_kitti_tracking(p, calib_file)
    assert len(trk) == 2 and trk.category == "car" and trk.id == "0000:0:0"
    assert np.allclose(trk.boxes[0].center, [9.7, -1.9, -0.95], atol=1e-6)
    assert trk.clouds[0].shape == (0, 4)


def test_gap_splits_track(tmp_path, calib_file):
    p = tmp_path / "l.txt"
    p.write_text("".join(label(f, 3) for f in (0, 1, 2, 5, 6, 9)))
    trks = read_kitti_tracking(p, calib_file)
    assert [len(t) for t in trks] == [3, 2]  # the lone frame 9 is dropped


def test_dontcare_skipped_and_size_frozen(tmp_path, calib_file):
    p = tmp_path / "l.txt"
    p.write_text(label(0, -1, "DontCare") + label(0, 1, "Pedestrian", l=0.8) + label(1, 1, "Pedestrian", l=0.9))
    (trk,) = read_kitti_tracking(p, calib_file)
    assert trk.category == "human"
    assert trk.boxes[1].l == 0.8


@pytest.mark.parametrize("line", ["0 1 Car 0 0\n", "x 1 Car 0 0 0 0 0 0 0 1 1 1 0 0 0 0\n"])
def test_malformed_line_has_line_number(tmp_path, calib_file, line):
    p = tmp_path / "l.txt"
    p.write_text(label(0, 0) + line)
    with pytest.raises(MalformedLine, match=":2"):
        read_kitti_tracking(p, calib_file)


def test_dataset_write_read_round_trip(tmp_path):
    trks = gen_synthetic_dataset(SyntheticSceneConfig(n_frames=4, clutter_points_per_frame=50), 1, seed=3)
    write_kitti_sequence(tmp_path, 7, trks)
    (back,) = read_kitti_dataset(tmp_path)
    for (p0, b0), (p1, b1) in zip(trks[0].frames, back.frames):
        assert np.array_equal(p0, p1)
        assert np.allclose(b0.as_array(), b1.as_array(), atol=1e-9)
    raw = (tmp_path / "velodyne" / "0007" / "000002.bin").read_bytes()
    assert raw == trks[0].frames[2][0].astype("<f4").tobytes()


# ------------------------------------------------------------------ tracklet and synthetic


def test_tracklet_validation():
    b = Box3D(0, 0, 0, 1, 2, 1)
    with pytest.raises(ValueError):
        Tracklet([(np.zeros((0, 4)), b)])
    with pytest.raises(ValueError):
        Tracklet([(np.zeros((0, 4)), b), (np.zeros((0, 4)), Box3D(0, 0, 0, 1, 2.1, 1))])


def test_zero_sigmas_give_zero_deltas():
    cfg = SyntheticSceneConfig(n_frames=6, motion_sigma=(0, 0, 0), yaw_rate_sigma=0)
    trk = gen_synthetic_tracklet(cfg)
    assert all(d.as_array().tolist() == [0, 0, 0, 0] for d in trk.deltas)
    assert all(b == trk.boxes[0] for b in trk.boxes)


def test_no_clutter_all_points_on_shell():
    cfg = SyntheticSceneConfig(n_frames=3, clutter_points_per_frame=0, n_distractors=0)
    trk = gen_synthetic_tracklet(cfg)
    for pts, box in trk.frames:
        assert points_in_box(pts[:, :3], box, 0.01).all()
        local = np.abs(_canonical(pts[:, :3], box)) / (np.array([box.l, box.w, box.h]) / 2)
        assert np.allclose(local.max(axis=1), 1.0, atol=1e-5)


def _canonical(pts, box):
    from p2ptrack.geometry import to_canonical

    return to_canonical(pts, box)


def test_deltas_reproduce_boxes():
    trk = gen_synthetic_tracklet(SyntheticSceneConfig(n_frames=15, seed=4))
    for i, d in enumerate(trk.deltas):
        nxt = apply_motion(trk.boxes[i], d, "canonical")
        assert np.allclose(nxt.as_array(), trk.boxes[i + 1].as_array(), atol=1e-9)


def test_sparsity_level_and_distractor_gap():
    cfg = SyntheticSceneConfig(n_frames=3, sparsity_level=17, clutter_points_per_frame=0, seed=2)
    trk = gen_synthetic_tracklet(cfg)
    assert trk.first_frame_count() == 17
    assert len(trk.frames[1][0]) == cfg.surface_points_per_frame + cfg.n_distractors * cfg.distractor_points


def test_generator_deterministic():
    a = gen_synthetic_dataset(SyntheticSceneConfig(n_frames=3), 2, seed=5)
    b = gen_synthetic_dataset(SyntheticSceneConfig(n_frames=3), 2, seed=5)
    assert all(np.array_equal(x, y) for ta, tb in zip(a, b) for x, y in zip(ta.clouds, tb.clouds))


def test_delta_statistics_within_three_standard_errors():
    cfg = SyntheticSceneConfig(n_frames=1001, clutter_points_per_frame=0, n_distractors=0,
                               surface_points_per_frame=1)
    ds = gen_synthetic_dataset(cfg, 10, seed=0)
    d = np.array([x.as_array() for t in ds for x in t.deltas])
    assert len(d) == 10**4
    sig = np.array(cfg.motion_sigma + (cfg.yaw_rate_sigma,))
    n = len(d)
    assert np.all(np.abs(d.mean(0)) <= 3 * sig / math.sqrt(n))
    # standard error of the sample std is about sigma / sqrt(2n)
    assert np.all(np.abs(d.std(0, ddof=1) - sig) <= 3 * sig / math.sqrt(2 * n))


@pytest.mark.parametrize("kw", [dict(n_frames=1), dict(motion_sigma=(-1, 0, 0)), dict(category="truck"),
                                dict(clutter_points_per_frame=-1)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SyntheticSceneConfig(**kw)
