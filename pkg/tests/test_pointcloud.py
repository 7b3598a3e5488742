import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_voxel_counts, maximin_fps
from p2ptrack.errors import AlreadyAugmented, EmptyCloud
from p2ptrack.geometry import Box3D, from_canonical
from p2ptrack.pointcloud import (
    SEARCH_REGIONS,
    SearchRegion,
    add_temporal_feature,
    crop_search_region,
    farthest_point_sample,
    voxel_counts,
    voxelize,
)

CAR, HUMAN = SEARCH_REGIONS["car"], SEARCH_REGIONS["human"]
IDENTITY = Box3D(0, 0, 0, 1, 1, 1, 0)


def test_region_validation():
    with pytest.raises(ValueError):
        SearchRegion((1, 1), (0, 1), (0, 1))


def test_region_constants():
    assert CAR.x_range == (-4.8, 4.8) and CAR.z_range == (-1.5, 1.5)
    assert HUMAN.y_range == (-1.92, 1.92)


def test_crop_examples():
    assert len(crop_search_region(np.array([[5.0, 0, 0]]), IDENTITY, CAR)) == 0
    assert len(crop_search_region(np.array([[1.0, 1.0, 0]]), IDENTITY, HUMAN)) == 1
    # max side exclusive, min side inclusive
    edge = np.array([[4.8, 0, 0], [-4.8, 0, 0]])
    assert crop_search_region(edge, IDENTITY, CAR).tolist() == [[-4.8, 0, 0]]


def test_crop_identity_returns_input(rng):
    pts = rng.uniform(-1, 1, size=(100, 3))
    assert np.array_equal(crop_search_region(pts, IDENTITY, CAR), pts)


def test_crop_is_canonical_and_idempotent(rng):
    ref = Box3D(10, -3, 0.5, 1.8, 4.0, 1.5, 2.1)
    local = rng.uniform(-6, 6, size=(500, 3)) * np.array([1, 1, 0.3])
    world = from_canonical(local, ref)
    once = crop_search_region(world, ref, CAR)
    assert np.allclose(once, local[CAR.contains(local)], atol=1e-9)
    twice = crop_search_region(once, IDENTITY, CAR)
    assert np.array_equal(once, twice)


def test_crop_empty():
    assert crop_search_region(np.zeros((0, 3)), IDENTITY, CAR).shape == (0, 3)


def test_fps_empty_raises():
    with pytest.raises(EmptyCloud):
        farthest_point_sample(np.zeros((0, 3)), 4)


def test_fps_n_equals_k_is_permutation(rng):
    pts = rng.normal(size=(17, 3))
    assert sorted(farthest_point_sample(pts, 17, seed=3).tolist()) == list(range(17))


def test_fps_seeded_first_and_oracle(rng):
    pts = rng.normal(size=(40, 3))
    idx = farthest_point_sample(pts, 10, seed=7)
    first = int(np.random.default_rng(7).integers(40))
    assert idx[0] == first
    assert idx.tolist() == maximin_fps(pts.tolist(), 10, first)


def test_fps_padding():
    idx = farthest_point_sample(np.eye(3), 5, seed=0).tolist()
    assert len(set(idx[:3])) == 3 and idx[3:] == idx[:2]


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 60), st.integers(1, 30), st.integers(0, 2**31 - 1))
def test_fps_deterministic_and_distinct(n, k, seed):
    pts = np.random.default_rng(seed).normal(size=(n, 3))
    a = farthest_point_sample(pts, k, seed)
    assert np.array_equal(a, farthest_point_sample(pts, k, seed))
    if n >= k:
        assert len(set(a.tolist())) == k


def test_temporal_feature():
    pc = np.arange(12, dtype=float).reshape(4, 3)
    z = add_temporal_feature(pc, 0)
    o = add_temporal_feature(pc, 1)
    assert z.shape == (4, 4) and np.all(z[:, 3] == 0) and np.all(o[:, 3] == 1)
    assert np.array_equal(z[:, :3], pc)
    with pytest.raises(AlreadyAugmented):
        add_temporal_feature(z, 1)


def test_voxelize_empty():
    grid = voxelize(np.zeros((0, 3)))
    assert grid.dims == (128, 128, 20) and grid.features.shape == (128, 128, 20, 2)
    assert not grid.features.any()


def test_voxelize_min_corner():
    grid = voxelize(CAR.mins[None], dims=(128, 128, 20), region=CAR)
    assert grid.features[0, 0, 0, 0] == 1 and grid.features[0, 0, 0, 1] == 1.0
    assert grid.features.sum() == 2.0


def test_voxel_counts_brute_force(rng):
    pts = rng.uniform(-5, 5, size=(10_000, 3)) * np.array([1, 1, 0.35])
    counts = voxel_counts(pts, (16, 16, 5), CAR)
    assert np.array_equal(counts, brute_voxel_counts(pts, CAR.mins, CAR.maxs, (16, 16, 5)))
    assert counts.sum() == CAR.contains(pts).sum()


def test_voxelize_features(rng):
    pts = rng.uniform(-4, 4, size=(2000, 3)) * np.array([1, 1, 0.3])
    g = voxelize(pts, (8, 8, 4), CAR)
    counts = voxel_counts(pts, (8, 8, 4), CAR)
    assert np.array_equal(g.features[..., 0], (counts > 0).astype(float))
    assert np.allclose(g.features[..., 1], counts / counts.max())
