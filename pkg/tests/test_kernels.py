"""Both kernel backends against brute-force oracles and against each other."""
import math

import numpy as np
import pytest

from oracles import brute_voxel_counts, maximin_fps, monte_carlo_iou
from p2ptrack import _pycore, kernels


def random_box_pairs(rng, n):
    a = np.column_stack([rng.normal(0, 1, (n, 3)), rng.uniform(0.5, 3, (n, 3)), rng.uniform(-math.pi, math.pi, n)])
    b = a.copy()
    b[:, :3] += rng.normal(0, 0.6, (n, 3))
    b[:, 3:6] = rng.uniform(0.5, 3, (n, 3))
    b[:, 6] = rng.uniform(-math.pi, math.pi, n)
    return a, b


def test_backend_selection_reports_name():
    assert kernels.BACKEND in ("cython", "python")
    assert "python" in kernels.available_backends()


def test_fps_matches_oracle(backend, rng):
    for _ in range(30):
        n = int(rng.integers(1, 40))
        k = int(rng.integers(1, 16))
        pts = rng.normal(size=(n, 3))
        first = int(rng.integers(n))
        assert backend.farthest_point_sample(pts, k, first).tolist() == maximin_fps(pts.tolist(), k, first)


def test_fps_lowest_index_tie_break(backend):
    # points 1 and 2 are equally far from point 0
    pts = np.array([[0, 0, 0], [1, 0, 0], [-1, 0, 0], [0, 0.5, 0]], float)
    assert backend.farthest_point_sample(pts, 2, 0).tolist() == [0, 1]


def test_fps_toy_example(backend):
    pts = np.array([[0, 0, 0], [10, 0, 0], [5, 0, 0], [0, 1, 0]], float)
    out = backend.farthest_point_sample(pts, 3, 0).tolist()
    assert out == [0, 1, 2]


def test_fps_padding_cycles(backend):
    pts = np.eye(3)
    out = backend.farthest_point_sample(pts, 5, 1).tolist()
    assert len(set(out[:3])) == 3 and out[3:] == out[:2]


def test_iou_backends_against_monte_carlo(backend, rng):
    a, b = random_box_pairs(rng, 15)
    got = backend.iou3d_pairs(a, b)
    ref = [monte_carlo_iou(x, y, n=400_000, rng=rng) for x, y in zip(a, b)]
    assert np.allclose(got, ref, atol=0.006)


def test_voxel_counts_backend_brute_force(backend, rng):
    pts = rng.uniform(-1.2, 1.2, size=(3000, 3))
    mins, maxs = np.array([-1.0, -1.0, -0.5]), np.array([1.0, 1.0, 0.5])
    dims = np.array([8, 6, 4], dtype=np.int64)
    got = backend.voxel_counts(pts, mins, maxs, dims)
    assert np.array_equal(got, brute_voxel_counts(pts, mins, maxs, tuple(dims)))


@pytest.mark.skipif("cython" not in kernels.available_backends(), reason="extension not built")
def test_backends_bit_identical(rng):
    core = kernels.available_backends()["cython"]
    pts = rng.normal(size=(500, 3))
    assert np.array_equal(core.farthest_point_sample(pts, 128, 3), _pycore.farthest_point_sample(pts, 128, 3))
    a, b = random_box_pairs(rng, 300)
    assert np.array_equal(core.iou3d_pairs(a, b), _pycore.iou3d_pairs(a, b))
    mins, maxs, dims = np.array([-1.0, -1, -1]), np.array([1.0, 1, 1]), np.array([5, 7, 3], dtype=np.int64)
    assert np.array_equal(core.voxel_counts(pts, mins, maxs, dims), _pycore.voxel_counts(pts, mins, maxs, dims))


def test_pure_python_env_forces_fallback():
    import subprocess
    import sys

    code = "from p2ptrack import kernels; print(kernels.BACKEND)"
    env = {**__import__("os").environ, "P2PTRACK_PURE_PYTHON": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
