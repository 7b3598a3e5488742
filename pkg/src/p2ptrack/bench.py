"""Micro-benchmarks of the hot kernels, compiled core against the numpy fallback."""
from __future__ import annotations

import math
import timeit
from dataclasses import dataclass

import numpy as np

from p2ptrack.kernels import available_backends


@dataclass
class BenchRow:
    kernel: str
    backend: str
    size: str
    seconds: float  # best per-call time

    def as_tuple(self):
        return (self.kernel, self.backend, self.size, self.seconds)


def _cases(rng):
    cloud = rng.normal(size=(2048, 3)) * 3.0
    boxes_a = np.column_stack(
        [rng.normal(size=(1000, 3)), rng.uniform(1, 3, (1000, 3)), rng.uniform(-math.pi, math.pi, 1000)]
    )
    boxes_b = boxes_a + np.column_stack([rng.normal(0, 0.5, (1000, 3)), np.zeros((1000, 3)), rng.normal(0, 0.3, 1000)])
    crop = rng.uniform(-4.8, 4.8, size=(20000, 3)) * np.array([1, 1, 0.3])
    mins, maxs = np.array([-4.8, -4.8, -1.5]), np.array([4.8, 4.8, 1.5])
    dims = np.array([128, 128, 20], dtype=np.int64)
    return [
        ("farthest_point_sample", "N=2048,k=1024", lambda m: m.farthest_point_sample(cloud, 1024, 0)),
        ("iou3d_pairs", "1000 pairs", lambda m: m.iou3d_pairs(boxes_a, boxes_b)),
        ("voxel_counts", "20000 pts,128x128x20", lambda m: m.voxel_counts(crop, mins, maxs, dims)),
    ]


def run_benchmarks(repeat=5, number=1, seed=0) -> list[BenchRow]:
    rng = np.random.default_rng(seed)
    rows = []
    for kernel, size, fn in _cases(rng):
        for backend, mod in available_backends().items():
            best = min(timeit.repeat(lambda: fn(mod), repeat=repeat, number=number)) / number
            rows.append(BenchRow(kernel, backend, size, best))
    return rows


def format_rows(rows) -> str:
    by = {(r.kernel, r.backend): r.seconds for r in rows}
    lines = [f"{'kernel':24s} {'size':22s} {'backend':8s} {'ms/call':>10s} {'speedup':>8s}"]
    for r in rows:
        base = by.get((r.kernel, "python"))
        speed = f"{base / r.seconds:8.1f}" if base else ""
        lines.append(f"{r.kernel:24s} {r.size:22s} {r.backend:8s} {1e3 * r.seconds:10.3f} {speed}")
    return "\n".join(lines)


if __name__ == "__main__":
    print(format_rows(run_benchmarks()))
