"""Sequence tracking loop, One-Pass Evaluation metrics and reference trackers.

Tracking starts from the frame-1 ground truth. At every later frame both
clouds are cropped about the previous prediction, the predictor returns a
canonical-frame motion and the box is moved with ``apply_motion``.

OPE protocol constants: Success averages, over 101 IoU thresholds on [0, 1],
the fraction of frames with IoU strictly above the threshold. Precision
averages, over 101 distance thresholds on [0, 2] m, the fraction of frames
whose centre distance is at most the threshold. Both are scaled to 0..100 and
include the initial frame.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from p2ptrack.errors import EmptyRegion, LengthMismatch
from p2ptrack.geometry import Box3D, MotionDelta, apply_motion, iou3d_many, relative_motion
from p2ptrack.inputs import pair_input
from p2ptrack.nn.layers import Module
from p2ptrack.pointcloud import SEARCH_REGIONS, crop_search_region

IOU_THRESHOLDS = np.linspace(0.0, 1.0, 101)
PRECISION_MAX_DIST = 2.0
DIST_THRESHOLDS = np.linspace(0.0, PRECISION_MAX_DIST, 101)
SPARSITY_EDGES = (10, 20, 30, 40, 50)


@dataclass
class OpeResult:
    success: float
    precision: float
    ious: np.ndarray
    distances: np.ndarray

    @property
    def n_frames(self) -> int:
        return len(self.ious)

    def to_dict(self):
        return {
            "success": self.success,
            "precision": self.precision,
            "n_frames": self.n_frames,
            "ious": self.ious.tolist(),
            "distances": self.distances.tolist(),
        }


def ope_from_frames(ious, distances, iou_thresholds=IOU_THRESHOLDS, dist_thresholds=DIST_THRESHOLDS) -> OpeResult:
    ious = np.asarray(ious, dtype=np.float64)
    distances = np.asarray(distances, dtype=np.float64)
    if len(ious) == 0:
        raise LengthMismatch("OPE needs at least one frame")
    success = 100.0 * float(np.mean(ious[None, :] > iou_thresholds[:, None]))
    precision = 100.0 * float(np.mean(distances[None, :] <= dist_thresholds[:, None]))
    return OpeResult(success, precision, ious, distances)


def compute_ope(pred, gt) -> OpeResult:
    if len(pred) != len(gt):
        raise LengthMismatch(f"{len(pred)} predictions for {len(gt)} ground-truth boxes")
    if len(pred) == 0:
        raise LengthMismatch("OPE needs at least one frame")
    ious = iou3d_many(pred, gt)
    dist = np.linalg.norm(np.array([p.center for p in pred]) - np.array([g.center for g in gt]), axis=1)
    return ope_from_frames(ious, dist)


def aggregate_ope(results) -> OpeResult:
    """Frame-weighted pooling of several sequences."""
    results = list(results)
    return ope_from_frames(
        np.concatenate([r.ious for r in results]), np.concatenate([r.distances for r in results])
    )


# predictors: called as predictor(tracklet, t, prev_box) -> MotionDelta, or None when the crop is empty


class NetworkPredictor:
    def __init__(self, model, category="car", seed=0):
        self.model = model
        self.region = SEARCH_REGIONS[category]
        self.seed = seed

    def __call__(self, tracklet, t, prev_box):
        p_pts, c_pts = tracklet.frames[t - 1][0], tracklet.frames[t][0]
        prev = crop_search_region(np.asarray(p_pts)[:, :3], prev_box, self.region)
        curr = crop_search_region(np.asarray(c_pts)[:, :3], prev_box, self.region)
        try:
            a, b = pair_input(prev, curr, self.model.config, self.region, self.seed * 100003 + t)
        except EmptyRegion:
            return None
        return self.model.predict(a[None], b[None])[0]


def oracle_predictor(tracklet, t, prev_box):
    boxes = tracklet.boxes
    return relative_motion(boxes[t - 1], boxes[t], "canonical")


def zero_motion_predictor(tracklet, t, prev_box):
    return MotionDelta.zero()


def track_sequence(predictor, tracklet, init_box: Box3D | None = None, fallback="carry", category=None) -> list[Box3D]:
    """Predicted boxes for every frame; entry 0 is ``init_box``.

    ``predictor`` is a predictor callable or a network (wrapped in
    :class:`NetworkPredictor`). When the predictor has no answer the previous
    box is carried forward, or with ``fallback="constant_velocity"`` moved by
    the last world-frame step.
    """
    if len(tracklet) < 2:
        raise ValueError("tracking needs at least 2 frames")
    if fallback not in ("carry", "constant_velocity"):
        raise ValueError(f"unknown fallback {fallback!r}")
    if isinstance(predictor, Module):
        predictor = NetworkPredictor(predictor, category or tracklet.category)
    boxes = [init_box or tracklet.boxes[0]]
    for t in range(1, len(tracklet)):
        prev = boxes[-1]
        delta = predictor(tracklet, t, prev)
        if delta is not None:
            boxes.append(apply_motion(prev, delta, "canonical"))
        elif fallback == "constant_velocity" and len(boxes) >= 2:
            boxes.append(apply_motion(prev, relative_motion(boxes[-2], prev, "world"), "world"))
        else:
            boxes.append(prev)
    return boxes


def constant_velocity_baseline(tracklet, init_box: Box3D | None = None, warm_start=False) -> list[Box3D]:
    """Dead-reckoning tracker repeating its previous world-frame step.

    The first step is zero, which makes the tracker static. With
    ``warm_start`` the first step is the ground-truth motion from frame 1 to
    frame 2 instead, i.e. the velocity a two-detection track initialization
    would give.
    """
    boxes = [init_box or tracklet.boxes[0]]
    gt = tracklet.boxes
    step = relative_motion(gt[0], gt[1], "world") if warm_start else MotionDelta.zero()
    for _ in range(1, len(tracklet)):
        boxes.append(apply_motion(boxes[-1], step, "world"))
    return boxes


def bin_label(lo, hi):
    return f"[{lo},{'+inf' if hi is None else hi})"


def bin_by_sparsity(tracklets, edges=SPARSITY_EDGES) -> dict:
    """Group tracklets by first-frame in-box point count into ``len(edges)+1`` intervals."""
    edges = tuple(int(e) for e in edges)
    if any(b <= a for a, b in zip(edges, edges[1:])) or (edges and edges[0] <= 0):
        raise ValueError(f"edges must be positive and strictly increasing, got {edges}")
    bounds = [0, *edges]
    labels = [bin_label(lo, hi) for lo, hi in zip(bounds, [*edges, None])]
    groups = {lab: [] for lab in labels}
    for trk in tracklets:
        k = int(np.searchsorted(edges, trk.first_frame_count(), side="right"))
        groups[labels[k]].append(trk)
    return groups


@dataclass
class EvalReport:
    method: str
    per_sequence: dict
    overall: OpeResult
    bins: dict


def evaluate(method, tracker, tracklets, edges=SPARSITY_EDGES) -> EvalReport:
    """Run ``tracker(tracklet) -> boxes`` on each tracklet and pool the results."""
    per_seq = {}
    for trk in tracklets:
        per_seq[trk.id] = compute_ope(tracker(trk), trk.boxes)
    bins = {}
    for label, group in bin_by_sparsity(tracklets, edges).items():
        if group:
            bins[label] = aggregate_ope(per_seq[t.id] for t in group)
    return EvalReport(method, per_seq, aggregate_ope(per_seq.values()), bins)


def write_report(out_dir, reports) -> None:
    """``sequences_<method>.json``, ``summary.csv`` and ``sparsity.csv`` under ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for rep in reports:
        payload = {sid: r.to_dict() for sid, r in rep.per_sequence.items()}
        (out_dir / f"sequences_{rep.method}.json").write_text(json.dumps(payload, indent=1, sort_keys=True))
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("method", "success", "precision", "n_sequences", "n_frames"))
        for rep in reports:
            o = rep.overall
            w.writerow((rep.method, f"{o.success:.4f}", f"{o.precision:.4f}", len(rep.per_sequence), o.n_frames))
    with open(out_dir / "sparsity.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("method", "bin", "success", "precision", "n_frames"))
        for rep in reports:
            for label, r in rep.bins.items():
                w.writerow((rep.method, label, f"{r.success:.4f}", f"{r.precision:.4f}", r.n_frames))
