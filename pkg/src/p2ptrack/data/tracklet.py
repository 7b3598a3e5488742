from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from p2ptrack.geometry import Box3D, points_in_box

SIZE_TOL = 1e-6
# surface points sit on the box faces; float32 storage can push them just outside
COUNT_MARGIN = 0.01


@dataclass
class Tracklet:
    """One object's ordered (sensor-frame cloud, ground-truth box) frames.

    Clouds are N x C with xyz in the first three columns. ``deltas`` holds the
    generating canonical-frame motions for synthetic tracklets (empty otherwise).
    """

    frames: list
    category: str = "car"
    id: str = ""
    deltas: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.frames) < 2:
            raise ValueError(f"tracklet {self.id!r} needs at least 2 frames, got {len(self.frames)}")
        s0 = np.array(self.frames[0][1].size)
        for _, box in self.frames[1:]:
            if np.abs(np.array(box.size) - s0).max() > SIZE_TOL:
                raise ValueError(f"tracklet {self.id!r}: box size changes across frames")

    def __len__(self):
        return len(self.frames)

    @property
    def boxes(self) -> list[Box3D]:
        return [b for _, b in self.frames]

    @property
    def clouds(self) -> list[np.ndarray]:
        return [p for p, _ in self.frames]

    def first_frame_count(self, margin: float = COUNT_MARGIN) -> int:
        pts, box = self.frames[0]
        return int(points_in_box(pts, box, margin).sum())
