"""Short-term association of detections between adjacent frames."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assignment import match_max
from .geometry import Box, iou_matrix
from .ingestion import Sequence, TrackObservation


@dataclass
class Tracklet:
    """A run of observations on consecutive-or-gapped frames.

    ``coords`` rows are xywh boxes, one per entry of ``frames``.
    """

    id: int
    frames: np.ndarray
    coords: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.int64)
        self.coords = np.asarray(self.coords, dtype=np.float64).reshape(-1, 4)
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if not (len(self.frames) == len(self.coords) == len(self.scores)):
            raise ValueError("frames, coords and scores must have equal length")
        if len(self.frames) > 1 and np.any(np.diff(self.frames) <= 0):
            raise ValueError(f"tracklet {self.id}: frames must be strictly increasing")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def empty(self) -> bool:
        return len(self.frames) == 0

    @property
    def first(self) -> int:
        return int(self.frames[0])

    @property
    def last(self) -> int:
        return int(self.frames[-1])

    def boxes(self) -> list[Box]:
        return [Box(*row) for row in self.coords]


def tracklet_window(t: Tracklet, frame_lo: int, frame_hi: int) -> Tracklet:
    """Restrict ``t`` to frames in ``[frame_lo, frame_hi]``; may come back empty."""
    if frame_lo > frame_hi:
        raise ValueError(f"empty window [{frame_lo}, {frame_hi}]")
    lo = np.searchsorted(t.frames, frame_lo, side="left")
    hi = np.searchsorted(t.frames, frame_hi, side="right")
    return Tracklet(t.id, t.frames[lo:hi], t.coords[lo:hi], t.scores[lo:hi])


def build_tracklets(sequence: Sequence, theta_s: float = 0.3, detections=None) -> list[Tracklet]:
    """Chain detections of adjacent frames by Hungarian matching on IoU.

    A link survives only if its IoU is strictly above ``theta_s``.  Tracklet ids
    follow creation order: by frame, then by detection index within the frame.
    """
    if not 0.0 <= theta_s <= 1.0:
        raise ValueError(f"theta_s must lie in [0, 1], got {theta_s}")
    dets = sequence.detections if detections is None else detections
    runs: list[list] = []
    prev_boxes = np.zeros((0, 4))
    prev_runs: list[int] = []
    prev_frame = None
    for frame in sorted(dets.frames):
        cur = dets.frames[frame]
        boxes = np.array([d.box.as_array() for d in cur]).reshape(-1, 4)
        owner = [-1] * len(cur)
        if prev_frame == frame - 1 and len(prev_runs) and len(cur):
            m = match_max(iou_matrix(prev_boxes, boxes), theta_s)
            for r, c in m.pairs:
                owner[c] = prev_runs[r]
        for k, det in enumerate(cur):
            if owner[k] < 0:
                owner[k] = len(runs)
                runs.append([])
            runs[owner[k]].append(det)
        prev_boxes, prev_runs, prev_frame = boxes, owner, frame
    return [
        Tracklet(i + 1, [d.frame for d in run], [d.box.as_array() for d in run], [d.score for d in run])
        for i, run in enumerate(runs)
    ]


def tracklets_to_observations(tracklets: list[Tracklet]) -> list[TrackObservation]:
    return [TrackObservation(int(f), t.id, Box(*c), float(s))
            for t in tracklets for f, c, s in zip(t.frames, t.coords, t.scores)]
