"""Online cascade tracker driven by two TWiX modules.

Each frame, alive tracks are matched to the detections with the first module
(threshold ``theta_1``); leftovers go through the second module (``theta_2``).
Unmatched detections scoring above ``theta_T`` open new tracks and tracks
unmatched for more than ``t_A`` seconds are dropped.  No box is ever produced
for a track without a detection.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .assignment import match_max
from .batching import frames_of
from .geometry import Detection
from .ingestion import Sequence, TrackObservation, gt_as_detections
from .model import TwixWeights, affinity_matrix
from .tracklets import build_tracklets, tracklets_to_observations


@dataclass(frozen=True)
class PipelineParams:
    theta_1: float = -0.5
    theta_2: float = -0.2
    theta_T: float = 0.9
    t_A: float = 1.6
    t_P: float = 0.8
    fps: float = 20.0

    def __post_init__(self):
        for name in ("theta_1", "theta_2"):
            v = getattr(self, name)
            if not -1.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [-1, 1], got {v}")
        if not 0.0 <= self.theta_T <= 1.0:
            raise ValueError(f"theta_T must lie in [0, 1], got {self.theta_T}")
        if self.t_A <= 0 or self.t_P <= 0 or self.fps <= 0:
            raise ValueError("t_A, t_P and fps must be positive")

    @property
    def max_age(self) -> int:
        return frames_of(self.t_A, self.fps)

    @property
    def history_frames(self) -> int:
        return max(1, frames_of(self.t_P, self.fps))


@dataclass
class Track:
    id: int
    frames: list[int]
    boxes: list[np.ndarray]
    age: int = 0

    def history(self, span: int) -> tuple[np.ndarray, np.ndarray]:
        """Observations within the last ``span`` frames of the track's own timeline."""
        fr = np.asarray(self.frames)
        lo = np.searchsorted(fr, fr[-1] - span + 1)
        return fr[lo:], np.asarray(self.boxes[lo:])

    def add(self, frame: int, box: np.ndarray, keep: int) -> None:
        self.frames.append(frame)
        self.boxes.append(box)
        # trim what can no longer fall in the history window
        cut = 0
        while self.frames[cut] <= frame - keep:
            cut += 1
        if cut:
            del self.frames[:cut], self.boxes[:cut]
        self.age = 0


@dataclass
class TrackState:
    tracks: list[Track] = field(default_factory=list)
    next_id: int = 1
    frame: int = 0


def _affinity(tracks: list[Track], dets: list[Detection], frame: int, w: TwixWeights, span: int) -> np.ndarray:
    past = [t.history(span) for t in tracks]
    future = [(np.array([frame]), d.box.as_array()[None]) for d in dets]
    return affinity_matrix(past, future, w)


def step(state: TrackState, frame: int, detections: list[Detection], w1: TwixWeights, w2: TwixWeights,
         params: PipelineParams) -> tuple[TrackState, list[TrackObservation]]:
    """Advance the tracker by one frame; returns the observations emitted for it.

    ``state`` is updated in place and also returned.
    """
    if frame <= state.frame:
        raise ValueError(f"frames must increase: got {frame} after {state.frame}")
    span = params.history_frames
    tracks = state.tracks
    matched: dict[int, int] = {}  # det index -> track index

    free_t = list(range(len(tracks)))
    free_d = list(range(len(detections)))
    for w, theta in ((w1, params.theta_1), (w2, params.theta_2)):
        # tanh never reaches 1, so theta = 1 rejects everything
        if not free_t or not free_d or theta >= 1.0:
            continue
        aff = _affinity([tracks[i] for i in free_t], [detections[j] for j in free_d], frame, w, span)
        # every pair above the threshold counts by its margin
        m = match_max(aff - theta, 0.0)
        for r, c in m.pairs:
            matched[free_d[c]] = free_t[r]
        free_t = [free_t[r] for r in m.unmatched_rows]
        free_d = [free_d[c] for c in m.unmatched_cols]

    out = []
    for j, i in sorted(matched.items()):
        d = detections[j]
        tracks[i].add(frame, d.box.as_array(), span)
        out.append(TrackObservation(frame, tracks[i].id, d.box, d.score))
    for j in free_d:
        d = detections[j]
        if d.score > params.theta_T:
            t = Track(state.next_id, [frame], [d.box.as_array()])
            state.next_id += 1
            tracks.append(t)
            out.append(TrackObservation(frame, t.id, d.box, d.score))
    unmatched = set(free_t)
    for i in unmatched:
        tracks[i].age += 1
    state.tracks = [t for k, t in enumerate(tracks) if not (k in unmatched and t.age > params.max_age)]
    state.frame = frame
    return state, out


@dataclass
class TrackingResult:
    observations: list[TrackObservation]
    frame_times: list[float]

    @property
    def fps(self) -> float:
        total = sum(self.frame_times)
        return len(self.frame_times) / total if total > 0 else float("inf")


def track_sequence(sequence: Sequence, w1: TwixWeights, w2: TwixWeights, params: PipelineParams,
                   detections=None, last_frame: int | None = None) -> TrackingResult:
    """Run the tracker over frames ``1..last_frame`` (default: the whole sequence)."""
    dets = sequence.detections if detections is None else detections
    last = sequence.meta.num_frames if last_frame is None else min(last_frame, sequence.meta.num_frames)
    state = TrackState()
    out, times = [], []
    for f in range(1, last + 1):
        t0 = time.perf_counter()
        _, obs = step(state, f, dets.at(f), w1, w2, params)
        times.append(time.perf_counter() - t0)
        out += obs
    return TrackingResult(out, times)


def oracle_mode(sequence: Sequence, w1: TwixWeights, w2: TwixWeights, params: PipelineParams) -> TrackingResult:
    """Track with ground-truth boxes (score 1) in place of detections."""
    return track_sequence(sequence, w1, w2, params, detections=gt_as_detections(sequence))


def iou_baseline(sequence: Sequence, theta_s: float = 0.3, detections=None) -> list[TrackObservation]:
    """Adjacent-frame IoU chaining only: every tracklet is reported as a track."""
    return tracklets_to_observations(build_tracklets(sequence, theta_s, detections))


def timing_log(result: TrackingResult) -> str:
    lines = ["frame,seconds"]
    lines += [f"{k + 1},{t:.6f}" for k, t in enumerate(result.frame_times)]
    lines.append(f"# mean_fps,{result.fps:.2f}")
    return "\n".join(lines) + "\n"
