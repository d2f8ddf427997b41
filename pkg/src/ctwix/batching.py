"""Training batches of past/future tracklet sets with their label matrix.

Windows are measured in frames.  The past window holds the ``t_P * fps``
frames ending at ``f_P``; the future window holds the ``t_F * fps`` frames
starting at ``f_F`` (a single frame for ``t_F = 1 / fps``).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .assignment import match_max
from .geometry import iou_matrix
from .tracklets import Tracklet, tracklet_window

POSITIVE, NEGATIVE, IGNORED = 1, 0, -1

# special results of assign_tracklets_to_gt
GT_NONE = -1
GT_IGNORED = -2


class Stage(str, Enum):
    FIRST = "first"
    SECOND = "second"


def frames_of(seconds: float, fps: float) -> int:
    """Seconds to a whole number of frames, tolerant of float noise."""
    return int(math.floor(seconds * fps + 1e-6))


@dataclass(frozen=True)
class BatchConfig:
    t_G: float = 1.6
    t_P: float = 0.8
    t_F: float = 0.05
    fps: float = 20.0

    def __post_init__(self):
        if self.t_G < 0 or self.t_P <= 0 or self.t_F <= 0 or self.fps <= 0:
            raise ValueError(f"invalid batch config {self}")

    @property
    def past_frames(self) -> int:
        return max(1, frames_of(self.t_P, self.fps))

    @property
    def future_frames(self) -> int:
        return max(1, frames_of(self.t_F, self.fps))

    @property
    def max_gap(self) -> int:
        return frames_of(self.t_G, self.fps)


@dataclass
class TrackletBatch:
    past: list[Tracklet]
    future: list[Tracklet]
    labels: np.ndarray
    f_P: int
    f_F: int

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.past), len(self.future))


def assign_tracklets_to_gt(tracklets: list[Tracklet], gt_tracks, iou_match: float = 0.5) -> dict[int, int]:
    """Map tracklet id to a GT object id, ``GT_NONE`` or ``GT_IGNORED``.

    Observations are matched per frame to GT boxes (Hungarian, IoU >= iou_match);
    a tracklet takes the identity matched on more than half its observations.
    """
    gt_by_frame: dict[int, list] = {}
    for g in gt_tracks:
        for e in g.entries:
            gt_by_frame.setdefault(e.frame, []).append((g.object_id, e))
    obs_by_frame: dict[int, list] = {}
    for t in tracklets:
        for k, f in enumerate(t.frames):
            obs_by_frame.setdefault(int(f), []).append((t.id, t.coords[k]))

    votes: dict[int, Counter] = {t.id: Counter() for t in tracklets}
    ignored_votes: dict[int, Counter] = {t.id: Counter() for t in tracklets}
    thr = np.nextafter(iou_match, -np.inf)
    for f, obs in obs_by_frame.items():
        gts = gt_by_frame.get(f)
        if not gts:
            continue
        ious = iou_matrix(np.array([o[1] for o in obs]), np.array([e.box.as_array() for _, e in gts]))
        for r, c in match_max(ious, thr).pairs:
            tid = obs[r][0]
            oid, entry = gts[c]
            votes[tid][oid] += 1
            if entry.ignored:
                ignored_votes[tid][oid] += 1

    out = {}
    for t in tracklets:
        if not votes[t.id]:
            out[t.id] = GT_NONE
            continue
        (oid, n), = votes[t.id].most_common(1)
        if 2 * n <= len(t):
            out[t.id] = GT_NONE
        elif 2 * ignored_votes[t.id][oid] > n:
            out[t.id] = GT_IGNORED
        else:
            out[t.id] = oid
    return out


def label_pair(past_sub: Tracklet, future_sub: Tracklet, gt_assignment: dict[int, int] | None,
               spans: dict[int, tuple[int, int]] | None = None) -> int:
    """POSITIVE, NEGATIVE or IGNORED for one (past, future) pair.

    ``spans`` gives each source tracklet's full ``(first, last)`` frames, used
    for the temporal-overlap rule; without it the sub-tracklets' own extents
    are used.
    """
    if past_sub.id == future_sub.id:
        return POSITIVE
    gp = GT_NONE if gt_assignment is None else gt_assignment.get(past_sub.id, GT_NONE)
    gf = GT_NONE if gt_assignment is None else gt_assignment.get(future_sub.id, GT_NONE)
    if gp >= 0 and gp == gf:
        return POSITIVE
    if gp >= 0 and gf >= 0:
        return NEGATIVE
    if gp == GT_IGNORED or gf == GT_IGNORED:
        return IGNORED
    if spans is not None:
        a0, a1 = spans[past_sub.id]
        b0, b1 = spans[future_sub.id]
    else:
        a0, a1, b0, b1 = past_sub.first, past_sub.last, future_sub.first, future_sub.last
    if a0 <= b1 and b0 <= a1:
        return NEGATIVE
    return IGNORED


def make_batch(tracklets: list[Tracklet], gt_assignment, f_P: int, f_F: int, cfg: BatchConfig,
               spans=None) -> TrackletBatch | None:
    gap = f_F - f_P - 1
    if not 0 <= gap <= cfg.max_gap:
        raise ValueError(f"frame gap {gap} outside [0, {cfg.max_gap}] for f_P={f_P}, f_F={f_F}")
    if spans is None:
        spans = {t.id: (t.first, t.last) for t in tracklets if not t.empty}
    past_lo = f_P - cfg.past_frames + 1
    future_hi = f_F + cfg.future_frames - 1
    past, future = [], []
    for t in tracklets:
        if t.empty or t.last < past_lo or t.first > future_hi:
            continue
        if t.first <= f_P:
            w = tracklet_window(t, past_lo, f_P)
            if not w.empty:
                past.append(w)
        if t.last >= f_F:
            w = tracklet_window(t, f_F, future_hi)
            if not w.empty:
                future.append(w)
    if not past or not future:
        return None
    labels = np.array([[label_pair(p, q, gt_assignment, spans) for q in future] for p in past],
                      dtype=np.int8)
    return TrackletBatch(past, future, labels, f_P, f_F)


def sample_batch_frames(tracklets: list[Tracklet], num_frames: int, cfg: BatchConfig, stage,
                        subsample: float = 1.0, rng=None):
    """Eligible ``(f_P, f_F)`` pairs for a training stage.

    FIRST yields every adjacent pair.  SECOND yields pairs within the gap bound
    where some tracklet ends at ``f_P`` and some tracklet starts at ``f_F``.
    ``subsample < 1`` keeps a random fraction, drawn from ``rng``.
    """
    stage = Stage(stage)
    if stage is Stage.FIRST:
        pairs = [(f, f + 1) for f in range(1, num_frames)]
    else:
        ends = sorted({t.last for t in tracklets if not t.empty})
        starts = {t.first for t in tracklets if not t.empty}
        pairs = [(fp, ff) for fp in ends for ff in range(fp + 1, fp + cfg.max_gap + 2)
                 if ff in starts and ff <= num_frames]
    if subsample < 1.0 and pairs:
        rng = np.random.default_rng(0) if rng is None else rng
        keep = rng.random(len(pairs)) < subsample
        pairs = [p for p, k in zip(pairs, keep) if k]
    yield from pairs
