import itertools
from collections import Counter

import numpy as np
import pytest

from ctwix.geometry import Box, Detection, iou
from ctwix.ingestion import DetectionSet, Sequence, SequenceMeta
from ctwix.tracklets import Tracklet, build_tracklets, tracklet_window


def make_seq(frames: dict, n: int | None = None) -> Sequence:
    dets = DetectionSet({f: [Detection(f, b, 0.9) for b in boxes] for f, boxes in frames.items() if boxes})
    return Sequence(SequenceMeta("t", 20, n or max(frames)), dets)


def test_static_box():
    b = Box(0, 0, 10, 10)
    (t,) = build_tracklets(make_seq({1: [b], 2: [b], 3: [b]}), 0.3)
    assert t.frames.tolist() == [1, 2, 3]


def test_gap_splits():
    b = Box(0, 0, 10, 10)
    ts = build_tracklets(make_seq({1: [b], 2: [], 3: [b]}), 0.3)
    assert [t.frames.tolist() for t in ts] == [[1], [3]]


def test_crossing_matches_brute_force():
    # two objects converging; per-frame best assignment decided by enumeration
    frames = {1: [Box(0, 0, 10, 10), Box(14, 0, 10, 10)],
              2: [Box(9, 0, 10, 10), Box(3, 0, 10, 10)]}
    ts = build_tracklets(make_seq(frames), 0.0)
    prev, cur = frames[1], frames[2]
    best = max(itertools.permutations(range(2)), key=lambda p: sum(iou(prev[i], cur[p[i]]) for i in range(2)))
    got = {tuple(t.coords[0]): tuple(t.coords[-1]) for t in ts if len(t) == 2}
    for i in range(2):
        assert got[tuple(prev[i].as_array())] == tuple(cur[best[i]].as_array())


def test_threshold_one_gives_singletons():
    b = Box(0, 0, 10, 10)
    ts = build_tracklets(make_seq({1: [b], 2: [b], 3: [b]}), 1.0)
    assert len(ts) == 3 and all(len(t) == 1 for t in ts)


def test_partition_and_determinism():
    rng = np.random.default_rng(0)
    frames = {}
    for f in range(1, 15):
        k = rng.integers(0, 5)
        frames[f] = [Box(*rng.uniform(0, 50, 2), *rng.uniform(5, 20, 2)) for _ in range(k)]
    seq = make_seq(frames, 14)
    ts = build_tracklets(seq, 0.2)
    got = Counter((int(f), tuple(c)) for t in ts for f, c in zip(t.frames, t.coords))
    want = Counter((d.frame, tuple(d.box.as_array())) for d in seq.detections)
    assert got == want
    assert all(np.all(np.diff(t.frames) == 1) for t in ts)
    again = build_tracklets(seq, 0.2)
    assert [(t.id, t.frames.tolist()) for t in ts] == [(t.id, t.frames.tolist()) for t in again]
    assert [t.id for t in ts] == list(range(1, len(ts) + 1))


def test_theta_range():
    with pytest.raises(ValueError):
        build_tracklets(make_seq({1: []}, 1), 1.5)


def test_window():
    t = Tracklet(1, [3, 4, 5], np.ones((3, 4)), [1, 1, 1])
    assert tracklet_window(t, 1, 10).frames.tolist() == [3, 4, 5]
    assert tracklet_window(t, 4, 9).frames.tolist() == [4, 5]
    assert tracklet_window(t, 7, 9).empty
    with pytest.raises(ValueError):
        tracklet_window(t, 5, 4)


def test_tracklet_invariants():
    with pytest.raises(ValueError):
        Tracklet(1, [2, 1], np.ones((2, 4)), [1, 1])
    with pytest.raises(ValueError):
        Tracklet(1, [1, 2], np.ones((3, 4)), [1, 1])
