import numpy as np
import pytest

from ctwix import pipeline as P
from ctwix.geometry import Box, Detection, iou
from ctwix.ingestion import DetectionSet, Sequence, SequenceMeta
from ctwix.model import TwixHyper, TwixWeights
from ctwix.pipeline import PipelineParams, Track, TrackState, iou_baseline, step, track_sequence
from ctwix.synth import ScenarioConfig, generate

W1, W2 = object(), object()


def iou_affinity(tracks, dets, frame, w, span):
    return np.array([[2 * iou(Box(*t.boxes[-1]), d.box) - 1 for d in dets] for t in tracks]).reshape(len(tracks), len(dets))


@pytest.fixture
def iou_model(monkeypatch):
    monkeypatch.setattr(P, "_affinity", iou_affinity)


def det(f, x, score=0.95):
    return Detection(f, Box(x, 0, 20, 40), score)


def test_empty_detections_age_track(iou_model):
    st = TrackState([Track(1, [1], [np.array([0, 0, 20, 40.0])])], 2, 1)
    st, out = step(st, 2, [], W1, W2, PipelineParams())
    assert out == [] and st.tracks[0].age == 1


def test_new_tracks_need_score_above_threshold(iou_model):
    st, out = step(TrackState(), 1, [det(1, 0, 0.95), det(1, 100, 0.8), det(1, 200, 0.6)], W1, W2,
                   PipelineParams(theta_T=0.9))
    assert [o.track_id for o in out] == [1]
    assert len(st.tracks) == 1


def test_cascade_second_stage(monkeypatch):
    monkeypatch.setattr(P, "_affinity", lambda t, d, f, w, s: np.array([[-0.8 if w is W1 else 0.1]]))
    st = TrackState([Track(7, [1], [np.array([0, 0, 20, 40.0])])], 8, 1)
    st, out = step(st, 2, [det(2, 500)], W1, W2, PipelineParams(theta_1=-0.5, theta_2=-0.2))
    assert [o.track_id for o in out] == [7]
    assert st.tracks[0].frames == [1, 2]


def test_theta1_one_disables_first_stage(monkeypatch):
    calls = []

    def fake(t, d, f, w, s):
        calls.append(w)
        return np.full((len(t), len(d)), 0.5)

    monkeypatch.setattr(P, "_affinity", fake)
    st = TrackState([Track(1, [1], [np.array([0, 0, 20, 40.0])])], 2, 1)
    step(st, 2, [det(2, 0)], W1, W2, PipelineParams(theta_1=1.0))
    assert calls == [W2]


def test_kill_rule(iou_model):
    params = PipelineParams(t_A=0.2, fps=20)  # max age 4 frames
    st, _ = step(TrackState(), 1, [det(1, 0)], W1, W2, params)
    for f in range(2, 6):
        st, _ = step(st, f, [], W1, W2, params)
    assert len(st.tracks) == 1 and st.tracks[0].age == 4
    st, _ = step(st, 6, [], W1, W2, params)
    assert st.tracks == []


def test_frames_must_increase(iou_model):
    st, _ = step(TrackState(), 3, [], W1, W2, PipelineParams())
    with pytest.raises(ValueError):
        step(st, 3, [], W1, W2, PipelineParams())


def test_history_window():
    t = Track(1, [], [])
    for f in (1, 2, 3, 8, 9, 10):
        t.add(f, np.array([f, 0, 1, 1.0]), keep=5)
    assert t.frames == [8, 9, 10]
    fr, boxes = t.history(5)
    assert fr.tolist() == [8, 9, 10] and boxes[:, 0].tolist() == [8, 9, 10]
    assert t.history(2)[0].tolist() == [9, 10]


def single_object_sequence(n=30):
    frames = {f: [det(f, 3.0 * f)] for f in range(1, n + 1)}
    return Sequence(SequenceMeta("one", 20.0, n, 1280, 720), DetectionSet(frames), None)


def test_single_object_keeps_one_id(iou_model):
    res = track_sequence(single_object_sequence(), W1, W2, PipelineParams())
    assert {o.track_id for o in res.observations} == {1}
    assert len(res.observations) == 30


@pytest.fixture(scope="module")
def random_weights():
    h = TwixHyper(dim=16, heads=4, ffn_dim=16)
    return TwixWeights.init(h, 0), TwixWeights.init(h, 1)


@pytest.fixture(scope="module")
def noisy_sequence():
    return generate(ScenarioConfig(regime="erratic", num_frames=60, center_jitter=2.0, miss_prob=0.1,
                                   fp_rate=0.5, occlusions_per_object=1.0, score_range=(0.5, 1.0)), 3)


def test_online_causality(random_weights, noisy_sequence):
    w1, w2 = random_weights
    params = PipelineParams(theta_1=0.0, theta_2=-0.5, theta_T=0.6)
    full = track_sequence(noisy_sequence, w1, w2, params).observations
    part = track_sequence(noisy_sequence, w1, w2, params, last_frame=35).observations
    assert part == [o for o in full if o.frame <= 35]


def test_ids_increase_and_boxes_are_detections(random_weights, noisy_sequence):
    w1, w2 = random_weights
    res = track_sequence(noisy_sequence, w1, w2, PipelineParams(theta_1=0.0, theta_2=-0.5, theta_T=0.6))
    first_seen = {}
    for o in res.observations:
        first_seen.setdefault(o.track_id, o.frame)
    ids = list(first_seen)
    assert ids == sorted(ids) == list(range(1, len(ids) + 1))
    for o in res.observations:
        assert any(d.box == o.box for d in noisy_sequence.detections.at(o.frame))
    per_frame = [(o.frame, o.track_id) for o in res.observations]
    assert len(per_frame) == len(set(per_frame))
    assert len(res.frame_times) == 60 and res.fps > 0


def test_oracle_mode_uses_gt_boxes(random_weights, noisy_sequence):
    w1, w2 = random_weights
    res = P.oracle_mode(noisy_sequence, w1, w2, PipelineParams())
    gt_boxes = {(e.frame, e.box) for g in noisy_sequence.gt_tracks for e in g.entries}
    assert res.observations and all((o.frame, o.box) in gt_boxes for o in res.observations)


def test_iou_baseline_chains_adjacent_frames():
    obs = iou_baseline(single_object_sequence(), 0.3)
    assert len({o.track_id for o in obs}) == 1 and len(obs) == 30


def test_params_validation_and_derived():
    p = PipelineParams(t_A=1.6, t_P=0.8, fps=20)
    assert p.max_age == 32 and p.history_frames == 16
    with pytest.raises(ValueError):
        PipelineParams(theta_1=1.5)
    with pytest.raises(ValueError):
        PipelineParams(theta_T=-0.1)


def test_timing_log():
    res = P.TrackingResult([], [0.01, 0.02])
    text = P.timing_log(res)
    assert text.splitlines()[0] == "frame,seconds" and "mean_fps,66.67" in text
