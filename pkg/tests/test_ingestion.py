import pytest
from hypothesis import given, settings, strategies as st

from ctwix.geometry import Box, Detection
from ctwix.ingestion import (DetectionSet, GroundTruthTrack, GTEntry, ParseError, Sequence, SequenceMeta,
                             TrackObservation, filter_detections, gt_as_detections, kitti_to_mot,
                             load_sequence, parse_mot_detections, parse_mot_groundtruth, parse_mot_results,
                             parse_seqinfo, save_sequence, write_mot_results, write_seqinfo)


def test_detection_line():
    d = parse_mot_detections("1,-1,10,20,30,40,0.9,-1,-1,-1")
    (det,) = list(d)
    assert det == Detection(1, Box(10, 20, 30, 40), 0.9)


def test_empty_and_whitespace():
    assert len(parse_mot_detections("")) == 0
    a = parse_mot_detections("1,-1,10,20,30,40,0.9,-1,-1,-1")
    b = parse_mot_detections("1,-1,10,20,30,40,0.9,-1,-1,-1   \n\n")
    assert list(a) == list(b)


def test_zero_width_rejected_with_count():
    d = parse_mot_detections("1,-1,10,20,0,40,0.9,-1,-1,-1\n2,-1,1,1,5,5,0.8,-1,-1,-1")
    assert d.rejected == 1
    assert len(d) == 1


@pytest.mark.parametrize("line,lineno", [("1,-1,10,20,30", 1), ("1,-1,a,20,30,40,0.9,-1,-1,-1", 1)])
def test_malformed_names_line(line, lineno):
    with pytest.raises(ParseError) as e:
        parse_mot_detections(line)
    assert e.value.lineno == lineno
    with pytest.raises(ParseError) as e:
        parse_mot_detections("1,-1,1,1,5,5,0.8,-1,-1,-1\n" + line)
    assert e.value.lineno == 2


def test_order_within_frame_preserved():
    d = parse_mot_detections("1,-1,5,0,5,5,0.9,-1,-1,-1\n1,-1,0,0,5,5,0.8,-1,-1,-1")
    assert [x.box.x for x in d.at(1)] == [5, 0]


def test_groundtruth_grouping_and_flags():
    text = "2,7,0,0,5,5,1,1,1\n1,7,0,0,5,5,0,1,0.5\n1,3,1,1,5,5,1,1,1\n"
    tracks = parse_mot_groundtruth(text)
    assert [t.object_id for t in tracks] == [3, 7]
    t7 = tracks[1]
    assert t7.frames == [1, 2]
    assert t7.entries[0].ignored and not t7.entries[1].ignored
    assert parse_mot_groundtruth("1,3,0,0,5,5,1,4,1", ignore_classes=(4,))[0].entries[0].ignored
    assert parse_mot_groundtruth("1,3,0,0,5,5,1,4,1", class_whitelist=(1,)) == []


def test_groundtruth_duplicate_is_error():
    with pytest.raises(ParseError):
        parse_mot_groundtruth("1,3,0,0,5,5,1,1,1\n1,3,2,2,5,5,1,1,1")


def test_filter_rules():
    dets = DetectionSet({1: [
        Detection(1, Box(0, 0, 20, 20), 0.5),  # score exactly at threshold
        Detection(1, Box(0, 0, 16, 8), 0.9),  # area exactly 128
        Detection(1, Box(0, 0, 20, 20), 0.51),
    ]})
    kept = filter_detections(dets)
    assert [d.score for d in kept] == [0.51]
    assert list(filter_detections(kept)) == list(kept)


def test_results_roundtrip():
    obs = [TrackObservation(2, 1, Box(1.234, 2.345, 10.111, 20.999), 0.9),
           TrackObservation(1, 5, Box(3, 4, 5, 6), 1.0),
           TrackObservation(1, 2, Box(7, 8, 9, 10), 0.5)]
    text = write_mot_results(obs)
    assert text.splitlines()[0].startswith("1,2,")
    assert text.splitlines()[1].startswith("1,5,")
    back = parse_mot_results(text)
    for o, b in zip(sorted(obs, key=lambda o: (o.frame, o.track_id)), back):
        assert (o.frame, o.track_id) == (b.frame, b.track_id)
        for u, v in zip(o.box.as_array(), b.box.as_array()):
            assert abs(u - v) <= 0.005 + 1e-9
    assert write_mot_results([]) == ""
    assert text.splitlines()[0] == "1,2,7.00,8.00,9.00,10.00,0.50,-1,-1,-1"


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 50), st.integers(1, 20), st.floats(-100, 100), st.floats(-100, 100),
                          st.floats(1, 100), st.floats(1, 100)), max_size=20))
def test_results_roundtrip_property(rows):
    obs = [TrackObservation(f, i, Box(x, y, w, h)) for f, i, x, y, w, h in rows]
    back = parse_mot_results(write_mot_results(obs))
    assert len(back) == len(obs)
    srt = sorted(obs, key=lambda o: (o.frame, o.track_id))
    assert [(o.frame, o.track_id) for o in srt] == [(o.frame, o.track_id) for o in back]


def test_seqinfo_roundtrip():
    meta = SequenceMeta("s", 20.0, 100, 640, 480)
    assert parse_seqinfo(write_seqinfo(meta)) == meta
    m = parse_seqinfo("[Sequence]\nname=x\nframeRate=30\nseqLength=5\nimWidth=10\nimHeight=20\n")
    assert (m.fps, m.num_frames, m.image_width) == (30.0, 5, 10)
    with pytest.raises(ValueError):
        parse_seqinfo("fps=20\n")


def test_sequence_dir_roundtrip(tmp_path):
    dets = DetectionSet({1: [Detection(1, Box(0, 0, 20, 20), 0.9)], 3: [Detection(3, Box(1, 1, 20, 20), 0.8)]})
    gt = [GroundTruthTrack(4, [GTEntry(1, Box(0, 0, 20, 20)), GTEntry(3, Box(1, 1, 20, 20), ignored=True)])]
    seq = Sequence(SequenceMeta("abc", 20, 5), dets, gt)
    save_sequence(seq, tmp_path / "abc")
    back = load_sequence(tmp_path / "abc")
    assert back.meta == seq.meta
    assert [(d.frame, d.box) for d in back.detections] == [(d.frame, d.box) for d in dets]
    assert back.gt_tracks[0].entries[1].ignored
    assert back.ignore_flags == {(4, 1): False, (4, 3): True}


def test_sequence_frame_bounds():
    with pytest.raises(ValueError):
        Sequence(SequenceMeta("s", 20, 2), DetectionSet({3: [Detection(3, Box(0, 0, 1, 1))]}))


def test_gt_as_detections_skips_ignored():
    gt = [GroundTruthTrack(1, [GTEntry(1, Box(0, 0, 5, 5)), GTEntry(2, Box(0, 0, 5, 5), ignored=True)])]
    dets = gt_as_detections(Sequence(SequenceMeta("s", 20, 2), DetectionSet(), gt))
    assert [(d.frame, d.score) for d in dets] == [(1, 1.0)]
    with pytest.raises(ValueError):
        gt_as_detections(Sequence(SequenceMeta("s", 20, 2), DetectionSet()))


def test_kitti_conversion():
    text = ("0 1 Car 0 0 0 10 20 50 60 1 1 1 1 1 1 1\n"
            "0 -1 DontCare -1 -1 -10 0 0 5 5 -1 -1 -1 -1 -1 -1 -1\n"
            "1 2 Pedestrian 0 0 0 1 2 3 10 1 1 1 1 1 1 1\n")
    out = kitti_to_mot(text)
    cars = parse_mot_groundtruth(out["Car"])
    assert [t.object_id for t in cars][0] == 1
    assert cars[0].entries[0].box == Box(10, 20, 40, 40)
    assert any(e.ignored for t in cars for e in t.entries)
    peds = parse_mot_groundtruth(out["Pedestrian"])
    assert any(t.object_id == 2 and t.entries[0].frame == 2 for t in peds)
