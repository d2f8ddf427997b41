"""MOTChallenge-format reading and writing.

Detection and result files share the 10-field layout
``frame,id,bb_left,bb_top,bb_width,bb_height,conf,x,y,z``; ground-truth files
use the 9-field ``frame,id,bb_left,bb_top,bb_width,bb_height,flag,class,visibility``.
A sequence directory holds ``det.txt``, optionally ``gt.txt``, and
``seqinfo.ini``.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from .geometry import Box, Detection

log = logging.getLogger(__name__)


class ParseError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


@dataclass(frozen=True)
class SequenceMeta:
    name: str
    fps: float
    num_frames: int
    image_width: int = 1920
    image_height: int = 1080

    def __post_init__(self):
        if self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        if self.num_frames < 1:
            raise ValueError(f"num_frames must be >= 1, got {self.num_frames}")
        if self.image_width <= 0 or self.image_height <= 0:
            raise ValueError("image dimensions must be positive")


@dataclass(frozen=True)
class GTEntry:
    frame: int
    box: Box
    visibility: float = 1.0
    class_id: int = 1
    ignored: bool = False


@dataclass
class GroundTruthTrack:
    object_id: int
    entries: list[GTEntry] = field(default_factory=list)

    @property
    def frames(self) -> list[int]:
        return [e.frame for e in self.entries]


@dataclass
class DetectionSet:
    """Per-frame detection lists plus the count of rejected lines."""

    frames: dict[int, list[Detection]] = field(default_factory=dict)
    rejected: int = 0

    def __len__(self) -> int:
        return sum(len(v) for v in self.frames.values())

    def __iter__(self):
        for f in sorted(self.frames):
            yield from self.frames[f]

    def at(self, frame: int) -> list[Detection]:
        return self.frames.get(frame, [])


@dataclass
class Sequence:
    meta: SequenceMeta
    detections: DetectionSet
    gt_tracks: list[GroundTruthTrack] | None = None

    def __post_init__(self):
        for f in self.detections.frames:
            if not 1 <= f <= self.meta.num_frames:
                raise ValueError(
                    f"detection frame {f} outside [1, {self.meta.num_frames}] in {self.meta.name}")

    @property
    def ignore_flags(self) -> dict[tuple[int, int], bool]:
        """``(object_id, frame) -> ignored`` for every GT entry."""
        if self.gt_tracks is None:
            return {}
        return {(t.object_id, e.frame): e.ignored for t in self.gt_tracks for e in t.entries}


@dataclass(frozen=True)
class TrackObservation:
    """One row of a tracker result file."""

    frame: int
    track_id: int
    box: Box
    score: float = 1.0


def _fields(line: str, lineno: int, expected: int) -> list[float]:
    parts = [p.strip() for p in line.split(",")]
    if len(parts) != expected:
        raise ParseError(lineno, f"expected {expected} fields, got {len(parts)}")
    try:
        return [float(p) for p in parts]
    except ValueError as err:
        raise ParseError(lineno, f"non-numeric field ({err})") from None


def _lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line:
            yield lineno, line


def parse_mot_detections(text: str) -> DetectionSet:
    out = DetectionSet()
    for lineno, line in _lines(text):
        f = _fields(line, lineno, 10)
        frame, w, h, conf = int(f[0]), f[4], f[5], f[6]
        if w <= 0 or h <= 0:
            out.rejected += 1
            continue
        conf = min(max(conf, 0.0), 1.0)
        try:
            det = Detection(frame, Box(f[2], f[3], w, h), conf)
        except ValueError as err:
            raise ParseError(lineno, str(err)) from None
        out.frames.setdefault(frame, []).append(det)
    if out.rejected:
        log.warning("rejected %d detection lines with non-positive size", out.rejected)
    return out


def parse_mot_groundtruth(text: str, class_whitelist=None, ignore_classes=()) -> list[GroundTruthTrack]:
    """Group GT lines into tracks sorted by frame.

    Lines whose class is outside ``class_whitelist`` (when given) and not in
    ``ignore_classes`` are dropped.  Entries with flag 0 or an ignored class are
    kept but marked ``ignored``.
    """
    ignore_classes = set(ignore_classes)
    by_id: dict[int, dict[int, GTEntry]] = defaultdict(dict)
    for lineno, line in _lines(text):
        f = _fields(line, lineno, 9)
        frame, oid, flag, cls, vis = int(f[0]), int(f[1]), int(f[6]), int(f[7]), f[8]
        if class_whitelist is not None and cls not in class_whitelist and cls not in ignore_classes:
            continue
        if frame in by_id[oid]:
            raise ParseError(lineno, f"duplicate entry for frame {frame}, id {oid}")
        if f[4] <= 0 or f[5] <= 0:
            raise ParseError(lineno, "non-positive box size")
        ignored = flag == 0 or cls in ignore_classes
        by_id[oid][frame] = GTEntry(frame, Box(f[2], f[3], f[4], f[5]), vis, cls, ignored)
    return [GroundTruthTrack(oid, [entries[k] for k in sorted(entries)])
            for oid, entries in sorted(by_id.items())]


def filter_detections(dets: DetectionSet, min_score: float = 0.5, min_area: float = 128.0) -> DetectionSet:
    kept = {}
    for frame, lst in dets.frames.items():
        keep = [d for d in lst if d.score > min_score and d.box.area > min_area]
        if keep:
            kept[frame] = keep
    return DetectionSet(kept, dets.rejected)


def write_mot_results(observations) -> str:
    rows = sorted(observations, key=lambda o: (o.frame, o.track_id))
    return "".join(
        f"{o.frame},{o.track_id},{o.box.x:.2f},{o.box.y:.2f},{o.box.w:.2f},{o.box.h:.2f},"
        f"{o.score:.2f},-1,-1,-1\n"
        for o in rows
    )


def parse_mot_results(text: str) -> list[TrackObservation]:
    out = []
    for lineno, line in _lines(text):
        f = _fields(line, lineno, 10)
        if f[4] <= 0 or f[5] <= 0:
            raise ParseError(lineno, "non-positive box size")
        out.append(TrackObservation(int(f[0]), int(f[1]), Box(f[2], f[3], f[4], f[5]),
                                    min(max(f[6], 0.0), 1.0)))
    return out


def write_mot_detections(dets) -> str:
    return "".join(
        f"{d.frame},-1,{d.box.x:.2f},{d.box.y:.2f},{d.box.w:.2f},{d.box.h:.2f},{d.score:.4f},-1,-1,-1\n"
        for d in sorted(dets, key=lambda d: d.frame)
    )


def write_mot_groundtruth(tracks: list[GroundTruthTrack]) -> str:
    lines = []
    for t in tracks:
        for e in t.entries:
            lines.append((e.frame, t.object_id,
                          f"{e.frame},{t.object_id},{e.box.x:.2f},{e.box.y:.2f},{e.box.w:.2f},"
                          f"{e.box.h:.2f},{0 if e.ignored else 1},{e.class_id},{e.visibility:.3f}\n"))
    return "".join(s for _, _, s in sorted(lines))


# -- sequence directories -------------------------------------------------------

def parse_seqinfo(text: str, default_name: str = "seq") -> SequenceMeta:
    vals = {}
    for lineno, line in _lines(text):
        if line.startswith("[") or line.startswith("#") or line.startswith(";"):
            continue
        if "=" not in line:
            raise ParseError(lineno, f"expected key=value, got {line!r}")
        k, v = line.split("=", 1)
        vals[k.strip().lower()] = v.strip()
    try:
        return SequenceMeta(
            name=vals.get("name", default_name),
            fps=float(vals.get("fps", vals.get("framerate", ""))),
            num_frames=int(vals.get("frames", vals.get("seqlength", ""))),
            image_width=int(vals.get("width", vals.get("imwidth", 1920))),
            image_height=int(vals.get("height", vals.get("imheight", 1080))),
        )
    except ValueError as err:
        raise ValueError(f"bad sequence info: {err}") from None


def write_seqinfo(meta: SequenceMeta) -> str:
    return (f"name={meta.name}\nfps={meta.fps:g}\nframes={meta.num_frames}\n"
            f"width={meta.image_width}\nheight={meta.image_height}\n")


def load_sequence(path, *, filtered: bool = True, min_score: float = 0.5,
                  min_area: float = 128.0, ignore_classes=()) -> Sequence:
    path = Path(path)
    meta = parse_seqinfo((path / "seqinfo.ini").read_text(encoding="utf-8"), path.name)
    det_file = path / "det.txt"
    dets = parse_mot_detections(det_file.read_text(encoding="utf-8")) if det_file.exists() else DetectionSet()
    if filtered:
        dets = filter_detections(dets, min_score, min_area)
    gt_file = path / "gt.txt"
    gt = None
    if gt_file.exists():
        gt = parse_mot_groundtruth(gt_file.read_text(encoding="utf-8"), ignore_classes=ignore_classes)
    return Sequence(meta, dets, gt)


def save_sequence(seq: Sequence, path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    (path / "seqinfo.ini").write_text(write_seqinfo(seq.meta), encoding="utf-8")
    (path / "det.txt").write_text(write_mot_detections(seq.detections), encoding="utf-8")
    if seq.gt_tracks is not None:
        (path / "gt.txt").write_text(write_mot_groundtruth(seq.gt_tracks), encoding="utf-8")
    return path


def gt_as_detections(seq: Sequence) -> DetectionSet:
    """Non-ignored GT boxes as score-1 detections (oracle detections)."""
    if seq.gt_tracks is None:
        raise ValueError(f"sequence {seq.meta.name} has no ground truth")
    frames: dict[int, list[Detection]] = {}
    for t in seq.gt_tracks:
        for e in t.entries:
            if not e.ignored:
                frames.setdefault(e.frame, []).append(Detection(e.frame, e.box, 1.0, e.class_id))
    return DetectionSet(frames)


def kitti_to_mot(text: str, classes=("Car", "Pedestrian")) -> dict[str, str]:
    """Convert KITTI tracking labels into per-class MOT GT text.

    KITTI lines are ``frame id type truncated occluded alpha x1 y1 x2 y2 ...``
    with 0-based frames; ``DontCare`` rows become ignored entries.
    """
    out = {c: [] for c in classes}
    for lineno, line in _lines(text):
        parts = line.split()
        if len(parts) < 10:
            raise ParseError(lineno, f"expected >= 10 fields, got {len(parts)}")
        frame, tid, typ = int(parts[0]) + 1, int(parts[1]), parts[2]
        x1, y1, x2, y2 = (float(p) for p in parts[6:10])
        if x2 <= x1 or y2 <= y1:
            continue
        row = f"{frame},{{id}},{x1:.2f},{y1:.2f},{x2 - x1:.2f},{y2 - y1:.2f},{{flag}},1,1.0\n"
        if typ == "DontCare":
            for c in classes:
                out[c].append(row.format(id=100000 + lineno, flag=0))
        elif typ in out:
            out[typ].append(row.format(id=tid, flag=1))
    return {c: "".join(rows) for c, rows in out.items()}
