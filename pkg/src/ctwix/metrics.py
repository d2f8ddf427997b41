"""HOTA (with DetA/AssA), MOTA and IDF1.

The definitions follow the reference TrackEval implementation:

* HOTA builds a global alignment score between every GT id and prediction id,
  matches each frame once by Hungarian on ``alignment * IoU`` and then counts,
  for every threshold alpha, the matches whose IoU reaches alpha.
* MOTA (CLEAR) matches at IoU 0.5 with a bonus for continuing the previous
  frame's match; an identity switch is a GT object matched to a prediction id
  other than the one it was last matched to.
* IDF1 takes the one-to-one id mapping that maximizes the number of frames
  with IoU >= 0.5.

Counts from several sequences are combined before the ratios are taken.
"""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import iou_matrix

ALPHAS = np.round(np.arange(0.05, 0.96, 0.05), 2)
_EPS = np.finfo(float).eps
COLUMNS = ("HOTA", "DetA", "AssA", "MOTA", "IDF1")


@dataclass
class FrameData:
    """Per-frame ids and boxes for both sides, ids remapped to ``0..n-1``."""

    gt_ids: list[np.ndarray]
    gt_boxes: list[np.ndarray]
    pr_ids: list[np.ndarray]
    pr_boxes: list[np.ndarray]
    num_gt_ids: int
    num_pr_ids: int

    @property
    def num_frames(self) -> int:
        return len(self.gt_ids)


def _group(rows, num_frames):
    ids = [[] for _ in range(num_frames)]
    boxes = [[] for _ in range(num_frames)]
    for f, i, b in rows:
        ids[f - 1].append(i)
        boxes[f - 1].append(b)
    return ([np.array(x, dtype=np.int64) for x in ids],
            [np.array(x, dtype=np.float64).reshape(-1, 4) for x in boxes])


def _remap(id_lists):
    uniq = sorted({int(i) for ids in id_lists for i in ids})
    lut = {u: k for k, u in enumerate(uniq)}
    return [np.array([lut[int(i)] for i in ids], dtype=np.int64) for ids in id_lists], len(uniq)


def prepare(results, gt_tracks, num_frames: int | None = None) -> FrameData:
    """Drop ignored GT and the predictions they absorb, then index everything by frame.

    A prediction matched (Hungarian, IoU >= 0.5) to an ignored GT entry in the
    same frame is removed, as is the ignored entry itself.
    """
    gt_rows = [(e.frame, g.object_id, e.box.as_array(), e.ignored) for g in gt_tracks for e in g.entries]
    pr_rows = [(o.frame, o.track_id, o.box.as_array()) for o in results]
    last = max([r[0] for r in gt_rows] + [r[0] for r in pr_rows] + [0])
    if num_frames is None:
        num_frames = last
    elif last > num_frames:
        raise ValueError(f"data reaches frame {last}, beyond sequence length {num_frames}")
    if any(r[0] < 1 for r in gt_rows + pr_rows):
        raise ValueError("frame indices must be >= 1")

    gt_by_frame = defaultdict(list)
    for r in gt_rows:
        gt_by_frame[r[0]].append(r)
    pr_by_frame = defaultdict(list)
    for r in pr_rows:
        pr_by_frame[r[0]].append(r)

    kept_gt, kept_pr = [], []
    for f in range(1, num_frames + 1):
        g, p = gt_by_frame.get(f, []), pr_by_frame.get(f, [])
        drop = set()
        ign = [k for k, r in enumerate(g) if r[3]]
        if ign and p:
            sim = iou_matrix(np.array([r[2] for r in g]), np.array([r[2] for r in p]))
            m = sim >= 0.5 - _EPS
            score = np.where(m, sim, 0.0)
            rows, cols = linear_sum_assignment(-score)
            drop = {c for r, c in zip(rows, cols) if m[r, c] and g[r][3]}
        kept_gt += [(f, r[1], r[2]) for r in g if not r[3]]
        kept_pr += [(f, r[1], r[2]) for k, r in enumerate(p) if k not in drop]

    gt_ids, gt_boxes = _group(kept_gt, num_frames)
    pr_ids, pr_boxes = _group(kept_pr, num_frames)
    gt_ids, n_g = _remap(gt_ids)
    pr_ids, n_p = _remap(pr_ids)
    for ids in (gt_ids, pr_ids):
        for a in ids:
            if len(set(a.tolist())) != len(a):
                raise ValueError("an id occurs twice in one frame")
    return FrameData(gt_ids, gt_boxes, pr_ids, pr_boxes, n_g, n_p)


@dataclass
class Counts:
    """Additive statistics of one or more sequences."""

    hota_tp: np.ndarray = field(default_factory=lambda: np.zeros(len(ALPHAS)))
    hota_fn: np.ndarray = field(default_factory=lambda: np.zeros(len(ALPHAS)))
    hota_fp: np.ndarray = field(default_factory=lambda: np.zeros(len(ALPHAS)))
    ass_weighted: np.ndarray = field(default_factory=lambda: np.zeros(len(ALPHAS)))  # AssA_alpha * TP_alpha
    loc_sum: np.ndarray = field(default_factory=lambda: np.zeros(len(ALPHAS)))
    clr_tp: int = 0
    clr_fn: int = 0
    clr_fp: int = 0
    idsw: int = 0
    idtp: int = 0
    idfn: int = 0
    idfp: int = 0

    def __add__(self, o: "Counts") -> "Counts":
        return Counts(self.hota_tp + o.hota_tp, self.hota_fn + o.hota_fn, self.hota_fp + o.hota_fp,
                      self.ass_weighted + o.ass_weighted, self.loc_sum + o.loc_sum,
                      self.clr_tp + o.clr_tp, self.clr_fn + o.clr_fn, self.clr_fp + o.clr_fp,
                      self.idsw + o.idsw, self.idtp + o.idtp, self.idfn + o.idfn, self.idfp + o.idfp)

    # ratios

    @property
    def deta_alpha(self) -> np.ndarray:
        return self.hota_tp / np.maximum(1.0, self.hota_tp + self.hota_fn + self.hota_fp)

    @property
    def assa_alpha(self) -> np.ndarray:
        return self.ass_weighted / np.maximum(1.0, self.hota_tp)

    @property
    def hota_alpha(self) -> np.ndarray:
        return np.sqrt(self.deta_alpha * self.assa_alpha)

    @property
    def loca_alpha(self) -> np.ndarray:
        return np.where(self.hota_tp > 0, self.loc_sum / np.maximum(1.0, self.hota_tp), 1.0)

    @property
    def hota(self) -> float:
        return float(self.hota_alpha.mean())

    @property
    def deta(self) -> float:
        return float(self.deta_alpha.mean())

    @property
    def assa(self) -> float:
        return float(self.assa_alpha.mean())

    @property
    def mota(self) -> float:
        n_gt = self.clr_tp + self.clr_fn
        return float(self.clr_tp - self.clr_fp - self.idsw) / max(1, n_gt)

    @property
    def idf1(self) -> float:
        return float(self.idtp) / max(1.0, self.idtp + 0.5 * self.idfp + 0.5 * self.idfn)


def _similarities(d: FrameData) -> list[np.ndarray]:
    return [iou_matrix(gb, pb) for gb, pb in zip(d.gt_boxes, d.pr_boxes)]


def hota_counts(d: FrameData, sims=None) -> Counts:
    sims = _similarities(d) if sims is None else sims
    c = Counts()
    n_gt_dets = sum(len(g) for g in d.gt_ids)
    n_pr_dets = sum(len(p) for p in d.pr_ids)
    if n_gt_dets == 0 or n_pr_dets == 0:
        c.hota_fn[:] = n_gt_dets
        c.hota_fp[:] = n_pr_dets
        return c

    gt_count = np.zeros((d.num_gt_ids, 1))
    pr_count = np.zeros((1, d.num_pr_ids))
    potential = np.zeros((d.num_gt_ids, d.num_pr_ids))
    for g, p, s in zip(d.gt_ids, d.pr_ids, sims):
        gt_count[g, 0] += 1
        pr_count[0, p] += 1
        if s.size:
            denom = s.sum(axis=0, keepdims=True) + s.sum(axis=1, keepdims=True) - s
            rel = np.zeros_like(s)
            ok = denom > _EPS
            rel[ok] = s[ok] / denom[ok]
            potential[np.ix_(g, p)] += rel
    align = potential / (gt_count + pr_count - potential)

    matches = np.zeros((len(ALPHAS), d.num_gt_ids, d.num_pr_ids))
    for g, p, s in zip(d.gt_ids, d.pr_ids, sims):
        if len(g) == 0 or len(p) == 0:
            c.hota_fn += len(g)
            c.hota_fp += len(p)
            continue
        score = align[np.ix_(g, p)] * s
        rows, cols = linear_sum_assignment(-score)
        for a, alpha in enumerate(ALPHAS):
            ok = s[rows, cols] >= alpha - _EPS
            r, k = rows[ok], cols[ok]
            n = len(r)
            c.hota_tp[a] += n
            c.hota_fn[a] += len(g) - n
            c.hota_fp[a] += len(p) - n
            c.loc_sum[a] += s[r, k].sum()
            matches[a, g[r], p[k]] += 1

    for a in range(len(ALPHAS)):
        m = matches[a]
        ass = m / np.maximum(1.0, gt_count + pr_count - m)
        c.ass_weighted[a] = (m * ass).sum()
    return c


def clear_counts(d: FrameData, sims=None, threshold: float = 0.5) -> Counts:
    sims = _similarities(d) if sims is None else sims
    c = Counts()
    prev_frame = np.full(d.num_gt_ids, -1)  # prediction matched in the last frame with both sides
    last = np.full(d.num_gt_ids, -1)  # last prediction ever matched
    for g, p, s in zip(d.gt_ids, d.pr_ids, sims):
        if len(g) == 0 or len(p) == 0:
            c.clr_fn += len(g)
            c.clr_fp += len(p)
            continue
        ok = s >= threshold - _EPS
        score = 1000.0 * (prev_frame[g][:, None] == p[None, :]) + s
        score[~ok] = 0.0
        rows, cols = linear_sum_assignment(-score)
        keep = score[rows, cols] > _EPS
        rows, cols = rows[keep], cols[keep]
        mg, mp = g[rows], p[cols]
        c.idsw += int(np.sum((last[mg] >= 0) & (last[mg] != mp)))
        prev_frame[:] = -1
        prev_frame[mg] = mp
        last[mg] = mp
        c.clr_tp += len(rows)
        c.clr_fn += len(g) - len(rows)
        c.clr_fp += len(p) - len(rows)
    return c


def identity_counts(d: FrameData, sims=None, threshold: float = 0.5) -> Counts:
    sims = _similarities(d) if sims is None else sims
    c = Counts()
    gt_count = np.zeros(d.num_gt_ids)
    pr_count = np.zeros(d.num_pr_ids)
    potential = np.zeros((d.num_gt_ids, d.num_pr_ids))
    for g, p, s in zip(d.gt_ids, d.pr_ids, sims):
        gt_count[g] += 1
        pr_count[p] += 1
        if s.size:
            potential[np.ix_(g, p)] += s >= threshold - _EPS
    if d.num_gt_ids and d.num_pr_ids:
        rows, cols = linear_sum_assignment(-potential)
        idtp = int(potential[rows, cols].sum())
    else:
        idtp = 0
    c.idtp = idtp
    c.idfn = int(gt_count.sum()) - idtp
    c.idfp = int(pr_count.sum()) - idtp
    return c


def sequence_counts(results, gt_tracks, num_frames: int | None = None) -> Counts:
    d = prepare(results, gt_tracks, num_frames)
    sims = _similarities(d)
    return hota_counts(d, sims) + clear_counts(d, sims) + identity_counts(d, sims)


@dataclass
class MetricReport:
    """Metrics in [0, 1] per sequence and combined."""

    per_sequence: dict[str, Counts]
    combined: Counts

    def row(self, name: str | None = None) -> dict[str, float]:
        c = self.combined if name is None else self.per_sequence[name]
        return {"HOTA": c.hota, "DetA": c.deta, "AssA": c.assa, "MOTA": c.mota, "IDF1": c.idf1}

    @property
    def hota(self) -> float:
        return self.combined.hota

    @property
    def deta(self) -> float:
        return self.combined.deta

    @property
    def assa(self) -> float:
        return self.combined.assa

    @property
    def mota(self) -> float:
        return self.combined.mota

    @property
    def idf1(self) -> float:
        return self.combined.idf1

    def _rows(self):
        for name in self.per_sequence:
            yield name, self.row(name)
        yield "COMBINED", self.row()

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("sequence",) + COLUMNS)
        for name, r in self._rows():
            w.writerow([name] + [f"{100 * r[k]:.3f}" for k in COLUMNS])
        return buf.getvalue()

    def to_text(self) -> str:
        rows = list(self._rows())
        width = max(8, max(len(n) for n, _ in rows))
        lines = [f"{'sequence':<{width}}" + "".join(f"{k:>8}" for k in COLUMNS)]
        for name, r in rows:
            lines.append(f"{name:<{width}}" + "".join(f"{100 * r[k]:>8.2f}" for k in COLUMNS))
        return "\n".join(lines) + "\n"


def evaluate(results_by_seq: dict, gt_by_seq: dict, num_frames: dict | None = None) -> MetricReport:
    """Evaluate several sequences; ``results_by_seq`` and ``gt_by_seq`` share keys."""
    missing = set(gt_by_seq) ^ set(results_by_seq)
    if missing:
        raise ValueError(f"results and GT cover different sequences: {sorted(missing)}")
    per = {}
    for name in gt_by_seq:
        n = None if num_frames is None else num_frames.get(name)
        per[name] = sequence_counts(results_by_seq[name], gt_by_seq[name], n)
    combined = sum(per.values(), Counts())
    return MetricReport(per, combined)


def evaluate_sequence(results, gt_tracks, num_frames: int | None = None, name: str = "seq") -> MetricReport:
    return evaluate({name: results}, {name: gt_tracks}, None if num_frames is None else {name: num_frames})
