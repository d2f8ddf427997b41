"""Self-affinity maps and the (theta_1, theta_2) HOTA heatmap.

A self-affinity map scores a box against translated copies of itself over a
grid of offsets.  Rows of the grid follow ``dy`` and columns ``dx``; larger
values always mean "more likely the same object", so distances are negated.
"""

from __future__ import annotations

import csv
import io
from dataclasses import replace
from enum import Enum
from pathlib import Path

import numpy as np

from . import geometry as G
from .geometry import Box
from .metrics import evaluate
from .model import TwixWeights, isolated_affinities
from .pipeline import PipelineParams, oracle_mode, track_sequence


class Method(str, Enum):
    L1 = "l1"
    L2 = "l2"
    IOU = "iou"
    BIOU = "biou"
    DIOU = "diou"
    GIOU = "giou"
    TWIX = "twix"


def grid_offsets(box: Box, extent: float | None = None, resolution: int = 101) -> np.ndarray:
    """Symmetric offsets ``[-extent, extent]``; default extent is 3 * max(w, h)."""
    if resolution < 3 or resolution % 2 == 0:
        raise ValueError(f"resolution must be odd and >= 3, got {resolution}")
    extent = 3.0 * max(box.w, box.h) if extent is None else extent
    if extent <= 0:
        raise ValueError("extent must be positive")
    offs = np.linspace(-extent, extent, resolution)
    offs[resolution // 2] = 0.0
    return offs


def _pairwise(box: Box, xs: np.ndarray, ys: np.ndarray, fn) -> np.ndarray:
    return np.array([[fn(box, box.translated(dx, dy)) for dx in xs] for dy in ys])


def self_affinity_map(box: Box, method, xs: np.ndarray | None = None, ys: np.ndarray | None = None, *,
                      weights: TwixWeights | None = None, history: int = 8, gap: int = 0,
                      buffer: float = 0.3) -> np.ndarray:
    """Affinity between ``box`` and ``box`` shifted by every ``(dx, dy)`` of the grid.

    For TWiX the past tracklet is ``box`` held still for ``history`` frames and
    the future is the shifted box ``gap`` frames later; each cell is scored as
    a batch of one pair.  L1/L2 maps are ``1 - d / max(d)``.
    """
    method = Method(method)
    xs = grid_offsets(box) if xs is None else np.asarray(xs, dtype=np.float64)
    ys = xs if ys is None else np.asarray(ys, dtype=np.float64)
    if method is Method.TWIX:
        if weights is None:
            raise ValueError("the TWiX map needs weights")
        if history < 1 or gap < 0:
            raise ValueError("history must be >= 1 and gap >= 0")
        frames = np.arange(1, history + 1)
        past_c = np.tile(box.as_array(), (history, 1))
        f_frame = np.array([history + 1 + gap])
        past, future = [], []
        for dy in ys:
            for dx in xs:
                past.append((frames, past_c))
                future.append((f_frame, box.translated(dx, dy).as_array()[None]))
        return isolated_affinities(past, future, weights).reshape(len(ys), len(xs))
    if method in (Method.L1, Method.L2):
        dx, dy = np.meshgrid(xs, ys)
        d = np.abs(dx) + np.abs(dy) if method is Method.L1 else np.hypot(dx, dy)
        top = d.max()
        return 1.0 - d / top if top > 0 else np.ones_like(d)
    fn = {Method.IOU: G.iou, Method.DIOU: G.diou, Method.GIOU: G.giou,
          Method.BIOU: lambda a, b: G.buffered_iou(a, b, buffer)}[method]
    return _pairwise(box, xs, ys, fn)


def axis_vs_diagonal(grid: np.ndarray, xs: np.ndarray, ys: np.ndarray, radius: float) -> tuple[float, float]:
    """Mean affinity of the 4 on-axis cells and the 4 diagonal cells at L-inf ``radius``.

    Cells are the grid points nearest to ``(+-radius, 0)``, ``(0, +-radius)``
    and ``(+-radius, +-radius)``.
    """
    def ix(vals, v):
        return int(np.argmin(np.abs(vals - v)))

    cx, cy = ix(xs, 0.0), ix(ys, 0.0)
    px, nx, py, ny = ix(xs, radius), ix(xs, -radius), ix(ys, radius), ix(ys, -radius)
    axis = [grid[cy, px], grid[cy, nx], grid[py, cx], grid[ny, cx]]
    diag = [grid[py, px], grid[py, nx], grid[ny, px], grid[ny, nx]]
    return float(np.mean(axis)), float(np.mean(diag))


def ring_mean(grid: np.ndarray, xs: np.ndarray, ys: np.ndarray, width: float) -> float:
    """Mean over cells with ``|dx| <= width`` (a vertical band through the centre)."""
    sel = np.abs(xs) <= width
    return float(grid[:, sel].mean())


def grid_csv(grid: np.ndarray, xs: np.ndarray, ys: np.ndarray, corner: str = "dy\\dx") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([corner] + [f"{x:g}" for x in xs])
    for y, row in zip(ys, grid):
        w.writerow([f"{y:g}"] + [repr(float(v)) for v in row])
    return buf.getvalue()


def pgm_bytes(grid: np.ndarray) -> bytes:
    """Binary 8-bit PGM, min-max scaled per map (a constant map is mid-gray)."""
    g = np.asarray(grid, dtype=np.float64)
    lo, hi = g.min(), g.max()
    scaled = np.full(g.shape, 128.0) if hi == lo else (g - lo) / (hi - lo) * 255.0
    img = np.round(scaled).astype(np.uint8)
    return f"P5\n{g.shape[1]} {g.shape[0]}\n255\n".encode() + img.tobytes()


def write_map(prefix, grid: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> tuple[Path, Path]:
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    c, p = prefix.with_suffix(".csv"), prefix.with_suffix(".pgm")
    c.write_text(grid_csv(grid, xs, ys), encoding="utf-8")
    p.write_bytes(pgm_bytes(grid))
    return c, p


def threshold_heatmap(sequences, w1: TwixWeights, w2: TwixWeights, theta1_values, theta2_values,
                      params: PipelineParams, oracle: bool = False) -> np.ndarray:
    """Combined HOTA for every ``(theta_1, theta_2)``; rows follow ``theta1_values``."""
    out = np.zeros((len(theta1_values), len(theta2_values)))
    gt = {s.meta.name: s.gt_tracks for s in sequences}
    if any(g is None for g in gt.values()):
        raise ValueError("every sequence needs ground truth")
    frames = {s.meta.name: s.meta.num_frames for s in sequences}
    for i, t1 in enumerate(theta1_values):
        for j, t2 in enumerate(theta2_values):
            p = replace(params, theta_1=float(t1), theta_2=float(t2))
            run = oracle_mode if oracle else track_sequence
            res = {s.meta.name: run(s, w1, w2, p).observations for s in sequences}
            out[i, j] = evaluate(res, gt, frames).hota
    return out


def heatmap_csv(values: np.ndarray, theta1_values, theta2_values) -> str:
    return grid_csv(values, np.asarray(theta2_values, dtype=float), np.asarray(theta1_values, dtype=float),
                    corner="theta_1\\theta_2")
