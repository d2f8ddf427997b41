"""Bounding boxes and model-free affinity measures.

Boxes are stored as ``(x, y, w, h)`` with ``(x, y)`` the top-left corner, the
same layout as MOTChallenge files.  Scalar functions take :class:`Box`
objects; the ``*_matrix`` variants work on ``(n, 4)`` arrays and are what the
tracker and the metrics use internally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Box:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        vals = (self.x, self.y, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"box has non-finite field: {vals}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box needs positive size, got w={self.w}, h={self.h}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + 0.5 * self.w, self.y + 0.5 * self.h)

    @property
    def area(self) -> float:
        return self.w * self.h

    def corners(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.x2, self.y2)

    def translated(self, dx: float, dy: float) -> "Box":
        return Box(self.x + dx, self.y + dy, self.w, self.h)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.w, self.h], dtype=np.float64)

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> "Box":
        return cls(x1, y1, x2 - x1, y2 - y1)


@dataclass(frozen=True)
class Detection:
    frame: int
    box: Box
    score: float = 1.0
    class_id: int = 1

    def __post_init__(self):
        if self.frame < 1:
            raise ValueError(f"frame index is 1-based, got {self.frame}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")


def _intersection(a: Box, b: Box) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def iou(a: Box, b: Box) -> float:
    if a == b:
        return 1.0
    inter = _intersection(a, b)
    if inter == 0.0:
        return 0.0
    # corner arithmetic can overshoot by an ulp
    return min(1.0, inter / (a.area + b.area - inter))


def expand(box: Box, buffer: float) -> Box:
    """Grow a box by ``buffer`` times its size on every side, center fixed."""
    if buffer < 0:
        raise ValueError(f"buffer must be >= 0, got {buffer}")
    return Box(box.x - buffer * box.w, box.y - buffer * box.h,
               box.w * (1 + 2 * buffer), box.h * (1 + 2 * buffer))


def buffered_iou(a: Box, b: Box, buffer: float) -> float:
    return iou(expand(a, buffer), expand(b, buffer))


def _enclosing(a: Box, b: Box) -> tuple[float, float]:
    ew = max(a.x2, b.x2) - min(a.x, b.x)
    eh = max(a.y2, b.y2) - min(a.y, b.y)
    return ew, eh


def giou(a: Box, b: Box) -> float:
    if a == b:
        return 1.0
    inter = _intersection(a, b)
    union = a.area + b.area - inter
    ew, eh = _enclosing(a, b)
    hull = ew * eh
    return min(1.0, inter / union) - (hull - union) / hull


def diou(a: Box, b: Box) -> float:
    if a == b:
        return 1.0
    (acx, acy), (bcx, bcy) = a.center, b.center
    ew, eh = _enclosing(a, b)
    d2 = (acx - bcx) ** 2 + (acy - bcy) ** 2
    return iou(a, b) - d2 / (ew * ew + eh * eh)


def center_distance(a: Box, b: Box, norm: str = "L2") -> float:
    (acx, acy), (bcx, bcy) = a.center, b.center
    dx, dy = acx - bcx, acy - bcy
    norm = norm.upper()
    if norm == "L1":
        return abs(dx) + abs(dy)
    if norm == "L2":
        return math.hypot(dx, dy)
    raise ValueError(f"unknown norm {norm!r}, expected L1 or L2")


# -- array versions -----------------------------------------------------------

def xywh_to_xyxy(boxes: np.ndarray) -> np.ndarray:
    boxes = np.asarray(boxes, dtype=np.float64)
    out = boxes.copy()
    out[..., 2] = boxes[..., 0] + boxes[..., 2]
    out[..., 3] = boxes[..., 1] + boxes[..., 3]
    return out


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between ``(n, 4)`` and ``(m, 4)`` arrays of xywh boxes."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    if len(a) == 0 or len(b) == 0:
        return np.zeros((len(a), len(b)))
    ax1, ay1 = a[:, 0:1], a[:, 1:2]
    ax2, ay2 = ax1 + a[:, 2:3], ay1 + a[:, 3:4]
    bx1, by1 = b[:, 0], b[:, 1]
    bx2, by2 = bx1 + b[:, 2], by1 + b[:, 3]
    iw = np.clip(np.minimum(ax2, bx2) - np.maximum(ax1, bx1), 0.0, None)
    ih = np.clip(np.minimum(ay2, by2) - np.maximum(ay1, by1), 0.0, None)
    inter = iw * ih
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None, :] - inter
    return np.minimum(inter / union, 1.0)
