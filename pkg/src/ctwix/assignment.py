"""Thresholded maximum-score linear assignment.

Pairs whose score does not strictly exceed the threshold are infeasible and
are excluded before solving.  The result is the partial one-to-one assignment
of largest total score among feasible pairs.  A pair scoring below zero never
raises the total, so it is left out; callers that want every pair above a
threshold to count should pass ``scores - threshold`` with threshold 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass
class Matching:
    pairs: list[tuple[int, int]] = field(default_factory=list)
    unmatched_rows: list[int] = field(default_factory=list)
    unmatched_cols: list[int] = field(default_factory=list)

    def total(self, scores: np.ndarray) -> float:
        return float(sum(scores[r, c] for r, c in self.pairs))

    def row_to_col(self) -> dict[int, int]:
        return dict(self.pairs)


def match_max(scores, threshold: float = -np.inf) -> Matching:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise ValueError(f"score matrix must be 2-D, got shape {scores.shape}")
    if np.isnan(scores).any():
        raise ValueError("score matrix contains NaN")
    n, m = scores.shape
    feasible = scores > threshold
    if n == 0 or m == 0 or not feasible.any():
        return Matching([], list(range(n)), list(range(m)))
    if not np.isfinite(scores[feasible]).all():
        raise ValueError("feasible scores must be finite")

    # weight 0 for infeasible or negative pairs: a full assignment on these
    # weights is a maximum-weight partial assignment once they are dropped
    weight = np.where(feasible, np.maximum(scores, 0.0), 0.0)
    rows, cols = linear_sum_assignment(weight, maximize=True)
    pairs = sorted((int(r), int(c)) for r, c in zip(rows, cols) if feasible[r, c] and scores[r, c] >= 0)
    used_r = {r for r, _ in pairs}
    used_c = {c for _, c in pairs}
    return Matching(
        pairs,
        [r for r in range(n) if r not in used_r],
        [c for c in range(m) if c not in used_c],
    )
