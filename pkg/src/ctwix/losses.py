"""Losses over a predicted affinity matrix and its label matrix.

Labels use ``POSITIVE`` (1), ``NEGATIVE`` (0) and ``IGNORED`` (-1).  IGNORED
entries never contribute.  The contrastive family ranks every positive pair
above the negatives sharing its row (forward), its column (backward), or both
(bidirectional).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import tensor as T
from .batching import NEGATIVE, POSITIVE
from .tensor import Tensor


class LossVariant(str, Enum):
    BIDIRECTIONAL = "bidirectional"
    FORWARD = "forward"
    BACKWARD = "backward"
    BCE = "bce"
    FOCAL = "focal"
    TRIPLET_RANDOM = "triplet_random"
    TRIPLET_HARD = "triplet_hard"


@dataclass(frozen=True)
class LossConfig:
    tau: float = 0.1
    batch_scale: float = 1024.0
    variant: LossVariant = LossVariant.BIDIRECTIONAL
    focal_gamma: float = 2.0
    triplet_margin: float = 0.3

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.batch_scale < 1:
            raise ValueError(f"batch_scale must be >= 1, got {self.batch_scale}")
        object.__setattr__(self, "variant", LossVariant(self.variant))


def contrastive_single(s_plus: float, negatives, cfg: LossConfig = LossConfig()) -> float:
    """``log(1 + B/N * sum(exp(-(s+ - s-)/tau)))`` for one positive; 0 without negatives."""
    neg = np.asarray(negatives, dtype=np.float64).ravel()
    if neg.size == 0:
        return 0.0
    z = (neg - s_plus) / cfg.tau
    m = z.max()
    lse = m + math.log(np.exp(z - m).sum())
    x = math.log(cfg.batch_scale / neg.size) + lse
    return float(max(x, 0.0) + math.log1p(math.exp(-abs(x))))


def _row_contrastive(pred: Tensor, labels: np.ndarray, cfg: LossConfig) -> tuple[Tensor | None, int]:
    """Sum over positives of the row-wise contrastive term, and the positive count."""
    pos = labels == POSITIVE
    neg = labels == NEGATIVE
    n_pos = int(pos.sum())
    n_neg = neg.sum(axis=1)
    rows = np.flatnonzero(pos.any(axis=1) & (n_neg > 0))
    if n_pos == 0 or rows.size == 0:
        return None, n_pos
    p = pred[rows] if rows.size != pred.shape[0] else pred
    lab_pos, lab_neg = pos[rows], neg[rows]
    # diff[r, j, l] = (s[r, l] - s[r, j]) / tau
    diff = (T.reshape(p, (rows.size, 1, -1)) - T.reshape(p, (rows.size, -1, 1))) * (1.0 / cfg.tau)
    where = np.broadcast_to(lab_neg[:, None, :], diff.shape)
    lse = T.logsumexp(diff, axis=-1, where=where)
    offset = np.log(cfg.batch_scale / n_neg[rows])[:, None]
    terms = T.softplus(lse + Tensor(np.broadcast_to(offset, lse.shape).astype(p.data.dtype)))
    total = T.reduce_sum(T.mul(terms, lab_pos.astype(p.data.dtype)))
    return total, n_pos


def _zero(pred: Tensor) -> Tensor:
    return T.reduce_sum(pred * 0.0)


def forward_loss(pred, labels, cfg: LossConfig = LossConfig()) -> Tensor:
    pred = T.as_tensor(pred)
    labels = np.asarray(labels)
    if pred.shape != labels.shape:
        raise ValueError(f"prediction shape {pred.shape} differs from label shape {labels.shape}")
    total, n_pos = _row_contrastive(pred, labels, cfg)
    if total is None:
        return _zero(pred)
    return total * (1.0 / n_pos)


def backward_loss(pred, labels, cfg: LossConfig = LossConfig()) -> Tensor:
    pred = T.as_tensor(pred)
    labels = np.asarray(labels)
    return forward_loss(T.transpose(pred), labels.T, cfg)


def bidirectional_loss(pred, labels, cfg: LossConfig = LossConfig()) -> Tensor:
    return forward_loss(pred, labels, cfg) + backward_loss(pred, labels, cfg)


def _as_prob(pred: Tensor) -> Tensor:
    return T.clip((pred + 1.0) * 0.5, 1e-12, 1.0 - 1e-12)


def bce_loss(pred, labels, cfg: LossConfig = LossConfig()) -> Tensor:
    return focal_loss(pred, labels, cfg, gamma=0.0)


def focal_loss(pred, labels, cfg: LossConfig = LossConfig(), gamma: float | None = None) -> Tensor:
    """Focal loss on ``(s + 1) / 2``, averaged over non-ignored entries.

    ``gamma = 0`` is plain binary cross-entropy.
    """
    pred = T.as_tensor(pred)
    labels = np.asarray(labels)
    gamma = cfg.focal_gamma if gamma is None else gamma
    keep = labels != -1
    if not keep.any():
        return _zero(pred)
    y = (labels == POSITIVE).astype(pred.data.dtype)
    p = _as_prob(pred)
    q = 1.0 - p
    pos_term = T.log(p) * y
    neg_term = T.log(q) * (1.0 - y)
    if gamma:
        pos_term = pos_term * T.power(q, gamma)
        neg_term = neg_term * T.power(p, gamma)
    per_entry = (pos_term + neg_term) * keep.astype(pred.data.dtype)
    return T.reduce_sum(per_entry) * (-1.0 / keep.sum())


def triplet_negatives(pred: np.ndarray, labels: np.ndarray, hard: bool, rng=None) -> list[tuple]:
    """``(pos_index, neg_index)`` pairs, one negative per positive from its row or column.

    Hard mode picks the negative with the highest affinity; otherwise one is
    drawn uniformly from ``rng``.  Positives without candidates are skipped.
    """
    out = []
    n_p, n_f = labels.shape
    for i, j in zip(*np.nonzero(labels == POSITIVE)):
        cands = [(i, l) for l in range(n_f) if labels[i, l] == NEGATIVE]
        cands += [(k, j) for k in range(n_p) if labels[k, j] == NEGATIVE]
        if not cands:
            continue
        if hard:
            best = max(cands, key=lambda c: (pred[c], -c[0], -c[1]))
        else:
            best = cands[int(rng.integers(len(cands)))]
        out.append(((int(i), int(j)), best))
    return out


def triplet_loss(pred, labels, cfg: LossConfig = LossConfig(), hard: bool = False, rng=None) -> Tensor:
    pred = T.as_tensor(pred)
    labels = np.asarray(labels)
    rng = np.random.default_rng(0) if rng is None else rng
    pairs = triplet_negatives(pred.data, labels, hard, rng)
    if not pairs:
        return _zero(pred)
    n_f = labels.shape[1]
    pi = np.array([a * n_f + b for (a, b), _ in pairs])
    ni = np.array([a * n_f + b for _, (a, b) in pairs])
    flat = T.reshape(pred, (-1,))
    hinge = T.relu(T.take(flat, ni) - T.take(flat, pi) + cfg.triplet_margin)
    return T.reduce_mean(hinge)


def compute_loss(pred, labels, cfg: LossConfig = LossConfig(), rng=None) -> Tensor:
    v = cfg.variant
    if v is LossVariant.BIDIRECTIONAL:
        return bidirectional_loss(pred, labels, cfg)
    if v is LossVariant.FORWARD:
        return forward_loss(pred, labels, cfg)
    if v is LossVariant.BACKWARD:
        return backward_loss(pred, labels, cfg)
    if v is LossVariant.BCE:
        return bce_loss(pred, labels, cfg)
    if v is LossVariant.FOCAL:
        return focal_loss(pred, labels, cfg)
    if v is LossVariant.TRIPLET_RANDOM:
        return triplet_loss(pred, labels, cfg, hard=False, rng=rng)
    return triplet_loss(pred, labels, cfg, hard=True)


ablation_losses = compute_loss
