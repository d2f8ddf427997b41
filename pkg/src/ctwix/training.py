"""Training and validation of a TWiX module."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .batching import (BatchConfig, NEGATIVE, POSITIVE, Stage, TrackletBatch, assign_tracklets_to_gt,
                       make_batch, sample_batch_frames)
from .ingestion import Sequence, gt_as_detections
from .losses import LossConfig, compute_loss
from .model import PairInputs, TwixHyper, TwixWeights, affinity_from_inputs, build_pair_sequences
from .tracklets import build_tracklets

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    stage: Stage = Stage.FIRST
    epochs: int = 30
    lr: float = 1e-4
    layers: int = 1
    hyper: TwixHyper | None = None  # overrides ``layers`` when given
    loss: LossConfig = field(default_factory=LossConfig)
    batch: BatchConfig = field(default_factory=BatchConfig)
    theta_s: float = 0.3
    seed: int = 0
    subsample: float = 1.0  # fraction of eligible (f_P, f_F) pairs kept
    max_batches: int | None = None  # cap on batches per epoch (a fixed random subset)
    oracle: bool = False  # build tracklets from GT boxes instead of detections

    def __post_init__(self):
        object.__setattr__(self, "stage", Stage(self.stage))
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr <= 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if not 0.0 < self.subsample <= 1.0:
            raise ValueError(f"subsample must lie in (0, 1], got {self.subsample}")

    @property
    def model_hyper(self) -> TwixHyper:
        return self.hyper or TwixHyper(intra_layers=self.layers, inter_layers=self.layers)

    @classmethod
    def for_stage(cls, stage, batch: BatchConfig = BatchConfig(), **kw) -> "TrainConfig":
        """Stage presets: FIRST is 1 layer at lr 1e-4 with no gap, SECOND 4 layers at lr 1e-3."""
        stage = Stage(stage)
        if stage is Stage.FIRST:
            kw = {"lr": 1e-4, "layers": 1, **kw}
            batch = replace(batch, t_G=0.0)
        else:
            kw = {"lr": 1e-3, "layers": 4, **kw}
        return cls(stage=stage, batch=batch, **kw)


@dataclass
class PreparedBatch:
    batch: TrackletBatch
    inputs: PairInputs
    sequence: str


@dataclass
class EpochLog:
    epoch: int
    mean_loss: float
    ranking_accuracy: float


@dataclass
class TrainResult:
    weights: TwixWeights
    history: list[EpochLog]
    num_batches: int

    def log_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("epoch", "mean_loss", "ranking_accuracy"))
        for e in self.history:
            w.writerow((e.epoch, repr(e.mean_loss), repr(e.ranking_accuracy)))
        return buf.getvalue()


class NoBatchesError(ValueError):
    pass


def prepare_batches(sequences: list[Sequence], cfg: TrainConfig) -> list[PreparedBatch]:
    """All usable batches for ``cfg.stage``; batches without a positive pair are skipped."""
    rng = np.random.default_rng(cfg.seed)
    out = []
    for seq in sequences:
        if seq.gt_tracks is None:
            raise ValueError(f"sequence {seq.meta.name} has no ground truth")
        dets = gt_as_detections(seq) if cfg.oracle else None
        tracklets = build_tracklets(seq, cfg.theta_s, dets)
        gt = assign_tracklets_to_gt(tracklets, seq.gt_tracks)
        spans = {t.id: (t.first, t.last) for t in tracklets}
        for f_P, f_F in sample_batch_frames(tracklets, seq.meta.num_frames, cfg.batch, cfg.stage,
                                            cfg.subsample, rng):
            b = make_batch(tracklets, gt, f_P, f_F, cfg.batch, spans)
            if b is None or not (b.labels == POSITIVE).any():
                continue
            out.append(PreparedBatch(b, build_pair_sequences(b), seq.meta.name))
    if cfg.max_batches is not None and len(out) > cfg.max_batches:
        keep = np.sort(rng.choice(len(out), cfg.max_batches, replace=False))
        out = [out[k] for k in keep]
    return out


def ranking_hits(pred: np.ndarray, labels: np.ndarray) -> tuple[int, int]:
    """Positives beating every negative in their row and column, over positives that have one."""
    hits = total = 0
    neg = labels == NEGATIVE
    for i, j in zip(*np.nonzero(labels == POSITIVE)):
        rivals = np.concatenate([pred[i][neg[i]], pred[:, j][neg[:, j]]])
        if rivals.size == 0:
            continue
        total += 1
        hits += bool(pred[i, j] > rivals.max())
    return hits, total


def _accuracy(hits: int, total: int) -> float:
    return hits / total if total else 1.0


def train(sequences: list[Sequence], cfg: TrainConfig, init: TwixWeights | None = None,
          batches: list[PreparedBatch] | None = None) -> TrainResult:
    """Train one module; deterministic given ``cfg.seed``."""
    if batches is None:
        batches = prepare_batches(sequences, cfg)
    if not batches:
        raise NoBatchesError(f"no eligible batches with a positive pair for stage {cfg.stage.value} "
                             f"(t_G={cfg.batch.t_G})")
    w = init.copy() if init is not None else TwixWeights.init(cfg.model_hyper, cfg.seed)
    params = w.parameters()
    opt = T.Adam(params, cfg.lr)
    rng = np.random.default_rng(cfg.seed + 1)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        losses, hits, total = [], 0, 0
        for k in rng.permutation(len(batches)):
            pb = batches[k]
            with T.Tape() as tape:
                pred = affinity_from_inputs(pb.inputs, w)
                loss = compute_loss(pred, pb.batch.labels, cfg.loss, rng)
                if loss.requires_grad:
                    tape.backward(loss)
            h, n = ranking_hits(pred.data, pb.batch.labels)
            hits, total = hits + h, total + n
            losses.append(loss.item())
            opt.step()
            opt.zero_grad()
        entry = EpochLog(epoch, float(np.mean(losses)), _accuracy(hits, total))
        log.info("epoch %d: loss %.5f, ranking accuracy %.4f", entry.epoch, entry.mean_loss, entry.ranking_accuracy)
        history.append(entry)
    return TrainResult(w, history, len(batches))


@dataclass
class ValidationResult:
    mean_loss: float
    ranking_accuracy: float
    num_batches: int


def validate(weights: TwixWeights, sequences: list[Sequence], cfg: TrainConfig,
             batches: list[PreparedBatch] | None = None) -> ValidationResult:
    if batches is None:
        if not sequences:
            raise ValueError("empty held-out set")
        batches = prepare_batches(sequences, cfg)
    if not batches:
        raise NoBatchesError(f"no eligible held-out batches for stage {cfg.stage.value}")
    rng = np.random.default_rng(cfg.seed)
    losses, hits, total = [], 0, 0
    for pb in batches:
        pred = affinity_from_inputs(pb.inputs, weights)
        losses.append(compute_loss(pred, pb.batch.labels, cfg.loss, rng).item())
        h, n = ranking_hits(pred.data, pb.batch.labels)
        hits, total = hits + h, total + n
    return ValidationResult(float(np.mean(losses)), _accuracy(hits, total), len(batches))
