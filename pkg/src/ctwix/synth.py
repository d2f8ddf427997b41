"""Synthetic tracking sequences with known ground truth.

Objects move inside the image under one of four motion regimes and a noisy
detector observes them.  Occluded frames carry neither a detection nor a GT
entry for the occluded object, so GT boxes used as detections score a
perfect DetA.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .geometry import Box, Detection
from .ingestion import DetectionSet, GroundTruthTrack, GTEntry, Sequence, SequenceMeta, save_sequence


class Regime(str, Enum):
    LINEAR = "linear"
    CIRCULAR = "circular"
    ERRATIC = "erratic"
    LOW_FPS = "low_fps"


@dataclass(frozen=True)
class ScenarioConfig:
    regime: Regime = Regime.LINEAR
    num_objects: int = 10
    num_frames: int = 600
    fps: float = 20.0
    image_width: int = 1280
    image_height: int = 720
    # object size: height in px, aspect = w / h
    height_range: tuple[float, float] = (80.0, 160.0)
    aspect_range: tuple[float, float] = (0.3, 0.6)
    speed_range: tuple[float, float] = (20.0, 120.0)  # px / s
    turn_period: float = 0.5  # s, ERRATIC heading changes
    axis_aligned: bool = False  # ERRATIC headings restricted to the axes, speeds may be zero
    angular_speed_range: tuple[float, float] = (0.3, 1.0)  # rad / s, CIRCULAR
    low_fps_factor: int = 2  # LOW_FPS keeps every k-th frame
    center_jitter: float = 0.0  # px std
    size_jitter: float = 0.0  # px std
    miss_prob: float = 0.0
    fp_rate: float = 0.0  # expected false positives per frame
    score_range: tuple[float, float] = (0.7, 1.0)
    fp_score_range: tuple[float, float] = (0.3, 0.9)
    occlusions_per_object: float = 0.0  # expected count
    occlusion_range: tuple[float, float] = (0.2, 1.0)  # s
    # explicit occlusions: (object index, first frame, length in frames)
    occlusion_events: tuple = field(default_factory=tuple)
    name: str = "synth"

    def __post_init__(self):
        object.__setattr__(self, "regime", Regime(self.regime))
        for p in (self.miss_prob,):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability out of [0, 1]: {p}")
        if self.center_jitter < 0 or self.size_jitter < 0 or self.fp_rate < 0:
            raise ValueError("jitter and false-positive rate must be non-negative")
        if self.num_objects < 0 or self.num_frames < 1 or self.fps <= 0:
            raise ValueError("invalid sequence size")
        if self.low_fps_factor < 1:
            raise ValueError("low_fps_factor must be >= 1")

    @property
    def output_fps(self) -> float:
        return self.fps / self.low_fps_factor if self.regime is Regime.LOW_FPS else self.fps


def _reflect(pos, vel, lo, hi):
    """Bounce ``pos`` back into ``[lo, hi]``, flipping velocity components that hit a wall."""
    for ax in range(2):
        span = hi[ax] - lo[ax]
        if span <= 0:
            pos[ax] = lo[ax]
            continue
        p = (pos[ax] - lo[ax]) % (2 * span)
        if p > span:
            p = 2 * span - p
        crossed = math.floor((pos[ax] - lo[ax]) / span)
        if crossed % 2:
            vel[ax] = -vel[ax]
        pos[ax] = lo[ax] + p
    return pos, vel


def _heading(rng, cfg: ScenarioConfig) -> np.ndarray:
    if cfg.axis_aligned:
        ang = rng.integers(4) * math.pi / 2
        speed = rng.uniform(*cfg.speed_range) if rng.random() < 0.75 else 0.0
    else:
        ang = rng.uniform(0, 2 * math.pi)
        speed = rng.uniform(*cfg.speed_range)
    return speed * np.array([math.cos(ang), math.sin(ang)])


def _trajectories(cfg: ScenarioConfig, n_steps: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Top-left positions ``(n_obj, n_steps, 2)`` and sizes ``(n_obj, 2)`` at the base fps."""
    W, H = cfg.image_width, cfg.image_height
    dt = 1.0 / cfg.fps
    sizes = np.empty((cfg.num_objects, 2))
    pos = np.empty((cfg.num_objects, n_steps, 2))
    turn = max(1, int(round(cfg.turn_period * cfg.fps)))
    for o in range(cfg.num_objects):
        h = min(rng.uniform(*cfg.height_range), H - 1.0)
        w = min(h * rng.uniform(*cfg.aspect_range), W - 1.0)
        sizes[o] = (w, h)
        lo, hi = np.zeros(2), np.array([W - w, H - h])
        if cfg.regime is Regime.CIRCULAR:
            r = rng.uniform(0.1, 0.3) * min(hi)
            c = rng.uniform(lo + r, np.maximum(hi - r, lo + r))
            omega = rng.uniform(*cfg.angular_speed_range) * rng.choice([-1.0, 1.0])
            phi = rng.uniform(0, 2 * math.pi)
            t = np.arange(n_steps) * dt
            pos[o, :, 0] = c[0] + r * np.cos(phi + omega * t)
            pos[o, :, 1] = c[1] + r * np.sin(phi + omega * t)
            pos[o] = np.clip(pos[o], lo, hi)
            continue
        p = rng.uniform(lo, hi)
        v = _heading(rng, cfg)
        for k in range(n_steps):
            if cfg.regime is Regime.ERRATIC and k and k % turn == 0:
                v = _heading(rng, cfg)
            pos[o, k] = p
            p, v = _reflect(p + v * dt, v, lo, hi)
    return pos, sizes


def _occlusion_mask(cfg: ScenarioConfig, n_frames: int, fps: float, rng) -> np.ndarray:
    occ = np.zeros((cfg.num_objects, n_frames), dtype=bool)
    if cfg.occlusions_per_object > 0:
        for o in range(cfg.num_objects):
            for _ in range(rng.poisson(cfg.occlusions_per_object)):
                length = max(1, int(round(rng.uniform(*cfg.occlusion_range) * fps)))
                # keep a visible frame on both sides so the gap is a real interruption
                if n_frames - length - 2 < 1:
                    continue
                start = int(rng.integers(1, n_frames - length - 1))
                occ[o, start:start + length] = True
    for o, start, length in cfg.occlusion_events:
        occ[o, max(0, start - 1):start - 1 + length] = True
    return occ


def generate(cfg: ScenarioConfig, seed: int = 0) -> Sequence:
    """One synthetic sequence; deterministic given ``(cfg, seed)``."""
    rng = np.random.default_rng(seed)
    step = cfg.low_fps_factor if cfg.regime is Regime.LOW_FPS else 1
    n_out = cfg.num_frames
    pos, sizes = _trajectories(cfg, (n_out - 1) * step + 1, rng)
    pos = pos[:, ::step]
    fps = cfg.output_fps
    occ = _occlusion_mask(cfg, n_out, fps, rng)
    W, H = cfg.image_width, cfg.image_height

    gt = [GroundTruthTrack(o + 1) for o in range(cfg.num_objects)]
    frames: dict[int, list[Detection]] = {}
    for k in range(n_out):
        f = k + 1
        dets = []
        for o in range(cfg.num_objects):
            if occ[o, k]:
                continue
            w, h = sizes[o]
            box = Box(float(pos[o, k, 0]), float(pos[o, k, 1]), float(w), float(h))
            gt[o].entries.append(GTEntry(f, box))
            if cfg.miss_prob and rng.random() < cfg.miss_prob:
                continue
            cx, cy = box.center
            if cfg.center_jitter:
                cx, cy = cx + rng.normal(0, cfg.center_jitter), cy + rng.normal(0, cfg.center_jitter)
            if cfg.size_jitter:
                w = max(1.0, w + rng.normal(0, cfg.size_jitter))
                h = max(1.0, h + rng.normal(0, cfg.size_jitter))
            score = float(rng.uniform(*cfg.score_range))
            dets.append(Detection(f, Box(cx - w / 2, cy - h / 2, w, h), score))
        for _ in range(rng.poisson(cfg.fp_rate) if cfg.fp_rate else 0):
            h = rng.uniform(*cfg.height_range)
            w = h * rng.uniform(*cfg.aspect_range)
            dets.append(Detection(f, Box(rng.uniform(0, W - w), rng.uniform(0, H - h), w, h),
                                  float(rng.uniform(*cfg.fp_score_range))))
        if dets:
            frames[f] = dets
    meta = SequenceMeta(cfg.name, fps, n_out, W, H)
    return Sequence(meta, DetectionSet(frames), [g for g in gt if g.entries])


def generate_set(cfg: ScenarioConfig, count: int, seed: int = 0, prefix: str | None = None) -> list[Sequence]:
    """``count`` sequences with seeds ``seed, seed + 1, ...``."""
    prefix = prefix or cfg.name
    return [generate(replace(cfg, name=f"{prefix}-{i:02d}"), seed + i) for i in range(count)]


def write_dataset(sequences: list[Sequence], out_dir) -> list[Path]:
    out = Path(out_dir)
    return [save_sequence(s, out / s.meta.name) for s in sequences]
