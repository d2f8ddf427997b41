"""``key = value`` configuration files.

Tracker keys use the hyper-parameter names ``t_G``, ``t_P``, ``t_F``,
``theta_1``, ``theta_2``, ``t_A`` and ``theta_T`` with times in seconds.
``t_F`` accepts ``1/fps``; ``theta_T`` accepts a percentage such as ``90%``.
A ``preset`` key (``dancetrack``, ``mot17`` or ``kittimot``) supplies defaults
for keys not given.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .batching import BatchConfig, Stage
from .losses import LossConfig, LossVariant
from .pipeline import PipelineParams
from .synth import Regime, ScenarioConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


PRESETS: dict[str, dict[str, str]] = {
    "dancetrack": {"t_G": "1.6", "t_P": "0.8", "t_F": "1/fps", "theta_1": "-0.5", "theta_2": "-0.2",
                   "t_A": "1.6", "theta_T": "90%"},
    "mot17": {"t_G": "0.8", "t_P": "0.4", "t_F": "1/fps", "theta_1": "0.9", "theta_2": "-0.5",
              "t_A": "0.8", "theta_T": "70%"},
    "kittimot": {"t_G": "0.8", "t_P": "0.4", "t_F": "1/fps", "theta_1": "0.4", "theta_2": "-0.6",
                 "t_A": "0.8", "theta_T": "50%"},
}

TRACKER_KEYS = ("t_G", "t_P", "t_F", "theta_1", "theta_2", "t_A", "theta_T")
TRAIN_KEYS = ("epochs", "lr", "layers", "loss", "tau", "B", "focal_gamma", "triplet_margin", "seed",
              "subsample", "max_batches", "theta_s", "oracle")
SCENARIO_KEYS = tuple(f.name for f in fields(ScenarioConfig)) + ("count",)
KNOWN = set(TRACKER_KEYS) | set(TRAIN_KEYS) | set(SCENARIO_KEYS) | {"preset", "fps"}


def parse_config(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key not in KNOWN:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_config(path) -> dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return parse_config(text)


def _float(values, key) -> float:
    v = values[key]
    try:
        if v.endswith("%"):
            return float(v[:-1]) / 100.0
        return float(v)
    except ValueError:
        raise ConfigError(f"{key}: not a number: {v!r}") from None


def _int(values, key) -> int:
    try:
        return int(values[key])
    except ValueError:
        raise ConfigError(f"{key}: not an integer: {values[key]!r}") from None


def _bool(values, key) -> bool:
    v = values[key].lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: not a boolean: {values[key]!r}")


@dataclass(frozen=True)
class TrackerConfig:
    t_G: float
    t_P: float
    t_F: float
    theta_1: float
    theta_2: float
    t_A: float
    theta_T: float
    fps: float

    def batch_config(self) -> BatchConfig:
        return BatchConfig(self.t_G, self.t_P, self.t_F, self.fps)

    def pipeline_params(self) -> PipelineParams:
        return PipelineParams(self.theta_1, self.theta_2, self.theta_T, self.t_A, self.t_P, self.fps)


def with_preset(values: dict[str, str]) -> dict[str, str]:
    name = values.get("preset", "dancetrack").lower()
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return {**PRESETS[name], **values}


def tracker_config(values: dict[str, str], fps: float | None = None) -> TrackerConfig:
    """Tracker settings; ``fps`` (usually from the sequence) overrides any ``fps`` key."""
    v = with_preset(values)
    if fps is None:
        if "fps" not in v:
            raise ConfigError("fps unknown: give an fps key or a sequence")
        fps = _float(v, "fps")
    if fps <= 0:
        raise ConfigError(f"fps must be positive, got {fps}")
    t_F = 1.0 / fps if v["t_F"].replace(" ", "") == "1/fps" else _float(v, "t_F")
    tc = TrackerConfig(_float(v, "t_G"), _float(v, "t_P"), t_F, _float(v, "theta_1"),
                       _float(v, "theta_2"), _float(v, "t_A"), _float(v, "theta_T"), fps)
    try:
        tc.batch_config()
        tc.pipeline_params()
        return tc
    except ValueError as e:
        raise ConfigError(str(e)) from e


def train_config(values: dict[str, str], stage, fps: float) -> TrainConfig:
    """Stage presets overridden by whatever training keys are present."""
    tc = tracker_config(values, fps)
    kw = {}
    for key, conv in (("epochs", _int), ("lr", _float), ("layers", _int), ("seed", _int),
                      ("subsample", _float), ("max_batches", _int), ("theta_s", _float), ("oracle", _bool)):
        if key in values:
            kw[key] = conv(values, key)
    loss_kw = {}
    if "loss" in values:
        try:
            loss_kw["variant"] = LossVariant(values["loss"].lower())
        except ValueError:
            raise ConfigError(f"unknown loss {values['loss']!r}") from None
    for key, field_name in (("tau", "tau"), ("B", "batch_scale"), ("focal_gamma", "focal_gamma"),
                            ("triplet_margin", "triplet_margin")):
        if key in values:
            loss_kw[field_name] = _float(values, key)
    try:
        return TrainConfig.for_stage(Stage(stage), tc.batch_config(), loss=LossConfig(**loss_kw), **kw)
    except ValueError as e:
        raise ConfigError(str(e)) from e


def scenario_config(values: dict[str, str]) -> tuple[ScenarioConfig, int]:
    """Synthetic scenario and the number of sequences to generate (``count``, default 1)."""
    kw = {}
    for f in fields(ScenarioConfig):
        if f.name not in values:
            continue
        raw = values[f.name]
        if f.name == "regime":
            try:
                kw["regime"] = Regime(raw.lower())
            except ValueError:
                raise ConfigError(f"unknown regime {raw!r}") from None
        elif f.name == "name":
            kw["name"] = raw
        elif f.name == "axis_aligned":
            kw[f.name] = _bool(values, f.name)
        elif f.name in ("num_objects", "num_frames", "image_width", "image_height", "low_fps_factor"):
            kw[f.name] = _int(values, f.name)
        elif f.name.endswith("_range"):
            parts = raw.split(",")
            if len(parts) != 2:
                raise ConfigError(f"{f.name}: expected 'lo, hi', got {raw!r}")
            try:
                kw[f.name] = (float(parts[0]), float(parts[1]))
            except ValueError:
                raise ConfigError(f"{f.name}: not numbers: {raw!r}") from None
        elif f.name == "occlusion_events":
            raise ConfigError("occlusion_events cannot be set from a config file")
        else:
            kw[f.name] = _float(values, f.name)
    count = _int(values, "count") if "count" in values else 1
    try:
        return ScenarioConfig(**kw), count
    except ValueError as e:
        raise ConfigError(str(e)) from e
