"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error (missing or malformed
input), 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, config, ingestion, metrics, pipeline, synth, training
from .batching import Stage
from .geometry import Box
from .losses import LossVariant
from .model import TwixWeights
from .tensor import NumericError
from .tracklets import build_tracklets, tracklets_to_observations

log = logging.getLogger("ctwix")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"no such file or directory: {path}")
    return p


def _load_seq(path: str) -> ingestion.Sequence:
    p = _existing(path)
    if not (p / "seqinfo.ini").exists():
        raise FileNotFoundError(f"{path}: missing seqinfo.ini")
    return ingestion.load_sequence(p)


def _load_seqs(paths) -> list[ingestion.Sequence]:
    return [_load_seq(p) for p in paths]


def _common_fps(seqs) -> float:
    rates = {s.meta.fps for s in seqs}
    if len(rates) != 1:
        raise ValueError(f"sequences have different frame rates: {sorted(rates)}")
    return rates.pop()


def _precision(w: TwixWeights, name: str) -> TwixWeights:
    return w.astype(np.float32 if name == "float32" else np.float64)


def _parse_grid(spec: str) -> list[float]:
    """``lo:hi:n`` (inclusive, n points) or a comma list."""
    try:
        if ":" in spec:
            lo, hi, n = spec.split(":")
            return [float(v) for v in np.linspace(float(lo), float(hi), int(n))]
        return [float(v) for v in spec.split(",")]
    except ValueError:
        raise UsageError(f"bad grid spec {spec!r}; use lo:hi:n or a comma list") from None


# -- commands --------------------------------------------------------------------------------


def cmd_gen_synth(a) -> int:
    values = config.load_config(a.config) if a.config else {}
    cfg, count = config.scenario_config(values)
    seqs = synth.generate_set(cfg, count, a.seed)
    for p in synth.write_dataset(seqs, a.out):
        print(p)
    return EXIT_OK


def cmd_build_tracklets(a) -> int:
    seq = _load_seq(a.seq)
    obs = tracklets_to_observations(build_tracklets(seq, a.theta_s))
    Path(a.out).write_text(ingestion.write_mot_results(obs), encoding="utf-8")
    return EXIT_OK


def cmd_train(a) -> int:
    seqs = _load_seqs(a.seq)
    values = config.load_config(a.config) if a.config else {}
    cfg = config.train_config(values, a.stage, _common_fps(seqs))
    if a.seed is not None:
        cfg = replace(cfg, seed=a.seed)
    if a.epochs is not None:
        cfg = replace(cfg, epochs=a.epochs)
    result = training.train(seqs, cfg)
    result.weights.save(a.out)
    if a.log:
        Path(a.log).write_text(result.log_csv(), encoding="utf-8")
    last = result.history[-1]
    print(f"trained {cfg.stage.value} module on {result.num_batches} batches: "
          f"final loss {last.mean_loss:.5f}, ranking accuracy {last.ranking_accuracy:.4f}")
    return EXIT_OK


def cmd_track(a) -> int:
    seq = _load_seq(a.seq)
    values = config.load_config(a.params) if a.params else {}
    params = config.tracker_config(values, seq.meta.fps).pipeline_params()
    w1 = _precision(TwixWeights.load(_existing(a.ckpt1)), a.precision)
    w2 = _precision(TwixWeights.load(_existing(a.ckpt2)), a.precision)
    run = pipeline.oracle_mode if a.oracle else pipeline.track_sequence
    res = run(seq, w1, w2, params)
    text = ingestion.write_mot_results(res.observations)
    if a.out:
        Path(a.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if a.timing:
        Path(a.timing).write_text(pipeline.timing_log(res), encoding="utf-8")
    log.info("%s: %.1f frames/s", seq.meta.name, res.fps)
    return EXIT_OK


def cmd_eval(a) -> int:
    seq = _load_seq(a.gt)
    if seq.gt_tracks is None:
        raise FileNotFoundError(f"{a.gt}: missing gt.txt")
    res = ingestion.parse_mot_results(_existing(a.results).read_text(encoding="utf-8"))
    name = seq.meta.name
    report = metrics.evaluate({name: res}, {name: seq.gt_tracks}, {name: seq.meta.num_frames})
    if a.out:
        Path(a.out).write_text(report.to_csv(), encoding="utf-8")
    sys.stdout.write(report.to_text())
    return EXIT_OK


def cmd_affinity_map(a) -> int:
    try:
        box = Box(*[float(v) for v in a.box.split(",")])
    except (TypeError, ValueError) as e:
        raise UsageError(f"--box expects x,y,w,h with positive w and h: {e}") from None
    weights = TwixWeights.load(_existing(a.ckpt)) if a.ckpt else None
    if analysis.Method(a.method) is analysis.Method.TWIX and weights is None:
        raise UsageError("--method twix needs --ckpt")
    xs = analysis.grid_offsets(box, a.extent, a.resolution)
    grid = analysis.self_affinity_map(box, a.method, xs, weights=weights, history=a.history, gap=a.gap,
                                      buffer=a.buffer)
    for p in analysis.write_map(a.out, grid, xs, xs):
        print(p)
    return EXIT_OK


def _heatmap_cell(args):
    seqs, w1, w2, params, t1, t2, oracle = args
    return analysis.threshold_heatmap(seqs, w1, w2, [t1], [t2], params, oracle)[0, 0]


def cmd_heatmap(a) -> int:
    seqs = _load_seqs(a.seq)
    values = config.load_config(a.params) if a.params else {}
    params = config.tracker_config(values, _common_fps(seqs)).pipeline_params()
    w1 = _precision(TwixWeights.load(_existing(a.ckpt1)), a.precision)
    w2 = _precision(TwixWeights.load(_existing(a.ckpt2)), a.precision)
    t1s = _parse_grid(a.grid)
    t2s = _parse_grid(a.grid2) if a.grid2 else t1s
    cells = [(seqs, w1, w2, params, t1, t2, a.oracle) for t1 in t1s for t2 in t2s]
    if a.jobs > 1:
        with ProcessPoolExecutor(a.jobs) as ex:
            vals = list(ex.map(_heatmap_cell, cells))
    else:
        vals = [_heatmap_cell(c) for c in cells]
    hm = np.array(vals).reshape(len(t1s), len(t2s))
    text = analysis.heatmap_csv(hm, t1s, t2s)
    if a.out:
        Path(a.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def ablate_losses(train_seqs, test_seqs, variants, values, seed: int = 0, oracle: bool = True):
    """Train both modules per loss variant and evaluate; returns ``{variant: MetricReport}``."""
    fps = _common_fps(train_seqs + test_seqs)
    tc = config.tracker_config(values, fps)
    out = {}
    batches = {}
    for v in variants:
        loss = LossVariant(v)
        weights = []
        for stage in (Stage.FIRST, Stage.SECOND):
            cfg = config.train_config(values, stage, fps)
            cfg = replace(cfg, seed=seed, loss=replace(cfg.loss, variant=loss))
            if stage not in batches:
                batches[stage] = training.prepare_batches(train_seqs, cfg)
            weights.append(training.train(train_seqs, cfg, batches=batches[stage]).weights)
        run = pipeline.oracle_mode if oracle else pipeline.track_sequence
        res = {s.meta.name: run(s, weights[0], weights[1], tc.pipeline_params()).observations for s in test_seqs}
        out[loss.value] = metrics.evaluate(res, {s.meta.name: s.gt_tracks for s in test_seqs},
                                           {s.meta.name: s.meta.num_frames for s in test_seqs})
    return out


def cmd_ablate_loss(a) -> int:
    train_seqs = _load_seqs(a.seq)
    test_seqs = _load_seqs(a.test) if a.test else train_seqs
    values = config.load_config(a.config) if a.config else {}
    variants = [v.strip() for v in a.losses.split(",") if v.strip()]
    for v in variants:
        try:
            LossVariant(v)
        except ValueError:
            raise UsageError(f"unknown loss {v!r}; choose from {[x.value for x in LossVariant]}") from None
    reports = ablate_losses(train_seqs, test_seqs, variants, values, a.seed, a.oracle)
    lines = [f"{'loss':<16}" + "".join(f"{k:>8}" for k in metrics.COLUMNS)]
    for v, r in reports.items():
        row = r.row()
        lines.append(f"{v:<16}" + "".join(f"{100 * row[k]:>8.2f}" for k in metrics.COLUMNS))
    text = "\n".join(lines) + "\n"
    if a.out:
        Path(a.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ctwix", description="Coordinate-only tracklet affinity and cascade tracking.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("gen-synth", help="generate synthetic sequences")
    s.add_argument("--config")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_gen_synth)

    s = sub.add_parser("build-tracklets", help="chain detections into tracklets")
    s.add_argument("--seq", required=True)
    s.add_argument("--theta-s", type=float, default=0.3)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_build_tracklets)

    s = sub.add_parser("train", help="train one TWiX module")
    s.add_argument("--seq", nargs="+", required=True)
    s.add_argument("--stage", choices=[x.value for x in Stage], required=True)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--log", help="CSV loss log")
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("track", help="run the cascade tracker")
    s.add_argument("--seq", required=True)
    s.add_argument("--ckpt1", required=True)
    s.add_argument("--ckpt2", required=True)
    s.add_argument("--params")
    s.add_argument("--oracle", action="store_true", help="use GT boxes as detections")
    s.add_argument("--precision", choices=("float32", "float64"), default="float32")
    s.add_argument("--out")
    s.add_argument("--timing", help="per-frame timing log")
    s.set_defaults(fn=cmd_track)

    s = sub.add_parser("eval", help="HOTA / MOTA / IDF1 of a result file")
    s.add_argument("--results", required=True)
    s.add_argument("--gt", required=True, help="sequence directory with gt.txt")
    s.add_argument("--out", help="CSV report")
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("affinity-map", help="self-affinity map of one box")
    s.add_argument("--method", choices=[m.value for m in analysis.Method], required=True)
    s.add_argument("--ckpt")
    s.add_argument("--box", required=True, help="x,y,w,h")
    s.add_argument("--out", required=True, help="output prefix (.csv and .pgm)")
    s.add_argument("--extent", type=float)
    s.add_argument("--resolution", type=int, default=101)
    s.add_argument("--history", type=int, default=8)
    s.add_argument("--gap", type=int, default=0)
    s.add_argument("--buffer", type=float, default=0.3)
    s.set_defaults(fn=cmd_affinity_map)

    s = sub.add_parser("heatmap", help="HOTA over a (theta_1, theta_2) grid")
    s.add_argument("--seq", nargs="+", required=True)
    s.add_argument("--ckpt1", required=True)
    s.add_argument("--ckpt2", required=True)
    s.add_argument("--grid", required=True, help="theta grid, lo:hi:n or comma list")
    s.add_argument("--grid2", help="separate theta_2 grid")
    s.add_argument("--params")
    s.add_argument("--oracle", action="store_true")
    s.add_argument("--precision", choices=("float32", "float64"), default="float32")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_heatmap)

    s = sub.add_parser("ablate-loss", help="train and evaluate several loss variants")
    s.add_argument("--seq", nargs="+", required=True, help="training sequences")
    s.add_argument("--test", nargs="+", help="evaluation sequences (default: training ones)")
    s.add_argument("--losses", required=True, help="comma list of loss variants")
    s.add_argument("--config")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--oracle", action="store_true")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_ablate_loss)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="%(message)s")
    try:
        return a.fn(a)
    except UsageError as e:
        print(f"ctwix: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as e:
        print(f"ctwix: numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError) as e:
        print(f"ctwix: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
