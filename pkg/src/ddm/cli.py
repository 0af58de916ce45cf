"""Command-line entry points: gen-data, train, infer, eval.

Every run directory receives a ``config.json`` snapshot of the fully
resolved configuration, so results can be reproduced from the artefacts
alone.  Exit codes: 0 success, 1 configuration or usage problem, 2 broken
or missing data, 3 numerical failure.  ``DDM_LOG_LEVEL`` selects the log
verbosity (DEBUG, INFO, WARNING, ERROR, CRITICAL).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

from . import config as configmod
from .checkpoint import atomic_write_text
from .config import METRICS, ABLATIONS, RunConfig
from .errors import ConfigError, DDMError, DataError, NumericError
from .evaluation import VideoOutcome, evaluate, format_csv, format_table
from .inference import Prediction, predict_dataset, score_video, select_peaks
from .model import BoundaryModel
from .plot import score_curve_svg
from .synth import generate_dataset, read_dataset, read_manifest, write_dataset
from .training import load_checkpoint, train

log = logging.getLogger("ddm.cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; we reserve 2 for data
    problems, so route usage errors through the normal error path."""

    def error(self, message):
        raise ConfigError(message)


def configure_logging() -> None:
    name = os.environ.get("DDM_LOG_LEVEL", "WARNING").upper()
    level = logging.getLevelName(name)
    if not isinstance(level, int):
        raise ConfigError(f"unknown DDM_LOG_LEVEL {name!r}")
    logging.basicConfig(level=level,
                        format="%(levelname)s %(name)s: %(message)s",
                        force=True)
    logging.getLogger("ddm").setLevel(level)


# ---------------------------------------------------------------------------
# configuration plumbing


def resolve_config(args) -> RunConfig:
    preset = getattr(args, "preset", None)
    path = getattr(args, "config", None)
    if preset and path:
        raise ConfigError("--preset and --config are mutually exclusive")
    if preset:
        cfg = configmod.PRESETS[preset]()
    elif path:
        cfg = configmod.load_file(path)
    else:
        cfg = RunConfig()

    replace = dataclasses.replace
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, gen=replace(cfg.gen, seed=args.seed),
                      train=replace(cfg.train, seed=args.seed))
    if getattr(args, "theta", None) is not None:
        cfg = replace(cfg, post=replace(cfg.post, theta=args.theta))
    if getattr(args, "window", None) is not None:
        cfg = replace(cfg, post=replace(cfg.post, window=args.window))
    if getattr(args, "stride", None) is not None:
        cfg = replace(cfg, clip=replace(cfg.clip, stride=args.stride))
    if getattr(args, "ablate", None) is not None:
        cfg = replace(cfg, model=replace(cfg.model, ablate=args.ablate))
    if getattr(args, "metric", None) is not None:
        cfg = replace(cfg, model=replace(cfg.model, metric=args.metric))
    cfg.validate()
    return cfg


def snapshot_config(cfg: RunConfig, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    atomic_write_text(os.path.join(os.fspath(out_dir), "config.json"),
                      configmod.dumps(cfg))


def _add_config_flags(sub, overrides=("seed",)):
    sub.add_argument("--config", metavar="FILE",
                     help="JSON run configuration")
    sub.add_argument("--preset", choices=sorted(configmod.PRESETS),
                     help="named base configuration")
    if "seed" in overrides:
        sub.add_argument("--seed", type=int, help="override every seed field")
    if "model" in overrides:
        sub.add_argument("--ablate", choices=ABLATIONS,
                         help="architecture variant")
        sub.add_argument("--metric", choices=METRICS,
                         help="frame-distance metric")
        sub.add_argument("--stride", type=int,
                         help="frame step between clip samples")
    if "post" in overrides:
        sub.add_argument("--theta", type=float,
                         help="score threshold for kept boundaries")
        sub.add_argument("--window", type=int,
                         help="local-maximum half width in grid steps")


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_data(args) -> int:
    cfg = resolve_config(args)
    records = generate_dataset(cfg.gen, workers=args.workers)
    write_dataset(records, args.out)
    snapshot_config(cfg, args.out)
    log.info("generated %d videos into %s", len(records), args.out)
    print(f"wrote {len(records)} videos to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    snapshot_config(cfg, args.out)
    videos = read_dataset(args.data, split="train")
    model = BoundaryModel(cfg.model, seed=cfg.train.seed)
    result = train(model, videos, cfg, out_dir=args.out,
                   resume_from=args.resume)
    last = result.loss_rows[-1] if result.loss_rows else None
    if last is not None:
        print(f"trained {last[0]} steps; final loss {last[2]:.5f}")
    print(f"checkpoint: {result.final_path}")
    return EXIT_OK


def cmd_infer(args) -> int:
    cfg = resolve_config(args)
    videos = read_dataset(args.data, split=args.split)
    model = BoundaryModel(cfg.model, seed=cfg.train.seed)
    load_checkpoint(args.checkpoint, model)
    os.makedirs(args.out, exist_ok=True)
    snapshot_config(cfg, args.out)

    if args.plot:
        predictions = []
        plot_dir = os.path.join(os.fspath(args.out), "plots")
        os.makedirs(plot_dir, exist_ok=True)
        for video in videos:
            positions, scores = score_video(model, video, cfg)
            kept = select_peaks(scores, cfg.post)
            predictions.append(Prediction(
                video_id=video.video_id,
                positions=tuple(int(positions[i]) for i in kept),
                scores=tuple(float(scores[i]) for i in kept)))
            svg = score_curve_svg(positions, scores, kept,
                                  theta=cfg.post.theta,
                                  boundaries=video.boundaries,
                                  title=video.video_id)
            atomic_write_text(
                os.path.join(plot_dir, f"{video.video_id}.svg"), svg)
    else:
        predictions = predict_dataset(model, videos, cfg,
                                      workers=args.workers)

    lines = [json.dumps({"video": p.video_id,
                         "positions": list(p.positions),
                         "scores": list(p.scores)})
             for p in predictions]
    path = os.path.join(os.fspath(args.out), "predictions.jsonl")
    atomic_write_text(path, "".join(line + "\n" for line in lines))
    total = sum(len(p.positions) for p in predictions)
    print(f"wrote {len(predictions)} videos, {total} boundaries to {path}")
    return EXIT_OK


def read_predictions(path) -> dict[str, tuple[int, ...]]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = fh.read().splitlines()
    except OSError as err:
        raise DataError(f"cannot read predictions {path}: {err}") from err
    out: dict[str, tuple[int, ...]] = {}
    for lineno, line in enumerate(raw, 1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
            video = entry["video"]
            positions = tuple(int(p) for p in entry["positions"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
            raise DataError(f"{path}:{lineno}: bad prediction line: {err}") \
                from err
        if video in out:
            raise DataError(f"{path}:{lineno}: duplicate video {video!r}")
        out[video] = positions
    return out


def cmd_eval(args) -> int:
    cfg = resolve_config(args)
    replace = dataclasses.replace
    if args.matching is not None:
        cfg = replace(cfg, eval=replace(cfg.eval, matching=args.matching))
    if args.aggregation is not None:
        cfg = replace(cfg, eval=replace(cfg.eval,
                                        aggregation=args.aggregation))
    entries = read_manifest(args.data, split=args.split)
    predicted = read_predictions(args.predictions)

    known = {entry["id"] for entry in entries}
    unknown = sorted(set(predicted) - known)
    if unknown:
        raise DataError(
            f"{args.predictions}: predictions for unknown videos {unknown}")

    outcomes = [
        VideoOutcome(video_id=entry["id"], num_frames=entry["num_frames"],
                     predictions=predicted.get(entry["id"], ()),
                     boundaries=entry["boundaries"])
        for entry in entries]
    report = evaluate(outcomes, cfg.eval)
    sys.stdout.write(format_table(report))
    if args.out is not None:
        os.makedirs(args.out, exist_ok=True)
        atomic_write_text(os.path.join(os.fspath(args.out), "report.csv"),
                          format_csv(report))
    return EXIT_OK


# ---------------------------------------------------------------------------
# wiring


def build_parser() -> _Parser:
    parser = _Parser(prog="ddm",
                     description="boundary detection on synthetic videos")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="render a synthetic dataset")
    _add_config_flags(p)
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="fit a model on the train split")
    _add_config_flags(p, overrides=("seed", "model"))
    p.add_argument("--data", required=True, metavar="DIR")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--resume", metavar="CHECKPOINT")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="score a split with a checkpoint")
    _add_config_flags(p, overrides=("seed", "model", "post"))
    p.add_argument("--data", required=True, metavar="DIR")
    p.add_argument("--checkpoint", required=True, metavar="FILE")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--split", default="val")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--plot", action="store_true",
                   help="write per-video score curves as SVG")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    _add_config_flags(p, overrides=())
    p.add_argument("--data", required=True, metavar="DIR")
    p.add_argument("--predictions", required=True, metavar="FILE")
    p.add_argument("--out", metavar="DIR",
                   help="also write report.csv here")
    p.add_argument("--split", default="val")
    p.add_argument("--matching", choices=("optimal", "greedy"))
    p.add_argument("--aggregation", choices=("global", "per-video"))
    p.set_defaults(func=cmd_eval)
    return parser


def entry(argv=None) -> int:
    try:
        configure_logging()
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except DDMError as err:  # contract and dimension problems
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(entry())
