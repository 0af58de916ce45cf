#!/usr/bin/env python3
"""Train every architecture variant on one corpus and compare F1.

Sweeps the ablation axis (full model, single branches, average pooling,
attention subsets) and optionally the distance-metric axis, all from the
same data and parameter seed, then prints one result row per run:

    python scripts/ablation_sweep.py --seed 0 --epochs 6
    python scripts/ablation_sweep.py --metrics --jitter 0.05
"""

import argparse
import dataclasses
import sys
import time

from ddm.config import (ABLATIONS, METRICS, ClipSpec, EvalConfig, GenSpec,
                        ModelConfig, PostConfig, RunConfig, TrainConfig)
from ddm.evaluation import VideoOutcome, evaluate
from ddm.inference import predict_dataset
from ddm.model import BoundaryModel
from ddm.synth import generate_dataset
from ddm.training import train


def sweep_config(args, metric="euclidean", ablate="none") -> RunConfig:
    return RunConfig(
        gen=GenSpec(train_videos=args.train_videos, val_videos=args.val_videos,
                    jitter=args.jitter, seed=args.seed),
        clip=ClipSpec(half_window=5, stride=3),
        model=ModelConfig(metric=metric, ablate=ablate),
        train=TrainConfig(epochs=args.epochs, batch_size=32, lr=1e-3,
                          seed=args.seed),
        post=PostConfig(theta=0.5, window=5),
    )


def run_once(cfg: RunConfig, train_vids, val_vids, workers: int):
    model = BoundaryModel(cfg.model, seed=cfg.train.seed)
    result = train(model, train_vids, cfg)
    preds = predict_dataset(model, val_vids, cfg, workers=workers)
    outcomes = [VideoOutcome(v.video_id, v.num_frames, p.positions,
                             v.boundaries)
                for v, p in zip(val_vids, preds)]
    report = evaluate(outcomes, EvalConfig())
    final_loss = result.loss_rows[-1][2] if result.loss_rows else float("nan")
    return report.rows[0].f1, report.average.f1, final_loss


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=6)
    ap.add_argument("--jitter", type=float, default=0.0)
    ap.add_argument("--train-videos", type=int, default=24)
    ap.add_argument("--val-videos", type=int, default=12)
    ap.add_argument("--workers", type=int, default=4)
    ap.add_argument("--metrics", action="store_true",
                    help="sweep distance metrics instead of ablations")
    args = ap.parse_args()

    base = sweep_config(args)
    videos = generate_dataset(base.gen, workers=args.workers)
    train_vids = [v for v in videos if v.split == "train"]
    val_vids = [v for v in videos if v.split == "val"]
    print(f"corpus: {len(train_vids)} train / {len(val_vids)} val videos, "
          f"jitter {args.jitter}, seed {args.seed}")

    if args.metrics:
        axis = [("metric", m) for m in METRICS]
    else:
        axis = [("ablate", a) for a in ABLATIONS]

    print(f"{'variant':<18} {'F1@0.05':>8} {'F1@avg':>8} "
          f"{'final loss':>11} {'seconds':>8}")
    for kind, value in axis:
        cfg = sweep_config(args, **{kind: value})
        started = time.perf_counter()
        f1_05, f1_avg, loss = run_once(cfg, train_vids, val_vids, args.workers)
        print(f"{value:<18} {f1_05:>8.4f} {f1_avg:>8.4f} {loss:>11.5f} "
              f"{time.perf_counter() - started:>8.1f}", flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
