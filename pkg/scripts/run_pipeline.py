#!/usr/bin/env python3
"""End-to-end demo: generate a synthetic corpus, train, infer, evaluate.

Drives the same command-line interface a user would, so the artefacts
(config.json, checkpoints, loss.csv, predictions.jsonl, report.csv,
score-curve SVGs) land under one run directory:

    python scripts/run_pipeline.py --out runs/demo --seed 0
    python scripts/run_pipeline.py --preset desk --out runs/desk
"""

import argparse
import os
import sys

from ddm.cli import entry


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/demo", help="run directory")
    ap.add_argument("--preset", help="named base configuration (desk, paper)")
    ap.add_argument("--config", help="JSON configuration file")
    ap.add_argument("--seed", type=int, help="override every seed")
    ap.add_argument("--workers", type=int, default=4)
    ap.add_argument("--no-plot", action="store_true",
                    help="skip the per-video SVG score curves")
    args = ap.parse_args()

    base = []
    if args.preset:
        base += ["--preset", args.preset]
    if args.config:
        base += ["--config", args.config]
    if args.seed is not None:
        base += ["--seed", str(args.seed)]

    data = os.path.join(args.out, "data")
    run = os.path.join(args.out, "run")
    pred = os.path.join(args.out, "pred")

    stages = [
        ["gen-data", *base, "--out", data, "--workers", str(args.workers)],
        ["train", *base, "--data", data, "--out", run],
        ["infer", *base, "--data", data,
         "--checkpoint", os.path.join(run, "final.ddmn"), "--out", pred,
         *([] if args.no_plot else ["--plot"]),
         "--workers", str(args.workers)],
        ["eval", *base, "--data", data,
         "--predictions", os.path.join(pred, "predictions.jsonl"),
         "--out", pred],
    ]
    for argv in stages:
        print(f"$ ddm {' '.join(argv)}", flush=True)
        code = entry(argv)
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
