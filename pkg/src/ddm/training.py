"""Label assignment, balanced sampling, Adam, and the training loop.

Scored positions form the grid 0, stride, 2*stride, ... along each video.
A position is positive iff some ground-truth boundary lies in the half-open
interval (position - stride/2, position + stride/2]; the comparison is done
in doubled integers so no float rounding is involved.

Boundaries are rare, so batches are built from *all* positives plus a
thinned negative set: every maximal run of negative positions is cut into
ceil(run/neg_run) contiguous chunks of at most ``neg_run`` and one index is
drawn uniformly per chunk.  All random choices derive from
``(seed, purpose, epoch, video)`` streams, which makes runs reproducible
and lets a resumed run continue bit-exactly: a checkpoint only needs the
parameters, Adam moments, and the (seed, epoch, step) counters.

Checkpoints are record containers holding ``param/*``, ``adam/m/*``,
``adam/v/*`` and ``meta/*`` entries; the loss curve is ``loss.csv`` with
``step,epoch,loss`` rows at full float precision.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .checkpoint import atomic_write_text, load_records, save_records
from .config import RunConfig
from .errors import ContractError, DataError, NumericError
from .feature_bank import sample_clip
from .model import BoundaryModel
from .synth import VideoRecord
from .tensor import backward, zero_grad

log = logging.getLogger("ddm.training")


# ---------------------------------------------------------------------------
# positions and labels


def evaluated_positions(num_frames: int, stride: int) -> np.ndarray:
    """The scored position grid 0, stride, ... (< num_frames)."""
    if num_frames < 1:
        raise ContractError("video has no frames")
    if stride < 1:
        raise ContractError(f"stride must be >= 1, got {stride}")
    return np.arange(0, num_frames, stride)


def assign_labels(boundaries, num_frames: int, stride: int):
    """Returns (positions, labels); labels are 1 near a boundary.

    Position p is positive iff a boundary b satisfies
    ``p - stride/2 < b <= p + stride/2``; each boundary lands on exactly one
    grid position.
    """
    positions = evaluated_positions(num_frames, stride)
    labels = np.zeros(len(positions), dtype=np.int64)
    two_p = 2 * positions
    for b in boundaries:
        if not 0 < b < num_frames:
            raise ContractError(
                f"boundary {b} outside frame range (0, {num_frames})")
        hit = (two_p - stride < 2 * b) & (2 * b <= two_p + stride)
        labels[hit] = 1
    return positions, labels


def balanced_sample(labels: np.ndarray, neg_run: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Indices of all positives plus one draw per negative chunk."""
    if neg_run < 1:
        raise ContractError(f"neg_run must be >= 1, got {neg_run}")
    labels = np.asarray(labels)
    chosen = list(np.nonzero(labels == 1)[0])
    run_start = None
    runs = []
    for i, lab in enumerate(labels):
        if lab == 0 and run_start is None:
            run_start = i
        elif lab == 1 and run_start is not None:
            runs.append((run_start, i))
            run_start = None
    if run_start is not None:
        runs.append((run_start, len(labels)))
    for start, stop in runs:
        for chunk in range(start, stop, neg_run):
            width = min(neg_run, stop - chunk)
            chosen.append(chunk + int(rng.integers(width)))
    return np.sort(np.asarray(chosen, dtype=np.int64))


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]


def adam_init(params: dict) -> AdamState:
    return AdamState(
        step=0,
        m={name: np.zeros_like(p.data) for name, p in params.items()},
        v={name: np.zeros_like(p.data) for name, p in params.items()},
    )


def adam_step(params: dict, state: AdamState, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One update; parameters with no gradient decay their moments only."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name!r} at step {t}")
        state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * g * g
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + eps)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, model: BoundaryModel, state: AdamState,
                    epoch: int, seed: int) -> None:
    records: dict[str, np.ndarray] = {}
    for name, value in model.state().items():
        records[f"param/{name}"] = value
    for name, value in state.m.items():
        records[f"adam/m/{name}"] = value
    for name, value in state.v.items():
        records[f"adam/v/{name}"] = value
    records["meta/epoch"] = np.asarray(float(epoch))
    records["meta/step"] = np.asarray(float(state.step))
    records["meta/seed"] = np.asarray(float(seed))
    save_records(path, records)


def load_checkpoint(path, model: BoundaryModel) -> tuple[AdamState, dict]:
    """Restore parameters and optimiser state; returns (state, meta)."""
    records = load_records(path)
    groups: dict[str, dict[str, np.ndarray]] = {"param": {}, "adam/m": {},
                                                "adam/v": {}, "meta": {}}
    for name, value in records.items():
        for prefix in ("adam/m/", "adam/v/", "param/", "meta/"):
            if name.startswith(prefix):
                groups[prefix.rstrip("/")][name[len(prefix):]] = value
                break
        else:
            raise DataError(f"{os.fspath(path)}: unexpected record {name!r}")
    model.load_state(groups["param"])
    expected = set(model.named_params())
    for part in ("adam/m", "adam/v"):
        if set(groups[part]) != expected:
            raise DataError(
                f"{os.fspath(path)}: optimiser state does not match the model")
    meta = {name: float(value) for name, value in groups["meta"].items()}
    for key in ("epoch", "step", "seed"):
        if key not in meta:
            raise DataError(f"{os.fspath(path)}: missing meta/{key}")
    state = AdamState(step=int(meta["step"]),
                      m={k: v.copy() for k, v in groups["adam/m"].items()},
                      v={k: v.copy() for k, v in groups["adam/v"].items()})
    return state, meta


# ---------------------------------------------------------------------------
# the loop


@dataclass
class TrainResult:
    loss_rows: list[tuple[int, int, float]]  # (global step, epoch, loss)
    checkpoint_paths: list[str]
    final_path: str | None


def loss_csv_text(rows) -> str:
    lines = ["step,epoch,loss"]
    lines += [f"{step},{epoch},{value:.17g}" for step, epoch, value in rows]
    return "\n".join(lines) + "\n"


def _epoch_items(videos, cfg: RunConfig, epoch: int):
    """(video_index, centre position, label) triples, shuffled."""
    items = []
    for vi, video in enumerate(videos):
        positions, labels = assign_labels(video.boundaries, video.num_frames,
                                          cfg.eval_stride)
        srng = rngmod.stream(cfg.train.seed, rngmod.SAMPLE, epoch, vi)
        for idx in balanced_sample(labels, cfg.train.neg_run, srng):
            items.append((vi, int(positions[idx]), int(labels[idx])))
    order = rngmod.stream(cfg.train.seed, rngmod.SHUFFLE, epoch).permutation(
        len(items))
    return [items[i] for i in order]


def train(model: BoundaryModel, videos: list[VideoRecord], cfg: RunConfig,
          out_dir=None, resume_from=None) -> TrainResult:
    """Train in place; optionally write per-epoch checkpoints and loss.csv."""
    cfg.validate()
    if not videos:
        raise ContractError("no training videos")
    tc = cfg.train
    params = model.named_params()
    state = adam_init(params)
    start_epoch = 0
    if resume_from is not None:
        state, meta = load_checkpoint(resume_from, model)
        if int(meta["seed"]) != tc.seed:
            raise DataError(
                f"checkpoint {os.fspath(resume_from)} was trained with seed "
                f"{int(meta['seed'])}, not {tc.seed}")
        start_epoch = int(meta["epoch"]) + 1
        log.info("resuming from %s at epoch %d", resume_from, start_epoch)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)

    rows: list[tuple[int, int, float]] = []
    paths: list[str] = []
    step = state.step
    for epoch in range(start_epoch, tc.epochs):
        items = _epoch_items(videos, cfg, epoch)
        for lo in range(0, len(items), tc.batch_size):
            batch = items[lo:lo + tc.batch_size]
            clips = np.stack([
                sample_clip(videos[vi], pos, cfg.clip) for vi, pos, _ in batch])
            labels = np.array([float(lab) for _, _, lab in batch])
            out = model.forward(clips.astype(np.float64))
            loss = model.loss(out, labels)
            value = loss.item()
            if not np.isfinite(value):
                raise NumericError(f"loss diverged at step {step + 1}")
            zero_grad(params.values())
            backward(loss)
            adam_step(params, state, tc.lr, tc.beta1, tc.beta2, tc.eps)
            step = state.step
            rows.append((step, epoch, value))
        epoch_losses = [v for s, e, v in rows if e == epoch]
        log.info("epoch %d: %d steps, mean loss %.5f", epoch,
                 len(epoch_losses), float(np.mean(epoch_losses)))
        if out_dir is not None:
            path = os.path.join(out_dir, f"epoch_{epoch:03d}.ddmn")
            save_checkpoint(path, model, state, epoch, tc.seed)
            paths.append(path)
            atomic_write_text(os.path.join(out_dir, "loss.csv"),
                              loss_csv_text(rows))

    final_path = None
    if out_dir is not None:
        final_path = os.path.join(out_dir, "final.ddmn")
        save_checkpoint(final_path, model, state,
                        max(tc.epochs - 1, start_epoch - 1), tc.seed)
    return TrainResult(loss_rows=rows, checkpoint_paths=paths,
                       final_path=final_path)
