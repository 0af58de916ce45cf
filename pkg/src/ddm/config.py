"""Frozen dataclass configuration for every pipeline stage.

A ``RunConfig`` bundles generation, clip sampling, model, training,
post-processing and evaluation settings and serialises to/from JSON so each
run can snapshot the exact configuration it executed with.  Two presets are
provided: ``desk`` (small widths, large learning rate -- minutes on a CPU)
and ``paper`` (full-scale hyperparameters: window 5, clip stride 6, three
spatial and three temporal levels, five queries, six-layer decoders,
learning rate 1e-5).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .errors import ConfigError

METRICS = ("euclidean", "manhattan", "chebyshev", "cosine")
ABLATIONS = ("none", "rgb-only", "ddm-only", "avg-pool", "intra-only",
             "cross-only")
REGIMES = ("color-shift", "appear-disappear", "velocity-change")


@dataclass(frozen=True)
class ClipSpec:
    """Sliding clip geometry around a candidate position.

    A clip covers offsets ``-half_window*stride .. +half_window*stride`` in
    steps of ``stride``, so its length is ``2*half_window + 1`` frames;
    out-of-range indices clamp to the first/last frame.  ``half_window = 0``
    degenerates to the centre frame alone.
    """

    half_window: int = 5
    stride: int = 6

    @property
    def length(self) -> int:
        return 2 * self.half_window + 1

    def validate(self) -> None:
        if self.half_window < 0:
            raise ConfigError(f"half_window must be >= 0, got {self.half_window}")
        if self.stride < 1:
            raise ConfigError(f"clip stride must be >= 1, got {self.stride}")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture of the two-branch boundary classifier.

    ``backbone_widths`` lists the per-stage channel counts of the spatial
    backbone (its length is the number of spatial levels); ``width`` is the
    shared channel count of the difference-map embedding and all attention
    blocks and must equal the deepest backbone width.  ``dilations`` sets
    one temporal branch per entry, applied at every spatial level.
    """

    backbone_widths: tuple[int, ...] = (16, 32, 64)
    width: int = 64
    dilations: tuple[int, ...] = (1, 2, 4)
    temporal_kernel: int = 3
    queries: int = 5
    heads: int = 4
    intra_layers: int = 2
    cross_layers: int = 2
    ffn_hidden: int | None = None
    metric: str = "euclidean"
    ablate: str = "none"

    @property
    def spatial_levels(self) -> int:
        return len(self.backbone_widths)

    @property
    def temporal_levels(self) -> int:
        return len(self.dilations)

    @property
    def num_levels(self) -> int:
        """Total feature-bank sequences: spatial levels x temporal levels."""
        return self.spatial_levels * self.temporal_levels

    @property
    def ffn_width(self) -> int:
        return 2 * self.width if self.ffn_hidden is None else self.ffn_hidden

    def validate(self) -> None:
        if not self.backbone_widths or any(w < 1 for w in self.backbone_widths):
            raise ConfigError(f"bad backbone widths {self.backbone_widths}")
        if self.width != self.backbone_widths[-1]:
            raise ConfigError(
                f"width {self.width} must equal the deepest backbone width "
                f"{self.backbone_widths[-1]}")
        if self.width % 2 != 0:
            raise ConfigError(f"width must be even, got {self.width}")
        if self.width % self.heads != 0:
            raise ConfigError(
                f"width {self.width} not divisible by {self.heads} heads")
        if not self.dilations or any(d < 1 for d in self.dilations):
            raise ConfigError(f"bad dilation schedule {self.dilations}")
        if self.temporal_kernel < 1 or self.temporal_kernel % 2 == 0:
            raise ConfigError(
                f"temporal kernel must be odd and positive, got "
                f"{self.temporal_kernel}")
        if self.queries < 1:
            raise ConfigError(f"need at least one query, got {self.queries}")
        if self.intra_layers < 1 or self.cross_layers < 1:
            raise ConfigError("decoder stacks need at least one layer")
        if self.ffn_width < 1:
            raise ConfigError(f"bad feed-forward width {self.ffn_hidden}")
        if self.metric not in METRICS:
            raise ConfigError(f"unknown metric {self.metric!r}; pick from {METRICS}")
        if self.ablate not in ABLATIONS:
            raise ConfigError(
                f"unknown ablation {self.ablate!r}; pick from {ABLATIONS}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    neg_run: int = 6  # max negative-run chunk length for balanced sampling
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if self.lr < 0.0:
            raise ConfigError(f"learning rate must be >= 0, got {self.lr}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError(
                f"moment decays must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if self.eps <= 0.0:
            raise ConfigError(f"eps must be positive, got {self.eps}")
        if self.neg_run < 1:
            raise ConfigError(f"neg_run must be >= 1, got {self.neg_run}")


@dataclass(frozen=True)
class PostConfig:
    """Score thresholding and local-maximum selection."""

    theta: float = 0.5
    window: int = 5

    def validate(self) -> None:
        if not 0.0 < self.theta < 1.0:
            raise ConfigError(f"theta must lie in (0, 1), got {self.theta}")
        if self.window < 1:
            raise ConfigError(f"window must be >= 1, got {self.window}")


@dataclass(frozen=True)
class EvalConfig:
    """Relative-distance matching thresholds and aggregation choices."""

    thresholds: tuple[float, ...] = tuple((k + 1) / 20 for k in range(10))
    matching: str = "optimal"   # or "greedy"
    aggregation: str = "global"  # or "per-video"

    def validate(self) -> None:
        if not self.thresholds or any(not 0.0 < t <= 1.0 for t in self.thresholds):
            raise ConfigError(f"bad threshold list {self.thresholds}")
        if list(self.thresholds) != sorted(self.thresholds):
            raise ConfigError("thresholds must be sorted ascending")
        if self.matching not in ("optimal", "greedy"):
            raise ConfigError(f"unknown matching {self.matching!r}")
        if self.aggregation not in ("global", "per-video"):
            raise ConfigError(f"unknown aggregation {self.aggregation!r}")


@dataclass(frozen=True)
class GenSpec:
    """Synthetic video corpus description.

    Videos show a coloured background and optionally a moving square; at
    each boundary exactly one regime parameter changes (background colour,
    square presence, or square velocity, per ``regimes``).  ``jitter`` adds
    per-frame brightness noise and square-position wobble.
    """

    train_videos: int = 64
    val_videos: int = 32
    min_frames: int = 90
    max_frames: int = 110
    min_events: int = 2
    max_events: int = 4
    min_event_len: int = 12
    height: int = 24
    width: int = 24
    square_size: int = 7
    speed: float = 1.5
    jitter: float = 0.0
    regimes: tuple[str, ...] = ("color-shift", "appear-disappear")
    seed: int = 0

    def validate(self) -> None:
        if self.train_videos < 0 or self.val_videos < 0:
            raise ConfigError("video counts must be >= 0")
        if not 1 <= self.min_frames <= self.max_frames:
            raise ConfigError(
                f"bad frame-count range [{self.min_frames}, {self.max_frames}]")
        if not 1 <= self.min_events <= self.max_events:
            raise ConfigError(
                f"bad event-count range [{self.min_events}, {self.max_events}]")
        if self.min_event_len < 2:
            raise ConfigError(
                f"min_event_len must be >= 2, got {self.min_event_len}")
        if self.max_events * self.min_event_len > self.min_frames:
            raise ConfigError(
                f"{self.max_events} events of >= {self.min_event_len} frames "
                f"cannot fit into {self.min_frames} frames")
        if self.height < 4 or self.width < 4:
            raise ConfigError(f"frame size too small: {self.height}x{self.width}")
        if not 1 <= self.square_size <= min(self.height, self.width):
            raise ConfigError(f"bad square size {self.square_size}")
        if self.jitter < 0.0:
            raise ConfigError(f"jitter must be >= 0, got {self.jitter}")
        if not self.regimes:
            raise ConfigError("at least one regime kind is required")
        for r in self.regimes:
            if r not in REGIMES:
                raise ConfigError(f"unknown regime {r!r}; pick from {REGIMES}")


@dataclass(frozen=True)
class RunConfig:
    gen: GenSpec = field(default_factory=GenSpec)
    clip: ClipSpec = field(default_factory=ClipSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    post: PostConfig = field(default_factory=PostConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    eval_stride: int = 3  # spacing of scored positions along a video

    def validate(self) -> None:
        self.gen.validate()
        self.clip.validate()
        self.model.validate()
        self.train.validate()
        self.post.validate()
        self.eval.validate()
        if self.eval_stride < 1:
            raise ConfigError(f"eval_stride must be >= 1, got {self.eval_stride}")


_SECTIONS = {
    "gen": GenSpec, "clip": ClipSpec, "model": ModelConfig,
    "train": TrainConfig, "post": PostConfig, "eval": EvalConfig,
}


def _build(cls, payload: dict):
    names = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in payload.items():
        if key not in names:
            raise ConfigError(f"unknown {cls.__name__} field {key!r}")
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


def from_dict(payload: dict) -> RunConfig:
    kwargs = {}
    for key, value in payload.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"section {key!r} must be an object")
            kwargs[key] = _build(_SECTIONS[key], value)
        elif key == "eval_stride":
            kwargs[key] = value
        else:
            raise ConfigError(f"unknown config section {key!r}")
    cfg = RunConfig(**kwargs)
    cfg.validate()
    return cfg


def to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def loads(text: str) -> RunConfig:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}") from err
    if not isinstance(payload, dict):
        raise ConfigError("config root must be a JSON object")
    return from_dict(payload)


def dumps(cfg: RunConfig) -> str:
    return json.dumps(to_dict(cfg), indent=2, sort_keys=True) + "\n"


def load_file(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return loads(fh.read())
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err


# ---------------------------------------------------------------------------
# presets


def desk_preset() -> RunConfig:
    """Small configuration that trains in minutes on one CPU core."""
    return RunConfig(
        clip=ClipSpec(half_window=5, stride=3),
        model=ModelConfig(),
        train=TrainConfig(),
    )


def paper_preset() -> RunConfig:
    """Full-scale hyperparameters (slow without accelerators)."""
    return RunConfig(
        clip=ClipSpec(half_window=5, stride=6),
        model=ModelConfig(
            backbone_widths=(64, 128, 256),
            width=256,
            dilations=(1, 2, 4),
            queries=5,
            heads=8,
            intra_layers=6,
            cross_layers=6,
        ),
        train=TrainConfig(lr=1e-5, batch_size=32),
    )


PRESETS = {"desk": desk_preset, "paper": paper_preset}
