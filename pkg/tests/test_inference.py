"""Score curves, peak selection, and dataset prediction."""

import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddm.config import (ClipSpec, GenSpec, ModelConfig, PostConfig, RunConfig,
                        TrainConfig)
from ddm.errors import ContractError, NumericError
from ddm.inference import (Prediction, predict_dataset, predict_video,
                           score_video, select_peaks)
from ddm.model import BoundaryModel
from ddm.synth import generate_video
from ddm.training import evaluated_positions
from oracles import select_peaks_ref

# ---------------------------------------------------------------------------
# peak selection


def P(theta=0.5, window=1):
    return PostConfig(theta=theta, window=window)


def test_select_peaks_simple_maximum():
    scores = np.array([0.1, 0.9, 0.1])
    assert select_peaks(scores, P()).tolist() == [1]


def test_select_peaks_threshold_gate():
    scores = np.array([0.1, 0.4, 0.1])
    assert select_peaks(scores, P(theta=0.5)).tolist() == []
    assert select_peaks(scores, P(theta=0.3)).tolist() == [1]


def test_select_peaks_plateau_keeps_left_edge():
    scores = np.array([0.9, 0.9, 0.2])
    assert select_peaks(scores, P()).tolist() == [0]
    scores = np.array([0.2, 0.9, 0.9, 0.9, 0.2])
    assert select_peaks(scores, P(window=3)).tolist() == [1]


def test_select_peaks_window_reach():
    # the higher score two steps away suppresses index 1 only when the
    # window is wide enough to see it
    scores = np.array([0.0, 0.6, 0.0, 0.8, 0.0])
    assert select_peaks(scores, P(window=1)).tolist() == [1, 3]
    assert select_peaks(scores, P(window=2)).tolist() == [3]


def test_select_peaks_edges_and_degenerate_sizes():
    assert select_peaks(np.array([0.7]), P()).tolist() == [0]
    assert select_peaks(np.zeros(0), P()).tolist() == []
    # window far larger than the sequence is fine
    assert select_peaks(np.array([0.3, 0.8, 0.4]), P(window=10)).tolist() == [1]


def test_select_peaks_validation():
    with pytest.raises(ContractError):
        select_peaks(np.zeros((2, 2)), P())
    with pytest.raises(NumericError):
        select_peaks(np.array([0.5, np.nan]), P())


@given(st.lists(st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0]),
                min_size=0, max_size=40),
       st.sampled_from([0.2, 0.5, 0.8]), st.integers(1, 6))
@settings(max_examples=300, deadline=None)
def test_select_peaks_matches_exhaustive_rule(values, theta, window):
    scores = np.array(values)
    got = select_peaks(scores, P(theta=theta, window=window)).tolist()
    assert got == select_peaks_ref(scores, theta, window)


def test_select_peaks_is_fast_on_long_curves():
    scores = np.random.default_rng(0).random(10_000)
    cfg = P(theta=0.5, window=5)
    select_peaks(scores, cfg)  # warm-up
    start = time.perf_counter()
    select_peaks(scores, cfg)
    assert time.perf_counter() - start < 0.01


# ---------------------------------------------------------------------------
# model scoring

TINY = RunConfig(
    gen=GenSpec(train_videos=1, val_videos=1, min_frames=18, max_frames=20,
                min_events=2, max_events=2, min_event_len=5, height=12,
                width=12, square_size=5, regimes=("color-shift",), seed=0),
    clip=ClipSpec(half_window=2, stride=2),
    model=ModelConfig(backbone_widths=(4, 6), width=6, dilations=(1, 2),
                      queries=2, heads=2, intra_layers=1, cross_layers=1,
                      ffn_hidden=8),
    train=TrainConfig(epochs=1, batch_size=8),
    post=PostConfig(theta=0.4, window=2),
    eval_stride=3,
)


@pytest.fixture(scope="module")
def tiny_model():
    return BoundaryModel(TINY.model, seed=0)


@pytest.fixture(scope="module")
def tiny_video():
    return generate_video(TINY.gen, "val-0000", "val")


def test_score_video_shapes_and_range(tiny_model, tiny_video):
    positions, scores = score_video(tiny_model, tiny_video, TINY)
    expected = evaluated_positions(tiny_video.num_frames, TINY.eval_stride)
    assert np.array_equal(positions, expected)
    assert scores.shape == positions.shape
    assert np.all((scores > 0.0) & (scores < 1.0))


def test_score_video_batch_size_invariant(tiny_model, tiny_video):
    _, small = score_video(tiny_model, tiny_video, TINY, batch_size=3)
    _, large = score_video(tiny_model, tiny_video, TINY, batch_size=64)
    assert np.allclose(small, large, rtol=1e-10, atol=0)


def test_score_video_rejects_bad_batch_size(tiny_model, tiny_video):
    with pytest.raises(ContractError):
        score_video(tiny_model, tiny_video, TINY, batch_size=0)


def test_predict_video_consistent_with_parts(tiny_model, tiny_video):
    pred = predict_video(tiny_model, tiny_video, TINY)
    positions, scores = score_video(tiny_model, tiny_video, TINY)
    kept = select_peaks(scores, TINY.post)
    assert pred.video_id == tiny_video.video_id
    assert pred.positions == tuple(int(positions[i]) for i in kept)
    assert pred.scores == tuple(float(scores[i]) for i in kept)


def test_predict_dataset_worker_invariance(tiny_model):
    videos = [generate_video(TINY.gen, f"val-{i:04d}", "val")
              for i in range(3)]
    serial = predict_dataset(tiny_model, videos, TINY, workers=1)
    threaded = predict_dataset(tiny_model, videos, TINY, workers=3)
    assert [p.video_id for p in serial] == [v.video_id for v in videos]
    assert serial == threaded  # dataclass equality covers scores bitwise


def test_predict_dataset_rejects_bad_workers(tiny_model):
    with pytest.raises(ContractError):
        predict_dataset(tiny_model, [], TINY, workers=0)


def test_prediction_is_plain_data():
    p = Prediction("vid", (3, 9), (0.9, 0.8))
    assert p.positions == (3, 9) and p.scores == (0.9, 0.8)
