import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roi_unc.mc_agg import PredictionStack, aggregate_prediction, mc_mean, percentile, uncertainty_map


def _votes(k, t=50):
    """Single-pixel stack where ``k`` of ``t`` iterations vote foreground."""
    probs = np.full((t, 1, 1), 0.1, np.float32)
    probs[:k] = 0.9
    return PredictionStack(probs)


def test_48_of_50_votes_is_tumor(backend):
    assert aggregate_prediction(_votes(48))[0, 0] == 1


def test_47_of_50_votes_is_background(backend):
    assert aggregate_prediction(_votes(47))[0, 0] == 0


def test_mean_equal_to_threshold_is_background(backend):
    # 19/20 == 0.95 exactly in binary floating point
    assert mc_mean(_votes(19, 20))[0, 0] == 0.95
    assert aggregate_prediction(_votes(19, 20), threshold=0.95)[0, 0] == 0
    assert aggregate_prediction(_votes(25, 50), threshold=0.5)[0, 0] == 0


def test_all_zero_stack(backend):
    out = aggregate_prediction(np.zeros((50, 4, 6), np.float32))
    assert out.shape == (4, 6) and out.dtype == np.uint8 and not out.any()


def test_raw_probability_path(backend):
    probs = np.full((4, 1, 1), 0.97, np.float32)
    probs[0] = 0.90
    mean = float(np.mean(probs.astype(np.float64)))
    assert mc_mean(probs, binarize_iters=False)[0, 0] == pytest.approx(mean, abs=1e-15)
    assert aggregate_prediction(probs, binarize_iters=False)[0, 0] == int(mean > 0.95)
    assert aggregate_prediction(probs, binarize_iters=True)[0, 0] == 1


def test_stack_validation():
    with pytest.raises(ValueError, match="empty stack"):
        PredictionStack(np.zeros((0, 2, 2)))
    with pytest.raises(ValueError):
        PredictionStack(np.full((2, 2, 2), 1.5))
    with pytest.raises(ValueError):
        PredictionStack(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        aggregate_prediction(np.zeros((2, 2, 2)), threshold=1.0)
    with pytest.raises(ValueError):
        uncertainty_map(np.zeros((2, 2, 2)), p_hi=30, p_lo=60)


def test_alpha_property():
    assert PredictionStack(np.zeros((50, 3, 4))).alpha == 50


def test_constant_stack_zero_uncertainty(backend):
    probs = np.broadcast_to(np.random.default_rng(1).random((1, 5, 7)), (50, 5, 7))
    umap = uncertainty_map(np.ascontiguousarray(probs, np.float32))
    assert not umap.values.any()
    assert umap.mean_uncertainty == 0.0


def test_five_point_spread_percentile_oracle():
    u = [0.0, 0.25, 0.5, 0.75, 1.0]
    assert percentile(u, 67) - percentile(u, 33) == pytest.approx(0.34, abs=1e-12)


def test_five_point_spread_through_map(backend):
    # winning-class probabilities 0.5 .. 1.0 in steps of 0.125: spread 0.17
    p = np.array([0.5, 0.625, 0.75, 0.875, 1.0], np.float32)[::-1].reshape(5, 1, 1)
    assert uncertainty_map(p).values[0, 0] == pytest.approx(0.17, abs=1e-12)
    # the loser side folds onto the winner side
    assert uncertainty_map(1.0 - p).values[0, 0] == pytest.approx(0.17, abs=1e-12)


def test_map_matches_numpy_percentile(backend, rng):
    probs = rng.random((50, 20, 25)).astype(np.float32)
    u = np.maximum(probs.astype(np.float64), 1.0 - probs.astype(np.float64))
    ref = np.percentile(u, 67, axis=0, method="linear") - np.percentile(u, 33, axis=0, method="linear")
    umap = uncertainty_map(probs)
    assert np.max(np.abs(umap.values - ref)) < 1e-12
    assert umap.mean_uncertainty == pytest.approx(umap.values.mean(), abs=0)


def test_map_permutation_invariant_and_bounded(backend, rng):
    probs = rng.random((31, 8, 9)).astype(np.float32)
    base = uncertainty_map(probs).values
    shuffled = probs[rng.permutation(31)]
    assert np.array_equal(uncertainty_map(shuffled).values, base)
    assert base.min() >= 0.0 and base.max() <= 1.0


def test_constant_mean_replacement_gives_zero(backend, rng):
    probs = rng.random((20, 6, 6)).astype(np.float32)
    flat = np.broadcast_to(probs.mean(axis=0), probs.shape).astype(np.float32)
    assert not uncertainty_map(flat).values.any()


@pytest.mark.parametrize("samples,p,expected", [
    ([5], 0, 5), ([5], 37, 5), ([5], 100, 5),
    ([1, 2, 3, 4], 50, 2.5),
    ([1, 2, 3, 4], 100, 4),
    ([4, 1, 3, 2], 0, 1),
])
def test_percentile_examples(samples, p, expected):
    assert percentile(samples, p) == expected


def test_percentile_errors():
    with pytest.raises(ValueError, match="empty"):
        percentile([], 50)
    with pytest.raises(ValueError):
        percentile([1.0], 101)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40),
       st.floats(0, 100), st.floats(0, 100))
def test_percentile_monotone_and_bounded(samples, p1, p2):
    lo, hi = sorted((p1, p2))
    a, b = percentile(samples, lo), percentile(samples, hi)
    assert a <= b
    assert min(samples) <= a and b <= max(samples)
