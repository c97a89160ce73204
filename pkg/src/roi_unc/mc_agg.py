"""Collapse a stack of Monte-Carlo dropout outputs into a segmentation and an uncertainty map."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels

DEFAULT_ALPHA = 50
DEFAULT_THRESHOLD = 0.95


@dataclass
class PredictionStack:
    """Foreground (sigmoid) probabilities, shape (T, H, W), one slice per MC iteration."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float32)
        if probs.ndim != 3:
            raise ValueError(f"prediction stack must be (T, H, W), got shape {probs.shape}")
        if probs.shape[0] == 0:
            raise ValueError("empty stack (T = 0)")
        if not np.all((probs >= 0.0) & (probs <= 1.0)):
            raise ValueError("stack probabilities must lie in [0, 1]")
        self.probs = probs

    @property
    def alpha(self) -> int:
        return self.probs.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape[1:]


@dataclass
class UncertaintyMap:
    values: np.ndarray
    mean_uncertainty: float

    @classmethod
    def from_values(cls, values) -> "UncertaintyMap":
        values = np.asarray(values, dtype=np.float64)
        return cls(values, float(values.mean()))


def _as_stack(stack) -> PredictionStack:
    return stack if isinstance(stack, PredictionStack) else PredictionStack(stack)


def mc_mean(stack, binarize_iters: bool = True) -> np.ndarray:
    """Per-pixel mean over iterations of the class decision (or raw probability)."""
    return _kernels.mc_mean(_as_stack(stack).probs, binarize_iters)


def aggregate_prediction(stack, binarize_iters: bool = True,
                         threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """Final segmentation: 1 where the iteration mean exceeds ``threshold``, else 0.

    A mean exactly equal to the threshold maps to 0.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    return (mc_mean(stack, binarize_iters) > threshold).astype(np.uint8)


def uncertainty_map(stack, p_hi: float = 67.0, p_lo: float = 33.0) -> UncertaintyMap:
    """Spread between two percentiles of the winning-class probability across iterations."""
    if not 0.0 <= p_lo < p_hi <= 100.0:
        raise ValueError(f"need 0 <= p_lo < p_hi <= 100, got p_lo={p_lo}, p_hi={p_hi}")
    values = _kernels.percentile_spread(_as_stack(stack).probs, p_hi, p_lo)
    return UncertaintyMap.from_values(values)


def percentile(samples, p: float) -> float:
    """Linear-interpolation percentile over ``n - 1`` intervals."""
    s = sorted(float(v) for v in samples)
    if not s:
        raise ValueError("empty sample list")
    if not 0.0 <= p <= 100.0:
        raise ValueError(f"percentile must lie in [0, 100], got {p}")
    r = p / 100.0 * (len(s) - 1)
    lo = math.floor(r)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (s[hi] - s[lo]) * (r - lo)
