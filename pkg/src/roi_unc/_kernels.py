"""Per-pixel inner loops, in a numba flavour and a pure-numpy flavour.

The backend is picked from the ``ROI_UNC_BACKEND`` environment variable
(``numba`` or ``numpy``); when numba cannot be imported the numpy path is
used regardless. Both flavours perform the same floating-point operations in
the same order, so their outputs are bit-identical.
"""

from __future__ import annotations

import logging
import os

import numpy as np

log = logging.getLogger(__name__)

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

BACKENDS = ("numba", "numpy")
_backend = os.environ.get("ROI_UNC_BACKEND", "numba").strip().lower() or "numba"
if _backend not in BACKENDS:
    raise ValueError(f"ROI_UNC_BACKEND must be one of {BACKENDS}, got {_backend!r}")
if _backend == "numba" and not HAS_NUMBA:  # pragma: no cover
    log.warning("numba unavailable, falling back to numpy kernels")
    _backend = "numpy"


def get_backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


# --------------------------------------------------------------------------
# numpy flavour
# --------------------------------------------------------------------------


def _mc_mean_np(stack, binarize):
    acc = np.zeros(stack.shape[1:], dtype=np.float64)
    for j in range(stack.shape[0]):
        if binarize:
            acc += stack[j] > 0.5
        else:
            acc += stack[j]
    return acc / stack.shape[0]


def _percentile_spread_np(stack, hi_lo, hi_hi, hi_frac, lo_lo, lo_hi, lo_frac):
    p = stack.astype(np.float64)
    u = np.maximum(p, 1.0 - p)
    s = np.sort(u, axis=0)
    top = s[hi_lo] + (s[hi_hi] - s[hi_lo]) * hi_frac
    bottom = s[lo_lo] + (s[lo_hi] - s[lo_lo]) * lo_frac
    return np.clip(top - bottom, 0.0, 1.0)


def _rank_sum_np(scores, labels):
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    n = s.size
    # tie groups [starts[g], ends[g])
    starts = np.flatnonzero(np.r_[True, s[1:] != s[:-1]])
    ends = np.r_[starts[1:], n]
    avg = (starts + ends + 1) / 2.0
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = np.repeat(avg, ends - starts)
    return float(ranks[labels].sum())


def _confusion_np(pred, gt):
    tp = int(np.count_nonzero(pred & gt))
    fp = int(np.count_nonzero(pred & ~gt))
    fn = int(np.count_nonzero(~pred & gt))
    tn = int(pred.size - tp - fp - fn)
    return tp, fp, fn, tn


# --------------------------------------------------------------------------
# numba flavour
# --------------------------------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True, nogil=True)
    def _mc_mean_nb(stack, binarize):
        t, h, w = stack.shape
        acc = np.zeros((h, w), dtype=np.float64)
        for j in range(t):
            for i in range(h):
                for k in range(w):
                    v = stack[j, i, k]
                    if binarize:
                        if v > 0.5:
                            acc[i, k] += 1.0
                    else:
                        acc[i, k] += np.float64(v)
        for i in range(h):
            for k in range(w):
                acc[i, k] = acc[i, k] / t
        return acc

    @njit(cache=True, nogil=True)
    def _percentile_spread_nb(stack, hi_lo, hi_hi, hi_frac, lo_lo, lo_hi, lo_frac):
        t, h, w = stack.shape
        out = np.empty((h, w), dtype=np.float64)
        # one image row at a time, transposed so each pixel's samples are contiguous
        tile = np.empty((w, t), dtype=np.float64)
        for i in range(h):
            for j in range(t):
                for k in range(w):
                    p = np.float64(stack[j, i, k])
                    q = 1.0 - p
                    tile[k, j] = p if p >= q else q
            for k in range(w):
                buf = tile[k]
                # insertion sort: T is small (tens of iterations)
                for j in range(1, t):
                    v = buf[j]
                    m = j
                    while m > 0 and buf[m - 1] > v:
                        buf[m] = buf[m - 1]
                        m -= 1
                    buf[m] = v
                top = buf[hi_lo] + (buf[hi_hi] - buf[hi_lo]) * hi_frac
                bottom = buf[lo_lo] + (buf[lo_hi] - buf[lo_lo]) * lo_frac
                v = top - bottom
                if v < 0.0:
                    v = 0.0
                elif v > 1.0:
                    v = 1.0
                out[i, k] = v
        return out

    @njit(cache=True, nogil=True)
    def _rank_sum_nb(scores, labels):
        order = np.argsort(scores, kind="mergesort")
        n = scores.size
        total = 0.0
        i = 0
        while i < n:
            j = i + 1
            while j < n and scores[order[j]] == scores[order[i]]:
                j += 1
            avg = (i + j + 1) / 2.0
            for m in range(i, j):
                if labels[order[m]]:
                    total += avg
            i = j
        return total

    @njit(cache=True, nogil=True)
    def _confusion_nb(pred, gt):
        tp = 0
        fp = 0
        fn = 0
        tn = 0
        for i in range(pred.size):
            a = pred[i]
            b = gt[i]
            if a and b:
                tp += 1
            elif a:
                fp += 1
            elif b:
                fn += 1
            else:
                tn += 1
        return tp, fp, fn, tn


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------


def interp_indices(n: int, p: float) -> tuple[int, int, float]:
    """Lower index, upper index and weight of the linear-interpolation percentile."""
    r = p / 100.0 * (n - 1)
    lo = int(np.floor(r))
    hi = min(lo + 1, n - 1)
    return lo, hi, r - lo


def mc_mean(stack: np.ndarray, binarize: bool) -> np.ndarray:
    """Mean over axis 0 of ``stack`` (or of ``stack > 0.5``), accumulated in order."""
    stack = np.ascontiguousarray(stack, dtype=np.float32)
    if _backend == "numba":
        return _mc_mean_nb(stack, bool(binarize))
    return _mc_mean_np(stack, bool(binarize))


def percentile_spread(stack: np.ndarray, p_hi: float, p_lo: float) -> np.ndarray:
    """Per-pixel ``P[p_hi] - P[p_lo]`` of ``max(p, 1 - p)`` over axis 0."""
    stack = np.ascontiguousarray(stack, dtype=np.float32)
    n = stack.shape[0]
    args = (*interp_indices(n, p_hi), *interp_indices(n, p_lo))
    if _backend == "numba":
        return _percentile_spread_nb(stack, *args)
    return _percentile_spread_np(stack, *args)


def rank_sum(scores: np.ndarray, labels: np.ndarray) -> float:
    """Sum of tie-averaged 1-based ranks of the entries flagged in ``labels``."""
    scores = np.ascontiguousarray(scores, dtype=np.float64).ravel()
    labels = np.ascontiguousarray(labels, dtype=np.bool_).ravel()
    if _backend == "numba":
        return float(_rank_sum_nb(scores, labels))
    return _rank_sum_np(scores, labels)


def confusion(pred: np.ndarray, gt: np.ndarray) -> tuple[int, int, int, int]:
    pred = np.ascontiguousarray(pred, dtype=np.bool_).ravel()
    gt = np.ascontiguousarray(gt, dtype=np.bool_).ravel()
    if _backend == "numba":
        return tuple(int(v) for v in _confusion_nb(pred, gt))
    return _confusion_np(pred, gt)
