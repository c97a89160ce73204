"""Pixel-level segmentation metrics and bootstrap confidence intervals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

DEFAULT_N_BOOT = 5000
DEFAULT_SEED = 20190


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion(pred: np.ndarray, gt: np.ndarray) -> ConfusionCounts:
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: prediction {pred.shape} vs ground truth {gt.shape}")
    return ConfusionCounts(*_kernels.confusion(pred, gt))


def dice(c: ConfusionCounts) -> float:
    """2TP / (2TP + FP + FN); two empty masks count as a perfect match."""
    denom = 2 * c.tp + c.fp + c.fn
    return 1.0 if denom == 0 else 2 * c.tp / denom


def tpr_fpr(c: ConfusionCounts) -> tuple[float, float]:
    tpr = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    fpr = c.fp / (c.fp + c.tn) if c.fp + c.tn else 0.0
    return tpr, fpr


def auroc(scores, gt) -> float:
    """Mann-Whitney AUROC: P(score of a positive > score of a negative), ties count 1/2."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(gt).astype(bool).ravel()
    if scores.shape != labels.shape:
        raise ValueError(f"shape mismatch: {scores.shape} scores vs {labels.shape} labels")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC undefined: ground truth contains a single class")
    u = _kernels.rank_sum(scores, labels) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def make_rng(seed: int) -> np.random.Generator:
    """The bootstrap generator: numpy's PCG64 seeded with a 64-bit integer."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def bootstrap_ci(values, n_boot: int = DEFAULT_N_BOOT, level: float = 0.95,
                 statistic=np.median, seed: int = DEFAULT_SEED) -> tuple[float, float]:
    """Empirical percentile bootstrap interval for ``statistic`` over ``values``.

    Endpoints are order statistics of the resampled statistics: the lower one
    rounds its rank down and the upper one rounds up.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("empty list")
    if n_boot < 1:
        raise ValueError(f"n_boot must be >= 1, got {n_boot}")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    rng = make_rng(seed)
    idx = rng.integers(0, x.size, size=(n_boot, x.size))
    stats = np.sort(statistic(x[idx], axis=1))
    tail = (1.0 - level) / 2.0
    lo = stats[math.floor(tail * (n_boot - 1))]
    hi = stats[math.ceil((1.0 - tail) * (n_boot - 1))]
    return float(lo), float(hi)


@dataclass
class ImageMetrics:
    image_id: str
    counts: ConfusionCounts
    dice: float
    tpr: float
    fpr: float
    auroc: float | None

    def to_dict(self) -> dict:
        c = self.counts
        return {"image_id": self.image_id, "tp": c.tp, "fp": c.fp, "fn": c.fn, "tn": c.tn,
                "dice": self.dice, "tpr": self.tpr, "fpr": self.fpr, "auroc": self.auroc}


def image_metrics(image_id: str, pred, gt, scores=None) -> ImageMetrics:
    c = confusion(pred, gt)
    tpr, fpr = tpr_fpr(c)
    auc = None
    if scores is not None and 0 < int(np.count_nonzero(gt)) < np.asarray(gt).size:
        auc = auroc(scores, gt)
    return ImageMetrics(image_id, c, dice(c), tpr, fpr, auc)


METRIC_NAMES = ("dice", "auroc", "tpr", "fpr")


@dataclass
class MetricReport:
    """Cohort medians with optional bootstrap intervals, plus the per-image rows."""

    per_image: list[ImageMetrics]
    median: dict[str, float | None] = field(default_factory=dict)
    ci: dict[str, tuple[float, float] | None] = field(default_factory=dict)
    seed: int | None = None
    n_boot: int | None = None
    auroc_mode: str = "per_image"

    def to_dict(self) -> dict:
        out = {"seed": self.seed, "n_boot": self.n_boot, "auroc_mode": self.auroc_mode}
        for name in METRIC_NAMES:
            ci = self.ci.get(name)
            out[name] = {
                "median": self.median.get(name),
                "ci_lo": ci[0] if ci else None,
                "ci_hi": ci[1] if ci else None,
            }
        out["per_image"] = [m.to_dict() for m in self.per_image]
        return out


def cohort_report(per_image: list[ImageMetrics], n_boot: int | None = DEFAULT_N_BOOT,
                  seed: int = DEFAULT_SEED, level: float = 0.95,
                  pooled_auroc: float | None = None) -> MetricReport:
    """Median of each metric over images; AUROC skips images where it is undefined.

    ``pooled_auroc`` replaces the per-image AUROC median (no interval is given for it).
    """
    report = MetricReport(per_image, seed=seed, n_boot=n_boot,
                          auroc_mode="per_image" if pooled_auroc is None else "pooled")
    for name in METRIC_NAMES:
        vals = [getattr(m, name) for m in per_image if getattr(m, name) is not None]
        if name == "auroc" and pooled_auroc is not None:
            report.median[name] = pooled_auroc
            report.ci[name] = None
            continue
        report.median[name] = float(np.median(vals)) if vals else None
        report.ci[name] = (bootstrap_ci(vals, n_boot, level, seed=seed)
                           if vals and n_boot else None)
    return report
