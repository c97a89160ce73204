"""Per-image evaluation: MC aggregation, region uncertainties and metrics for one manifest entry."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor_io
from .mc_agg import DEFAULT_THRESHOLD, PredictionStack, UncertaintyMap, aggregate_prediction, mc_mean, uncertainty_map
from .metrics import ImageMetrics, image_metrics
from .regions import (DEFAULT_WHITE_THRESHOLD, RegionMasks, RegionUncertainties, binarize_tissue,
                      derive_regions, region_uncertainties)
from .stats import ImageRecord


@dataclass(frozen=True)
class Settings:
    threshold: float = DEFAULT_THRESHOLD
    p_hi: float = 67.0
    p_lo: float = 33.0
    denom: str = "region"
    white_threshold: int = DEFAULT_WHITE_THRESHOLD
    binarize_iters: bool = True


@dataclass
class ImageResult:
    image_id: str
    pred: np.ndarray
    scores: np.ndarray
    umap: UncertaintyMap
    masks: RegionMasks
    region_unc: RegionUncertainties
    metrics: ImageMetrics

    def record(self) -> ImageRecord:
        ru = self.region_unc
        return ImageRecord(
            image_id=self.image_id, dice=self.metrics.dice,
            x0=ru.overall, x1=ru.tumor, x2=ru.non_tumor, x3=ru.non_tissue,
            empty={"x1": ru.pixel_counts["tumor"] == 0,
                   "x2": ru.pixel_counts["non_tumor"] == 0,
                   "x3": ru.pixel_counts["non_tissue"] == 0},
            denom=ru.denom,
        )


def load_masks(entry: tensor_io.ManifestEntry, shape, white_threshold: int) -> RegionMasks:
    gt = tensor_io.read_mask(entry.gt_path)
    if gt.shape != tuple(shape):
        raise ValueError(f"{entry.image_id}: ground truth shape {gt.shape} != stack shape {tuple(shape)}")
    if entry.rgb_path is None:
        tissue = np.ones_like(gt)
    else:
        rgb = tensor_io.read_rgb(entry.rgb_path)
        if rgb.shape[:2] != gt.shape:
            raise ValueError(f"{entry.image_id}: RGB shape {rgb.shape[:2]} != mask shape {gt.shape}")
        tissue = binarize_tissue(rgb, white_threshold)
    return derive_regions(tissue, gt)


def evaluate(image_id: str, stack: PredictionStack, masks: RegionMasks,
             settings: Settings = Settings()) -> ImageResult:
    if tuple(stack.shape) != masks.tumor.shape:
        raise ValueError(f"{image_id}: stack shape {stack.shape} != mask shape {masks.tumor.shape}")
    pred = aggregate_prediction(stack, settings.binarize_iters, settings.threshold)
    scores = mc_mean(stack, binarize_iters=False)
    umap = uncertainty_map(stack, settings.p_hi, settings.p_lo)
    ru = region_uncertainties(umap, masks, settings.denom)
    m = image_metrics(image_id, pred, masks.tumor, scores)
    return ImageResult(image_id, pred, scores, umap, masks, ru, m)


def evaluate_entry(entry: tensor_io.ManifestEntry, settings: Settings = Settings()) -> ImageResult:
    stack = PredictionStack(tensor_io.read_tensor(entry.stack_path))
    masks = load_masks(entry, stack.shape, settings.white_threshold)
    return evaluate(entry.image_id, stack, masks, settings)
