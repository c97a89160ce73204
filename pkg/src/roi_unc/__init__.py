"""Region-based uncertainty from Monte-Carlo dropout segmentations, and linear Dice predictors."""

from .mc_agg import PredictionStack, UncertaintyMap, aggregate_prediction, percentile, uncertainty_map
from .metrics import ConfusionCounts, auroc, bootstrap_ci, confusion, dice, tpr_fpr
from .regions import (RegionMasks, RegionUncertainties, binarize_tissue, derive_regions, region_uncertainties,
                      region_uncertainty)
from .stats import ImageRecord, LinearModel, fit_ols, predict_dice, rmse, spearman
from .synth import PhantomSpec, generate_cohort, generate_phantom

__version__ = "0.1.0"

__all__ = [
    "PredictionStack", "UncertaintyMap", "aggregate_prediction", "percentile", "uncertainty_map",
    "ConfusionCounts", "auroc", "bootstrap_ci", "confusion", "dice", "tpr_fpr",
    "RegionMasks", "RegionUncertainties", "binarize_tissue", "derive_regions", "region_uncertainty",
    "ImageRecord", "LinearModel", "fit_ols", "predict_dice", "rmse", "spearman",
    "PhantomSpec", "generate_cohort", "generate_phantom",
]
