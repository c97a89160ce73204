"""Clinical region masks (tumor, non-tumor tissue, non-tissue) and region-mean uncertainty."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_WHITE_THRESHOLD = 220
DENOMS = ("region", "all")
_DENOM_ALIASES = {"region": "region", "region_pixels": "region", "all": "all", "all_pixels": "all"}


def normalize_denom(denom: str) -> str:
    try:
        return _DENOM_ALIASES[denom]
    except KeyError:
        raise ValueError(f"denom must be one of {DENOMS}, got {denom!r}") from None


@dataclass
class RegionMasks:
    tissue: np.ndarray
    tumor: np.ndarray
    non_tumor: np.ndarray
    non_tissue: np.ndarray

    def counts(self) -> dict[str, int]:
        return {
            "tumor": int(self.tumor.sum()),
            "non_tumor": int(self.non_tumor.sum()),
            "non_tissue": int(self.non_tissue.sum()),
        }


@dataclass
class RegionUncertainties:
    overall: float
    tumor: float
    non_tumor: float
    non_tissue: float
    pixel_counts: dict[str, int] = field(default_factory=dict)
    denom: str = "region"

    @property
    def empty(self) -> dict[str, bool]:
        return {k: v == 0 for k, v in self.pixel_counts.items()}


def binarize_tissue(rgb: np.ndarray, white_threshold: int = DEFAULT_WHITE_THRESHOLD) -> np.ndarray:
    """Tissue mask: a pixel is background iff all channels are >= ``white_threshold``."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) RGB image, got shape {rgb.shape}")
    return (rgb.min(axis=2) < white_threshold).astype(np.uint8)


def derive_regions(tissue: np.ndarray, gt_tumor: np.ndarray) -> RegionMasks:
    tissue = np.asarray(tissue).astype(bool)
    gt = np.asarray(gt_tumor).astype(bool)
    if tissue.shape != gt.shape:
        raise ValueError(f"shape mismatch: tissue {tissue.shape} vs ground truth {gt.shape}")
    # ground truth wins over the derived tissue mask
    tissue = tissue | gt
    tumor = gt
    non_tumor = tissue & ~tumor
    as_u8 = lambda m: m.astype(np.uint8)  # noqa: E731
    return RegionMasks(as_u8(tissue), as_u8(tumor), as_u8(non_tumor), as_u8(~tissue))


def region_uncertainty(umap, region: np.ndarray, denom: str = "region") -> float:
    """Mean of the region-masked (Hadamard) uncertainty map.

    ``denom="region"`` divides by the region's pixel count (0 for an empty
    region); ``denom="all"`` divides by the full image size.
    """
    values = np.asarray(getattr(umap, "values", umap), dtype=np.float64)
    region = np.asarray(region)
    if values.shape != region.shape:
        raise ValueError(f"shape mismatch: map {values.shape} vs region {region.shape}")
    denom = normalize_denom(denom)
    total = float((values * region.astype(np.float64)).sum())
    if denom == "all":
        return total / values.size
    n = int(np.count_nonzero(region))
    return total / n if n else 0.0


def region_uncertainties(umap, masks: RegionMasks, denom: str = "region") -> RegionUncertainties:
    values = np.asarray(getattr(umap, "values", umap), dtype=np.float64)
    denom = normalize_denom(denom)
    return RegionUncertainties(
        overall=float(values.mean()),
        tumor=region_uncertainty(values, masks.tumor, denom),
        non_tumor=region_uncertainty(values, masks.non_tumor, denom),
        non_tissue=region_uncertainty(values, masks.non_tissue, denom),
        pixel_counts=masks.counts(),
        denom=denom,
    )
