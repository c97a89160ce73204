"""Deterministic geometric phantoms with known regions and MC-dropout-like prediction stacks.

A phantom is an elliptical tissue section on a near-white slide with disk-shaped
tumors. Each MC iteration draws logits ``+L`` (tumor) or ``-L`` (elsewhere) plus
Gaussian noise whose scale depends on the pixel's region; the stack stores the
sigmoid of those logits. Noise comes from counter-addressed SplitMix64 streams
(see :mod:`roi_unc.rng`) indexed by (seed, image index, pixel, iteration).
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import rng, tensor_io
from .mc_agg import PredictionStack, aggregate_prediction
from .metrics import confusion, dice
from .regions import RegionMasks, derive_regions

BASE_LOGIT = 4.0

BACKGROUND_RGB = (244, 242, 246)
TISSUE_RGB = (226, 150, 184)
TUMOR_RGB = (168, 82, 150)


@dataclass(frozen=True)
class PhantomSpec:
    seed: int = 0
    size: tuple[int, int] = (256, 256)
    # (center_row, center_col, semi_axis_rows, semi_axis_cols)
    tissue_ellipse: tuple[float, float, float, float] = (128.0, 128.0, 100.0, 110.0)
    # (center_row, center_col, radius) per tumor
    tumor_blobs: tuple[tuple[float, float, float], ...] = ((110.0, 100.0, 30.0), (160.0, 160.0, 22.0))
    sigma_tumor: float = 0.0
    sigma_non_tumor: float = 0.0
    sigma_non_tissue: float = 0.0
    alpha: int = 50
    boundary_band: int = 2
    image_index: int = 0

    def scaled(self, multiplier, image_index: int | None = None) -> "PhantomSpec":
        """Copy with noise levels multiplied (scalar, or one factor per region)."""
        m = np.broadcast_to(np.asarray(multiplier, dtype=np.float64), (3,))
        return dataclasses.replace(
            self,
            sigma_tumor=self.sigma_tumor * float(m[0]),
            sigma_non_tumor=self.sigma_non_tumor * float(m[1]),
            sigma_non_tissue=self.sigma_non_tissue * float(m[2]),
            image_index=self.image_index if image_index is None else image_index,
        )


@dataclass
class PhantomTruth:
    rgb: np.ndarray
    gt: np.ndarray
    true_regions: RegionMasks
    expected_logit_field: np.ndarray


def _grid(size):
    return np.mgrid[0:size[0], 0:size[1]].astype(np.float64)


def tissue_mask(spec: PhantomSpec) -> np.ndarray:
    rows, cols = _grid(spec.size)
    cy, cx, ay, ax = spec.tissue_ellipse
    return ((rows - cy) / ay) ** 2 + ((cols - cx) / ax) ** 2 <= 1.0


def tumor_mask(spec: PhantomSpec) -> np.ndarray:
    rows, cols = _grid(spec.size)
    out = np.zeros(spec.size, dtype=bool)
    for cy, cx, r in spec.tumor_blobs:
        out |= (rows - cy) ** 2 + (cols - cx) ** 2 <= r * r
    return out


def validate(spec: PhantomSpec) -> None:
    if min(spec.size) < 1 or spec.alpha < 1:
        raise ValueError("phantom size and alpha must be positive")
    if min(spec.sigma_tumor, spec.sigma_non_tumor, spec.sigma_non_tissue) < 0:
        raise ValueError("noise levels must be >= 0")
    if spec.boundary_band < 0:
        raise ValueError("boundary_band must be >= 0")
    tissue = tissue_mask(spec)
    for blob in spec.tumor_blobs:
        single = tumor_mask(dataclasses.replace(spec, tumor_blobs=(blob,)))
        if not single.any() or (single & ~tissue).any():
            raise ValueError(f"tumor blob {blob} lies outside the tissue ellipse")


def sigma_field(spec: PhantomSpec, masks: RegionMasks) -> np.ndarray:
    """Per-pixel noise scale; within ``boundary_band`` of a border the larger side wins."""
    layers = [(masks.tumor, spec.sigma_tumor),
              (masks.non_tumor, spec.sigma_non_tumor),
              (masks.non_tissue, spec.sigma_non_tissue)]
    out = np.zeros(spec.size, dtype=np.float64)
    k = 2 * spec.boundary_band + 1
    for mask, sigma in layers:
        m = mask.astype(bool)
        if spec.boundary_band:
            m = ndimage.maximum_filter(m, size=k, mode="constant", cval=False)
        out = np.where(m, np.maximum(out, sigma), out)
    return out


def render_rgb(masks: RegionMasks) -> np.ndarray:
    rgb = np.empty(masks.tissue.shape + (3,), dtype=np.uint8)
    rgb[:] = BACKGROUND_RGB
    rgb[masks.non_tumor.astype(bool)] = TISSUE_RGB
    rgb[masks.tumor.astype(bool)] = TUMOR_RGB
    return rgb


def generate_phantom(spec: PhantomSpec) -> tuple[PhantomTruth, PredictionStack]:
    validate(spec)
    tissue = tissue_mask(spec)
    gt = tumor_mask(spec) & tissue
    masks = derive_regions(tissue, gt)
    logit = np.where(gt, BASE_LOGIT, -BASE_LOGIT)
    sigma = sigma_field(spec, masks)

    h, w = spec.size
    key = rng.stream_key(spec.seed, spec.image_index)
    # counter = pixel_index * alpha + iteration
    counters = np.arange(h * w * spec.alpha, dtype=np.uint64)
    noise = rng.normal(key, counters).reshape(h, w, spec.alpha)
    noisy = logit[..., None] + sigma[..., None] * noise
    probs = 1.0 / (1.0 + np.exp(-noisy))
    stack = np.ascontiguousarray(np.moveaxis(probs, -1, 0), dtype=np.float32)

    truth = PhantomTruth(render_rgb(masks), gt.astype(np.uint8), masks, logit)
    return truth, PredictionStack(stack)


@dataclass
class CohortRow:
    image_id: str
    sigma_T: float
    sigma_NT: float
    sigma_NTi: float
    true_dice_after_aggregation: float


@dataclass
class Cohort:
    manifest_path: Path
    entries: list[tensor_io.ManifestEntry]
    truth: list[CohortRow] = field(default_factory=list)


TRUTH_COLUMNS = ["image_id", "sigma_T", "sigma_NT", "sigma_NTi", "true_dice_after_aggregation"]


def generate_cohort(base: PhantomSpec, out_dir, dice_noise_sweep, n_images: int | None = None,
                    prefix: str = "img") -> Cohort:
    """One phantom per sweep entry (noise multiplier), written with a manifest and truth CSV."""
    sweep = list(dice_noise_sweep)
    if n_images is not None and n_images != len(sweep):
        raise ValueError(f"n_images={n_images} but sweep has {len(sweep)} entries")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    width = max(3, len(str(len(sweep))))
    entries, truth = [], []
    for i, m in enumerate(sweep):
        spec = base.scaled(m, image_index=base.image_index + i)
        image_id = f"{prefix}{i:0{width}d}"
        pt, stack = generate_phantom(spec)
        stack_path = out / f"{image_id}_stack.runc"
        gt_path = out / f"{image_id}_gt.png"
        rgb_path = out / f"{image_id}_rgb.png"
        tensor_io.write_tensor(stack.probs, stack_path)
        tensor_io.write_mask(pt.gt, gt_path)
        tensor_io.write_rgb(pt.rgb, rgb_path)
        entries.append(tensor_io.ManifestEntry(image_id, stack_path, gt_path, rgb_path,
                                               bool(pt.gt.any())))
        d = dice(confusion(aggregate_prediction(stack), pt.gt))
        truth.append(CohortRow(image_id, spec.sigma_tumor, spec.sigma_non_tumor,
                               spec.sigma_non_tissue, d))
    manifest = out / "manifest.json"
    tensor_io.write_manifest(entries, manifest)
    with open(out / "truth.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRUTH_COLUMNS)
        for row in truth:
            w.writerow([row.image_id] + [repr(float(v)) for v in dataclasses.astuple(row)[1:]])
    return Cohort(manifest, entries, truth)
