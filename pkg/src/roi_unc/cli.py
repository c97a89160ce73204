"""``roi-unc`` command line: synth | aggregate | regions | metrics | fit | predict | render."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import stats, tensor_io
from .mc_agg import UncertaintyMap
from .metrics import DEFAULT_N_BOOT, DEFAULT_SEED, auroc, cohort_report
from .pipeline import Settings, evaluate_entry, load_masks
from .regions import DEFAULT_WHITE_THRESHOLD
from .synth import PhantomSpec, generate_cohort

log = logging.getLogger("roi_unc")

VMAX_FLOOR = 1e-6
HEATMAP_LAYERS = ("overall", "tumor", "non_tumor", "non_tissue")


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def _settings(args) -> Settings:
    return Settings(threshold=args.threshold, p_hi=args.p_hi, p_lo=args.p_lo, denom=args.denom,
                    white_threshold=args.white_threshold, binarize_iters=not args.raw_iters)


def _settings_dict(s: Settings) -> dict:
    return {"threshold": s.threshold, "p_hi": s.p_hi, "p_lo": s.p_lo, "denom": s.denom,
            "white_threshold": s.white_threshold, "binarize_iters": s.binarize_iters}


def _run_images(args, fn):
    """Apply ``fn(entry)`` over the manifest; results come back in manifest order."""
    entries = tensor_io.load_manifest(args.manifest, check_files=False)

    def safe(entry):
        try:
            return entry, fn(entry), None
        except Exception as exc:  # isolate per-image failures
            log.error("%s: %s", entry.image_id, exc)
            return entry, None, f"{type(exc).__name__}: {exc}"

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        results = list(pool.map(safe, entries))
    ok = [(e, r) for e, r, err in results if err is None]
    errors = [{"image_id": e.image_id, "error": err} for e, _, err in results if err is not None]
    return ok, errors


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_synth(args) -> int:
    out = _out_dir(args)
    blobs = () if args.tumor_free else PhantomSpec().tumor_blobs
    h = w = args.size
    scale = args.size / 256.0
    base = PhantomSpec(
        seed=args.seed,
        size=(h, w),
        tissue_ellipse=tuple(v * scale for v in PhantomSpec().tissue_ellipse),
        tumor_blobs=tuple(tuple(v * scale for v in b) for b in blobs),
        sigma_tumor=args.sigma_tumor,
        sigma_non_tumor=args.sigma_non_tumor,
        sigma_non_tissue=args.sigma_non_tissue,
        alpha=args.alpha,
        boundary_band=args.boundary_band,
    )
    if args.sweep:
        sweep = [float(v) for v in args.sweep.split(",")]
    else:
        sweep = list(np.linspace(0.0, args.max_multiplier, args.n_images))
    cohort = generate_cohort(base, out, sweep, prefix=args.prefix)
    log.info("wrote %d phantoms to %s", len(cohort.entries), out)
    return 0


def cmd_aggregate(args) -> int:
    out = _out_dir(args)
    settings = _settings(args)

    def work(entry):
        res = evaluate_entry(entry, settings)
        tensor_io.write_mask(res.pred, out / f"{entry.image_id}_pred.png")
        tensor_io.write_tensor(res.umap.values, out / f"{entry.image_id}_unc.runc")
        return {"image_id": entry.image_id, "mean_uncertainty": res.umap.mean_uncertainty,
                "predicted_pixels": int(res.pred.sum())}

    ok, errors = _run_images(args, work)
    _dump_json({"settings": _settings_dict(settings), "images": [r for _, r in ok],
                "errors": errors}, out / "aggregate_summary.json")
    return 1 if errors else 0


def cmd_regions(args) -> int:
    out = _out_dir(args)
    settings = _settings(args)

    def work(entry):
        res = evaluate_entry(entry, settings)
        for name in ("tissue", "tumor", "non_tumor", "non_tissue"):
            tensor_io.write_mask(getattr(res.masks, name), out / f"{entry.image_id}_{name}.png")
        ru = res.region_unc
        return {"image_id": entry.image_id, "overall": ru.overall, "tumor": ru.tumor,
                "non_tumor": ru.non_tumor, "non_tissue": ru.non_tissue,
                "pixel_counts": ru.pixel_counts, "empty": ru.empty}

    ok, errors = _run_images(args, work)
    _dump_json({"settings": _settings_dict(settings), "images": [r for _, r in ok],
                "errors": errors}, out / "regions.json")
    return 1 if errors else 0


def cmd_metrics(args) -> int:
    out = _out_dir(args)
    settings = _settings(args)
    ok, errors = _run_images(args, lambda e: evaluate_entry(e, settings))
    pooled = None
    if args.auroc_pooled and ok:
        scores = np.concatenate([r.scores.ravel() for _, r in ok])
        labels = np.concatenate([r.masks.tumor.ravel() for _, r in ok])
        pooled = auroc(scores, labels)
    report = cohort_report([r.metrics for _, r in ok], n_boot=args.n_boot, seed=args.seed,
                           pooled_auroc=pooled)
    payload = report.to_dict()
    payload["errors"] = errors
    _dump_json(payload, out / "metrics.json")
    return 1 if errors else 0


def _records(args, out: Path):
    path = out / "records.csv"
    if path.exists() and not getattr(args, "recompute", False):
        return stats.read_records(path), []
    if not args.manifest:
        raise SystemExit(f"error: {path} not found and no --manifest given")
    settings = _settings(args)
    ok, errors = _run_images(args, lambda e: evaluate_entry(e, settings).record())
    records = [r for _, r in ok]
    stats.write_records(records, path)
    return records, errors


def _fmt(v, digits=4):
    return "n/a" if v is None or (isinstance(v, float) and not np.isfinite(v)) else f"{v:.{digits}g}"


def fit_report(models: dict, failures: dict, n_records: int, denom: str | None) -> str:
    lines = ["# Dice from region uncertainty: linear models", "",
             f"Records: {n_records}; mean-uncertainty convention: {denom or 'mixed'}", "",
             "| model | predictors | intercept | coefficients | RMSE | n |",
             "|---|---|---|---|---|---|"]
    for kind, m in models.items():
        coefs = ", ".join(f"{p}={_fmt(m.coefficients[p])}"
                          + (" (dropped: region empty)" if p in m.dropped else "")
                          for p in m.predictors)
        lines.append(f"| {kind} | {', '.join(m.predictors)} | {_fmt(m.intercept)} | {coefs} "
                     f"| {_fmt(m.rmse)} | {m.n} |")
    for kind, msg in failures.items():
        lines.append(f"| {kind} | {', '.join(stats.MODEL_KINDS[kind])} | failed: {msg} | | | |")
    lines += ["", "## Spearman correlation with Dice", "",
              "| predictor | region | rho | p |", "|---|---|---|---|"]
    seen = {}
    for m in models.values():
        for p, v in m.spearman.items():
            seen.setdefault(p, v)
    for p in stats.PREDICTORS:
        if p in seen:
            v = seen[p]
            rho, pv = (None, None) if v is None else v
            lines.append(f"| {p} | {stats.PREDICTOR_LABELS[p]} | {_fmt(rho)} | {_fmt(pv)} |")
    return "\n".join(lines) + "\n"


def cmd_fit(args) -> int:
    out = _out_dir(args)
    records, errors = _records(args, out)
    kinds = args.models.split(",") if args.models else list(stats.MODEL_KINDS)
    models, failures = {}, {}
    for kind in kinds:
        try:
            model = stats.fit_ols(records, kind)
        except stats.FitError as exc:
            log.error("%s: %s", kind, exc)
            failures[kind] = str(exc)
            continue
        model.save(out / f"model_{kind}.json")
        models[kind] = model
    denoms = {r.denom for r in records}
    (out / "report.md").write_text(
        fit_report(models, failures, len(records), denoms.pop() if len(denoms) == 1 else None),
        encoding="utf-8")
    for kind, msg in failures.items():
        print(f"error: {kind}: {msg}", file=sys.stderr)
    return 1 if errors or failures else 0


def cmd_predict(args) -> int:
    out = _out_dir(args)
    if args.reference:
        cohort, _, kind = args.reference.partition(":")
        model = stats.reference_models(cohort)[kind or "overall_eq3"]
    elif args.model:
        model = stats.LinearModel.load(args.model)
    else:
        raise SystemExit("error: give --model or --reference")
    if args.records:
        records = stats.read_records(args.records)
    elif args.x:
        values = dict(kv.split("=") for kv in args.x.split(","))
        records = [stats.ImageRecord("input", None, *(float(values[p]) if p in values else None
                                                      for p in stats.PREDICTORS))]
    else:
        records, _ = _records(args, out)
    for r in records:
        if model.denom_convention and r.denom and r.denom != model.denom_convention:
            print(f"error: convention mismatch: model fitted with denom={model.denom_convention}, "
                  f"record {r.image_id} uses denom={r.denom}", file=sys.stderr)
            return 2
    lines = ["image_id,predicted_dice_raw,predicted_dice_clamped"]
    for r in records:
        pred = stats.predict_dice(model, r)
        lines.append(f"{r.image_id},{float(pred.raw)!r},{float(pred.clamped)!r}")
    target = Path(args.output) if args.output else out / "predictions.csv"
    target.write_text("\n".join(lines) + "\n", encoding="utf-8")
    if args.x:
        print(lines[1])
    return 0


def cmd_render(args) -> int:
    out = _out_dir(args)

    def work(entry):
        unc_path = out / f"{entry.image_id}_unc.runc"
        if not unc_path.exists():
            raise FileNotFoundError(f"missing uncertainty map {unc_path.name} (run aggregate)")
        values = tensor_io.read_tensor(unc_path)[0].astype(np.float64)
        masks = load_masks(entry, values.shape, args.white_threshold)
        vmax = args.vmax if args.vmax else max(float(values.max()), VMAX_FLOOR)
        layers = {"overall": values, "tumor": values * masks.tumor,
                  "non_tumor": values * masks.non_tumor, "non_tissue": values * masks.non_tissue}
        for name in HEATMAP_LAYERS:
            tensor_io.write_heatmap(UncertaintyMap.from_values(layers[name]),
                                    out / f"{entry.image_id}_heat_{name}.png", vmax)
        return vmax

    _, errors = _run_images(args, work)
    for e in errors:
        print(f"error: {e['image_id']}: {e['error']}", file=sys.stderr)
    return 1 if errors else 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="roi-unc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--manifest", help="JSON manifest of images")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--threshold", type=float, default=0.95)
    common.add_argument("--p-hi", type=float, default=67.0)
    common.add_argument("--p-lo", type=float, default=33.0)
    common.add_argument("--denom", choices=("region", "all"), default="region")
    common.add_argument("--white-threshold", type=int, default=DEFAULT_WHITE_THRESHOLD)
    common.add_argument("--n-boot", type=int, default=DEFAULT_N_BOOT)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--raw-iters", action="store_true",
                        help="threshold the mean of raw probabilities instead of per-iteration decisions")

    p = sub.add_parser("synth", parents=[common], help="write a synthetic phantom cohort")
    p.add_argument("--n-images", type=int, default=20)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--alpha", type=int, default=50)
    p.add_argument("--sigma-tumor", type=float, default=2.0)
    p.add_argument("--sigma-non-tumor", type=float, default=1.5)
    p.add_argument("--sigma-non-tissue", type=float, default=0.5)
    p.add_argument("--boundary-band", type=int, default=2)
    p.add_argument("--max-multiplier", type=float, default=1.2)
    p.add_argument("--sweep", help="comma-separated noise multipliers (overrides --n-images)")
    p.add_argument("--tumor-free", action="store_true")
    p.add_argument("--prefix", default="img")
    p.set_defaults(func=cmd_synth)

    for name, func, help_ in (("aggregate", cmd_aggregate, "segmentations and uncertainty maps"),
                              ("regions", cmd_regions, "region masks and region-mean uncertainty"),
                              ("metrics", cmd_metrics, "Dice/TPR/FPR/AUROC with bootstrap CIs")):
        p = sub.add_parser(name, parents=[common], help=help_)
        if name == "metrics":
            p.add_argument("--auroc-pooled", action="store_true",
                           help="pool pixels of all images for AUROC instead of the per-image median")
        p.set_defaults(func=func)

    p = sub.add_parser("fit", parents=[common], help="fit the five linear models")
    p.add_argument("--models", help="comma-separated subset of " + ",".join(stats.MODEL_KINDS))
    p.add_argument("--recompute", action="store_true", help="ignore an existing records.csv")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", parents=[common], help="predict Dice from uncertainties")
    p.add_argument("--model", help="model JSON written by fit")
    p.add_argument("--reference", help="bundled published model, COHORT:KIND "
                                       "(e.g. tumor_containing:overall_eq3)")
    p.add_argument("--records", help="records CSV (default: <out>/records.csv)")
    p.add_argument("--x", help="single ad-hoc record, e.g. x0=0.0089")
    p.add_argument("--output", help="predictions CSV path (default: <out>/predictions.csv)")
    p.add_argument("--recompute", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("render", parents=[common], help="uncertainty heatmaps per region")
    p.add_argument("--vmax", type=float, help="fixed colour-scale maximum")
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("ROI_UNC_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.command in ("aggregate", "regions", "metrics", "render") and not args.manifest:
        print("error: --manifest is required", file=sys.stderr)
        return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
