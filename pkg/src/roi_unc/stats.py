"""Linear models that predict Dice from region uncertainties, with Spearman and RMSE diagnostics."""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import NamedTuple

import numpy as np
from scipy import stats as sps

PREDICTORS = ("x0", "x1", "x2", "x3")
PREDICTOR_LABELS = {"x0": "overall", "x1": "tumor", "x2": "non-tumor", "x3": "non-tissue"}

MODEL_KINDS = {
    "full_eq1": ("x1", "x2", "x3"),
    "tumor_eq2i": ("x1",),
    "nontumor_eq2ii": ("x2",),
    "nontissue_eq2iii": ("x3",),
    "overall_eq3": ("x0",),
}

RANK_TOL = 1e-10


class FitError(ValueError):
    """The requested linear model cannot be fitted to the given records."""


@dataclass
class ImageRecord:
    image_id: str
    dice: float | None
    x0: float | None
    x1: float | None
    x2: float | None
    x3: float | None
    empty: dict[str, bool] = field(default_factory=dict)
    denom: str | None = None

    def value(self, name: str) -> float | None:
        return getattr(self, name)


@dataclass
class LinearModel:
    kind: str
    intercept: float
    coefficients: dict[str, float]
    rmse: float
    spearman: dict[str, tuple[float, float] | None]
    n: int
    denom_convention: str | None = None
    std_errors: dict[str, float] = field(default_factory=dict)
    dropped: list[str] = field(default_factory=list)

    @property
    def predictors(self) -> tuple[str, ...]:
        return MODEL_KINDS[self.kind]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "intercept": self.intercept,
            "coefficients": dict(self.coefficients),
            "std_errors": dict(self.std_errors),
            "dropped": list(self.dropped),
            "rmse": self.rmse,
            "spearman": {k: (None if v is None else {"rho": v[0], "p": v[1]})
                         for k, v in self.spearman.items()},
            "n": self.n,
            "denom_convention": self.denom_convention,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LinearModel":
        kind = d["kind"]
        if kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {kind!r}")
        coefs = {k: float(v) for k, v in d["coefficients"].items()}
        missing = set(MODEL_KINDS[kind]) - set(coefs)
        if missing:
            raise ValueError(f"model JSON lacks coefficients {sorted(missing)}")
        spearman = {}
        for k, v in (d.get("spearman") or {}).items():
            spearman[k] = None if v is None else (v["rho"], v["p"])
        return cls(
            kind=kind,
            intercept=float(d["intercept"]),
            coefficients=coefs,
            rmse=float(d["rmse"]) if d.get("rmse") is not None else math.nan,
            spearman=spearman,
            n=int(d.get("n") or 0),
            denom_convention=d.get("denom_convention"),
            std_errors={k: float(v) for k, v in (d.get("std_errors") or {}).items()},
            dropped=list(d.get("dropped") or []),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "LinearModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def rmse(predicted, actual) -> float:
    p = np.asarray(predicted, dtype=np.float64)
    a = np.asarray(actual, dtype=np.float64)
    if p.shape != a.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {a.shape}")
    if p.size == 0:
        raise ValueError("empty input")
    return math.sqrt(float(np.mean((p - a) ** 2)))


def rankdata(x) -> np.ndarray:
    """1-based ranks with ties replaced by their average rank."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    s = x[order]
    ranks = np.empty(x.size, dtype=np.float64)
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and s[j + 1] == s[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _pearson(a, b) -> float:
    a = a - a.mean()
    b = b - b.mean()
    return float(np.dot(a, b) / math.sqrt(np.dot(a, a) * np.dot(b, b)))


def _exact_p(rx, ry, rho) -> float:
    """Two-sided permutation p-value over all n! orderings of ``ry``."""
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    scale = math.sqrt(np.dot(rx, rx) * np.dot(ry, ry))
    target = abs(rho) - 1e-12
    hits = total = 0
    perms = itertools.permutations(ry)
    while True:
        chunk = np.array(list(itertools.islice(perms, 200_000)))
        if chunk.size == 0:
            break
        r = np.abs(chunk @ rx) / scale
        hits += int(np.count_nonzero(r >= target))
        total += len(chunk)
    return hits / total


def spearman(x, y, exact: bool = False) -> tuple[float, float]:
    """Spearman rho and two-sided p-value.

    The p-value uses the t approximation with n - 2 degrees of freedom, or a
    full permutation enumeration when ``exact`` is set (n <= 10 only).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    n = x.size
    if n < 3:
        raise ValueError(f"need at least 3 samples, got {n}")
    rx, ry = rankdata(x), rankdata(y)
    if np.all(rx == rx[0]) or np.all(ry == ry[0]):
        raise ValueError("constant input")
    rho = min(1.0, max(-1.0, _pearson(rx, ry)))
    if exact:
        if n > 10:
            raise ValueError(f"exact permutation p-value limited to n <= 10, got {n}")
        return rho, _exact_p(rx, ry, rho)
    if abs(rho) >= 1.0:
        return rho, 0.0
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    return rho, float(2.0 * sps.t.sf(abs(t), n - 2))


def _records_matrix(records, names) -> np.ndarray:
    cols = []
    for name in names:
        col = []
        for r in records:
            v = r.value(name)
            if v is None:
                raise FitError(f"record {r.image_id!r} lacks predictor {name}")
            col.append(v)
        cols.append(col)
    return np.asarray(cols, dtype=np.float64).T.reshape(len(records), len(names))


def _check_rank(design: np.ndarray, names: list[str]) -> np.ndarray:
    """Unit-norm column scales; raises FitError when the design is rank deficient."""
    norms = np.linalg.norm(design, axis=0)
    zero = [names[i] for i in np.flatnonzero(norms == 0)]
    if zero:
        raise FitError(f"rank deficient design: predictor(s) {zero} are identically zero")
    scaled = design / norms
    _, sv, vt = np.linalg.svd(scaled, full_matrices=False)
    if sv[-1] / sv[0] < RANK_TOL:
        null = np.abs(vt[-1])
        involved = [names[i] for i in np.flatnonzero(null > 1e-3 * null.max())]
        raise FitError(f"rank deficient design: collinear columns {involved}")
    return norms


def fit_ols(records, kind: str = "full_eq1") -> LinearModel:
    """Ordinary least squares with intercept through the normal equations.

    A predictor whose region is empty in every record is left out of the
    design and reported with coefficient exactly 0.
    """
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {sorted(MODEL_KINDS)}")
    records = list(records)
    names = MODEL_KINDS[kind]
    n = len(records)
    dropped = [p for p in names if n and all(r.empty.get(p, False) for r in records)]
    used = [p for p in names if p not in dropped]
    n_params = len(used) + 1
    if n <= n_params:
        raise FitError(f"insufficient samples: {n} records for {n_params} parameters")
    if any(r.dice is None for r in records):
        raise FitError("every record needs a Dice value to fit")
    y = np.array([r.dice for r in records], dtype=np.float64)
    xs = _records_matrix(records, used)
    design = np.column_stack([np.ones(n), xs])
    col_names = ["intercept"] + used
    norms = _check_rank(design, col_names)
    scaled = design / norms
    gram = scaled.T @ scaled
    beta = np.linalg.solve(gram, scaled.T @ y) / norms

    coefficients = {p: 0.0 for p in names}
    for i, p in enumerate(used, start=1):
        coefficients[p] = float(beta[i])
    # same arithmetic as predict_dice, so re-predicting the fit set reproduces rmse exactly
    fitted = np.array([_linear(float(beta[0]), coefficients, names, r) for r in records])
    resid = y - fitted
    rss = float(resid @ resid)
    sigma2 = rss / (n - n_params)
    cov = np.linalg.inv(gram) / np.outer(norms, norms) * sigma2
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))

    std_errors = {"intercept": float(se[0])}
    for i, p in enumerate(used, start=1):
        std_errors[p] = float(se[i])

    rho = {}
    for p in names:
        try:
            rho[p] = spearman(_records_matrix(records, [p])[:, 0], y)
        except ValueError:
            rho[p] = None

    denoms = {r.denom for r in records}
    return LinearModel(
        kind=kind,
        intercept=float(beta[0]),
        coefficients=coefficients,
        rmse=rmse(fitted, y),
        spearman=rho,
        n=n,
        denom_convention=denoms.pop() if len(denoms) == 1 else None,
        std_errors=std_errors,
        dropped=dropped,
    )


class DicePrediction(NamedTuple):
    raw: float
    clamped: float


def _linear(intercept, coefficients, predictors, record, dropped=()) -> float:
    raw = intercept
    for p in predictors:
        v = record.value(p)
        if v is None:
            if p in dropped:
                continue
            raise ValueError(f"record {record.image_id!r} lacks predictor {p}")
        raw += coefficients[p] * v
    return raw


def predict_dice(model: LinearModel, record: ImageRecord) -> DicePrediction:
    """Intercept plus coefficient-weighted uncertainties, raw and clamped to [0, 1]."""
    raw = _linear(model.intercept, model.coefficients, model.predictors, record, model.dropped)
    return DicePrediction(raw, min(1.0, max(0.0, raw)))


def fit_all(records) -> dict[str, LinearModel]:
    return {kind: fit_ols(records, kind) for kind in MODEL_KINDS}


# --------------------------------------------------------------------------
# records CSV
# --------------------------------------------------------------------------

RECORD_COLUMNS = ["image_id", "dice", "x0", "x1", "x2", "x3",
                  "empty_x1", "empty_x2", "empty_x3", "denom"]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_records(records, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for r in records:
            w.writerow([_fmt(v) for v in (
                r.image_id, r.dice, r.x0, r.x1, r.x2, r.x3,
                r.empty.get("x1", False), r.empty.get("x2", False), r.empty.get("x3", False),
                r.denom)])


def read_records(path) -> list[ImageRecord]:
    def num(s):
        return float(s) if s not in ("", None) else None

    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(ImageRecord(
                image_id=row["image_id"],
                dice=num(row.get("dice")),
                x0=num(row.get("x0")), x1=num(row.get("x1")),
                x2=num(row.get("x2")), x3=num(row.get("x3")),
                empty={p: row.get(f"empty_{p}") == "1" for p in ("x1", "x2", "x3")},
                denom=row.get("denom") or None,
            ))
    return out


# --------------------------------------------------------------------------
# bundled published coefficients
# --------------------------------------------------------------------------


def reference_models(cohort: str = "tumor_containing") -> dict[str, LinearModel]:
    """Coefficients reported for the prostate biopsy cohorts, keyed by model kind.

    These are data-dependent values from a trained network, useful for the
    predict path; they are not targets for fits on other data.
    """
    raw = json.loads(resources.files("roi_unc.data").joinpath(
        "reference_coefficients.json").read_text(encoding="utf-8"))
    try:
        models = raw["cohorts"][cohort]
    except KeyError:
        raise ValueError(f"unknown cohort {cohort!r}; "
                         f"expected one of {sorted(raw['cohorts'])}") from None
    return {kind: LinearModel.from_dict({"kind": kind, **m}) for kind, m in models.items()}
