import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from roi_unc.stats import (FitError, ImageRecord, LinearModel, fit_ols, predict_dice, rankdata,
                           read_records, reference_models, rmse, spearman, write_records)


def make_records(dice, x0=None, x1=None, x2=None, x3=None, empty_x1=False, denom="region"):
    n = len(dice)
    col = lambda v: [None] * n if v is None else list(v)  # noqa: E731
    return [ImageRecord(f"r{i}", float(d), a, b, c, e, {"x1": empty_x1, "x2": False, "x3": False},
                        denom)
            for i, (d, a, b, c, e) in enumerate(zip(dice, col(x0), col(x1), col(x2), col(x3)))]


def test_planted_line_recovered():
    x = np.linspace(0.0, 0.9, 10)
    recs = make_records(2 + 3 * x, x0=x)
    m = fit_ols(recs, "overall_eq3")
    assert m.intercept == pytest.approx(2.0, abs=1e-9)
    assert m.coefficients["x0"] == pytest.approx(3.0, abs=1e-9)
    assert m.rmse == pytest.approx(0.0, abs=1e-9)
    assert m.n == 10
    for r in recs:
        assert predict_dice(m, r).raw == pytest.approx(r.dice, abs=1e-9)


def test_constant_response():
    x = np.linspace(0.0, 0.05, 8)
    m = fit_ols(make_records(np.full(8, 0.93), x0=x), "overall_eq3")
    assert m.coefficients["x0"] == pytest.approx(0.0, abs=1e-9)
    assert m.intercept == pytest.approx(0.93, abs=1e-12)
    assert m.rmse == pytest.approx(0.0, abs=1e-12)
    assert m.spearman["x0"] is None  # constant Dice has no rank correlation


def test_tumor_free_cohort_reports_zero_tumor_coefficient(rng):
    n = 20
    x2 = rng.random(n) * 0.02
    x3 = rng.random(n) * 0.01
    y = 0.999 - 12 * x2 + 7 * x3 + rng.normal(0, 0.001, n)
    recs = make_records(y, x1=np.zeros(n), x2=x2, x3=x3, empty_x1=True)
    m = fit_ols(recs, "full_eq1")
    assert m.coefficients["x1"] == 0.0
    assert m.dropped == ["x1"]
    assert m.coefficients["x2"] < 0 < m.coefficients["x3"]
    single = fit_ols(recs, "tumor_eq2i")
    assert single.coefficients["x1"] == 0.0
    assert single.intercept == pytest.approx(np.mean(y), abs=1e-12)


def test_partially_empty_predictor_kept_as_data(rng):
    n = 12
    x1 = rng.random(n) * 0.02
    x1[:3] = 0.0
    recs = make_records(1 - 5 * x1, x1=x1)
    for r in recs[:3]:
        r.empty["x1"] = True
    m = fit_ols(recs, "tumor_eq2i")
    assert m.dropped == []
    assert m.coefficients["x1"] == pytest.approx(-5.0, abs=1e-9)


def test_rank_deficiency_names_predictors(rng):
    x1 = rng.random(10)
    recs = make_records(rng.random(10), x1=x1, x2=2 * x1, x3=rng.random(10))
    with pytest.raises(FitError, match=r"rank deficient.*x1.*x2"):
        fit_ols(recs, "full_eq1")


def test_zero_column_is_rank_deficient():
    recs = make_records([0.9, 0.8, 0.7], x0=[0.0, 0.0, 0.0])
    with pytest.raises(FitError, match="rank deficient"):
        fit_ols(recs, "overall_eq3")


def test_insufficient_samples():
    recs = make_records([0.9, 0.8], x1=[0.1, 0.2], x2=[0.3, 0.1], x3=[0.2, 0.2])
    with pytest.raises(FitError, match="insufficient samples"):
        fit_ols(recs, "full_eq1")


def test_unknown_kind_and_missing_predictor():
    with pytest.raises(ValueError):
        fit_ols([], "cubic")
    recs = make_records([0.9, 0.8, 0.7], x0=[0.1, 0.2, 0.3])
    with pytest.raises(FitError, match="lacks predictor x1"):
        fit_ols(recs, "tumor_eq2i")
    m = fit_ols(recs, "overall_eq3")
    with pytest.raises(ValueError, match="lacks predictor x0"):
        predict_dice(m, ImageRecord("q", None, None, 0.1, 0.1, 0.1))


def test_published_overall_model_prediction():
    m = reference_models("tumor_containing")["overall_eq3"]
    assert (m.intercept, m.coefficients["x0"]) == (1.0074, -14.9116)
    raw, clamped = predict_dice(m, ImageRecord("t1", None, 0.0089, None, None, None))
    assert raw == pytest.approx(1.0074 - 14.9116 * 0.0089, abs=1e-15)
    assert raw == pytest.approx(0.8747, abs=1e-4)
    assert clamped == raw


def test_published_coefficients_bundle():
    tc = reference_models("tumor_containing")
    assert tc["full_eq1"].coefficients == {"x1": -12.2397, "x2": -19.5844, "x3": -6.2364}
    assert tc["tumor_eq2i"].spearman["x1"][0] == -0.4878
    tf = reference_models("tumor_free")
    assert tf["full_eq1"].coefficients["x1"] == 0.0
    assert "tumor_eq2i" not in tf
    with pytest.raises(ValueError):
        reference_models("lung")


def test_zero_uncertainty_predicts_clamped_intercept():
    for m in reference_models("tumor_containing").values():
        raw, clamped = predict_dice(m, ImageRecord("z", None, 0.0, 0.0, 0.0, 0.0))
        assert raw == m.intercept
        assert clamped == min(1.0, m.intercept)


def test_model_json_round_trip(tmp_path, rng):
    x = rng.random((15, 3)) * 0.03
    y = 1 - x @ [5, 10, 2] + rng.normal(0, 0.01, 15)
    recs = make_records(y, x1=x[:, 0], x2=x[:, 1], x3=x[:, 2])
    m = fit_ols(recs, "full_eq1")
    m.save(tmp_path / "m.json")
    back = LinearModel.load(tmp_path / "m.json")
    assert back == m


def test_records_csv_round_trip_exact(tmp_path, rng):
    recs = make_records(rng.random(5), x0=rng.random(5), x1=rng.random(5) / 3, x2=rng.random(5),
                        x3=rng.random(5), empty_x1=True, denom="all")
    write_records(recs, tmp_path / "r.csv")
    assert read_records(tmp_path / "r.csv") == recs


def test_refit_rmse_reproduced_exactly(rng):
    x = rng.random((44, 3)) * 0.02
    y = 1.0 - x @ [12.2, 19.6, 6.2] + rng.normal(0, 0.02, 44)
    recs = make_records(y, x1=x[:, 0], x2=x[:, 1], x3=x[:, 2])
    m = fit_ols(recs, "full_eq1")
    preds = [predict_dice(m, r).raw for r in recs]
    assert rmse(preds, [r.dice for r in recs]) == m.rmse


def test_residuals_orthogonal(rng):
    x = rng.random((30, 3)) * 0.05
    y = 0.9 - x @ [3, -4, 8] + rng.normal(0, 0.05, 30)
    recs = make_records(y, x1=x[:, 0], x2=x[:, 1], x3=x[:, 2])
    m = fit_ols(recs, "full_eq1")
    resid = y - np.array([predict_dice(m, r).raw for r in recs])
    assert abs(resid.sum()) < 1e-8 * np.abs(y).sum()
    for j in range(3):
        assert abs(resid @ x[:, j]) < 1e-8 * np.abs(y).sum() * np.abs(x[:, j]).max()


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-30, 10), min_size=4, max_size=4), st.integers(0, 2**32 - 1))
def test_noiseless_recovery(coefs, seed):
    g = np.random.default_rng(seed)
    x = g.random((44, 3)) * 0.05
    y = coefs[0] + x @ coefs[1:]
    m = fit_ols(make_records(y, x1=x[:, 0], x2=x[:, 1], x3=x[:, 2]), "full_eq1")
    got = [m.intercept, m.coefficients["x1"], m.coefficients["x2"], m.coefficients["x3"]]
    assert np.allclose(got, coefs, rtol=0, atol=1e-6)


def test_spearman_examples():
    x = np.arange(1.0, 9.0)
    assert spearman(x, x ** 2) == (1.0, 0.0)
    assert spearman(x, -x)[0] == -1.0
    # hand ranks: y -> [1, 2, 3.5, 5, 3.5]; sum(dx*dy)=8, sum(dx^2)=10, sum(dy^2)=9.5
    rho, _ = spearman([1, 2, 3, 4, 5], [5, 6, 7, 8, 7])
    assert rho == pytest.approx(8 / math.sqrt(95), abs=1e-15)


def test_spearman_p_matches_scipy(rng):
    for n in (5, 20, 44):
        x = rng.random(n)
        y = x + rng.normal(0, 0.5, n)
        y[0] = y[1]
        rho, p = spearman(x, y)
        ref = sps.spearmanr(x, y)
        assert rho == pytest.approx(ref.statistic, abs=1e-12)
        assert p == pytest.approx(ref.pvalue, rel=1e-9)


def test_spearman_exact_p():
    x = np.arange(5.0)
    rho, p = spearman(x, x, exact=True)
    assert rho == 1.0 and p == pytest.approx(2 / 120, abs=1e-15)
    _, p2 = spearman([1, 2, 3, 4, 5, 6], [2, 1, 4, 3, 6, 5], exact=True)
    assert 0.0 < p2 <= 1.0
    with pytest.raises(ValueError):
        spearman(np.arange(11.0), np.arange(11.0), exact=True)


def test_spearman_errors():
    with pytest.raises(ValueError, match="constant input"):
        spearman([1, 2, 3], [4, 4, 4])
    with pytest.raises(ValueError):
        spearman([1, 2], [1, 2])
    with pytest.raises(ValueError):
        spearman([1, 2, 3], [1, 2])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_spearman_symmetric_and_rank_invariant(seed):
    g = np.random.default_rng(seed)
    x = g.random(12)
    y = x + g.normal(0, 0.3, 12)
    rho, p = spearman(x, y)
    assert spearman(y, x) == (rho, p)
    assert spearman(np.exp(3 * x), y ** 3)[0] == rho
    assert -1.0 <= rho <= 1.0


def test_rankdata_ties():
    assert rankdata([10, 20, 20, 5]).tolist() == [2.0, 3.5, 3.5, 1.0]


def test_rmse_examples():
    assert rmse([0.3, 0.2], [0.3, 0.2]) == 0.0
    assert rmse([1, 1], [0, 0]) == 1.0
    assert rmse([0.9, 0.8], [0.8, 0.6]) == pytest.approx(math.sqrt(0.025), abs=1e-15)
    assert rmse([0.9, 0.8], [0.8, 0.6]) == pytest.approx(0.1581, abs=1e-4)
    with pytest.raises(ValueError, match="length mismatch"):
        rmse([1.0], [1.0, 2.0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=20), st.integers(0, 100))
def test_rmse_nonnegative_zero_iff_equal(a, seed):
    b = list(a)
    assert rmse(a, b) == 0.0
    b[seed % len(b)] += 1.0
    assert rmse(a, b) > 0.0
