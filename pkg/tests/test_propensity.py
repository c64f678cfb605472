from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lotmatch.errors import AllColumnsDegenerate, DegenerateDesign, MissingCovariate, SingleClass
from lotmatch.features import CovariateTable
from lotmatch.propensity import (
    ABLATIONS, DEFAULT_MODEL_COLUMNS, P_MAX, P_MIN, PropensityModel, Standardization, confusion_metrics,
    evaluate, evaluate_ablations, fit_logistic, fit_propensity, loglik_gradient, metrics_from_rates, predict,
    rank_auc, roc_area, roc_curve, standardize,
)
from lotmatch.synth import auc_oracle, mle_oracle


class TestStandardize:
    def test_sample_sd_convention(self):
        Z, params = standardize(np.array([[1.0], [2.0], [3.0]]))
        assert Z.ravel().tolist() == [-1.0, 0.0, 1.0]
        assert params.sds.tolist() == [1.0]

    def test_constant_column_dropped(self):
        X = np.array([[1.0, 5.0], [2.0, 5.0], [4.0, 5.0]])
        Z, params = standardize(X, ["a", "b"])
        assert params.columns == ("a",) and params.dropped == ("b",) and Z.shape == (3, 1)

    def test_all_constant(self):
        with pytest.raises(AllColumnsDegenerate):
            standardize(np.ones((4, 2)))

    def test_round_trip(self):
        X = np.random.default_rng(0).normal(3, 7, size=(50, 4))
        Z, params = standardize(X)
        assert np.allclose(params.invert(Z), X, atol=1e-12, rtol=0)


def intercept_only(rate_num, n):
    y = np.zeros(n)
    y[:rate_num] = 1
    return np.empty((n, 0)), y


class TestFitLogistic:
    def test_intercept_only_is_logit_of_base_rate(self):
        X, y = intercept_only(22, 100)
        fit = fit_logistic(X, y)
        assert fit.coef[0] == pytest.approx(math.log(0.22 / 0.78), abs=1e-6)
        assert fit.coef[0] == pytest.approx(-1.2657, abs=1e-4)

    def test_matches_oracle(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(50, 2))
        y = (rng.random(50) < 1 / (1 + np.exp(-(0.3 + X @ [1.0, -0.7])))).astype(float)
        fit = fit_logistic(X, y)
        assert fit.converged and fit.flags == ()
        assert np.max(np.abs(fit.coef - mle_oracle(X, y))) < 1e-6
        assert np.max(np.abs(loglik_gradient(X, y, fit.coef))) < 1e-8

    def test_loglik_path_nondecreasing(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(200, 5)) * 3
        y = (rng.random(200) < 0.3).astype(float)
        path = fit_logistic(X, y).loglik_path
        assert all(b >= a for a, b in zip(path, path[1:]))

    def test_separation_flagged_not_nan(self):
        X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
        fit = fit_logistic(X, np.array([0, 0, 1, 1]))
        assert np.all(np.isfinite(fit.coef))
        assert "Separation" in fit.flags and "Ridge" in fit.flags

    def test_errors(self):
        with pytest.raises(SingleClass):
            fit_logistic(np.ones((3, 1)), np.ones(3))
        with pytest.raises(DegenerateDesign):
            fit_logistic(np.array([[np.nan], [1.0]]), np.array([0, 1]))
        with pytest.raises(DegenerateDesign):
            fit_logistic(np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]), np.array([0, 1, 0]))


def model_with(coef, columns=("a",)):
    k = len(columns)
    std = Standardization(tuple(columns), np.zeros(k), np.ones(k))
    from lotmatch.propensity import LogisticFit
    return PropensityModel(tuple(columns), std, LogisticFit(np.asarray(coef, float), True, 0, 0.0, []))


class TestPredict:
    def test_zero_coefficients(self):
        assert predict(model_with([0.0, 0.0]), {"a": 3.0}) == 0.5

    def test_saturation_guard(self):
        assert predict(model_with([0.0, 1.0]), {"a": 1e6}) == P_MAX
        assert predict(model_with([0.0, 1.0]), {"a": -1e6}) == P_MIN
        assert 0 < P_MIN and P_MAX < 1

    def test_hand_linear_predictor(self):
        assert predict(model_with([-1.2657, 0.0]), {"a": 0.0}) == pytest.approx(0.22, abs=1e-4)

    def test_missing_covariate(self):
        with pytest.raises(MissingCovariate):
            predict(model_with([0.0, 1.0]), {"b": 1.0})

    def test_standardization_round_trip_invariance(self, small_run):
        cov = small_run.covariates
        cols = list(DEFAULT_MODEL_COLUMNS)
        raw = fit_propensity(cov, small_run.greened, cols)
        Z, params = standardize(cov.values[:, [cov.columns.index(c) for c in cols]], cols)
        pre = CovariateTable(cov.lot_ids, Z, params.columns)
        again = fit_propensity(pre, small_run.greened, params.columns)
        assert np.max(np.abs(raw.predict_table(cov) - again.predict_table(pre))) < 1e-8


class TestEvaluate:
    def test_balanced_accuracy_from_rates(self):
        m = metrics_from_rates(0.69, 0.79, 0.78)
        assert m["balanced_accuracy"] == pytest.approx(0.74, abs=1e-12)
        assert m["accuracy"] == pytest.approx(0.71, abs=0.005)
        assert m["ppv"] == pytest.approx(0.92, abs=0.005)

    def test_kappa_by_hand(self):
        # observed agreement 0.7, chance agreement 0.5 -> kappa 0.4
        m = confusion_metrics(tp=35, fp=15, tn=35, fn=15)
        assert m["accuracy"] == 0.7 and m["kappa"] == pytest.approx(0.4)

    def test_four_point_auc(self):
        scores, labels = [0.9, 0.8, 0.7, 0.85], [1, 1, 0, 0]
        assert evaluate(scores, labels).roc_auc == 0.75 == auc_oracle(scores, labels)
        assert roc_area(roc_curve(scores, labels)) == pytest.approx(0.75, abs=1e-12)

    def test_threshold_tie_is_positive_prediction(self):
        scores = np.array([0.22, 0.1, 0.5, 0.05])
        greened = np.array([1, 0, 1, 0])
        m = evaluate(scores, greened, threshold=0.22, positive_class="greened")
        assert m.sensitivity == 1.0 and m.specificity == 1.0

    def test_positive_class_swaps_rates(self):
        rng = np.random.default_rng(3)
        s, g = rng.random(60), rng.random(60) < 0.3
        a = evaluate(s, g, positive_class="greened")
        b = evaluate(s, g, positive_class="ungreened")
        assert a.sensitivity == b.specificity and a.ppv == b.npv and a.kappa == pytest.approx(b.kappa)
        assert a.balanced_accuracy == (a.sensitivity + a.specificity) / 2

    def test_single_class(self):
        with pytest.raises(SingleClass):
            evaluate([0.1, 0.2], [1, 1])
        with pytest.raises(SingleClass):
            roc_curve([0.1, 0.2], [0, 0])

    @settings(max_examples=50)
    @given(st.lists(st.tuples(st.integers(0, 6), st.booleans()), min_size=2, max_size=30))
    def test_auc_matches_oracle_and_monotone_transform(self, data):
        scores = [s / 6 for s, _ in data]
        labels = [l for _, l in data]
        if all(labels) or not any(labels):
            return
        auc = rank_auc(scores, labels)
        assert auc == auc_oracle(scores, labels)
        assert rank_auc([math.exp(3 * s) for s in scores], labels) == auc
        assert abs(roc_area(roc_curve(scores, labels)) - auc) < 1e-12


class TestRoc:
    def test_perfect_separation(self):
        curve = roc_curve([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
        assert (0.0, 1.0) in curve and roc_area(curve) == 1.0

    def test_all_ties_diagonal(self):
        curve = roc_curve([0.5] * 6, [1, 0, 1, 0, 0, 1])
        assert curve == [(0.0, 0.0), (1.0, 1.0)] and roc_area(curve) == 0.5

    def test_staircase_monotone(self):
        rng = np.random.default_rng(4)
        curve = roc_curve(rng.random(100), rng.random(100) < 0.4)
        assert curve[0] == (0.0, 0.0) and curve[-1] == (1.0, 1.0)
        assert all(f1 >= f0 and t1 >= t0 for (f0, t0), (f1, t1) in zip(curve, curve[1:]))


def test_ablations_share_the_fit_path(small_run):
    out = evaluate_ablations(small_run.covariates, small_run.greened)
    assert list(out) == list(ABLATIONS)
    for name, (model, metrics, curve) in out.items():
        assert set(model.columns) <= set(ABLATIONS[name])
        assert 0.5 < metrics.roc_auc <= 1.0
        assert roc_area(curve) == pytest.approx(metrics.roc_auc, abs=1e-12)
    assert out["all"][1].roc_auc >= max(m.roc_auc for n, (_, m, _) in out.items() if n != "all") - 0.02
