"""Greening propensity model: logistic regression fitted by IRLS.

Covariates are standardized (sample SD) before fitting; the fitted model
keeps the standardization so it can score raw covariate vectors.  Threshold
metrics follow the convention that a score at or above the threshold
predicts *greened*; the class treated as "positive" for sensitivity, PPV
and friends is configurable and defaults to ungreened.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit

from .datamodel import Status
from .errors import (
    AllColumnsDegenerate,
    DegenerateDesign,
    MissingCovariate,
    SingleClass,
)
from .features import (
    BUSINESS_COLUMNS,
    COVARIATE_COLUMNS,
    DEMOGRAPHIC_COLUMNS,
    ECONOMIC_COLUMNS,
    LAND_USE_COLUMNS,
    CovariateTable,
)

P_MIN = 1e-15
P_MAX = 1.0 - 1e-15
DEFAULT_THRESHOLD = 0.22
RIDGE_LAMBDA = 1e-6
SATURATION = 30.0  # |linear predictor| beyond which a fit is treated as separated

# pov_b7 ([2, inf) bracket) is dropped for collinearity; "other" land use is
# never a covariate column.
DEFAULT_MODEL_COLUMNS = tuple(c for c in COVARIATE_COLUMNS if c != "pov_b7")

ABLATIONS: dict[str, tuple[str, ...]] = {
    "all": DEFAULT_MODEL_COLUMNS,
    "economic": tuple(c for c in ECONOMIC_COLUMNS if c != "pov_b7"),
    "demographic": DEMOGRAPHIC_COLUMNS,
    "land_use": LAND_USE_COLUMNS,
    "business": BUSINESS_COLUMNS,
}


# ----------------------------------------------------------- standardizing

@dataclass(frozen=True)
class Standardization:
    columns: tuple[str, ...]
    means: np.ndarray
    sds: np.ndarray
    dropped: tuple[str, ...] = ()

    def apply(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.means) / self.sds

    def invert(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.sds + self.means


def standardize(X, columns: Sequence[str] | None = None):
    """Center and scale columns to mean 0 and sample SD 1.

    Zero-variance columns are dropped and listed in ``params.dropped``.

    Returns
    -------
    Z : ndarray
        Standardized retained columns.
    params : Standardization
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("standardize needs a 2-d design with at least two rows")
    if columns is None:
        columns = tuple(f"x{i}" for i in range(X.shape[1]))
    columns = tuple(columns)
    means = X.mean(axis=0)
    sds = X.std(axis=0, ddof=1)
    keep = np.isfinite(sds) & (sds > 0)
    if not keep.any():
        raise AllColumnsDegenerate("every covariate column has zero variance")
    params = Standardization(
        tuple(c for c, k in zip(columns, keep) if k),
        means[keep],
        sds[keep],
        tuple(c for c, k in zip(columns, keep) if not k),
    )
    return params.apply(X[:, keep]), params


# ----------------------------------------------------------------- fitting

@dataclass
class LogisticFit:
    coef: np.ndarray  # intercept first
    converged: bool
    iterations: int
    grad_norm: float
    loglik_path: list[float]
    ridge: float = 0.0
    separated: bool = False

    @property
    def flags(self) -> tuple[str, ...]:
        out = []
        if not self.converged:
            out.append("NotConverged")
        if self.ridge:
            out.append("Ridge")
        if self.separated:
            out.append("Separation")
        return tuple(out)


def _softplus(eta):
    return np.logaddexp(0.0, eta)


def bernoulli_loglik(A, y, beta) -> float:
    eta = A @ beta
    return float(np.sum(y * eta - _softplus(eta)))


def _loglik_delta(eta_old, d, y) -> float:
    """Log-likelihood change when the linear predictor moves from ``eta_old`` by ``d``."""
    # softplus(a + d) - softplus(a) = log1p(sigmoid(a) * expm1(d)), accurate for small steps
    eta_new = eta_old + d
    p = expit(eta_old)
    big = np.abs(d) > 1.0
    sp = np.empty_like(d)
    sp[~big] = np.log1p(p[~big] * np.expm1(d[~big]))
    sp[big] = _softplus(eta_new[big]) - _softplus(eta_old[big])
    return float(np.sum(y * d - sp))


def _irls(A, y, ridge, max_iter, tol):
    n, k = A.shape
    pen = np.full(k, ridge)
    pen[0] = 0.0
    beta = np.zeros(k)
    eta = A @ beta
    objective = bernoulli_loglik(A, y, beta)
    path = [objective]
    grad_norm = math.inf
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        p = expit(eta)
        grad = A.T @ (y - p) - pen * beta
        grad_norm = float(np.max(np.abs(grad)))
        if not np.isfinite(grad_norm):
            break
        if grad_norm < tol:
            converged = True
            it -= 1
            break
        w = p * (1.0 - p)
        H = (A.T * w) @ A + np.diag(pen)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        t = 1.0
        while t > 1e-12:
            cand = beta + t * step
            eta_c = A @ cand
            # the move is taken from the coefficient difference, not eta_c - eta, which
            # cancels catastrophically near the optimum
            gain = _loglik_delta(eta, A @ (cand - beta), y) - 0.5 * float(np.sum(pen * (cand ** 2 - beta ** 2)))
            if gain >= 0.0:
                break
            t *= 0.5
        else:
            break  # no ascent possible at working precision
        beta, eta = cand, eta_c
        objective += gain
        path.append(objective)
    else:
        p = expit(eta)
        grad_norm = float(np.max(np.abs(A.T @ (y - p) - pen * beta)))
        converged = grad_norm < tol
    return beta, converged, it, grad_norm, path


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.size:
        raise ValueError("X and y have different numbers of rows")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise DegenerateDesign("design or labels contain NaN or infinite values")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0/1")
    if y.min() == y.max():
        raise SingleClass("labels contain a single class")
    A = np.column_stack([np.ones(X.shape[0]), X])
    if np.linalg.matrix_rank(A) < A.shape[1]:
        raise DegenerateDesign("design matrix (with intercept) is rank deficient")
    return A, y


def fit_logistic(X, y, max_iter: int = 100, tol: float = 1e-8) -> LogisticFit:
    """Maximum-likelihood logistic regression with an intercept.

    Newton/IRLS steps with step-halving; stops when the max-norm of the
    log-likelihood gradient drops below ``tol``.  If the unpenalized fit does
    not converge or saturates (separation), it is refitted with a ridge
    penalty of 1e-6 on the slopes and flagged.

    Raises
    ------
    SingleClass
        If ``y`` has one class only.
    DegenerateDesign
        On NaN input or a rank-deficient design.
    """
    A, y = _check_xy(X, y)
    beta, conv, it, gn, path = _irls(A, y, 0.0, max_iter, tol)
    saturated = not np.all(np.isfinite(beta)) or np.max(np.abs(A @ beta)) > SATURATION
    if conv and not saturated:
        return LogisticFit(beta, True, it, gn, path)
    beta, conv, it, gn, path = _irls(A, y, RIDGE_LAMBDA, max_iter, tol)
    return LogisticFit(beta, conv, it, gn, path, ridge=RIDGE_LAMBDA, separated=saturated)


def loglik_gradient(X, y, coef) -> np.ndarray:
    """Analytic gradient of the Bernoulli log-likelihood (intercept first)."""
    A = np.column_stack([np.ones(len(y)), np.asarray(X, dtype=float).reshape(len(y), -1)])
    return A.T @ (np.asarray(y, dtype=float) - expit(A @ coef))


@dataclass
class PropensityModel:
    columns: tuple[str, ...]
    standardization: Standardization
    fit: LogisticFit

    @property
    def coef(self) -> np.ndarray:
        return self.fit.coef

    def linear_predictor(self, X) -> np.ndarray:
        Z = self.standardization.apply(X)
        return self.fit.coef[0] + Z @ self.fit.coef[1:]

    def predict_matrix(self, X) -> np.ndarray:
        """Scores for rows of ``X`` whose columns are ``self.columns``."""
        return np.clip(expit(self.linear_predictor(np.atleast_2d(X))), P_MIN, P_MAX)

    def predict_table(self, table: CovariateTable) -> np.ndarray:
        missing = [c for c in self.columns if c not in table.columns]
        if missing:
            raise MissingCovariate(f"covariate table lacks {missing}")
        idx = [table.columns.index(c) for c in self.columns]
        return self.predict_matrix(table.values[:, idx])


def predict(model: PropensityModel, x: Mapping[str, float]) -> float:
    """Greening probability for one covariate vector given as a mapping."""
    missing = [c for c in model.columns if c not in x]
    if missing:
        raise MissingCovariate(f"covariate vector lacks {missing}")
    return float(model.predict_matrix(np.array([[x[c] for c in model.columns]]))[0])


def fit_propensity(covariates: CovariateTable, greened, columns: Sequence[str] = DEFAULT_MODEL_COLUMNS,
                   max_iter: int = 100, tol: float = 1e-8) -> PropensityModel:
    """Standardize the chosen columns of ``covariates`` and fit the logistic model.

    ``greened`` holds 0/1 labels aligned with ``covariates.lot_ids``.
    """
    missing = [c for c in columns if c not in covariates.columns]
    if missing:
        raise MissingCovariate(f"covariate table lacks {missing}")
    X = covariates.values[:, [covariates.columns.index(c) for c in columns]]
    Z, params = standardize(X, columns)
    fit = fit_logistic(Z, greened, max_iter=max_iter, tol=tol)
    return PropensityModel(params.columns, params, fit)


# -------------------------------------------------------------- evaluating

@dataclass(frozen=True)
class ClassifierMetrics:
    roc_auc: float
    accuracy: float
    balanced_accuracy: float
    kappa: float
    sensitivity: float
    specificity: float
    ppv: float
    npv: float
    threshold: float

    FIELDS = ("roc_auc", "accuracy", "balanced_accuracy", "kappa", "sensitivity",
              "specificity", "ppv", "npv")

    def as_row(self) -> list[float]:
        return [getattr(self, f) for f in self.FIELDS]


def _ratio(a, b):
    return a / b if b else math.nan


def confusion_metrics(tp: float, fp: float, tn: float, fn: float) -> dict[str, float]:
    """Threshold metrics from (possibly fractional) confusion-matrix cells."""
    n = tp + fp + tn + fn
    sens = _ratio(tp, tp + fn)
    spec = _ratio(tn, tn + fp)
    acc = (tp + tn) / n
    chance = ((tp + fp) * (tp + fn) + (tn + fn) * (tn + fp)) / (n * n)
    return {
        "accuracy": acc,
        "balanced_accuracy": (sens + spec) / 2,
        "kappa": _ratio(acc - chance, 1.0 - chance),
        "sensitivity": sens,
        "specificity": spec,
        "ppv": _ratio(tp, tp + fp),
        "npv": _ratio(tn, tn + fn),
    }


def metrics_from_rates(sensitivity: float, specificity: float, prevalence: float) -> dict[str, float]:
    """Threshold metrics implied by sensitivity, specificity and positive-class prevalence."""
    tp = prevalence * sensitivity
    fn = prevalence * (1.0 - sensitivity)
    tn = (1.0 - prevalence) * specificity
    fp = (1.0 - prevalence) * (1.0 - specificity)
    return confusion_metrics(tp, fp, tn, fn)


def _labels_scores(scores, labels):
    s = np.asarray(scores, dtype=float).ravel()
    lab = np.asarray(labels).ravel().astype(bool)
    if s.size != lab.size:
        raise ValueError("scores and labels differ in length")
    if lab.all() or not lab.any():
        raise SingleClass("both classes are required")
    return s, lab


def rank_auc(scores, labels) -> float:
    """Mann-Whitney AUC with mid-ranks: ties count one half."""
    s, lab = _labels_scores(scores, labels)
    uniq, inv, counts = np.unique(s, return_inverse=True, return_counts=True)
    starts = np.cumsum(counts) - counts
    midrank = starts + (counts + 1) / 2.0
    n1 = float(lab.sum())
    n0 = float(lab.size - n1)
    r1 = float(midrank[inv][lab].sum())
    return (r1 - n1 * (n1 + 1) / 2.0) / (n1 * n0)


def evaluate(scores, labels, threshold: float = DEFAULT_THRESHOLD,
             positive_class: Status | str = Status.UNGREENED) -> ClassifierMetrics:
    """Classifier metrics for greening scores.

    ``labels`` are 1 for greened lots.  A score >= ``threshold`` predicts
    greened.  ``positive_class`` selects which class sensitivity/PPV refer to.
    """
    s, greened = _labels_scores(scores, labels)
    positive_class = Status(positive_class)
    pred_greened = s >= threshold
    if positive_class is Status.GREENED:
        actual, pred = greened, pred_greened
    else:
        actual, pred = ~greened, ~pred_greened
    tp = float(np.sum(actual & pred))
    fp = float(np.sum(~actual & pred))
    tn = float(np.sum(~actual & ~pred))
    fn = float(np.sum(actual & ~pred))
    m = confusion_metrics(tp, fp, tn, fn)
    return ClassifierMetrics(roc_auc=rank_auc(s, greened), threshold=threshold, **m)


def roc_curve(scores, labels) -> list[tuple[float, float]]:
    """ROC staircase ``[(fpr, tpr), ...]`` from (0, 0) to (1, 1).

    Tied scores form a single diagonal segment, so the trapezoidal area
    equals the mid-rank AUC.
    """
    s, lab = _labels_scores(scores, labels)
    order = np.argsort(-s, kind="stable")
    s, lab = s[order], lab[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tps = np.cumsum(lab)[last]
    fps = np.cumsum(~lab)[last]
    P, N = lab.sum(), (~lab).sum()
    return [(0.0, 0.0)] + [(float(f / N), float(t / P)) for f, t in zip(fps, tps)]


def roc_area(curve: Sequence[tuple[float, float]]) -> float:
    area = 0.0
    for (f0, t0), (f1, t1) in zip(curve, curve[1:]):
        area += (f1 - f0) * (t0 + t1) / 2.0
    return area


def evaluate_ablations(covariates: CovariateTable, greened, threshold: float = DEFAULT_THRESHOLD,
                       positive_class: Status | str = Status.UNGREENED,
                       ablations: Mapping[str, Sequence[str]] = ABLATIONS):
    """Fit and evaluate one model per covariate group.

    Returns ``{name: (model, metrics, roc)}`` in the order of ``ablations``.
    """
    out = {}
    for name, cols in ablations.items():
        model = fit_propensity(covariates, greened, cols)
        scores = model.predict_table(covariates)
        out[name] = (model, evaluate(scores, greened, threshold, positive_class), roc_curve(scores, greened))
    return out
