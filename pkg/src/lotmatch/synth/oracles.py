"""Slow, direct reference implementations used to check the fast paths.

Nothing here imports arithmetic from the rest of the package: each oracle
recomputes its answer from first principles (linear scans, pairwise
comparisons, exhaustive assignment, quadrature).
"""
from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from ..errors import Separation, SingleClass


def _xy(p):
    # accepts (x, y) or (id, x, y, weight)
    return (p[0], p[1]) if len(p) == 2 else (p[1], p[2])


def naive_radius_count(points: Sequence, center, r: float) -> int:
    cx, cy = center
    n = 0
    for p in points:
        x, y = _xy(p)
        if math.hypot(x - cx, y - cy) <= r:
            n += 1
    return n


def naive_radius_sum(points: Sequence, center, r: float) -> float:
    """Sum of weights of ``(id, x, y, weight)`` points within ``r``."""
    cx, cy = center
    return math.fsum(p[3] for p in points if math.hypot(p[1] - cx, p[2] - cy) <= r)


# ------------------------------------------------------------ logistic MLE

def _oracle_loglik(A, y, b):
    z = A @ b
    # log(1 + e^z) without overflow
    return float(np.sum(y * z - np.where(z > 0, z + np.log1p(np.exp(-np.abs(z))), np.log1p(np.exp(-np.abs(z))))))


def _oracle_grad(A, y, b):
    z = A @ b
    p = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
    return A.T @ (y - p), p


def fd_gradient(f: Callable[[np.ndarray], float], b, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of a scalar function."""
    b = np.asarray(b, dtype=float)
    g = np.empty_like(b)
    for j in range(b.size):
        e = np.zeros_like(b)
        e[j] = h
        g[j] = (f(b + e) - f(b - e)) / (2 * h)
    return g


def mle_oracle(X, y, tol: float = 1e-10, max_iter: int = 200, check: bool = True) -> np.ndarray:
    """Logistic MLE (intercept first) by damped Newton with Armijo backtracking.

    Raises
    ------
    Separation
        If the iterates diverge or the optimum is not verified by the
        finite-difference gradient check.
    """
    X = np.asarray(X, dtype=float).reshape(len(y), -1)
    y = np.asarray(y, dtype=float)
    if y.min() == y.max():
        raise SingleClass("both classes are required")
    A = np.hstack([np.ones((len(y), 1)), X])
    b = np.zeros(A.shape[1])
    f = _oracle_loglik(A, y, b)
    for _ in range(max_iter):
        g, p = _oracle_grad(A, y, b)
        if np.max(np.abs(g)) < tol:
            break
        H = A.T @ (A * (p * (1 - p))[:, None])
        d = np.linalg.solve(H + 1e-300 * np.eye(A.shape[1]), g)
        slope = float(g @ d)
        step = 1.0
        while step > 1e-14:
            nb = b + step * d
            nf = _oracle_loglik(A, y, nb)
            if nf >= f + 1e-4 * step * slope or abs(nf - f) <= 1e-15 * abs(f):
                break
            step *= 0.5
        b, f = nb, nf
        if np.max(np.abs(b)) > 50:
            raise Separation("coefficients diverging; data look separated")
    else:
        raise Separation("Newton iterations did not converge")
    if np.max(np.abs(A @ b)) > 30:
        # fitted probabilities numerically 0 or 1: the gradient vanishes without a finite optimum
        raise Separation("fitted probabilities saturate; data look separated")
    if check:
        fd = fd_gradient(lambda v: _oracle_loglik(A, y, v), b)
        if np.max(np.abs(fd)) > 1e-6 * max(1.0, abs(f)):
            raise Separation("finite-difference gradient check failed at the optimum")
    return b


# --------------------------------------------------------------------- AUC

def auc_oracle(scores, labels) -> float:
    """Share of (positive, negative) pairs ordered correctly; ties count 1/2."""
    s = np.asarray(scores, dtype=float)
    lab = np.asarray(labels).astype(bool)
    pos, neg = s[lab], s[~lab]
    if pos.size == 0 or neg.size == 0:
        raise SingleClass("both classes are required")
    wins = 0.0
    for a in pos:
        for b in neg:
            if a > b:
                wins += 1.0
            elif a == b:
                wins += 0.5
    return wins / (pos.size * neg.size)


# ---------------------------------------------------------------- matching

def optimal_match_oracle(treated: Sequence[float], controls: Sequence[float]):
    """Minimum total |gap| over all injections treated -> controls.

    Exhaustive over injections, organised as a memoised search over
    (next treated, set of used controls).  Returns ``(total_gap, assignment)``
    where ``assignment[i]`` is the control index for treated ``i``.
    """
    t = [float(v) for v in treated]
    c = [float(v) for v in controls]
    if len(t) > 8 or len(c) > 12:
        raise ValueError("oracle limited to 8 treated and 12 controls")
    if len(c) < len(t):
        raise ValueError("need at least as many controls as treated")
    memo: dict[tuple[int, int], tuple[float, tuple[int, ...]]] = {}

    def best(i: int, used: int):
        if i == len(t):
            return 0.0, ()
        key = (i, used)
        if key in memo:
            return memo[key]
        out = (math.inf, ())
        for j in range(len(c)):
            if used & (1 << j):
                continue
            rest, assign = best(i + 1, used | (1 << j))
            total = abs(t[i] - c[j]) + rest
            if total < out[0]:
                out = (total, (j,) + assign)
        memo[key] = out
        return out

    total, assign = best(0, 0)
    return total, list(assign)


# ----------------------------------------------------------- t distribution

def t_cdf_oracle(t: float, df: float, dps: int = 40) -> float:
    """Student t CDF by adaptive quadrature of the density (mpmath)."""
    import mpmath as mp

    with mp.workdps(dps):
        nu = mp.mpf(df)
        c = mp.gamma((nu + 1) / 2) / (mp.sqrt(nu * mp.pi) * mp.gamma(nu / 2))
        pdf = lambda x: c * (1 + x * x / nu) ** (-(nu + 1) / 2)
        x = mp.mpf(t)
        if x <= 0:
            val = mp.quad(pdf, [-mp.inf, x])
        else:
            val = 1 - mp.quad(pdf, [-mp.inf, -x])
        return float(val)
