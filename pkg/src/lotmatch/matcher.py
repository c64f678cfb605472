"""Nearest-propensity matching of greened to ungreened lots, plus balance.

Matching is greedy 1:1: treated lots are visited in descending score order
(ties by id) and each takes the closest still-unused control.  Equal gaps go
to the control with the smaller id.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from datetime import date
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import EmptyGroup, NoControls
from .features import COVARIATE_COLUMNS, CovariateTable


@dataclass(frozen=True)
class MatchedPair:
    treated_lot_id: str
    control_lot_id: str
    treated_score: float
    control_score: float
    score_gap: float
    anchor_date: Optional[date] = None


@dataclass
class MatchResult:
    pairs: list[MatchedPair]
    unmatched_treated: list[str] = field(default_factory=list)
    caliper_dropped: list[str] = field(default_factory=list)

    def __iter__(self):
        return iter(self.pairs)

    def __len__(self):
        return len(self.pairs)


class _ControlPool:
    """Controls grouped by distinct score; groups are removed once used up."""

    def __init__(self, controls: Sequence[tuple[str, float]]):
        groups: dict[float, list[str]] = {}
        for cid, s in controls:
            groups.setdefault(float(s), []).append(cid)
        self.values = sorted(groups)
        self.ids = [sorted(groups[v]) for v in self.values]
        self.head = [0] * len(self.values)
        n = len(self.values)
        self._right = list(range(n + 1))  # next live group at or after i; n = none
        self._left = list(range(n + 1))   # shifted by one: live group at or before i-1; 0 = none

    def _find(self, parent, i):
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    def _live_right(self, i):
        return self._find(self._right, i)

    def _live_left(self, i):
        return self._find(self._left, i + 1) - 1

    def nearest(self, score: float):
        """``(group, gap)`` of the best live control for ``score``, or None."""
        pos = bisect.bisect_left(self.values, score)
        r = self._live_right(pos)
        l = self._live_left(pos - 1)
        best = None
        for g in (l, r):
            if 0 <= g < len(self.values):
                gap = abs(score - self.values[g])
                cand = (gap, self.ids[g][self.head[g]], g)
                if best is None or cand < best:
                    best = cand
        if best is None:
            return None
        return best[2], best[0]

    def take(self, g: int) -> str:
        cid = self.ids[g][self.head[g]]
        self.head[g] += 1
        if self.head[g] == len(self.ids[g]):
            self._right[g] = g + 1
            self._left[g + 1] = g
        return cid


def match_pairs(treated: Sequence[tuple[str, float]], controls: Sequence[tuple[str, float]],
                anchor_dates: Mapping[str, date] | None = None, replacement: bool = False,
                caliper: float | None = None) -> MatchResult:
    """Greedy nearest-score matching.

    Parameters
    ----------
    treated, controls : sequences of ``(lot_id, score)``
    anchor_dates : mapping, optional
        Greening date of each treated lot; copied onto its pair.
    replacement : bool
        Allow a control to serve several treated lots.
    caliper : float, optional
        Pairs with a larger score gap are dropped (the control stays available).

    Returns
    -------
    MatchResult
        Pairs sorted by treated id, plus treated lots left without a control
        (pool exhausted) or dropped by the caliper.
    """
    if not controls:
        raise NoControls("no control lots to match against")
    for name, group in (("treated", treated), ("control", controls)):
        if len({i for i, _ in group}) != len(group):
            raise ValueError(f"duplicate {name} lot id")
    pool = _ControlPool(controls)
    scores = {cid: float(s) for cid, s in controls}
    pairs, unmatched, dropped = [], [], []
    for tid, ts in sorted(treated, key=lambda t: (-float(t[1]), t[0])):
        ts = float(ts)
        hit = pool.nearest(ts)
        if hit is None:
            unmatched.append(tid)
            continue
        g, gap = hit
        if caliper is not None and gap > caliper:
            dropped.append(tid)
            continue
        cid = pool.ids[g][pool.head[g]] if replacement else pool.take(g)
        anchor = anchor_dates.get(tid) if anchor_dates is not None else None
        pairs.append(MatchedPair(tid, cid, ts, scores[cid], gap, anchor))
    pairs.sort(key=lambda p: p.treated_lot_id)
    return MatchResult(pairs, sorted(unmatched), sorted(dropped))


# ----------------------------------------------------------------- balance

def pooled_sd(values_t, values_c) -> float:
    """sqrt((var_t + var_c) / 2) with sample variances."""
    vt = np.asarray(values_t, dtype=float)
    vc = np.asarray(values_c, dtype=float)
    var_t = vt.var(ddof=1) if vt.size > 1 else 0.0
    var_c = vc.var(ddof=1) if vc.size > 1 else 0.0
    return math.sqrt((var_t + var_c) / 2.0)


def smd(values_t, values_c, sd_pool: float) -> float:
    """Standardized mean difference; NaN (undefined) when ``sd_pool`` is 0."""
    vt = np.asarray(values_t, dtype=float)
    vc = np.asarray(values_c, dtype=float)
    if vt.size == 0 or vc.size == 0:
        raise EmptyGroup("SMD needs both groups non-empty")
    if sd_pool == 0:
        return math.nan
    return float((vt.mean() - vc.mean()) / sd_pool)


@dataclass(frozen=True)
class BalanceRow:
    covariate: str
    smd_unmatched: float
    smd_matched: float
    sd_pool: float

    @property
    def undefined(self) -> bool:
        return self.sd_pool == 0


def balance_report(covariates: CovariateTable, treated_ids: Sequence[str], control_ids: Sequence[str],
                   pairs: Sequence[MatchedPair], columns: Sequence[str] = COVARIATE_COLUMNS) -> list[BalanceRow]:
    """Before/after-matching SMD for each covariate.

    Both SMDs use the pooled SD of the unmatched groups, so they share a
    scale.
    """
    pairs = list(pairs)
    Xt = covariates.rows_for(sorted(treated_ids))
    Xc = covariates.rows_for(sorted(control_ids))
    Pt = covariates.rows_for([p.treated_lot_id for p in pairs])
    Pc = covariates.rows_for([p.control_lot_id for p in pairs])
    rows = []
    for name in columns:
        j = covariates.columns.index(name)
        sd = pooled_sd(Xt[:, j], Xc[:, j])
        matched = smd(Pt[:, j], Pc[:, j], sd) if pairs else math.nan
        rows.append(BalanceRow(name, smd(Xt[:, j], Xc[:, j], sd), matched, sd))
    return rows
