"""Before/after crime windows and difference-in-differences estimates.

Around an anchor date ``a`` the windows are

* before: ``[a - 548 d, a - 183 d)``
* after:  ``(a + 183 d, a + 548 d]``

so each spans exactly 365 days and a DID is a change in crimes per year.
A lot whose windows leave the crime coverage is flagged as truncated and
left out of estimates (for matched pairs, the whole pair is dropped).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date, datetime
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import betainc

from .datamodel import CRIME_END, CRIME_START, CrimeCategory, CrimeEvent, Lot
from .errors import AnchorMismatch, TooFewLots, TooFewPairs
from .geoindex import GridIndex, record_xy
from .matcher import MatchedPair

NEAR_DAYS = 183
FAR_DAYS = 548
UNMATCHED_ANCHOR = date(2012, 10, 30)
CATEGORIES = ("serious", "other", "total")
_EPOCH = datetime(1970, 1, 1)


def t_cdf(t: float, df: float) -> float:
    """Student t lower-tail probability via the regularized incomplete beta."""
    if df < 1:
        raise ValueError("df must be >= 1")
    if t == 0:
        return 0.5
    if math.isinf(t):
        return 0.0 if t < 0 else 1.0
    tail = 0.5 * float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return tail if t < 0 else 1.0 - tail


def two_sided_p(t: float, df: float) -> float:
    if math.isnan(t):
        return math.nan
    if t == 0:
        return 1.0
    if math.isinf(t):
        return 0.0
    return float(betainc(df / 2.0, 0.5, df / (df + t * t)))


# ------------------------------------------------------------------ counts

def _seconds(ts: datetime) -> int:
    return int((ts - _EPOCH).total_seconds())


def _anchor_seconds(anchor: date) -> int:
    return _seconds(datetime(anchor.year, anchor.month, anchor.day))


class CrimeIndex:
    """Serious and other crimes with a spatial index; excluded crimes are dropped."""

    def __init__(self, crimes: Sequence[CrimeEvent], cell_size: float = 200.0,
                 coverage: tuple[datetime, datetime] = (CRIME_START, CRIME_END)):
        kept = [c for c in crimes if c.category is not CrimeCategory.EXCLUDED]
        kept.sort(key=lambda c: c.id)
        x, y = record_xy(kept)
        self.index = GridIndex(x, y, cell_size=cell_size)
        self.t = np.fromiter((_seconds(c.timestamp) for c in kept), np.int64, len(kept))
        self.serious = np.fromiter((c.category is CrimeCategory.SERIOUS for c in kept), bool, len(kept))
        self.coverage = coverage
        self._cov = (_seconds(coverage[0]), _seconds(coverage[1]))

    def __len__(self):
        return self.t.size


@dataclass(frozen=True)
class WindowCounts:
    lot_id: str
    anchor_date: date
    radius: float
    before_serious: int
    before_other: int
    after_serious: int
    after_other: int
    truncated: bool = False

    def before(self, category: str) -> int:
        if category == "total":
            return self.before_serious + self.before_other
        return getattr(self, f"before_{category}")

    def after(self, category: str) -> int:
        if category == "total":
            return self.after_serious + self.after_other
        return getattr(self, f"after_{category}")

    def change(self, category: str) -> int:
        return self.after(category) - self.before(category)


def window_counts(lot: Lot, anchor: date, crimes: CrimeIndex, r: float,
                  near_days: int = NEAR_DAYS, far_days: int = FAR_DAYS) -> WindowCounts:
    """Serious/other crime counts within ``r`` in the before and after windows."""
    if lot.x is None:
        raise ValueError(f"lot {lot.id} is not projected")
    a = _anchor_seconds(anchor)
    near, far = near_days * 86400, far_days * 86400
    truncated = a - far < crimes._cov[0] or a + far >= crimes._cov[1]
    idx = crimes.index.query((lot.x, lot.y), r)
    t = crimes.t[idx]
    ser = crimes.serious[idx]
    before = (t >= a - far) & (t < a - near)
    after = (t > a + near) & (t <= a + far)
    return WindowCounts(
        lot.id, anchor, float(r),
        int(np.sum(before & ser)), int(np.sum(before & ~ser)),
        int(np.sum(after & ser)), int(np.sum(after & ~ser)),
        bool(truncated),
    )


# -------------------------------------------------------------- estimation

@dataclass(frozen=True)
class DidEstimate:
    category: str
    n_pairs: int
    pre_rate: float
    did_mean: float
    se: float
    t_stat: float
    p_value: float
    pct_of_pre: float
    df: float = math.nan
    flags: tuple[str, ...] = ()

    @property
    def degenerate(self) -> bool:
        return "DegenerateVariance" in self.flags

    def ci(self, z: float = 1.96) -> tuple[float, float]:
        return (self.did_mean - z * self.se, self.did_mean + z * self.se)


def derived_quantities(did_mean: float, se: float, pre_rate: float, df: float) -> dict[str, float]:
    """t-statistic, two-sided p-value and percent-of-baseline for an estimate."""
    if se > 0:
        t = did_mean / se
        p = two_sided_p(t, df)
    else:
        t = p = math.nan
    pct = 100.0 * did_mean / pre_rate if pre_rate else math.nan
    return {"t_stat": t, "p_value": p, "pct_of_pre": pct}


def pair_did(pair: MatchedPair, treated: WindowCounts, control: WindowCounts) -> dict[str, int]:
    """(after_t - before_t) - (after_c - before_c) per category."""
    if pair.anchor_date is not None and (treated.anchor_date != pair.anchor_date
                                         or control.anchor_date != pair.anchor_date):
        raise AnchorMismatch(f"pair {pair.treated_lot_id}/{pair.control_lot_id}: window anchors differ")
    if treated.anchor_date != control.anchor_date:
        raise AnchorMismatch(f"pair {pair.treated_lot_id}/{pair.control_lot_id}: window anchors differ")
    ser = treated.change("serious") - control.change("serious")
    oth = treated.change("other") - control.change("other")
    return {"serious": ser, "other": oth, "total": ser + oth}


def did_estimate(pair_dids: Sequence[float], pre_rates: Sequence[float], category: str = "total") -> DidEstimate:
    """Mean within-pair DID with its standard error and Student-t p-value (df = n - 1)."""
    d = [float(v) for v in pair_dids]
    n = len(d)
    if n < 2:
        raise TooFewPairs(f"need at least 2 pairs, got {n}")
    mean = math.fsum(d) / n
    sd = math.sqrt(math.fsum((v - mean) ** 2 for v in d) / (n - 1))
    se = sd / math.sqrt(n)
    pre = math.fsum(float(v) for v in pre_rates) / len(pre_rates) if len(pre_rates) else math.nan
    flags = () if se > 0 else ("DegenerateVariance",)
    return DidEstimate(category, n, pre, mean, se, df=n - 1, flags=flags,
                       **derived_quantities(mean, se, pre, n - 1))


def two_sample_did(changes_treated: Sequence[float], changes_control: Sequence[float],
                   pre_rates: Sequence[float], category: str = "total") -> DidEstimate:
    """Difference of group-mean changes with a Welch standard error."""
    g = [float(v) for v in changes_treated]
    u = [float(v) for v in changes_control]
    if len(g) < 2 or len(u) < 2:
        raise TooFewLots("need at least 2 lots in each group")
    mg, mu = math.fsum(g) / len(g), math.fsum(u) / len(u)
    vg = math.fsum((v - mg) ** 2 for v in g) / (len(g) - 1)
    vu = math.fsum((v - mu) ** 2 for v in u) / (len(u) - 1)
    se2 = vg / len(g) + vu / len(u)
    se = math.sqrt(se2)
    if se2 > 0:
        df = se2 ** 2 / ((vg / len(g)) ** 2 / (len(g) - 1) + (vu / len(u)) ** 2 / (len(u) - 1))
    else:
        df = float(len(g) + len(u) - 2)
    pre = math.fsum(float(v) for v in pre_rates) / len(pre_rates) if len(pre_rates) else math.nan
    mean = mg - mu
    flags = () if se > 0 else ("DegenerateVariance",)
    return DidEstimate(category, len(g), pre, mean, se, df=df, flags=flags,
                       **derived_quantities(mean, se, pre, max(df, 1.0)))


@dataclass
class UnmatchedDid:
    estimates: dict[str, DidEstimate]
    counts: list[WindowCounts]
    truncated: list[str] = field(default_factory=list)


def unmatched_did(greened: Sequence[Lot], ungreened: Sequence[Lot], crimes: CrimeIndex, r: float,
                  fixed_anchor: date = UNMATCHED_ANCHOR, near_days: int = NEAR_DAYS,
                  far_days: int = FAR_DAYS) -> UnmatchedDid:
    """Greened lots (own dates) versus all ungreened lots (one fixed date)."""
    counts_g, counts_u, truncated = [], [], []
    for lot in sorted(greened, key=lambda l: l.id):
        wc = window_counts(lot, lot.greening_date, crimes, r, near_days, far_days)
        (truncated if wc.truncated else counts_g).append(wc.lot_id if wc.truncated else wc)
    for lot in sorted(ungreened, key=lambda l: l.id):
        wc = window_counts(lot, fixed_anchor, crimes, r, near_days, far_days)
        (truncated if wc.truncated else counts_u).append(wc.lot_id if wc.truncated else wc)
    est = {
        cat: two_sample_did([w.change(cat) for w in counts_g], [w.change(cat) for w in counts_u],
                            [w.before(cat) for w in counts_g], cat)
        for cat in CATEGORIES
    }
    return UnmatchedDid(est, counts_g + counts_u, truncated)


@dataclass(frozen=True)
class PairOutcome:
    pair: MatchedPair
    treated: WindowCounts
    control: WindowCounts
    did: Mapping[str, int]


@dataclass
class MatchedDid:
    radius: float
    estimates: dict[str, DidEstimate]
    outcomes: list[PairOutcome]
    truncated: list[str] = field(default_factory=list)


def pair_outcomes(pairs: Iterable[MatchedPair], lots: Mapping[str, Lot], crimes: CrimeIndex, r: float,
                  near_days: int = NEAR_DAYS, far_days: int = FAR_DAYS):
    """Window counts and DIDs per pair; pairs with a truncated window are dropped."""
    outcomes, truncated = [], []
    for pair in sorted(pairs, key=lambda p: (p.treated_lot_id, p.control_lot_id)):
        wt = window_counts(lots[pair.treated_lot_id], pair.anchor_date, crimes, r, near_days, far_days)
        wc = window_counts(lots[pair.control_lot_id], pair.anchor_date, crimes, r, near_days, far_days)
        if wt.truncated or wc.truncated:
            truncated.append(pair.treated_lot_id)
            continue
        outcomes.append(PairOutcome(pair, wt, wc, pair_did(pair, wt, wc)))
    return outcomes, truncated


def estimate_from_outcomes(outcomes: Sequence[PairOutcome], pre_rate_mode: str = "treated") -> dict[str, DidEstimate]:
    """Serious/other/total estimates from pair outcomes.

    ``pre_rate_mode`` is ``"treated"`` (treated lots' before counts) or
    ``"both"`` (both members of every pair).
    """
    if pre_rate_mode not in ("treated", "both"):
        raise ValueError(f"unknown pre_rate_mode {pre_rate_mode!r}")
    out = {}
    for cat in CATEGORIES:
        pre = [o.treated.before(cat) for o in outcomes]
        if pre_rate_mode == "both":
            pre += [o.control.before(cat) for o in outcomes]
        out[cat] = did_estimate([o.did[cat] for o in outcomes], pre, cat)
    return out


def matched_did(pairs: Iterable[MatchedPair], lots: Mapping[str, Lot], crimes: CrimeIndex, r: float,
                pre_rate_mode: str = "treated", near_days: int = NEAR_DAYS,
                far_days: int = FAR_DAYS) -> MatchedDid:
    """Within-pair DID estimates at radius ``r``."""
    outcomes, truncated = pair_outcomes(pairs, lots, crimes, r, near_days, far_days)
    return MatchedDid(float(r), estimate_from_outcomes(outcomes, pre_rate_mode), outcomes, truncated)
