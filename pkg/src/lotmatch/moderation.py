"""Within-pair DID on subsets of matched pairs (land-use quartiles, business presence).

A pair's land-use exposure is the mean of its two lots' proportions.  For a
business type, a pair is Present when both lots have it nearby, Absent when
neither does, and Mixed (left out) otherwise.

Quartile cut points use nearest-rank quantiles over all pairs.  In the
default ``"caption"`` mode the top subset is exposure >= Q3 and the bottom
subset exposure <= Q1.  ``"text"`` mode reads "top" as the largest 75%,
i.e. exposure > Q1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .datamodel import BUSINESS_TYPES, ZONING_TYPES
from .did import DidEstimate, PairOutcome, estimate_from_outcomes
from .errors import EmptySubset, MissingCovariates, TooFewPairs
from .features import CovariateTable
from .matcher import MatchedPair

LAND_USE = "land_use_quartile"
BUSINESS = "business_presence"
TOP, BOTTOM, PRESENT, ABSENT = "top", "bottom", "present", "absent"
MIXED = "mixed"
SIGNIFICANCE = 0.05

_SELECTORS = {LAND_USE: (TOP, BOTTOM), BUSINESS: (PRESENT, ABSENT)}


@dataclass(frozen=True)
class SubgroupSpec:
    kind: str
    dimension: str
    selector: str

    def __post_init__(self):
        if self.kind not in _SELECTORS:
            raise ValueError(f"unknown subgroup kind {self.kind!r}")
        valid = ZONING_TYPES if self.kind == LAND_USE else BUSINESS_TYPES
        if self.dimension not in valid:
            raise ValueError(f"{self.dimension!r} is not a valid dimension for {self.kind}")
        if self.selector not in _SELECTORS[self.kind]:
            raise ValueError(f"{self.selector!r} is not a valid selector for {self.kind}")

    @property
    def column(self) -> str:
        return f"land_{self.dimension}" if self.kind == LAND_USE else f"biz_{self.dimension}"


def pair_exposure(pair: MatchedPair, covariates: CovariateTable, kind: str, dimension: str,
                  exposure_mode: str = "pair_mean"):
    """Exposure of one pair along one dimension.

    Returns a float for land use and ``"present"``/``"absent"``/``"mixed"``
    for business presence.  ``exposure_mode="treated"`` uses the treated lot
    alone.
    """
    for lid in (pair.treated_lot_id, pair.control_lot_id):
        if lid not in covariates:
            raise MissingCovariates(f"no covariates for lot {lid}")
    column = f"land_{dimension}" if kind == LAND_USE else f"biz_{dimension}"
    j = covariates.columns.index(column)
    t = covariates.row(pair.treated_lot_id)[j]
    c = covariates.row(pair.control_lot_id)[j]
    if exposure_mode == "treated":
        c = t
    elif exposure_mode != "pair_mean":
        raise ValueError(f"unknown exposure_mode {exposure_mode!r}")
    if kind == LAND_USE:
        return float((t + c) / 2.0)
    if t >= 1 and c >= 1:
        return PRESENT
    if t < 1 and c < 1:
        return ABSENT
    return MIXED


def nearest_rank(values: Sequence[float], q: float) -> float:
    """Nearest-rank quantile: the ceil(q * n)-th smallest value."""
    v = sorted(values)
    if not v:
        raise ValueError("no values")
    k = max(1, math.ceil(q * len(v)))
    return v[k - 1]


@dataclass
class Subset:
    indices: list[int]
    degenerate: bool = False


def subset_pairs(pairs: Sequence, spec: SubgroupSpec, exposures: Sequence, quartile_mode: str = "caption") -> Subset:
    """Positions of the pairs selected by ``spec``.

    ``exposures`` is aligned with ``pairs``.

    Raises
    ------
    EmptySubset
        If no pair is selected.
    """
    if len(exposures) != len(pairs):
        raise ValueError("exposures must align with pairs")
    degenerate = False
    if spec.kind == LAND_USE:
        if quartile_mode not in ("caption", "text"):
            raise ValueError(f"unknown quartile_mode {quartile_mode!r}")
        if not pairs:
            raise EmptySubset(f"{spec}: no pairs")
        q1 = nearest_rank(exposures, 0.25)
        q3 = nearest_rank(exposures, 0.75)
        degenerate = min(exposures) == max(exposures)
        if spec.selector == BOTTOM:
            keep = [i for i, e in enumerate(exposures) if e <= q1]
        elif quartile_mode == "caption":
            keep = [i for i, e in enumerate(exposures) if e >= q3]
        else:
            keep = [i for i, e in enumerate(exposures) if e > q1]
    else:
        keep = [i for i, e in enumerate(exposures) if e == spec.selector]
    if not keep:
        raise EmptySubset(f"{spec.kind}/{spec.dimension}/{spec.selector}: no pairs selected")
    return Subset(keep, degenerate)


@dataclass(frozen=True)
class ModerationRow:
    spec: SubgroupSpec
    n_pairs: int
    n_excluded: int
    estimate: Optional[DidEstimate]
    flags: tuple[str, ...] = ()

    @property
    def significant(self) -> bool:
        return self.estimate is not None and self.estimate.p_value < SIGNIFICANCE


@dataclass
class ModerationReport:
    pooled: DidEstimate
    rows: list[ModerationRow]


def all_specs() -> list[SubgroupSpec]:
    """Land-use rows first, then business rows; alphabetical within each."""
    specs = [SubgroupSpec(LAND_USE, d, s) for d in sorted(ZONING_TYPES) for s in (TOP, BOTTOM)]
    specs += [SubgroupSpec(BUSINESS, d, s) for d in sorted(BUSINESS_TYPES) for s in (PRESENT, ABSENT)]
    return specs


def moderation_report(outcomes: Sequence[PairOutcome], covariates: CovariateTable,
                      quartile_mode: str = "caption", exposure_mode: str = "pair_mean",
                      pre_rate_mode: str = "treated", category: str = "total",
                      specs: Sequence[SubgroupSpec] | None = None) -> ModerationReport:
    """DID estimate for every subgroup plus the pooled all-pairs estimate."""
    outcomes = sorted(outcomes, key=lambda o: (o.pair.treated_lot_id, o.pair.control_lot_id))
    pooled = estimate_from_outcomes(outcomes, pre_rate_mode)[category]
    pairs = [o.pair for o in outcomes]
    cache: dict[tuple[str, str], list] = {}
    rows = []
    for spec in specs if specs is not None else all_specs():
        key = (spec.kind, spec.dimension)
        if key not in cache:
            cache[key] = [pair_exposure(p, covariates, spec.kind, spec.dimension, exposure_mode) for p in pairs]
        exposures = cache[key]
        try:
            sub = subset_pairs(pairs, spec, exposures, quartile_mode)
        except EmptySubset:
            rows.append(ModerationRow(spec, 0, len(pairs), None, ("EmptySubset",)))
            continue
        flags = ("Degenerate",) if sub.degenerate else ()
        chosen = [outcomes[i] for i in sub.indices]
        try:
            est = estimate_from_outcomes(chosen, pre_rate_mode)[category]
        except TooFewPairs:
            rows.append(ModerationRow(spec, len(chosen), len(pairs) - len(chosen), None, flags + ("TooFewPairs",)))
            continue
        rows.append(ModerationRow(spec, len(chosen), len(pairs) - len(chosen), est, flags + est.flags))
    return ModerationReport(pooled, rows)
