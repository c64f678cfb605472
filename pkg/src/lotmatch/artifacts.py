"""CSV formats of the pipeline's stage outputs.

Writers return text (floats as ``repr``, so values round-trip exactly);
readers take text and return plain rows.  Files are written by the CLI.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from datetime import date
from typing import Iterable, Mapping, Sequence

from .did import CATEGORIES, DidEstimate
from .matcher import BalanceRow, MatchedPair
from .moderation import ModerationReport
from .propensity import ClassifierMetrics

PROPENSITY_HEADER = ("lot_id", "status", "score")
METRICS_HEADER = ("ablation",) + ClassifierMetrics.FIELDS
ROC_HEADER = ("ablation", "fpr", "tpr")
PAIRS_HEADER = ("treated_id", "control_id", "treated_score", "control_score", "gap", "anchor_date")
BALANCE_HEADER = ("covariate", "smd_unmatched", "smd_matched")
DID_HEADER = ("category", "n_pairs", "pre_rate", "did_mean", "se", "t", "p", "pct")
UNMATCHED_HEADER = ("radius", "category", "n_greened", "pre_rate", "did_mean", "se", "t", "p", "pct")
MODERATION_HEADER = ("kind", "dimension", "selector", "n_pairs", "did_mean", "se", "t", "p",
                     "significant", "n_excluded", "flags")
POOLED = "pooled"


def _num(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _table(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_num(v) for v in row])
    return buf.getvalue()


def read_table(text: str, header: Sequence[str]) -> list[dict[str, str]]:
    """Rows of a stage CSV as dicts; raises ValueError on a wrong header."""
    reader = csv.reader(io.StringIO(text))
    got = next(reader, None)
    if got is None or tuple(got[: len(header)]) != tuple(header):
        raise ValueError(f"expected header {','.join(header)}")
    return [dict(zip(got, r)) for r in reader if r]


def _float(s: str) -> float:
    return float(s) if s != "" else math.nan


# ------------------------------------------------------------- propensity

def format_propensity(lot_ids: Sequence[str], greened: Sequence[bool], scores: Sequence[float]) -> str:
    return _table(PROPENSITY_HEADER, ((i, "greened" if g else "ungreened", float(s))
                                      for i, g, s in zip(lot_ids, greened, scores)))


def read_propensity(text: str) -> list[tuple[str, bool, float]]:
    return [(r["lot_id"], r["status"] == "greened", float(r["score"])) for r in read_table(text, PROPENSITY_HEADER)]


def format_metrics(metrics: Mapping[str, ClassifierMetrics]) -> str:
    return _table(METRICS_HEADER, ([name] + [float(v) for v in m.as_row()] for name, m in metrics.items()))


def format_roc(curves: Mapping[str, Sequence[tuple[float, float]]]) -> str:
    return _table(ROC_HEADER, ((name, float(f), float(t)) for name, c in curves.items() for f, t in c))


def read_roc(text: str) -> dict[str, list[tuple[float, float]]]:
    out: dict[str, list[tuple[float, float]]] = {}
    for r in read_table(text, ROC_HEADER):
        out.setdefault(r["ablation"], []).append((float(r["fpr"]), float(r["tpr"])))
    return out


# ---------------------------------------------------------------- matching

def format_pairs(pairs: Sequence[MatchedPair]) -> str:
    return _table(PAIRS_HEADER, ((p.treated_lot_id, p.control_lot_id, float(p.treated_score),
                                  float(p.control_score), float(p.score_gap),
                                  p.anchor_date.isoformat() if p.anchor_date else "") for p in pairs))


def read_pairs(text: str) -> list[MatchedPair]:
    return [MatchedPair(r["treated_id"], r["control_id"], float(r["treated_score"]),
                        float(r["control_score"]), float(r["gap"]),
                        date.fromisoformat(r["anchor_date"]) if r["anchor_date"] else None)
            for r in read_table(text, PAIRS_HEADER)]


def format_balance(rows: Sequence[BalanceRow]) -> str:
    return _table(BALANCE_HEADER, ((b.covariate, float(b.smd_unmatched), float(b.smd_matched)) for b in rows))


@dataclass(frozen=True)
class BalanceEntry:
    covariate: str
    smd_unmatched: float
    smd_matched: float


def read_balance(text: str) -> list[BalanceEntry]:
    return [BalanceEntry(r["covariate"], _float(r["smd_unmatched"]), _float(r["smd_matched"]))
            for r in read_table(text, BALANCE_HEADER)]


# --------------------------------------------------------------------- DID

def _did_values(e: DidEstimate) -> list:
    return [float(e.pre_rate), float(e.did_mean), float(e.se), float(e.t_stat), float(e.p_value),
            float(e.pct_of_pre)]


def format_did(estimates: Mapping[str, DidEstimate]) -> str:
    return _table(DID_HEADER, ([c, estimates[c].n_pairs] + _did_values(estimates[c]) for c in CATEGORIES))


def read_did(text: str) -> dict[str, dict[str, float]]:
    out = {}
    for r in read_table(text, DID_HEADER):
        out[r["category"]] = {k: _float(v) for k, v in r.items() if k != "category"}
    return out


def format_unmatched(by_radius: Mapping[float, Mapping[str, DidEstimate]]) -> str:
    rows = []
    for radius in sorted(by_radius):
        est = by_radius[radius]
        rows += [[float(radius), c, est[c].n_pairs] + _did_values(est[c]) for c in CATEGORIES]
    return _table(UNMATCHED_HEADER, rows)


# -------------------------------------------------------------- moderation

def format_moderation(report: ModerationReport) -> str:
    p = report.pooled
    rows = [[POOLED, "all", "all", p.n_pairs, float(p.did_mean), float(p.se), float(p.t_stat),
             float(p.p_value), int(p.p_value < 0.05), 0, ";".join(p.flags)]]
    for r in report.rows:
        e = r.estimate
        if e is None:
            vals = ["", "", "", "", 0]
        else:
            vals = [float(e.did_mean), float(e.se), float(e.t_stat), float(e.p_value), int(r.significant)]
        rows.append([r.spec.kind, r.spec.dimension, r.spec.selector, r.n_pairs] + vals
                    + [r.n_excluded, ";".join(r.flags)])
    return _table(MODERATION_HEADER, rows)


@dataclass(frozen=True)
class ForestEntry:
    label: str
    did_mean: float
    se: float
    p_value: float


def read_moderation(text: str) -> tuple[ForestEntry | None, list[ForestEntry]]:
    """``(pooled, rows)``; rows without an estimate are left out."""
    pooled, rows = None, []
    for r in read_table(text, MODERATION_HEADER):
        if r["did_mean"] == "":
            continue
        entry = ForestEntry(f"{r['dimension']} {r['selector']}", float(r["did_mean"]), float(r["se"]),
                            _float(r["p"]))
        if r["kind"] == POOLED:
            pooled = entry
        else:
            rows.append(entry)
    return pooled, rows
