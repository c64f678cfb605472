"""Static SVG figures rendered from the stage CSVs.

* ``balance.svg``: one row per covariate, a gray circle at the unmatched SMD
  and a black triangle at the matched SMD, with a vertical line at zero.
* ``forest.svg``: one row per moderation subset with +/-1.96 SE whiskers;
  solid markers when p < 0.05, open otherwise; a vertical line at the
  pooled estimate.
* ``roc.svg``: one ROC polyline per covariate-set ablation.

Output is plain SVG 1.1 with coordinates printed to two decimals, so the
bytes depend only on the CSV contents.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

from .artifacts import BalanceEntry, ForestEntry, read_balance, read_moderation, read_roc
from .errors import EmptyReport

SIGNIFICANCE = 0.05
Z95 = 1.96
ROW_HEIGHT = 18.0
LEFT, RIGHT, TOP, BOTTOM = 170.0, 30.0, 30.0, 40.0
PLOT_WIDTH = 400.0
GRAY = "#8c8c8c"


def fmt(v: float) -> str:
    """Fixed two-decimal coordinate; never prints ``-0.00``."""
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


@dataclass(frozen=True)
class Axis:
    """Affine map from data values to pixel coordinates."""

    lo: float
    hi: float
    px_lo: float
    px_hi: float

    def __call__(self, v: float) -> float:
        return self.px_lo + (v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)

    @classmethod
    def covering(cls, values: Sequence[float], px_lo: float, px_hi: float, pad: float = 0.05,
                 symmetric: bool = False) -> "Axis":
        vals = [v for v in values if math.isfinite(v)] or [0.0]
        lo, hi = min(vals), max(vals)
        if symmetric:
            m = max(abs(lo), abs(hi)) or 1.0
            lo, hi = -m, m
        if hi == lo:
            lo, hi = lo - 1.0, hi + 1.0
        span = hi - lo
        return cls(lo - pad * span, hi + pad * span, px_lo, px_hi)


def _document(width: float, height: float, body: list[str], title: str) -> str:
    head = [
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{fmt(width)}" '
        f'height="{fmt(height)}" viewBox="0 0 {fmt(width)} {fmt(height)}">',
        f"<title>{escape(title)}</title>",
        f'<rect x="0" y="0" width="{fmt(width)}" height="{fmt(height)}" fill="white"/>',
    ]
    return "\n".join(head + body + ["</svg>"]) + "\n"


def _text(x, y, s, anchor="end", size=11):
    return (f'<text x="{fmt(x)}" y="{fmt(y)}" font-family="sans-serif" font-size="{size}" '
            f'text-anchor="{anchor}">{escape(s)}</text>')


def _ticks(axis: Axis, y: float, n: int = 5) -> list[str]:
    out = [f'<line class="axis" x1="{fmt(axis.px_lo)}" y1="{fmt(y)}" x2="{fmt(axis.px_hi)}" '
           f'y2="{fmt(y)}" stroke="black"/>']
    for k in range(n + 1):
        v = axis.lo + (axis.hi - axis.lo) * k / n
        x = axis(v)
        out.append(f'<line x1="{fmt(x)}" y1="{fmt(y)}" x2="{fmt(x)}" y2="{fmt(y + 4)}" stroke="black"/>')
        out.append(_text(x, y + 16, f"{v:.2f}", "middle", 10))
    return out


def _triangle(x: float, y: float, r: float = 5.0) -> str:
    pts = f"{fmt(x)},{fmt(y - r)} {fmt(x + r)},{fmt(y + r * 0.8)} {fmt(x - r)},{fmt(y + r * 0.8)}"
    return f'<polygon class="marker matched" points="{pts}" fill="black"/>'


# ----------------------------------------------------------------- figures

def balance_svg(rows: Sequence[BalanceEntry]) -> str:
    """Standardized mean differences before and after matching.

    Raises
    ------
    EmptyReport
        If there are no rows.
    """
    if not rows:
        raise EmptyReport("balance: no covariates to plot")
    height = TOP + BOTTOM + ROW_HEIGHT * len(rows)
    axis = Axis.covering([v for r in rows for v in (r.smd_unmatched, r.smd_matched)],
                         LEFT, LEFT + PLOT_WIDTH, symmetric=True)
    body = [_text(LEFT + PLOT_WIDTH / 2, 18, "Standardized mean difference", "middle", 12)]
    base = TOP + ROW_HEIGHT * len(rows)
    body.append(f'<line class="zero" x1="{fmt(axis(0.0))}" y1="{fmt(TOP)}" x2="{fmt(axis(0.0))}" '
                f'y2="{fmt(base)}" stroke="black" stroke-dasharray="3,3"/>')
    for i, r in enumerate(rows):
        y = TOP + ROW_HEIGHT * (i + 0.5)
        body.append(_text(LEFT - 8, y + 4, r.covariate))
        # an undefined SMD (zero pooled SD) has no marker
        if math.isfinite(r.smd_unmatched):
            body.append(f'<circle class="marker unmatched" cx="{fmt(axis(r.smd_unmatched))}" cy="{fmt(y)}" '
                        f'r="4.00" fill="{GRAY}"/>')
        if math.isfinite(r.smd_matched):
            body.append(_triangle(axis(r.smd_matched), y))
    body += _ticks(axis, base)
    return _document(LEFT + PLOT_WIDTH + RIGHT, height + 10, body, "Covariate balance")


def forest_axis(pooled: ForestEntry, rows: Sequence[ForestEntry]) -> Axis:
    """The x-axis used by :func:`forest_svg` (exposed for reading back positions)."""
    vals = [0.0, pooled.did_mean]
    for r in rows:
        vals += [r.did_mean - Z95 * r.se, r.did_mean + Z95 * r.se]
    return Axis.covering(vals, LEFT, LEFT + PLOT_WIDTH)


def forest_svg(pooled: ForestEntry, rows: Sequence[ForestEntry]) -> str:
    """Subset estimates with 95% whiskers around the pooled estimate.

    Raises
    ------
    EmptyReport
        If there is no pooled estimate or no subset row.
    """
    if pooled is None or not rows:
        raise EmptyReport("forest: no moderation estimates to plot")
    axis = forest_axis(pooled, rows)
    base = TOP + ROW_HEIGHT * len(rows)
    body = [_text(LEFT + PLOT_WIDTH / 2, 18, "Within-pair DID by subset", "middle", 12)]
    body.append(f'<line class="pooled" x1="{fmt(axis(pooled.did_mean))}" y1="{fmt(TOP)}" '
                f'x2="{fmt(axis(pooled.did_mean))}" y2="{fmt(base)}" stroke="black"/>')
    body.append(f'<line class="zero" x1="{fmt(axis(0.0))}" y1="{fmt(TOP)}" x2="{fmt(axis(0.0))}" '
                f'y2="{fmt(base)}" stroke="{GRAY}" stroke-dasharray="3,3"/>')
    for i, r in enumerate(rows):
        y = TOP + ROW_HEIGHT * (i + 0.5)
        body.append(_text(LEFT - 8, y + 4, r.label))
        body.append(f'<line class="whisker" x1="{fmt(axis(r.did_mean - Z95 * r.se))}" y1="{fmt(y)}" '
                    f'x2="{fmt(axis(r.did_mean + Z95 * r.se))}" y2="{fmt(y)}" stroke="black"/>')
        solid = r.p_value < SIGNIFICANCE
        fill = "black" if solid else "white"
        body.append(f'<circle class="marker {"solid" if solid else "open"}" cx="{fmt(axis(r.did_mean))}" '
                    f'cy="{fmt(y)}" r="4.00" fill="{fill}" stroke="black"/>')
    body += _ticks(axis, base)
    return _document(LEFT + PLOT_WIDTH + RIGHT, base + BOTTOM + 10, body, "Moderation")


def roc_svg(curves: Mapping[str, Sequence[tuple[float, float]]]) -> str:
    """ROC curves, one polyline per ablation.

    Raises
    ------
    EmptyReport
        If there are no curves.
    """
    if not curves:
        raise EmptyReport("roc: no curves to plot")
    size = 320.0
    x0, y0 = 50.0, 30.0
    ax = Axis(0.0, 1.0, x0, x0 + size)
    ay = Axis(0.0, 1.0, y0 + size, y0)
    dashes = ("", "6,3", "2,2", "8,2,2,2", "1,3", "4,4")
    body = [
        _text(x0 + size / 2, 18, "ROC curves by covariate set", "middle", 12),
        f'<rect x="{fmt(x0)}" y="{fmt(y0)}" width="{fmt(size)}" height="{fmt(size)}" fill="none" stroke="black"/>',
        f'<line class="chance" x1="{fmt(ax(0))}" y1="{fmt(ay(0))}" x2="{fmt(ax(1))}" y2="{fmt(ay(1))}" '
        f'stroke="{GRAY}" stroke-dasharray="3,3"/>',
    ]
    for k, (name, pts) in enumerate(curves.items()):
        coords = " ".join(f"{fmt(ax(f))},{fmt(ay(t))}" for f, t in pts)
        dash = dashes[k % len(dashes)]
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        body.append(f'<polyline class="roc" data-name="{escape(name)}" points="{coords}" fill="none" '
                    f'stroke="black"{extra}/>')
        ly = y0 + 16 + 14 * k
        body.append(f'<line x1="{fmt(x0 + size + 10)}" y1="{fmt(ly)}" x2="{fmt(x0 + size + 30)}" y2="{fmt(ly)}" '
                    f'stroke="black"{extra}/>')
        body.append(_text(x0 + size + 34, ly + 4, name, "start", 10))
    body.append(_text(x0 + size / 2, y0 + size + 30, "false positive rate", "middle", 10))
    body.append(_text(14, y0 + size / 2, "true positive rate", "middle", 10))
    return _document(x0 + size + 130, y0 + size + 45, body, "ROC")


def render_figures(directory, write=None) -> dict[str, Path]:
    """Read balance.csv, moderation.csv and roc.csv from ``directory`` and write the SVGs.

    ``write(path, text)`` stores one file (plain ``write_text`` by default).
    Missing CSVs are skipped; raises EmptyReport if none could be drawn.
    """
    d = Path(directory)
    out = {}
    sources = (
        ("balance.svg", "balance.csv", lambda t: balance_svg(read_balance(t))),
        ("forest.svg", "moderation.csv", lambda t: forest_svg(*read_moderation(t))),
        ("roc.svg", "roc.csv", lambda t: roc_svg(read_roc(t))),
    )
    for svg_name, csv_name, render in sources:
        src = d / csv_name
        if not src.exists():
            continue
        target = d / svg_name
        text = render(src.read_text("utf-8"))
        if write is None:
            target.write_text(text, encoding="utf-8")
        else:
            write(target, text)
        out[svg_name] = target
    if not out:
        raise EmptyReport(f"no figure inputs in {d}")
    return out
