"""Surrounding-area covariates for each vacant lot.

For a lot and a radius ``r`` the covariate vector holds

* population and racial shares of census blocks whose centroid is within r,
* per-capita income and poverty-bracket shares of the nearest block group,
* the area share of each zoning type among zoned lots whose centroid is
  within r (each lot contributes its full area, no polygon clipping),
* presence of each business type and the number of businesses within r.

Every layer is sorted by id on construction, so results do not depend on
input row order.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .datamodel import BUSINESS_TYPES, ZONING_OTHER, ZONING_TYPES, Lot
from .errors import NoBlockGroups
from .geoindex import GridIndex, record_xy

DEMOGRAPHIC_COLUMNS = ("pop_total", "frac_white", "frac_black", "frac_hispanic", "frac_asian")
ECONOMIC_COLUMNS = ("per_capita_income",) + tuple(f"pov_b{i}" for i in range(1, 8))
LAND_USE_COLUMNS = tuple(f"land_{t}" for t in ZONING_TYPES)
BUSINESS_COLUMNS = tuple(f"biz_{t}" for t in BUSINESS_TYPES) + ("business_count",)
COVARIATE_COLUMNS = DEMOGRAPHIC_COLUMNS + ECONOMIC_COLUMNS + LAND_USE_COLUMNS + BUSINESS_COLUMNS

DEFAULT_RADIUS = 200.0

FLAG_NO_ZONING = "no_zoning_in_radius"
FLAG_NO_POPULATION = "no_population_in_radius"


def _sorted_by_id(rows):
    return tuple(sorted(rows, key=lambda r: r.id))


class _PointLayer:
    def __init__(self, rows: Sequence, cell_size: float = DEFAULT_RADIUS):
        self.rows = _sorted_by_id(rows)
        x, y = record_xy(self.rows)
        self.index = GridIndex(x, y, cell_size=cell_size)

    def __len__(self):
        return len(self.rows)


class ZoningLayer(_PointLayer):
    def __init__(self, rows, cell_size=DEFAULT_RADIUS):
        super().__init__(rows, cell_size)
        codes = {t: i for i, t in enumerate(ZONING_TYPES)}
        codes[ZONING_OTHER] = len(ZONING_TYPES)
        self.area = np.array([r.area for r in self.rows], dtype=float)
        self.code = np.array([codes[r.zoning] for r in self.rows], dtype=np.int64)


class BlockLayer(_PointLayer):
    def __init__(self, rows, cell_size=DEFAULT_RADIUS):
        super().__init__(rows, cell_size)
        self.counts = np.array(
            [(r.pop_total, r.pop_white, r.pop_black, r.pop_hispanic, r.pop_asian) for r in self.rows],
            dtype=float,
        ).reshape(-1, 5)


class BusinessLayer(_PointLayer):
    def __init__(self, rows, cell_size=DEFAULT_RADIUS):
        super().__init__(rows, cell_size)
        self.types = np.array(
            [[t in r.types for t in BUSINESS_TYPES] for r in self.rows], dtype=bool
        ).reshape(-1, len(BUSINESS_TYPES))


class BlockGroupLayer:
    def __init__(self, rows: Sequence):
        self.rows = _sorted_by_id(rows)
        self.x, self.y = record_xy(self.rows)
        self.values = np.array(
            [(r.per_capita_income, *r.poverty_fracs) for r in self.rows], dtype=float
        ).reshape(-1, 8)

    def __len__(self):
        return len(self.rows)

    def nearest(self, x, y) -> np.ndarray:
        """Row position of the nearest centroid; distance ties go to the smaller id."""
        if not len(self.rows):
            raise NoBlockGroups("no block groups to assign from")
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        out = np.empty(x.size, dtype=np.int64)
        step = max(1, 2_000_000 // max(1, len(self.rows)))
        for s in range(0, x.size, step):
            d = np.hypot(x[s:s + step, None] - self.x[None, :], y[s:s + step, None] - self.y[None, :])
            out[s:s + step] = np.argmin(d, axis=1)  # first minimum = smallest id
        return out


@dataclass
class ContextLayers:
    """The four projected context layers with their spatial indexes."""

    blocks: BlockLayer
    blockgroups: BlockGroupLayer
    zoning: ZoningLayer
    businesses: BusinessLayer

    @classmethod
    def from_rows(cls, blocks, blockgroups, zoning, businesses, cell_size=DEFAULT_RADIUS):
        return cls(BlockLayer(blocks, cell_size), BlockGroupLayer(blockgroups),
                   ZoningLayer(zoning, cell_size), BusinessLayer(businesses, cell_size))


def _layer(obj, cls):
    return obj if isinstance(obj, cls) else cls(obj)


def _xy(lot):
    if lot.x is None:
        raise ValueError(f"lot {lot.id} is not projected")
    return (lot.x, lot.y)


def land_use_proportions(lot: Lot, zoning, r: float = DEFAULT_RADIUS) -> np.ndarray:
    """Area share of each of the eight zoning types within ``r``; zeros if none."""
    zoning = _layer(zoning, ZoningLayer)
    idx = zoning.index.query(_xy(lot), r)
    by_type = np.bincount(zoning.code[idx], weights=zoning.area[idx], minlength=len(ZONING_TYPES) + 1)
    # the denominator sums the same per-type tallies, so no share can round above 1
    total = by_type.sum()
    if total == 0:
        return np.zeros(len(ZONING_TYPES))
    return by_type[: len(ZONING_TYPES)] / total


def demographic_features(lot: Lot, blocks, r: float = DEFAULT_RADIUS) -> np.ndarray:
    """``(pop_total, frac_white, frac_black, frac_hispanic, frac_asian)``."""
    blocks = _layer(blocks, BlockLayer)
    idx = blocks.index.query(_xy(lot), r)
    sums = blocks.counts[idx].sum(axis=0)
    out = np.zeros(5)
    out[0] = sums[0]
    if sums[0] > 0:
        out[1:] = sums[1:] / sums[0]
    return out


def economic_features(lot: Lot, blockgroups) -> np.ndarray:
    """Income and the seven poverty-bracket shares of the nearest block group."""
    blockgroups = _layer(blockgroups, BlockGroupLayer)
    x, y = _xy(lot)
    return blockgroups.values[blockgroups.nearest(x, y)[0]].copy()


def business_features(lot: Lot, businesses, r: float = DEFAULT_RADIUS) -> np.ndarray:
    """Eight presence indicators followed by the business count.

    A business with several types counts once.
    """
    businesses = _layer(businesses, BusinessLayer)
    idx = businesses.index.query(_xy(lot), r)
    out = np.zeros(len(BUSINESS_TYPES) + 1)
    out[:-1] = businesses.types[idx].any(axis=0)
    out[-1] = idx.size
    return out


@dataclass
class CovariateTable:
    """Covariate vectors keyed by lot id, rows sorted by id."""

    lot_ids: tuple[str, ...]
    values: np.ndarray
    columns: tuple[str, ...] = COVARIATE_COLUMNS
    flags: tuple[frozenset, ...] = ()
    radius: float = DEFAULT_RADIUS
    _pos: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(len(self.lot_ids), len(self.columns))
        if not self.flags:
            self.flags = tuple(frozenset() for _ in self.lot_ids)
        self._pos = {lid: i for i, lid in enumerate(self.lot_ids)}

    def __len__(self):
        return len(self.lot_ids)

    def __contains__(self, lot_id):
        return lot_id in self._pos

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def row(self, lot_id: str) -> np.ndarray:
        return self.values[self._pos[lot_id]]

    def rows_for(self, lot_ids: Sequence[str]) -> np.ndarray:
        return self.values[[self._pos[i] for i in lot_ids]]

    def vector(self, lot_id: str) -> dict[str, float]:
        return dict(zip(self.columns, self.row(lot_id).tolist()))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("lot_id",) + self.columns)
        for lid, vals in zip(self.lot_ids, self.values.tolist()):
            w.writerow([lid] + [repr(v) for v in vals])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, radius: float = DEFAULT_RADIUS) -> "CovariateTable":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], [r for r in rows[1:] if r]
        if header[0] != "lot_id":
            raise ValueError("covariates file must start with a lot_id column")
        ids = tuple(r[0] for r in body)
        vals = np.array([[float(v) for v in r[1:]] for r in body], dtype=float)
        return cls(ids, vals.reshape(len(ids), len(header) - 1), tuple(header[1:]), radius=radius)


def build_covariates(lots: Sequence[Lot], layers: ContextLayers, r: float = DEFAULT_RADIUS) -> CovariateTable:
    """Covariate vector for every lot, sorted by lot id.

    Raises
    ------
    NoBlockGroups
        If the block-group layer is empty.
    """
    lots = _sorted_by_id(lots)
    n = len(lots)
    values = np.zeros((n, len(COVARIATE_COLUMNS)))
    flags = []
    if n:
        lx, ly = record_xy(lots)
        values[:, 5:13] = layers.blockgroups.values[layers.blockgroups.nearest(lx, ly)]
    for i, lot in enumerate(lots):
        demo = demographic_features(lot, layers.blocks, r)
        land = land_use_proportions(lot, layers.zoning, r)
        values[i, 0:5] = demo
        values[i, 13:21] = land
        values[i, 21:30] = business_features(lot, layers.businesses, r)
        f = set()
        if demo[0] == 0:
            f.add(FLAG_NO_POPULATION)
        if layers.zoning.area[layers.zoning.index.query((lot.x, lot.y), r)].sum() == 0:
            f.add(FLAG_NO_ZONING)
        flags.append(frozenset(f))
    return CovariateTable(tuple(l.id for l in lots), values, COVARIATE_COLUMNS, tuple(flags), r)
