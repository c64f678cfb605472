"""Domain records and CSV ingestion for the six input layers.

Every layer is a comma-separated UTF-8 file with a header row.  Rows that
fail validation are collected as :class:`Reject` entries instead of aborting
the parse; only a missing header column is fatal.
"""
from __future__ import annotations

import csv
import io
import math
import os
import re
from dataclasses import dataclass, fields
from datetime import date, datetime
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .errors import InvariantViolation, MalformedRow, MissingColumn

ZONING_TYPES = (
    "residential",
    "commercial",
    "industrial",
    "civic",
    "transportation",
    "cultural",
    "water",
    "vacant",
)
ZONING_OTHER = "other"

BUSINESS_TYPES = (
    "cafe",
    "convenience",
    "gym",
    "liquor",
    "lodging",
    "nightlife",
    "pharmacy",
    "restaurant",
)

# income-to-poverty-line ratio brackets, lower bounds inclusive
POVERTY_BRACKETS = (
    (0.0, 0.5),
    (0.5, 1.0),
    (1.0, 1.25),
    (1.25, 1.5),
    (1.5, 1.85),
    (1.85, 2.0),
    (2.0, math.inf),
)

GREENING_START = date(2007, 9, 1)
GREENING_END = date(2017, 9, 1)
CRIME_START = datetime(2007, 1, 1)
CRIME_END = datetime(2020, 1, 1)


class Status(str, Enum):
    GREENED = "greened"
    UNGREENED = "ungreened"


class CrimeCategory(str, Enum):
    SERIOUS = "serious"
    OTHER = "other"
    EXCLUDED = "excluded"


class LayerKind(str, Enum):
    LOTS = "lots"
    CRIMES = "crimes"
    BLOCKS = "blocks"
    BLOCKGROUPS = "blockgroups"
    ZONING = "zoning"
    BUSINESSES = "businesses"


@dataclass(frozen=True, slots=True)
class Lot:
    id: str
    lon: float
    lat: float
    status: Status
    greening_date: Optional[date] = None
    x: Optional[float] = None
    y: Optional[float] = None

    @property
    def greened(self) -> bool:
        return self.status is Status.GREENED


@dataclass(frozen=True, slots=True)
class CrimeEvent:
    id: str
    timestamp: datetime
    lon: float
    lat: float
    raw_type: str
    category: CrimeCategory
    x: Optional[float] = None
    y: Optional[float] = None


@dataclass(frozen=True, slots=True)
class CensusBlock:
    id: str
    lon: float
    lat: float
    pop_total: int
    pop_white: int
    pop_black: int
    pop_hispanic: int
    pop_asian: int
    x: Optional[float] = None
    y: Optional[float] = None


@dataclass(frozen=True, slots=True)
class BlockGroup:
    id: str
    lon: float
    lat: float
    per_capita_income: float
    poverty_fracs: tuple[float, ...]
    x: Optional[float] = None
    y: Optional[float] = None


@dataclass(frozen=True, slots=True)
class ZonedLot:
    id: str
    lon: float
    lat: float
    area: float
    zoning: str
    x: Optional[float] = None
    y: Optional[float] = None


@dataclass(frozen=True, slots=True)
class Business:
    id: str
    lon: float
    lat: float
    types: frozenset
    x: Optional[float] = None
    y: Optional[float] = None


SCHEMAS: dict[LayerKind, tuple[str, ...]] = {
    LayerKind.LOTS: ("id", "lon", "lat", "status", "greening_date"),
    LayerKind.CRIMES: ("id", "timestamp", "lon", "lat", "raw_type"),
    LayerKind.BLOCKS: (
        "id", "lon", "lat", "pop_total", "pop_white", "pop_black",
        "pop_hispanic", "pop_asian",
    ),
    LayerKind.BLOCKGROUPS: ("id", "lon", "lat", "per_capita_income")
    + tuple(f"pov_b{i}" for i in range(1, 8)),
    LayerKind.ZONING: ("id", "lon", "lat", "area_sqm", "zoning"),
    LayerKind.BUSINESSES: ("id", "lon", "lat", "types"),
}

FILENAMES: dict[LayerKind, str] = {
    LayerKind.LOTS: "lots.csv",
    LayerKind.CRIMES: "crimes.csv",
    LayerKind.BLOCKS: "blocks.csv",
    LayerKind.BLOCKGROUPS: "blockgroups.csv",
    LayerKind.ZONING: "zoning.csv",
    LayerKind.BUSINESSES: "businesses.csv",
}


@dataclass(frozen=True)
class Reject:
    line: int
    row_id: str
    error: Exception

    @property
    def reason(self) -> str:
        return str(self.error)


@dataclass(frozen=True)
class ParseResult:
    kind: LayerKind
    rows: tuple
    rejects: tuple[Reject, ...]

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def n_rejected(self) -> int:
        return len(self.rejects)


# ---------------------------------------------------------------- crime map

_SEP = re.compile(r"[\s_\-]+")


def _crime_key(raw_type: str) -> str:
    return _SEP.sub(" ", raw_type.strip().lower()).strip()


def load_crime_map(path: str | os.PathLike | None = None) -> dict[str, CrimeCategory]:
    """Read a ``raw_type,category`` mapping; the packaged taxonomy by default."""
    if path is None:
        text = resources.files("lotmatch").joinpath("data/crime_categories.map").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    mapping: dict[str, CrimeCategory] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        raw, sep, cat = line.rpartition(",")
        if not sep:
            raise MalformedRow(lineno, f"expected 'raw_type,category', got {line!r}")
        try:
            category = CrimeCategory(cat.strip().lower())
        except ValueError:
            raise MalformedRow(lineno, f"unknown category {cat!r}") from None
        key = _crime_key(raw)
        if mapping.get(key, category) is not category:
            raise InvariantViolation(key, "raw type mapped to two categories")
        mapping[key] = category
    return mapping


_DEFAULT_MAP: dict[str, CrimeCategory] | None = None


def categorize_crime(raw_type: str, mapping: Mapping[str, CrimeCategory] | None = None) -> CrimeCategory:
    """Map a raw crime type to Serious/Other/Excluded; unknown types are Excluded."""
    global _DEFAULT_MAP
    if mapping is None:
        if _DEFAULT_MAP is None:
            _DEFAULT_MAP = load_crime_map()
        mapping = _DEFAULT_MAP
    return mapping.get(_crime_key(raw_type), CrimeCategory.EXCLUDED)


# ------------------------------------------------------------------ parsing

def _float(value: str, name: str, line: int) -> float:
    try:
        out = float(value)
    except ValueError:
        raise MalformedRow(line, f"{name}={value!r} is not a number") from None
    if not math.isfinite(out):
        raise MalformedRow(line, f"{name}={value!r} is not finite")
    return out


def _int(value: str, name: str, line: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise MalformedRow(line, f"{name}={value!r} is not an integer") from None


def _coords(row, line):
    lon = _float(row["lon"], "lon", line)
    lat = _float(row["lat"], "lat", line)
    if not (-180.0 <= lon <= 180.0 and -90.0 < lat < 90.0):
        raise InvariantViolation(row["id"], f"coordinates out of range ({lon}, {lat})")
    return lon, lat


def _date(value: str, line: int) -> date:
    try:
        return date.fromisoformat(value.strip())
    except ValueError:
        raise MalformedRow(line, f"bad date {value!r}") from None


def _timestamp(value: str, line: int) -> datetime:
    try:
        return datetime.fromisoformat(value.strip())
    except ValueError:
        raise MalformedRow(line, f"bad timestamp {value!r}") from None


def _xy(projection, lon, lat):
    if projection is None:
        return None, None
    x, y = projection.project(lon, lat)
    return float(x), float(y)


def _parse_lot(row, line, projection, crime_map):
    rid = row["id"]
    lon, lat = _coords(row, line)
    try:
        status = Status(row["status"].strip().lower())
    except ValueError:
        raise MalformedRow(line, f"bad status {row['status']!r}") from None
    raw_date = row["greening_date"].strip()
    gdate = _date(raw_date, line) if raw_date else None
    if status is Status.GREENED and gdate is None:
        raise InvariantViolation(rid, "greened lot without greening_date")
    if status is Status.UNGREENED and gdate is not None:
        raise InvariantViolation(rid, "ungreened lot with greening_date")
    if gdate is not None and not (GREENING_START <= gdate <= GREENING_END):
        raise InvariantViolation(rid, f"greening_date {gdate} outside greening period")
    return Lot(rid, lon, lat, status, gdate, *_xy(projection, lon, lat))


def _parse_crime(row, line, projection, crime_map):
    rid = row["id"]
    lon, lat = _coords(row, line)
    ts = _timestamp(row["timestamp"], line)
    if not (CRIME_START <= ts < CRIME_END):
        raise InvariantViolation(rid, f"timestamp {ts} outside crime coverage")
    raw = row["raw_type"]
    return CrimeEvent(rid, ts, lon, lat, raw, categorize_crime(raw, crime_map), *_xy(projection, lon, lat))


def _parse_block(row, line, projection, crime_map):
    rid = row["id"]
    lon, lat = _coords(row, line)
    counts = [_int(row[c], c, line) for c in SCHEMAS[LayerKind.BLOCKS][3:]]
    if any(c < 0 for c in counts):
        raise InvariantViolation(rid, "negative population count")
    if any(c > counts[0] for c in counts[1:]):
        raise InvariantViolation(rid, "race count exceeds pop_total")
    return CensusBlock(rid, lon, lat, *counts, *_xy(projection, lon, lat))


def _parse_blockgroup(row, line, projection, crime_map):
    rid = row["id"]
    lon, lat = _coords(row, line)
    income = _float(row["per_capita_income"], "per_capita_income", line)
    fracs = tuple(_float(row[f"pov_b{i}"], f"pov_b{i}", line) for i in range(1, 8))
    if any(not 0.0 <= f <= 1.0 for f in fracs):
        raise InvariantViolation(rid, "poverty fraction outside [0, 1]")
    if abs(math.fsum(fracs) - 1.0) > 1e-6:
        raise InvariantViolation(rid, f"poverty fractions sum to {math.fsum(fracs):.6f}")
    return BlockGroup(rid, lon, lat, income, fracs, *_xy(projection, lon, lat))


def _parse_zoned(row, line, projection, crime_map):
    rid = row["id"]
    lon, lat = _coords(row, line)
    area = _float(row["area_sqm"], "area_sqm", line)
    if area <= 0:
        raise InvariantViolation(rid, "area must be positive")
    zoning = row["zoning"].strip().lower()
    if zoning not in ZONING_TYPES and zoning != ZONING_OTHER:
        raise InvariantViolation(rid, f"unknown zoning {row['zoning']!r}")
    return ZonedLot(rid, lon, lat, area, zoning, *_xy(projection, lon, lat))


def _parse_business(row, line, projection, crime_map):
    rid = row["id"]
    lon, lat = _coords(row, line)
    types = frozenset(t.strip().lower() for t in row["types"].split(";") if t.strip())
    if not types:
        raise InvariantViolation(rid, "business without types")
    unknown = types.difference(BUSINESS_TYPES)
    if unknown:
        raise InvariantViolation(rid, f"unknown business types {sorted(unknown)}")
    return Business(rid, lon, lat, types, *_xy(projection, lon, lat))


_PARSERS = {
    LayerKind.LOTS: _parse_lot,
    LayerKind.CRIMES: _parse_crime,
    LayerKind.BLOCKS: _parse_block,
    LayerKind.BLOCKGROUPS: _parse_blockgroup,
    LayerKind.ZONING: _parse_zoned,
    LayerKind.BUSINESSES: _parse_business,
}


def parse_rows(lines: Iterable[str], kind: LayerKind | str, projection=None,
               crime_map: Mapping[str, CrimeCategory] | None = None) -> ParseResult:
    """Parse CSV text lines of one layer.  See :func:`parse_layer`."""
    kind = LayerKind(kind)
    reader = csv.reader(lines)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise MissingColumn(f"{kind.value}: empty file, expected header {SCHEMAS[kind]}") from None
    missing = [c for c in SCHEMAS[kind] if c not in header]
    if missing:
        raise MissingColumn(f"{kind.value}: missing column(s) {', '.join(missing)}")
    pos = {c: header.index(c) for c in SCHEMAS[kind]}
    parse_one = _PARSERS[kind]
    if kind is LayerKind.CRIMES and crime_map is None:
        crime_map = load_crime_map()

    rows, rejects, seen = [], [], set()
    for line_no, cells in enumerate(reader, start=2):
        if not cells or (len(cells) == 1 and not cells[0].strip()):
            continue
        rid = cells[pos["id"]].strip() if len(cells) > pos["id"] else ""
        try:
            if len(cells) != len(header):
                raise MalformedRow(line_no, f"expected {len(header)} fields, got {len(cells)}")
            if not rid:
                raise MalformedRow(line_no, "empty id")
            if rid in seen:
                raise InvariantViolation(rid, "duplicate id")
            record = {c: cells[i] for c, i in pos.items()}
            record["id"] = rid
            rows.append(parse_one(record, line_no, projection, crime_map))
            seen.add(rid)
        except (MalformedRow, InvariantViolation) as exc:
            rejects.append(Reject(line_no, rid, exc))
    return ParseResult(kind, tuple(rows), tuple(rejects))


def parse_layer(path: str | os.PathLike, layer_kind: LayerKind | str, projection=None,
                crime_map: Mapping[str, CrimeCategory] | None = None) -> ParseResult:
    """Parse one input layer file.

    Parameters
    ----------
    path : path-like
        CSV file with the header documented in ``SCHEMAS[layer_kind]``.
        Extra columns are ignored.
    layer_kind : LayerKind or str
    projection : Projection, optional
        When given, planar ``x``/``y`` are filled in on every record.
    crime_map : mapping, optional
        Crime taxonomy for the crimes layer; the packaged map by default.

    Returns
    -------
    ParseResult
        Valid rows plus the rejected rows with their errors.

    Raises
    ------
    MissingColumn
        If the header lacks a documented column.  All other problems reject
        the offending row only.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_rows(fh, layer_kind, projection, crime_map)


# -------------------------------------------------------------- serializing

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, datetime):
        return value.isoformat(timespec="seconds")
    if isinstance(value, date):
        return value.isoformat()
    if isinstance(value, frozenset):
        return ";".join(sorted(value))
    return str(value)


def _row_values(kind: LayerKind, rec) -> list:
    if kind is LayerKind.LOTS:
        return [rec.id, rec.lon, rec.lat, rec.status, rec.greening_date]
    if kind is LayerKind.CRIMES:
        return [rec.id, rec.timestamp, rec.lon, rec.lat, rec.raw_type]
    if kind is LayerKind.BLOCKS:
        return [rec.id, rec.lon, rec.lat, rec.pop_total, rec.pop_white, rec.pop_black,
                rec.pop_hispanic, rec.pop_asian]
    if kind is LayerKind.BLOCKGROUPS:
        return [rec.id, rec.lon, rec.lat, rec.per_capita_income, *rec.poverty_fracs]
    if kind is LayerKind.ZONING:
        return [rec.id, rec.lon, rec.lat, rec.area, rec.zoning]
    return [rec.id, rec.lon, rec.lat, rec.types]


def format_layer(rows: Sequence, layer_kind: LayerKind | str) -> str:
    kind = LayerKind(layer_kind)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SCHEMAS[kind])
    for rec in rows:
        writer.writerow([_fmt(v) for v in _row_values(kind, rec)])
    return buf.getvalue()


def write_layer(rows: Sequence, path: str | os.PathLike, layer_kind: LayerKind | str) -> None:
    """Write records in the documented schema; planar coordinates are not stored."""
    Path(path).write_text(format_layer(rows, layer_kind), encoding="utf-8")


def strip_xy(rows: Sequence) -> tuple:
    """Copies of ``rows`` with the planar coordinates cleared."""
    out = []
    for r in rows:
        vals = {f.name: getattr(r, f.name) for f in fields(r)}
        vals["x"] = vals["y"] = None
        out.append(type(r)(**vals))
    return tuple(out)
