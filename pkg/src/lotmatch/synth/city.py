"""Synthetic cities with confounded greening and a planted crime effect.

The generator works in a local planar frame, converts every point to
lon/lat, and then re-projects with a projection centred on the lots, which
is the same path the command-line pipeline takes after reading the CSVs.

Two smooth latent fields drive the context layers: ``U`` (deprivation)
raises vacancy, the black population share and poverty while lowering
income; ``V`` (commerce, negatively correlated with ``U``) raises
commercial zoning and business density.
Greening follows a logistic function of the standardized covariates, and
each lot's crime trend is tied to the same index, so an unmatched
comparison is biased while a comparison of lots with equal propensity is
not.

Crimes around each lot are drawn inside a small disc with intensity
``b * (1 + g * (t - t_mid) / year)`` per category, plus the planted step
effect after the greening date on greened lots.  The expected within-pair
DID for a pair with equal ``b * g`` is exactly the planted effect.

Random streams are spawned from one ``SeedSequence`` per named layer, so
changing one layer's size leaves the other layers' draws unchanged.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from ..datamodel import (
    BUSINESS_TYPES, CRIME_END, CRIME_START, FILENAMES, ZONING_OTHER, ZONING_TYPES,
    Business, BlockGroup, CensusBlock, CrimeCategory, CrimeEvent, LayerKind, Lot, Status,
    ZonedLot, format_layer, load_crime_map,
)
from ..did import FAR_DAYS, NEAR_DAYS
from ..errors import InvalidConfig
from ..features import COVARIATE_COLUMNS, ContextLayers, build_covariates
from ..geoindex import Projection, project_records

STREAMS = ("fields", "blocks", "blockgroups", "zoning", "businesses", "lots", "greening", "crimes")
MODERATION_PROFILES = (None, "commercial_below_median")

# signed weights of the greening index on standardized covariates
GREENING_WEIGHTS = {
    "pop_total": 0.2,
    "frac_white": -0.4,
    "frac_black": 0.8,
    "per_capita_income": -0.8,
    "pov_b1": 0.5,
    "land_residential": 0.3,
    "land_commercial": -0.6,
    "land_vacant": 0.6,
    "business_count": -0.4,
}

_YEAR_DAYS = 365.0
_DAY = 86400


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of a synthetic city.

    Effects and the baseline are in crimes per year within the lot's disc.
    ``trend_confounding`` ties each lot's yearly relative crime trend to its
    greening index; it is what biases the unmatched comparison.
    """

    seed: int = 0
    extent: float = 26_000.0
    n_lots: int = 3200
    n_blocks: int = 30_000
    n_blockgroups: int = 700
    n_zoned: int = 80_000
    n_businesses: int = 15_000
    treated_fraction: float = 0.2
    confounding: float = 0.6
    true_effect_serious: float = -1.5
    true_effect_other: float = -2.5
    baseline_rate: float = 20.0
    serious_share: float = 0.45
    trend_mean: float = -0.02
    trend_confounding: float = 0.04
    trend_limit: float = 0.06
    excluded_rate: float = 1.0
    local_radius: float = 90.0
    lot_jitter: float = 0.15
    moderation_profile: Optional[str] = None
    greening_start: date = date(2008, 7, 15)
    greening_end: date = date(2017, 9, 1)
    ref_lon: float = -75.16
    ref_lat: float = 39.95
    radius: float = 200.0

    @property
    def true_effect_total(self) -> float:
        return self.true_effect_serious + self.true_effect_other

    def validate(self) -> None:
        """Raise :class:`InvalidConfig` if the city cannot be generated."""
        for name in ("n_lots", "n_blocks", "n_blockgroups", "n_zoned", "n_businesses"):
            if getattr(self, name) <= 0:
                raise InvalidConfig(f"{name} must be positive")
        if self.radius <= 0 or self.extent <= 2 * max(self.radius, 500.0):
            raise InvalidConfig("extent must exceed twice the largest analysis radius")
        if not 0 < self.treated_fraction < 1:
            raise InvalidConfig("treated_fraction must lie in (0, 1)")
        if not 0 <= self.serious_share <= 1:
            raise InvalidConfig("serious_share must lie in [0, 1]")
        if self.moderation_profile not in MODERATION_PROFILES:
            raise InvalidConfig(f"unknown moderation profile {self.moderation_profile!r}")
        if not 0 <= self.lot_jitter < 0.5 or self.local_radius <= 0:
            raise InvalidConfig("lot_jitter must lie in [0, 0.5) and local_radius be positive")
        if not self.greening_start <= self.greening_end:
            raise InvalidConfig("greening_start is after greening_end")
        # the crime intensity must stay non-negative for every possible lot
        half_span = (CRIME_END - CRIME_START).days / 2 / _YEAR_DAYS
        floor = 1.0 - abs(self.trend_limit) * half_span
        mult = 2.0 if self.moderation_profile else 1.0
        for share, effect in ((self.serious_share, self.true_effect_serious),
                              (1 - self.serious_share, self.true_effect_other)):
            lowest = self.baseline_rate * 0.75 * share * floor
            if lowest < abs(effect) * mult or self.baseline_rate < 0:
                raise InvalidConfig("planted effect exceeds the smallest baseline intensity")

    def replace(self, **changes) -> "SynthConfig":
        vals = {f.name: getattr(self, f.name) for f in fields(self)}
        vals.update(changes)
        return SynthConfig(**vals)


@dataclass
class GroundTruth:
    """Planted parameters plus analytic expectations for the generated city."""

    config: SynthConfig
    alpha: float
    index_mean: float
    index_sd: float
    n_treated: int
    n_control: int
    commercial_median: float
    expected_unmatched: dict[str, float]
    predicted_unmatched_bias: dict[str, float]
    weights: dict[str, float] = field(default_factory=lambda: dict(GREENING_WEIGHTS))

    def items(self) -> list[tuple[str, str]]:
        """Flat ``(key, value)`` rows for ``ground_truth.csv``."""
        out = []
        for k, v in asdict(self.config).items():
            out.append((k, "" if v is None else (v.isoformat() if isinstance(v, date) else repr(v) if isinstance(v, float) else str(v))))
        out += [("true_effect_total", repr(self.config.true_effect_total)),
                ("alpha", repr(self.alpha)), ("index_mean", repr(self.index_mean)),
                ("index_sd", repr(self.index_sd)), ("n_treated", str(self.n_treated)),
                ("n_control", str(self.n_control)), ("commercial_median", repr(self.commercial_median))]
        out += [(f"expected_unmatched_{c}", repr(v)) for c, v in self.expected_unmatched.items()]
        out += [(f"predicted_unmatched_bias_{c}", repr(v)) for c, v in self.predicted_unmatched_bias.items()]
        out += [(f"weight_{c}", repr(v)) for c, v in self.weights.items()]
        return out


@dataclass
class SyntheticCity:
    config: SynthConfig
    projection: Projection
    lots: tuple[Lot, ...]
    crimes: tuple[CrimeEvent, ...]
    blocks: tuple[CensusBlock, ...]
    blockgroups: tuple[BlockGroup, ...]
    zoning: tuple[ZonedLot, ...]
    businesses: tuple[Business, ...]
    truth: GroundTruth
    # per-lot latent quantities, aligned with ``lots``
    propensity: np.ndarray = field(repr=False, default=None)
    baseline: np.ndarray = field(repr=False, default=None)
    trend: np.ndarray = field(repr=False, default=None)
    effect_multiplier: np.ndarray = field(repr=False, default=None)

    def layers(self, cell_size: float | None = None) -> ContextLayers:
        return ContextLayers.from_rows(self.blocks, self.blockgroups, self.zoning, self.businesses,
                                       cell_size or self.config.radius)

    def layer(self, kind: LayerKind | str):
        return getattr(self, LayerKind(kind).value)


# ---------------------------------------------------------------- helpers

class _Field:
    """Standardized sum of Gaussian bumps over the city square."""

    def __init__(self, rng: np.random.Generator, extent: float, n_bumps: int = 40):
        h = extent / 2
        self.cx = rng.uniform(-h, h, n_bumps)
        self.cy = rng.uniform(-h, h, n_bumps)
        self.w = rng.uniform(extent / 14, extent / 6, n_bumps)
        self.a = rng.normal(0.0, 1.0, n_bumps)
        g = np.linspace(-h, h, 60)
        gx, gy = np.meshgrid(g, g)
        ref = self._raw(gx.ravel(), gy.ravel())
        self.mu, self.sd = ref.mean(), ref.std() or 1.0

    def _raw(self, x, y):
        x = np.asarray(x, dtype=float)[:, None]
        y = np.asarray(y, dtype=float)[:, None]
        d2 = (x - self.cx) ** 2 + (y - self.cy) ** 2
        return np.exp(-d2 / (2 * self.w ** 2)) @ self.a

    def __call__(self, x, y):
        return (self._raw(x, y) - self.mu) / self.sd


def _softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _ids(prefix: str, n: int) -> list[str]:
    width = max(4, len(str(n)))
    return [f"{prefix}{i:0{width}d}" for i in range(1, n + 1)]


def _categorical(rng, probs):
    """One categorical draw per row of ``probs``."""
    u = rng.random(probs.shape[0])[:, None]
    out = (probs.cumsum(axis=1) < u).sum(axis=1)
    return np.minimum(out, probs.shape[1] - 1)


def _lonlat(frame: Projection, x, y):
    lon, lat = frame.inverse(np.asarray(x, float), np.asarray(y, float))
    return lon.tolist(), lat.tolist()


# ----------------------------------------------------------------- layers

def _blocks(rng, cfg, U, H, frame):
    n, h = cfg.n_blocks, cfg.extent / 2
    x, y = rng.uniform(-h, h, n), rng.uniform(-h, h, n)
    u, hh = U(x, y), H(x, y)
    pop = rng.poisson(45.0 * np.exp(0.25 * u + 0.3 * rng.normal(size=n)))
    # white, black, hispanic, asian, other
    logits = np.column_stack([1.0 - 1.1 * u, 0.6 + 1.3 * u, -0.4 + 1.0 * hh + 0.5 * u, -1.4 - 0.3 * u,
                              np.full(n, -1.8)])
    probs = _softmax(logits)
    counts = np.array([rng.multinomial(p, pr) for p, pr in zip(pop, probs)]).reshape(n, 5)
    lon, lat = _lonlat(frame, x, y)
    return tuple(CensusBlock(i, lo, la, int(p), int(c[0]), int(c[1]), int(c[2]), int(c[3]))
                 for i, lo, la, p, c in zip(_ids("B", n), lon, lat, pop.tolist(), counts.tolist()))


def _blockgroups(rng, cfg, U, frame):
    n, h = cfg.n_blockgroups, cfg.extent / 2
    x, y = rng.uniform(-h, h, n), rng.uniform(-h, h, n)
    u = U(x, y)
    income = np.round(28_000.0 * np.exp(-0.45 * u + 0.2 * rng.normal(size=n)), 2)
    # more deprivation moves mass toward the low brackets
    base = np.array([1.2, 1.4, 0.8, 0.8, 1.2, 0.5, 4.0])
    tilt = np.array([1.2, 1.0, 0.7, 0.4, -0.3, -0.5, -1.0])
    lon, lat = _lonlat(frame, x, y)
    out = []
    for i, lo, la, inc, uu in zip(_ids("G", n), lon, lat, income.tolist(), u.tolist()):
        alpha = 6.0 * base * np.exp(0.6 * tilt * uu)
        fr = rng.dirichlet(alpha)
        fr = np.round(fr, 6)
        fr[-1] = round(1.0 - fr[:-1].sum(), 6)
        if fr[-1] < 0:  # rounding pushed the remainder negative
            fr[np.argmax(fr[:-1])] += fr[-1]
            fr[-1] = 0.0
        out.append(BlockGroup(i, lo, la, float(inc), tuple(float(v) for v in fr)))
    return tuple(out)


def _zoning(rng, cfg, U, V, frame):
    n, h = cfg.n_zoned, cfg.extent / 2
    x, y = rng.uniform(-h, h, n), rng.uniform(-h, h, n)
    u, v = U(x, y), V(x, y)
    area = np.round(np.exp(rng.normal(6.0, 0.7, n)), 2)
    kinds = ZONING_TYPES + (ZONING_OTHER,)
    # residential, commercial, industrial, civic, transportation, cultural, water, vacant, other
    logits = np.column_stack([
        np.full(n, 1.6), -0.6 + 1.1 * v, -1.6 + 0.6 * u, -1.8 - 0.5 * u, -2.0 + 0.5 * v,
        -2.6 + 0.8 * v, -3.2 - 0.8 * u, -1.0 + 1.1 * u, np.full(n, -2.4),
    ])
    code = _categorical(rng, _softmax(logits))
    lon, lat = _lonlat(frame, x, y)
    return tuple(ZonedLot(i, lo, la, float(a), kinds[c])
                 for i, lo, la, a, c in zip(_ids("Z", n), lon, lat, area.tolist(), code.tolist()))


def _businesses(rng, cfg, V, frame):
    n, h = cfg.n_businesses, cfg.extent / 2
    xs, ys = [], []
    top = math.exp(1.2 * 4.0)
    while sum(map(len, xs)) < n:
        x, y = rng.uniform(-h, h, 4 * n), rng.uniform(-h, h, 4 * n)
        keep = rng.random(4 * n) * top < np.exp(1.2 * np.minimum(V(x, y), 4.0))
        xs.append(x[keep])
        ys.append(y[keep])
    x, y = np.concatenate(xs)[:n], np.concatenate(ys)[:n]
    popularity = np.array([0.10, 0.16, 0.06, 0.08, 0.05, 0.10, 0.10, 0.35])
    n_types = 1 + (rng.random(n) < 0.25)
    lon, lat = _lonlat(frame, x, y)
    out = []
    for i, lo, la, k in zip(_ids("S", n), lon, lat, n_types.tolist()):
        picks = rng.choice(len(BUSINESS_TYPES), size=k, replace=False, p=popularity)
        out.append(Business(i, lo, la, frozenset(BUSINESS_TYPES[j] for j in picks)))
    return tuple(out)


def _lot_positions(rng, cfg):
    side = math.ceil(math.sqrt(cfg.n_lots))
    spacing = cfg.extent / side
    cells = rng.permutation(side * side)[: cfg.n_lots]
    gx, gy = cells % side, cells // side
    j = cfg.lot_jitter * spacing
    x = -cfg.extent / 2 + (gx + 0.5) * spacing + rng.uniform(-j, j, cfg.n_lots)
    y = -cfg.extent / 2 + (gy + 0.5) * spacing + rng.uniform(-j, j, cfg.n_lots)
    return x, y


# ------------------------------------------------------------------ crimes

def _crimes(rng, cfg, lots, baseline, trend, effect_mult, frame_xy, crime_map):
    """Per-category ``(seconds since coverage start, x, y, category, type index)`` arrays."""
    span = int((CRIME_END - CRIME_START).total_seconds())
    t_mid = span / 2
    year = _YEAR_DAYS * _DAY
    lx, ly = frame_xy
    n = len(lots)
    g_day = np.array([
        -1 if lot.greening_date is None else
        int((datetime.combine(lot.greening_date, datetime.min.time()) - CRIME_START).total_seconds())
        for lot in lots
    ], dtype=np.int64)
    by_cat = {c: sorted(k for k, v in crime_map.items() if v is c) for c in CrimeCategory}
    parts = []
    for cat, share, effect in ((CrimeCategory.SERIOUS, cfg.serious_share, cfg.true_effect_serious),
                               (CrimeCategory.OTHER, 1 - cfg.serious_share, cfg.true_effect_other),
                               (CrimeCategory.EXCLUDED, None, 0.0)):
        if cat is CrimeCategory.EXCLUDED:
            lam0 = np.full(n, cfg.excluded_rate)
            g = np.zeros(n)
        else:
            lam0 = baseline * share
            g = trend
        eff = effect * effect_mult
        # dominating constant intensity for thinning
        lam_max = lam0 * (1 + np.abs(g) * (span / 2) / year) + np.abs(eff)
        n_cand = rng.poisson(lam_max * span / year)
        owner = np.repeat(np.arange(n), n_cand)
        t = rng.integers(0, span, owner.size)
        lam = lam0[owner] * (1 + g[owner] * (t - t_mid) / year)
        post = (g_day[owner] >= 0) & (t > g_day[owner])
        lam = lam + np.where(post, eff[owner], 0.0)
        keep = rng.random(owner.size) * lam_max[owner] < lam
        owner, t = owner[keep], t[keep]
        rad = cfg.local_radius * np.sqrt(rng.random(owner.size))
        ang = rng.uniform(0, 2 * math.pi, owner.size)
        x = lx[owner] + rad * np.cos(ang)
        y = ly[owner] + rad * np.sin(ang)
        types = rng.integers(0, len(by_cat[cat]), owner.size)
        parts.append((t, x, y, cat, types))
    return parts, by_cat


def _expected_unmatched(cfg, lots, baseline, trend, effect_mult):
    """Expected unmatched DID per category.

    Greened lots are windowed on their own greening date, so they carry the
    full planted effect; every lot also carries its trend over the gap
    between the window centres.
    """
    gap_years = (NEAR_DAYS + FAR_DAYS) / _YEAR_DAYS
    length = (FAR_DAYS - NEAR_DAYS) / _YEAR_DAYS
    greened = np.array([lot.greened for lot in lots])
    out = {}
    for cat, share, effect in (("serious", cfg.serious_share, cfg.true_effect_serious),
                               ("other", 1 - cfg.serious_share, cfg.true_effect_other)):
        change = baseline * share * length * trend * gap_years
        change = change + np.where(greened, effect * effect_mult * length, 0.0)
        out[cat] = float(change[greened].mean() - change[~greened].mean())
    out["total"] = out["serious"] + out["other"]
    return out


# -------------------------------------------------------------------- main

def generate_city(config: SynthConfig | None = None, **overrides) -> SyntheticCity:
    """Generate all six input layers plus the ground-truth record.

    Raises
    ------
    InvalidConfig
        If the configuration is inconsistent.
    """
    cfg = (config or SynthConfig()).replace(**overrides) if overrides else (config or SynthConfig())
    cfg.validate()
    streams = dict(zip(STREAMS, (np.random.Generator(np.random.PCG64(s))
                                 for s in np.random.SeedSequence(cfg.seed).spawn(len(STREAMS)))))
    frame = Projection(cfg.ref_lon, cfg.ref_lat)
    rf = streams["fields"]
    U, W, H = _Field(rf, cfg.extent), _Field(rf, cfg.extent), _Field(rf, cfg.extent)
    # commerce is partly the mirror image of deprivation
    V = lambda x, y: -0.6 * U(x, y) + 0.8 * W(x, y)

    blocks = _blocks(streams["blocks"], cfg, U, H, frame)
    blockgroups = _blockgroups(streams["blockgroups"], cfg, U, frame)
    zoning = _zoning(streams["zoning"], cfg, U, V, frame)
    businesses = _businesses(streams["businesses"], cfg, V, frame)

    rl = streams["lots"]
    lx0, ly0 = _lot_positions(rl, cfg)
    lon, lat = _lonlat(frame, lx0, ly0)
    ids = _ids("L", cfg.n_lots)
    proj = Projection.centered_on(lon, lat)

    place = lambda rows: project_records(rows, proj)
    blocks, blockgroups, zoning, businesses = map(place, (blocks, blockgroups, zoning, businesses))
    bare = place(tuple(Lot(i, lo, la, Status.UNGREENED) for i, lo, la in zip(ids, lon, lat)))
    layers = ContextLayers.from_rows(blocks, blockgroups, zoning, businesses, cfg.radius)
    cov = build_covariates(bare, layers, cfg.radius)

    # greening index on standardized covariates
    X = cov.values
    sd = X.std(axis=0, ddof=1)
    Z = np.where(sd > 0, (X - X.mean(axis=0)) / np.where(sd > 0, sd, 1.0), 0.0)
    w = np.array([GREENING_WEIGHTS.get(c, 0.0) for c in COVARIATE_COLUMNS])
    index = Z @ w
    i_mean, i_sd = float(index.mean()), float(index.std(ddof=1)) or 1.0
    s = (index - i_mean) / i_sd
    alpha = brentq(lambda a: expit(a + cfg.confounding * s).mean() - cfg.treated_fraction, -30, 30, xtol=1e-12)
    prop = expit(alpha + cfg.confounding * s)

    rg = streams["greening"]
    greened = rg.random(cfg.n_lots) < prop
    n_days = (cfg.greening_end - cfg.greening_start).days
    offsets = rg.integers(0, n_days + 1, cfg.n_lots)
    noise = rg.normal(size=cfg.n_lots)
    lots = tuple(
        Lot(l.id, l.lon, l.lat, Status.GREENED if gr else Status.UNGREENED,
            cfg.greening_start + timedelta(days=int(o)) if gr else None, l.x, l.y)
        for l, gr, o in zip(bare, greened.tolist(), offsets.tolist())
    )
    baseline = cfg.baseline_rate * (1 + 0.15 * np.tanh(s) + 0.1 * np.tanh(noise))
    trend = np.clip(cfg.trend_mean + cfg.trend_confounding * s, -cfg.trend_limit, cfg.trend_limit)
    commercial = cov.column("land_commercial")
    c_median = float(np.median(commercial))
    mult = np.ones(cfg.n_lots)
    if cfg.moderation_profile == "commercial_below_median":
        mult = np.where(commercial < c_median, 2.0, 1.0)

    crime_map = load_crime_map()
    parts, by_cat = _crimes(streams["crimes"], cfg, lots, baseline, trend, mult,
                                          (np.array([l.x for l in lots]), np.array([l.y for l in lots])),
                                          crime_map)
    order = np.argsort(np.concatenate([p[0] for p in parts]), kind="stable")
    t = np.concatenate([p[0] for p in parts])[order]
    x = np.concatenate([p[1] for p in parts])[order]
    y = np.concatenate([p[2] for p in parts])[order]
    cats = np.concatenate([np.full(p[0].size, k) for k, p in enumerate(parts)])[order]
    types = np.concatenate([p[4] for p in parts])[order]
    cat_of = [p[3] for p in parts]
    clon, clat = proj.inverse(x, y)
    cx, cy = proj.project(clon, clat)
    crimes = []
    for cid, tt, lo, la, px, py, k, ty in zip(_ids("C", t.size), t.tolist(), clon.tolist(), clat.tolist(),
                                             cx.tolist(), cy.tolist(), cats.tolist(), types.tolist()):
        cat = cat_of[k]
        crimes.append(CrimeEvent(cid, CRIME_START + timedelta(seconds=tt), lo, la, by_cat[cat][ty], cat, px, py))

    expected = _expected_unmatched(cfg, lots, baseline, trend, mult)
    true_by_cat = {"serious": cfg.true_effect_serious, "other": cfg.true_effect_other,
                   "total": cfg.true_effect_total}
    n_treated = int(greened.sum())
    mean_mult = float(mult[greened].mean()) if n_treated else 1.0
    truth = GroundTruth(
        cfg, float(alpha), i_mean, i_sd, n_treated, cfg.n_lots - n_treated, c_median, expected,
        {c: expected[c] - true_by_cat[c] * mean_mult for c in expected},
    )
    return SyntheticCity(cfg, proj, lots, tuple(crimes), blocks, blockgroups, zoning, businesses,
                         truth, prop, baseline, trend, mult)


def write_city(city: SyntheticCity, directory) -> dict[str, Path]:
    """Write the six layer CSVs and ``ground_truth.csv``; returns the paths."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for kind in LayerKind:
        p = out / FILENAMES[kind]
        p.write_text(format_layer(city.layer(kind), kind), encoding="utf-8")
        paths[kind.value] = p
    p = out / "ground_truth.csv"
    lines = ["key,value"] + [f"{k},{v}" for k, v in city.truth.items()]
    p.write_text("\n".join(lines) + "\n", encoding="utf-8")
    paths["ground_truth"] = p
    return paths
