"""Run configuration: defaults, a flat ``key = value`` file, and CLI overrides.

Precedence is command line > config file > defaults.  File syntax::

    # comment
    radii = 100, 200, 500
    caliper = 0.05
    synth.n_lots = 400

Keys prefixed with ``synth.`` set fields of :class:`SynthConfig`; the
generator's seed is the top-level ``seed``.  Only settings actually given
on the command line are passed as overrides.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from datetime import date
from pathlib import Path
from typing import Any, Mapping, Optional

from .did import FAR_DAYS, NEAR_DAYS, UNMATCHED_ANCHOR
from .errors import ConfigError
from .propensity import DEFAULT_THRESHOLD
from .synth import SynthConfig

QUARTILE_MODES = ("caption", "text")
EXPOSURE_MODES = ("pair_mean", "treated")
PRE_RATE_MODES = ("treated", "both")
POSITIVE_CLASSES = ("greened", "ungreened")


@dataclass(frozen=True)
class RunConfig:
    out: Path = Path("lotmatch-out")
    data_dir: Optional[Path] = None  # defaults to <out>/data
    crime_map: Optional[Path] = None
    radii: tuple[float, ...] = (100.0, 200.0, 500.0)
    covariate_radius: float = 200.0
    primary_radius: float = 200.0
    near_days: int = NEAR_DAYS
    far_days: int = FAR_DAYS
    unmatched_anchor: date = UNMATCHED_ANCHOR
    replacement: bool = False
    caliper: Optional[float] = None
    positive_class: str = "ungreened"
    threshold: float = DEFAULT_THRESHOLD
    quartile_mode: str = "caption"
    exposure_mode: str = "pair_mean"
    pre_rate_mode: str = "treated"
    seed: int = 0
    synth: SynthConfig = field(default_factory=SynthConfig)

    @property
    def data(self) -> Path:
        return self.data_dir if self.data_dir is not None else self.out / "data"

    def validate(self) -> "RunConfig":
        if not self.radii or any(r <= 0 for r in self.radii):
            raise ConfigError("radii must be positive")
        if len(set(self.radii)) != len(self.radii):
            raise ConfigError("radii must be distinct")
        if self.primary_radius not in self.radii:
            raise ConfigError(f"primary_radius {self.primary_radius} is not among radii {list(self.radii)}")
        if self.covariate_radius <= 0:
            raise ConfigError("covariate_radius must be positive")
        if not 0 <= self.near_days < self.far_days:
            raise ConfigError("window offsets need 0 <= near_days < far_days")
        if self.caliper is not None and self.caliper < 0:
            raise ConfigError("caliper must be non-negative")
        if not 0 < self.threshold < 1:
            raise ConfigError("threshold must lie in (0, 1)")
        for name, allowed in (("positive_class", POSITIVE_CLASSES), ("quartile_mode", QUARTILE_MODES),
                              ("exposure_mode", EXPOSURE_MODES), ("pre_rate_mode", PRE_RATE_MODES)):
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {', '.join(allowed)}")
        return self

    def stage_key(self, *names: str) -> str:
        """Canonical text of the named settings, used in stage stamps."""
        return ";".join(f"{n}={_show(getattr(self, n))}" for n in names)


def _show(v) -> str:
    if isinstance(v, tuple):
        return ",".join(_show(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, SynthConfig):
        return "|".join(f"{f.name}:{_show(getattr(v, f.name))}" for f in fields(v))
    if isinstance(v, date):
        return v.isoformat()
    return str(v)


# ------------------------------------------------------------------ parsing

def _bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _optional_float(s: str) -> Optional[float]:
    return None if s.strip().lower() in ("", "none") else float(s)


def _optional_path(s: str) -> Optional[Path]:
    return None if s.strip() == "" else Path(s.strip())


def _optional_str(s: str) -> Optional[str]:
    return None if s.strip().lower() in ("", "none") else s.strip()


def _radii(s: str) -> tuple[float, ...]:
    return tuple(float(v) for v in s.replace(" ", "").split(",") if v)


_CONVERTERS = {
    "out": lambda s: Path(s.strip()),
    "data_dir": _optional_path,
    "crime_map": _optional_path,
    "radii": _radii,
    "covariate_radius": float,
    "primary_radius": float,
    "near_days": int,
    "far_days": int,
    "unmatched_anchor": lambda s: date.fromisoformat(s.strip()),
    "replacement": _bool,
    "caliper": _optional_float,
    "positive_class": str.strip,
    "threshold": float,
    "quartile_mode": str.strip,
    "exposure_mode": str.strip,
    "pre_rate_mode": str.strip,
    "seed": int,
}


def _synth_converter(name: str):
    default = getattr(SynthConfig(), name)
    if name == "moderation_profile":
        return _optional_str
    if isinstance(default, bool):
        return _bool
    if isinstance(default, int):
        return int
    if isinstance(default, float):
        return float
    if isinstance(default, date):
        return lambda s: date.fromisoformat(s.strip())
    return str.strip


def parse_config_text(text: str, source: str = "<config>") -> dict[str, Any]:
    """``key = value`` lines into typed values.  Raises ConfigError."""
    values: dict[str, Any] = {}
    synth_fields = {f.name for f in fields(SynthConfig)}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        if key.startswith("synth."):
            name = key[len("synth."):]
            if name not in synth_fields or name == "seed":
                raise ConfigError(f"{source}:{lineno}: unknown synth setting {name!r} (the seed is set by 'seed')")
            conv = _synth_converter(name)
        elif key in _CONVERTERS:
            conv = _CONVERTERS[key]
        else:
            raise ConfigError(f"{source}:{lineno}: unknown setting {key!r}")
        try:
            values[key] = conv(val)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    return values


def build_config(file_values: Mapping[str, Any] | None = None,
                 cli_values: Mapping[str, Any] | None = None) -> RunConfig:
    """Merge defaults, file values and CLI values (later wins) and validate.

    Without an explicit ``primary_radius``, 200 m is used when it is among
    the radii and the first radius otherwise.
    """
    merged: dict[str, Any] = {}
    for layer in (file_values or {}, cli_values or {}):
        merged.update(layer)
    synth_changes = {k[len("synth."):]: merged.pop(k) for k in list(merged) if k.startswith("synth.")}
    if "primary_radius" not in merged and "radii" in merged and merged["radii"]:
        radii = tuple(merged["radii"])
        merged["primary_radius"] = RunConfig.primary_radius if RunConfig.primary_radius in radii else radii[0]
    cfg = replace(RunConfig(), **merged)
    cfg = replace(cfg, synth=cfg.synth.replace(seed=cfg.seed, **synth_changes))
    return cfg.validate()


def load_config(path: str | Path | None, cli_values: Mapping[str, Any] | None = None) -> RunConfig:
    file_values = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {p} not found")
        file_values = parse_config_text(p.read_text("utf-8"), str(p))
    return build_config(file_values, cli_values)
