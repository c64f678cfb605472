"""``lotmatch`` command line: run pipeline stages over an output directory.

Stages and their artifacts (all inside ``--out``)::

    synth       data/*.csv, data/ground_truth.csv
    features    covariates.csv
    propensity  propensity.csv, metrics.csv, roc.csv
    match       pairs.csv, balance.csv
    did         did_report_r{R}.csv, pair_counts_r{R}.csv, unmatched_did.csv
    moderate    moderation.csv
    report      balance.svg, forest.svg, roc.svg

Every file is written atomically.  A stage whose inputs and settings are
unchanged since its last run is skipped (its stamp lives in ``.stamps/``).
Exit codes: 0 ok, 2 configuration error, 3 missing input, 4 data error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import logging
import os
import sys
import tempfile
from datetime import date
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import artifacts
from .config import EXPOSURE_MODES, POSITIVE_CLASSES, QUARTILE_MODES, RunConfig, load_config
from .datamodel import FILENAMES, LayerKind, load_crime_map, parse_layer
from .did import CrimeIndex, PairOutcome, WindowCounts, matched_did, pair_did, unmatched_did
from .errors import ConfigError, InvalidConfig, InvariantViolation, LotmatchError, MissingInput
from .features import ContextLayers, CovariateTable, build_covariates
from .figures import render_figures
from .geoindex import Projection, project_records
from .matcher import balance_report, match_pairs
from .moderation import moderation_report
from .propensity import evaluate_ablations
from .synth import generate_city
from .synth.city import write_city

log = logging.getLogger("lotmatch")

STAGES = ("synth", "features", "propensity", "match", "did", "moderate", "report")
COMMANDS = STAGES + ("all",)
EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_DATA = 0, 2, 3, 4
LOCK_NAME = ".lotmatch.lock"

PAIR_COUNTS_HEADER = ("treated_id", "control_id", "anchor_date",
                      "treated_before_serious", "treated_before_other", "treated_after_serious",
                      "treated_after_other", "control_before_serious", "control_before_other",
                      "control_after_serious", "control_after_other")


_UMASK = os.umask(0)
os.umask(_UMASK)


def radius_tag(r: float) -> str:
    return f"{r:g}"


def atomic_write(path: Path, text: str) -> None:
    """Write ``text`` to a temporary sibling file, then rename it into place."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o666 & ~_UMASK)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class OutputLock:
    """Exclusive ownership of an output directory via a lock file."""

    def __init__(self, directory: Path):
        self.path = directory / LOCK_NAME

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConfigError(f"{self.path.parent} is in use by another run (remove {self.path} if stale)") from None
        with os.fdopen(fd, "w") as fh:
            fh.write(f"{os.getpid()}\n")
        return self

    def __exit__(self, *exc):
        try:
            self.path.unlink()
        except FileNotFoundError:
            pass
        return False


def _digest(paths: Sequence[Path], key: str) -> str:
    h = hashlib.sha256(key.encode())
    for p in paths:
        h.update(p.name.encode())
        with open(p, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    return h.hexdigest()


class Pipeline:
    """Runs stages for one :class:`RunConfig`; loaded layers are cached per run."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = cfg.out
        self._lots = None
        self._proj = None
        self._layers = None
        self._crimes = None

    # ------------------------------------------------------------ plumbing
    def p(self, name: str) -> Path:
        return self.out / name

    def data(self, kind: LayerKind) -> Path:
        return self.cfg.data / FILENAMES[kind]

    def need(self, path: Path, stage: str) -> Path:
        if not path.is_file():
            raise MissingInput(stage, path)
        return path

    def _run_cached(self, stage: str, inputs: Sequence[Path], key: str, outputs: Sequence[Path],
                    body: Callable[[], None]) -> None:
        stamp = self.p(".stamps") / f"{stage}.sha256"
        digest = _digest(inputs, f"{stage};{key}")
        if all(o.is_file() for o in outputs) and stamp.is_file() and stamp.read_text().strip() == digest:
            log.info("%s: up to date", stage)
            return
        log.info("%s: running", stage)
        body()
        atomic_write(stamp, digest + "\n")

    def _parse(self, kind: LayerKind, projection=None):
        crime_map = None
        if kind is LayerKind.CRIMES and self.cfg.crime_map is not None:
            crime_map = load_crime_map(self.cfg.crime_map)
        res = parse_layer(self.need(self.data(kind), "synth"), kind, projection, crime_map)
        if res.rejects:
            log.warning("%s: %d row(s) rejected, first: line %d: %s", kind.value, res.n_rejected,
                        res.rejects[0].line, res.rejects[0].reason)
        return res.rows

    def lots(self):
        if self._lots is None:
            rows = sorted(self._parse(LayerKind.LOTS), key=lambda r: r.id)
            if not rows:
                raise InvariantViolation(str(self.data(LayerKind.LOTS)), "no valid lots")
            self._proj = Projection.centered_on([r.lon for r in rows], [r.lat for r in rows])
            self._lots = project_records(rows, self._proj)
        return self._lots

    def projection(self) -> Projection:
        self.lots()
        return self._proj

    def layers(self) -> ContextLayers:
        if self._layers is None:
            proj = self.projection()
            rows = [project_records(self._parse(k), proj)
                    for k in (LayerKind.BLOCKS, LayerKind.BLOCKGROUPS, LayerKind.ZONING, LayerKind.BUSINESSES)]
            self._layers = ContextLayers.from_rows(*rows, cell_size=self.cfg.covariate_radius)
        return self._layers

    def crimes(self) -> CrimeIndex:
        if self._crimes is None:
            rows = project_records(self._parse(LayerKind.CRIMES), self.projection())
            self._crimes = CrimeIndex(rows, cell_size=max(self.cfg.radii))
        return self._crimes

    def covariates(self) -> CovariateTable:
        text = self.need(self.p("covariates.csv"), "features").read_text("utf-8")
        return CovariateTable.from_csv(text, self.cfg.covariate_radius)

    def raw_inputs(self, *kinds: LayerKind) -> list[Path]:
        return [self.need(self.data(k), "synth") for k in kinds]

    # -------------------------------------------------------------- stages
    def synth(self) -> None:
        data = self.cfg.data
        outputs = [data / FILENAMES[k] for k in LayerKind] + [data / "ground_truth.csv"]

        def body():
            city = generate_city(self.cfg.synth)
            with tempfile.TemporaryDirectory(dir=self.out) as tmp:
                for name, src in write_city(city, tmp).items():
                    atomic_write(data / src.name, src.read_text("utf-8"))
            log.info("synth: %d lots (%d greened), %d crimes", len(city.lots), city.truth.n_treated,
                     len(city.crimes))
        self._run_cached("synth", [], self.cfg.stage_key("synth"), outputs, body)

    def features(self) -> None:
        inputs = self.raw_inputs(LayerKind.LOTS, LayerKind.BLOCKS, LayerKind.BLOCKGROUPS,
                                 LayerKind.ZONING, LayerKind.BUSINESSES)
        out = self.p("covariates.csv")

        def body():
            table = build_covariates(self.lots(), self.layers(), self.cfg.covariate_radius)
            atomic_write(out, table.to_csv())
        self._run_cached("features", inputs, self.cfg.stage_key("covariate_radius"), [out], body)

    def propensity(self) -> None:
        inputs = [self.need(self.p("covariates.csv"), "features")] + self.raw_inputs(LayerKind.LOTS)
        outs = [self.p("propensity.csv"), self.p("metrics.csv"), self.p("roc.csv")]

        def body():
            cov = self.covariates()
            status = {l.id: l.greened for l in self.lots()}
            greened = np.array([status[i] for i in cov.lot_ids])
            res = evaluate_ablations(cov, greened, self.cfg.threshold, self.cfg.positive_class)
            model = res["all"][0]
            scores = model.predict_table(cov)
            if model.fit.flags:
                log.warning("propensity: fit flagged %s", ", ".join(model.fit.flags))
            atomic_write(outs[0], artifacts.format_propensity(cov.lot_ids, greened, scores))
            atomic_write(outs[1], artifacts.format_metrics({k: v[1] for k, v in res.items()}))
            atomic_write(outs[2], artifacts.format_roc({k: v[2] for k, v in res.items()}))
        self._run_cached("propensity", inputs, self.cfg.stage_key("threshold", "positive_class"), outs, body)

    def match(self) -> None:
        inputs = [self.need(self.p("propensity.csv"), "propensity"),
                  self.need(self.p("covariates.csv"), "features")] + self.raw_inputs(LayerKind.LOTS)
        outs = [self.p("pairs.csv"), self.p("balance.csv")]

        def body():
            scored = artifacts.read_propensity(inputs[0].read_text("utf-8"))
            treated = [(i, s) for i, g, s in scored if g]
            controls = [(i, s) for i, g, s in scored if not g]
            dates = {l.id: l.greening_date for l in self.lots() if l.greened}
            res = match_pairs(treated, controls, dates, self.cfg.replacement, self.cfg.caliper)
            if res.unmatched_treated or res.caliper_dropped:
                log.warning("match: %d treated unmatched, %d dropped by caliper",
                            len(res.unmatched_treated), len(res.caliper_dropped))
            bal = balance_report(self.covariates(), [i for i, _ in treated], [i for i, _ in controls], res.pairs)
            atomic_write(outs[0], artifacts.format_pairs(res.pairs))
            atomic_write(outs[1], artifacts.format_balance(bal))
        self._run_cached("match", inputs, self.cfg.stage_key("replacement", "caliper"), outs, body)

    def did(self) -> None:
        inputs = [self.need(self.p("pairs.csv"), "match")] + self.raw_inputs(LayerKind.LOTS, LayerKind.CRIMES)
        outs = ([self.p(f"did_report_r{radius_tag(r)}.csv") for r in self.cfg.radii]
                + [self.p(f"pair_counts_r{radius_tag(r)}.csv") for r in self.cfg.radii]
                + [self.p("unmatched_did.csv")])

        def body():
            pairs = artifacts.read_pairs(inputs[0].read_text("utf-8"))
            lots = self.lots()
            by_id = {l.id: l for l in lots}
            missing = [p.treated_lot_id for p in pairs if p.treated_lot_id not in by_id
                       or p.control_lot_id not in by_id]
            if missing:
                raise InvariantViolation(missing[0], "pairs.csv refers to a lot missing from lots.csv")
            crimes = self.crimes()
            unmatched = {}
            for r in self.cfg.radii:
                md = matched_did(pairs, by_id, crimes, r, self.cfg.pre_rate_mode,
                                 self.cfg.near_days, self.cfg.far_days)
                if md.truncated:
                    log.warning("did r=%s: %d pair(s) dropped for truncated windows", radius_tag(r),
                                len(md.truncated))
                atomic_write(self.p(f"did_report_r{radius_tag(r)}.csv"), artifacts.format_did(md.estimates))
                atomic_write(self.p(f"pair_counts_r{radius_tag(r)}.csv"), format_pair_counts(md.outcomes))
                ud = unmatched_did([l for l in lots if l.greened], [l for l in lots if not l.greened],
                                   crimes, r, self.cfg.unmatched_anchor, self.cfg.near_days, self.cfg.far_days)
                unmatched[r] = ud.estimates
            atomic_write(self.p("unmatched_did.csv"), artifacts.format_unmatched(unmatched))
        key = self.cfg.stage_key("radii", "pre_rate_mode", "near_days", "far_days", "unmatched_anchor", "crime_map")
        self._run_cached("did", inputs, key, outs, body)

    def moderate(self) -> None:
        counts = self.p(f"pair_counts_r{radius_tag(self.cfg.primary_radius)}.csv")
        inputs = [self.need(counts, "did"), self.need(self.p("covariates.csv"), "features")]
        out = self.p("moderation.csv")

        def body():
            outcomes = read_pair_counts(counts.read_text("utf-8"), self.cfg.primary_radius)
            rep = moderation_report(outcomes, self.covariates(), self.cfg.quartile_mode,
                                    self.cfg.exposure_mode, self.cfg.pre_rate_mode)
            atomic_write(out, artifacts.format_moderation(rep))
        key = self.cfg.stage_key("primary_radius", "quartile_mode", "exposure_mode", "pre_rate_mode")
        self._run_cached("moderate", inputs, key, [out], body)

    def report(self) -> None:
        names = ("balance.csv", "moderation.csv", "roc.csv")
        present = [self.p(n) for n in names if self.p(n).is_file()]
        if not present:
            raise MissingInput("match", self.p("balance.csv"))
        outs = [self.p(n.replace(".csv", ".svg").replace("moderation", "forest")) for n in names
                if self.p(n).is_file()]
        self._run_cached("report", present, "", outs, lambda: render_figures(self.out, atomic_write))

    def run(self, command: str) -> None:
        stages = STAGES if command == "all" else (command,)
        if command == "all" and self.cfg.data_dir is not None:
            stages = STAGES[1:]  # external inputs: nothing to synthesize
        for stage in stages:
            getattr(self, stage)()


# --------------------------------------------------------- pair counts CSV

def format_pair_counts(outcomes: Sequence[PairOutcome]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PAIR_COUNTS_HEADER)
    for o in outcomes:
        t, c = o.treated, o.control
        w.writerow([o.pair.treated_lot_id, o.pair.control_lot_id, t.anchor_date.isoformat(),
                    t.before_serious, t.before_other, t.after_serious, t.after_other,
                    c.before_serious, c.before_other, c.after_serious, c.after_other])
    return buf.getvalue()


def read_pair_counts(text: str, radius: float) -> list[PairOutcome]:
    from .matcher import MatchedPair

    out = []
    for r in artifacts.read_table(text, PAIR_COUNTS_HEADER):
        anchor = date.fromisoformat(r["anchor_date"])
        v = {k: int(r[k]) for k in PAIR_COUNTS_HEADER[3:]}
        pair = MatchedPair(r["treated_id"], r["control_id"], float("nan"), float("nan"), float("nan"), anchor)
        t = WindowCounts(pair.treated_lot_id, anchor, radius, v["treated_before_serious"],
                         v["treated_before_other"], v["treated_after_serious"], v["treated_after_other"])
        c = WindowCounts(pair.control_lot_id, anchor, radius, v["control_before_serious"],
                         v["control_before_other"], v["control_after_serious"], v["control_after_other"])
        out.append(PairOutcome(pair, t, c, pair_did(pair, t, c)))
    return out


# --------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lotmatch", description="Vacant-lot greening matched DID pipeline.")
    ap.add_argument("command", choices=COMMANDS, help="pipeline stage to run, or 'all'")
    ap.add_argument("--config", help="flat 'key = value' configuration file")
    ap.add_argument("--radius", type=float, action="append", dest="radii", metavar="M",
                    help="crime radius in metres; repeat for several (default 100, 200, 500)")
    ap.add_argument("--out", type=Path, help="output directory (default ./lotmatch-out)")
    ap.add_argument("--data", type=Path, dest="data_dir", help="input layer directory (default <out>/data)")
    ap.add_argument("--seed", type=int, help="seed for the synthetic city")
    ap.add_argument("--replacement", action="store_true", default=None, help="match controls with replacement")
    ap.add_argument("--caliper", type=float, help="maximum propensity-score gap of a pair")
    ap.add_argument("--positive-class", choices=POSITIVE_CLASSES, dest="positive_class",
                    help="class that sensitivity and PPV refer to (default ungreened)")
    ap.add_argument("--quartile-mode", choices=QUARTILE_MODES, dest="quartile_mode",
                    help="'caption': top = upper quartile; 'text': top = largest 75%%")
    ap.add_argument("--exposure-mode", choices=EXPOSURE_MODES, dest="exposure_mode",
                    help="pair exposure for moderation (default pair_mean)")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="lotmatch: %(message)s", stream=sys.stderr)
    cli = {k: v for k, v in vars(args).items()
           if k not in ("command", "config", "verbose") and v is not None}
    if "radii" in cli:
        cli["radii"] = tuple(cli["radii"])
    try:
        cfg = load_config(args.config, cli)
        with OutputLock(cfg.out):
            Pipeline(cfg).run(args.command)
    except (ConfigError, InvalidConfig) as exc:
        print(f"lotmatch: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingInput as exc:
        print(f"lotmatch {args.command}: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except LotmatchError as exc:
        print(f"lotmatch {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
