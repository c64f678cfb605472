"""Shared fixtures: a small synthetic city and an in-memory pipeline run."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest

from lotmatch.did import CrimeIndex, MatchedDid, matched_did
from lotmatch.features import CovariateTable, build_covariates
from lotmatch.matcher import MatchResult, match_pairs
from lotmatch.propensity import fit_propensity
from lotmatch.synth import SynthConfig, generate_city

SMALL = dict(n_lots=400, extent=9000.0, n_blocks=3600, n_blockgroups=90, n_zoned=9600, n_businesses=1800)

SMALL_CONFIG_TEXT = "\n".join(f"synth.{k} = {v}" for k, v in SMALL.items()) + "\n"


@dataclass
class PipelineRun:
    city: object
    covariates: CovariateTable
    greened: np.ndarray
    scores: np.ndarray
    match: MatchResult
    crimes: CrimeIndex
    matched: MatchedDid

    @property
    def lots_by_id(self):
        return {lot.id: lot for lot in self.city.lots}


def run_pipeline(city, radius: float = 200.0, **match_kw) -> PipelineRun:
    """Covariates, propensity, greedy matching and matched DID on one city."""
    cov = build_covariates(city.lots, city.layers(), radius)
    by_id = {lot.id: lot for lot in city.lots}
    greened = np.array([by_id[i].greened for i in cov.lot_ids])
    scores = fit_propensity(cov, greened).predict_table(cov)
    treated = [(i, s) for i, s, g in zip(cov.lot_ids, scores, greened) if g]
    controls = [(i, s) for i, s, g in zip(cov.lot_ids, scores, greened) if not g]
    res = match_pairs(treated, controls, {i: by_id[i].greening_date for i, _ in treated}, **match_kw)
    crimes = CrimeIndex(city.crimes)
    return PipelineRun(city, cov, greened, scores, res, crimes, matched_did(res.pairs, by_id, crimes, radius))


@pytest.fixture(scope="session")
def small_city():
    return generate_city(SynthConfig(seed=7, **SMALL))


@pytest.fixture(scope="session")
def small_run(small_city):
    return run_pipeline(small_city)


# ---------------------------------------------------------- acceptance lines

ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> bool:
    """Remember one PASS/FAIL line for the end-of-run acceptance summary."""
    ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[number])
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
