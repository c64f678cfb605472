from __future__ import annotations

import math

import numpy as np
import pytest

from lotmatch.datamodel import FILENAMES, LayerKind, parse_layer
from lotmatch.errors import InvalidConfig, Separation
from lotmatch.geoindex import project_records
from lotmatch.synth import (
    SynthConfig, auc_oracle, generate_city, mle_oracle, naive_radius_count, optimal_match_oracle, t_cdf_oracle,
    write_city,
)

from conftest import SMALL


def test_deterministic(small_city):
    again = generate_city(SynthConfig(seed=7, **SMALL))
    assert again.lots == small_city.lots and again.crimes == small_city.crimes
    assert again.zoning == small_city.zoning and again.truth == small_city.truth


def test_seed_changes_city(small_city):
    other = generate_city(SynthConfig(seed=8, **SMALL))
    assert other.lots != small_city.lots


def test_layer_sizes(small_city):
    cfg = small_city.config
    assert len(small_city.lots) == cfg.n_lots and len(small_city.blocks) == cfg.n_blocks
    assert len(small_city.blockgroups) == cfg.n_blockgroups and len(small_city.zoning) == cfg.n_zoned
    assert len(small_city.businesses) == cfg.n_businesses
    assert small_city.truth.n_treated + small_city.truth.n_control == cfg.n_lots


def test_treated_fraction_calibrated(small_city):
    assert np.mean(small_city.propensity) == pytest.approx(small_city.config.treated_fraction, abs=1e-9)
    assert small_city.truth.n_treated == sum(l.greened for l in small_city.lots)


def test_greening_dates_in_window(small_city):
    cfg = small_city.config
    for lot in small_city.lots:
        assert (lot.greening_date is not None) == lot.greened
        if lot.greened:
            assert cfg.greening_start <= lot.greening_date <= cfg.greening_end


def test_predicted_bias_is_expectation_minus_truth(small_city):
    truth = small_city.truth
    for cat, eff in (("serious", truth.config.true_effect_serious), ("other", truth.config.true_effect_other)):
        mult = float(np.mean(small_city.effect_multiplier[[l.greened for l in small_city.lots]]))
        assert truth.predicted_unmatched_bias[cat] == pytest.approx(truth.expected_unmatched[cat] - eff * mult)


@pytest.mark.parametrize("change", [
    dict(n_lots=0), dict(treated_fraction=1.0), dict(treated_fraction=0.0), dict(extent=500.0),
    dict(moderation_profile="nonsense"), dict(serious_share=1.5), dict(lot_jitter=0.6),
    dict(true_effect_serious=-40.0),
])
def test_invalid_config(change):
    with pytest.raises(InvalidConfig):
        generate_city(SynthConfig(**{**SMALL, **change}))


def test_written_files_reparse(small_city, tmp_path):
    paths = write_city(small_city, tmp_path)
    assert set(paths) == {k.value for k in LayerKind} | {"ground_truth"}
    for kind in LayerKind:
        res = parse_layer(tmp_path / FILENAMES[kind], kind)
        assert res.n_rejected == 0
        reprojected = project_records(res.rows, small_city.projection)
        assert reprojected == small_city.layer(kind)
    rows = (tmp_path / "ground_truth.csv").read_text().splitlines()
    assert rows[0] == "key,value" and any(r.startswith("true_effect_total,") for r in rows)


class TestOracles:
    def test_naive_count_closed_ball(self):
        assert naive_radius_count([(3.0, 4.0), (3.0, 4.1)], (0.0, 0.0), 5.0) == 1

    def test_auc_oracle(self):
        assert auc_oracle([0.9, 0.8, 0.7, 0.85], [1, 1, 0, 0]) == 0.75

    def test_mle_oracle_rejects_separation(self):
        with pytest.raises(Separation):
            mle_oracle(np.array([[-2.0], [-1.0], [1.0], [2.0]]), np.array([0.0, 0.0, 1.0, 1.0]))

    def test_optimal_match_small(self):
        total, assign = optimal_match_oracle([0.1, 0.9], [0.15, 0.85])
        assert total == pytest.approx(0.10) and assign == [0, 1]

    def test_optimal_match_limits(self):
        with pytest.raises(ValueError):
            optimal_match_oracle([0.1] * 9, [0.1] * 12)

    def test_t_cdf_oracle_cauchy(self):
        assert t_cdf_oracle(1.0, 1) == pytest.approx(0.5 + math.atan(1.0) / math.pi, abs=1e-15)
