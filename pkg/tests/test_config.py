from __future__ import annotations

from datetime import date
from pathlib import Path

import pytest

from lotmatch.config import RunConfig, build_config, load_config, parse_config_text
from lotmatch.errors import ConfigError, InvalidConfig


def test_defaults():
    cfg = build_config()
    assert cfg.radii == (100.0, 200.0, 500.0) and cfg.primary_radius == 200.0
    assert cfg.data == Path("lotmatch-out") / "data"
    assert cfg.positive_class == "ungreened" and cfg.quartile_mode == "caption"
    assert cfg.unmatched_anchor == date(2012, 10, 30)


def test_parse_types_and_comments():
    vals = parse_config_text("""
        # a comment
        radii = 100, 250   # trailing comment
        caliper = none
        replacement = yes
        synth.n_lots = 500
        synth.moderation_profile = commercial_below_median
        unmatched_anchor = 2013-01-01
    """)
    assert vals == {"radii": (100.0, 250.0), "caliper": None, "replacement": True, "synth.n_lots": 500,
                    "synth.moderation_profile": "commercial_below_median",
                    "unmatched_anchor": date(2013, 1, 1)}


@pytest.mark.parametrize("text", ["nonsense", "colour = red", "synth.seed = 3", "synth.bogus = 1",
                                  "caliper = wide", "replacement = maybe"])
def test_parse_errors(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_precedence_cli_over_file_over_default():
    cfg = build_config({"caliper": 0.1, "seed": 4, "threshold": 0.3}, {"caliper": 0.2})
    assert cfg.caliper == 0.2 and cfg.threshold == 0.3 and cfg.seed == 4 and cfg.synth.seed == 4


def test_primary_radius_follows_radii():
    assert build_config({"radii": (100.0, 500.0)}).primary_radius == 100.0
    assert build_config({"radii": (500.0, 200.0)}).primary_radius == 200.0
    with pytest.raises(ConfigError):
        build_config({"radii": (100.0,), "primary_radius": 500.0})


@pytest.mark.parametrize("bad", [{"radii": (-5.0,)}, {"radii": (100.0, 100.0)}, {"caliper": -1.0},
                                 {"threshold": 1.0}, {"quartile_mode": "median"}, {"far_days": 10}])
def test_validation(bad):
    with pytest.raises(ConfigError):
        build_config(bad)


def test_synth_fields_validated():
    with pytest.raises(InvalidConfig):
        build_config({"synth.treated_fraction": 2.0}).synth.validate()


def test_load_config(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("seed = 9\nsynth.n_lots = 300\n")
    cfg = load_config(p, {"radii": (200.0,)})
    assert cfg.synth.n_lots == 300 and cfg.synth.seed == 9 and cfg.radii == (200.0,)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


def test_stage_key_is_stable():
    a, b = RunConfig(), RunConfig()
    assert a.stage_key("radii", "synth") == b.stage_key("radii", "synth")
    assert RunConfig(caliper=0.1).stage_key("caliper") != a.stage_key("caliper")
