from __future__ import annotations

import logging
import shutil

import pytest

from lotmatch import artifacts
from lotmatch.cli import LOCK_NAME, main

from conftest import SMALL_CONFIG_TEXT

ALL_OUTPUTS = ["covariates.csv", "propensity.csv", "metrics.csv", "roc.csv", "pairs.csv", "balance.csv",
               "did_report_r100.csv", "did_report_r200.csv", "did_report_r500.csv", "unmatched_did.csv",
               "moderation.csv", "balance.svg", "forest.svg", "roc.svg", "data/lots.csv", "data/ground_truth.csv"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "small.cfg"
    cfg.write_text(SMALL_CONFIG_TEXT + "seed = 5\n")
    out = root / "out"
    assert main(["all", "--config", str(cfg), "--out", str(out)]) == 0
    return root, cfg, out


def test_all_writes_every_artifact(workspace):
    _, _, out = workspace
    for name in ALL_OUTPUTS:
        assert (out / name).is_file(), name
    assert not (out / LOCK_NAME).exists()
    metrics = (out / "metrics.csv").read_text().splitlines()
    assert [l.split(",")[0] for l in metrics[1:]] == ["all", "economic", "demographic", "land_use", "business"]


def test_rerun_is_up_to_date(workspace, caplog):
    _, cfg, out = workspace
    before = {p: p.stat().st_mtime_ns for p in out.glob("*.csv")}
    caplog.set_level(logging.INFO, logger="lotmatch")
    assert main(["all", "--config", str(cfg), "--out", str(out)]) == 0
    assert sum("up to date" in r.getMessage() for r in caplog.records) == 7
    assert before == {p: p.stat().st_mtime_ns for p in out.glob("*.csv")}


def test_changed_setting_reruns_only_downstream(workspace):
    _, cfg, out = workspace
    pairs = (out / "pairs.csv").stat().st_mtime_ns
    assert main(["moderate", "--config", str(cfg), "--out", str(out), "--quartile-mode", "text"]) == 0
    assert (out / "pairs.csv").stat().st_mtime_ns == pairs
    pooled_text, rows_text = artifacts.read_moderation((out / "moderation.csv").read_text())
    assert main(["moderate", "--config", str(cfg), "--out", str(out)]) == 0
    pooled_cap, rows_cap = artifacts.read_moderation((out / "moderation.csv").read_text())
    assert pooled_text == pooled_cap and rows_text != rows_cap


def test_external_data_directory(workspace):
    root, cfg, out = workspace
    data = root / "external"
    shutil.copytree(out / "data", data)
    ext_out = root / "ext_out"
    assert main(["all", "--config", str(cfg), "--out", str(ext_out), "--data", str(data)]) == 0
    assert not (ext_out / "data").exists()
    assert (ext_out / "pairs.csv").read_bytes() == (out / "pairs.csv").read_bytes()


def test_radius_flags_override_file(workspace):
    root, cfg, out = workspace
    text = cfg.read_text() + "radii = 100, 500\n"
    cfg2 = root / "radii.cfg"
    cfg2.write_text(text)
    dest = root / "radius_out"
    shutil.copytree(out / "data", dest / "data")
    assert main(["all", "--config", str(cfg2), "--out", str(dest), "--data", str(dest / "data"),
                 "--radius", "150"]) == 0
    assert [p.name for p in dest.glob("did_report_*.csv")] == ["did_report_r150.csv"]


def test_missing_input_exit_3(tmp_path, capsys):
    assert main(["did", "--out", str(tmp_path / "empty")]) == 3
    assert "match" in capsys.readouterr().err


def test_missing_raw_layers_name_synth(tmp_path, capsys):
    assert main(["features", "--out", str(tmp_path / "empty")]) == 3
    assert "synth" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["all", "--radius", "-5"], ["all", "--quartile-mode", "odd"],
                                  ["bogus"], ["all", "--caliper", "-1"]])
def test_config_errors_exit_2(tmp_path, argv):
    assert main(argv + ["--out", str(tmp_path / "o")]) == 2


def test_bad_config_file_exit_2(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    assert main(["all", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_invalid_synth_setting_exit_2(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("synth.treated_fraction = 1.5\n")
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_lock_conflict_exit_2(tmp_path):
    out = tmp_path / "locked"
    out.mkdir()
    (out / LOCK_NAME).write_text("123\n")
    assert main(["report", "--out", str(out)]) == 2


def test_data_error_exit_4(tmp_path):
    data = tmp_path / "data"
    data.mkdir()
    (data / "lots.csv").write_text("id,lon,lat,status,greening_date\nL1,-75.1,39.9,greened,\n")
    for name, header in (("blocks.csv", "id,lon,lat,pop_total,pop_white,pop_black,pop_hispanic,pop_asian"),
                         ("blockgroups.csv", "id,lon,lat,per_capita_income," + ",".join(f"pov_b{i}" for i in range(1, 8))),
                         ("zoning.csv", "id,lon,lat,area_sqm,zoning"), ("businesses.csv", "id,lon,lat,types")):
        (data / name).write_text(header + "\n")
    assert main(["features", "--out", str(tmp_path / "o"), "--data", str(data)]) == 4
