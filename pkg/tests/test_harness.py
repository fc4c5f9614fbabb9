import csv
import json

import numpy as np
import pytest
import yaml

from fdbie.cli import load_config, main
from fdbie.errors import ConfigError
from fdbie.harness import (
    CSV_COLUMNS,
    SUITES,
    Report,
    StudyConfig,
    emit_report,
    observed_orders,
    render,
    run_convergence,
    run_geometry_dump,
    run_property_suite,
    run_solve,
)


def test_config_validation():
    with pytest.raises(ConfigError):
        StudyConfig(resolutions=[32, 16])
    with pytest.raises(ConfigError):
        StudyConfig(resolutions=[4])
    with pytest.raises(ConfigError):
        StudyConfig(formats=["xml"])
    with pytest.raises(ConfigError):
        StudyConfig(method="newton")
    with pytest.raises(ConfigError):
        StudyConfig.from_mapping({"resolution": [32]})


def test_singular_point_must_be_outside():
    cfg = StudyConfig(solution={"kind": "log_distance", "z0": [0.1, 0.0]})
    with pytest.raises(ConfigError, match="outside"):
        cfg.build_solution(cfg.build_domain())
    cfg = StudyConfig(solution={"kind": "log_distance", "z0": [1.5, 0.0]})
    cfg.build_solution(cfg.build_domain())


def test_dimension_mismatch():
    cfg = StudyConfig(domain={"family": "sphere"})
    with pytest.raises(ConfigError):
        cfg.build_solution(cfg.build_domain())


def test_observed_orders():
    assert observed_orders([4.0, 1.0, 0.25]) == [None, 2.0, 2.0]
    assert observed_orders([1.0, None]) == [None, None]


def test_convergence_report_and_csv(tmp_path):
    cfg = StudyConfig(solution={"kind": "complex_power", "m": 4}, resolutions=[32, 64, 128])
    rep = run_convergence(cfg)
    assert rep.passed
    assert [r["n"] for r in rep.rows] == [32, 64, 128]
    emit_report(rep, tmp_path, ["csv", "json", "text"], "conv")
    with open(tmp_path / "conv.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 4
    assert rows[1][CSV_COLUMNS.index("seconds")] == ""
    data = json.loads((tmp_path / "conv.json").read_text())
    assert data["passed"] and "seconds" not in data["rows"][0]
    assert "err_max" in (tmp_path / "conv.txt").read_text()


def test_convergence_records_stage_errors():
    cfg = StudyConfig(domain={"family": "circle", "radius": 0.95}, resolutions=[16, 32], order_band=None)
    rep = run_convergence(cfg)
    assert not rep.passed and len(rep.errors) >= 1


def test_empty_report_renders():
    rep = Report("convergence", {})
    assert rep.passed
    assert render(rep, "csv").strip() == ",".join(CSV_COLUMNS)
    json.loads(render(rep, "json"))


def test_json_deterministic():
    cfg = StudyConfig(seed=7)
    a = render(run_property_suite("minimization", cfg), "json")
    b = render(run_property_suite("minimization", cfg), "json")
    assert a == b
    c = render(run_property_suite("minimization", StudyConfig(seed=7, single_thread=True)), "json")
    assert a.replace('"single_thread": false', '"single_thread": true') == c


def test_timing_opt_in():
    rep = run_solve(StudyConfig(), n=32)
    assert "seconds" not in render(rep, "json")
    assert "seconds" in render(rep, "json", include_timing=True)


def test_unknown_suite():
    with pytest.raises(ConfigError):
        run_property_suite("nonsense")


def test_every_suite_runs_two_geometries_two_resolutions():
    for suite in SUITES.values():
        assert suite.levels >= 2
    rep = run_property_suite("fsharp", StudyConfig())
    names = {c.name for c in rep.checks}
    assert any("circle,n=16" in n for n in names) and any("star,n=32" in n for n in names)


@pytest.mark.parametrize("suite", ["green", "identities", "fsharp", "minimization"])
def test_fast_suites_pass(suite):
    assert run_property_suite(suite, StudyConfig(), resolutions=[16, 24]).passed


def test_geometry_dump():
    rep, text = run_geometry_dump(StudyConfig(), n=16)
    assert json.loads(text)["n_cut"] == rep.stats["n_cut"]


def test_emit_report_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(Exception, match="cannot write report"):
        emit_report(Report("x", {}), blocker / "sub")


# -- CLI ----------------------------------------------------------------------------


def test_cli_solve_with_config(tmp_path, capsys):
    cfg = {
        "domain": {"family": "star", "a": 0.7, "b": 0.1, "k": 3},
        "solution": {"kind": "polynomial", "name": "x2-y2"},
        "fp_tol": 1e-9,
    }
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(cfg))
    assert load_config(path)["domain"]["k"] == 3
    code = main(["solve", "--config", str(path), "--n", "32", "--out", str(tmp_path / "o"), "--format", "json"])
    assert code == 0
    data = json.loads((tmp_path / "o" / "solve.json").read_text())
    assert data["rows"][0]["err_max"] <= 1e-8
    assert "PASS" in capsys.readouterr().out


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["props", "fsharp", "--n", "16", "--seed", "1", "--single-thread"]) == 0
    # a single resolution has no observed order to check
    assert main(["converge", "--n", "32"]) == 0
    bad = tmp_path / "bad.yaml"
    bad.write_text("resolutions: [64, 32]\n")
    assert main(["converge", "--config", str(bad)]) == 2
    bad.write_text("- not a mapping\n")
    assert main(["solve", "--config", str(bad)]) == 2
    assert main(["solve", "--config", str(tmp_path / "missing.yaml")]) == 2
    assert main(["spectrum", "--n", "16", "--delta", "0.2", "--out", str(tmp_path / "s")]) == 0
    assert (tmp_path / "s" / "eigenvalues_calB.csv").exists()
    assert main(["geom-dump", "--n", "16"]) == 0
    assert '"n_cut"' in capsys.readouterr().out


def test_cli_failing_check_exit_one(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump({"resolutions": [32, 64, 128]}))
    assert main(["converge", "--config", str(path)]) == 1


def test_shipped_example_config(tmp_path):
    from pathlib import Path

    cfg = load_config(Path(__file__).resolve().parents[1] / "docs" / "example_config.yaml")
    StudyConfig.from_mapping(cfg)
