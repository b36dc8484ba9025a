import json
import os

import numpy as np
import pytest

from malab.cli import exit_code, main
from malab.config import ConfigError
from malab.exceptions import (AssumptionError, CompatibilityError, FieldFormatError, FitError, GridError, QuadratureError,
                              SolverError)
from malab.pipeline import TIMING_KEYS


def strip_timing(obj):
    if isinstance(obj, dict):
        return {k: strip_timing(v) for k, v in obj.items() if k not in TIMING_KEYS}
    if isinstance(obj, list):
        return [strip_timing(v) for v in obj]
    return obj


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def run(*args):
    return main(list(args))


def test_exit_code_mapping():
    assert exit_code(ConfigError("x")) == 2
    assert exit_code(AssumptionError("x")) == 2
    assert exit_code(GridError("x")) == 2
    assert exit_code(FieldFormatError("x")) == 2
    assert exit_code(CompatibilityError("x")) == 3
    assert exit_code(SolverError("x")) == 4
    assert exit_code(QuadratureError("x")) == 4
    assert exit_code(FitError("x")) == 5


def test_radial_flat(workdir):
    assert run("radial", "--preset", "flat", "--out", "o") == 0
    rep = json.loads((workdir / "o" / "radial_report.json").read_text())
    assert all(c["max_abs_deviation"] == 0.0 for c in rep["cases"])
    assert (workdir / "o" / "resolved_config.json").exists()
    assert len((workdir / "o" / "config_hash.txt").read_text().strip()) == 64


def test_cell_flat_zero_field(workdir):
    assert run("cell", "--preset", "flat", "--out", "o") == 0
    assert not np.fromfile(workdir / "o" / "xi.f64", dtype="<f8").any()


def test_cell_incompatible_mean(workdir):
    cfg = workdir / "c.toml"
    cfg.write_text('preset = "separable-cell"\n[cell]\nnormalize = false\n[density]\nmean = 1.05\n')
    assert run("cell", "--config", str(cfg), "--out", "o") == 3


def test_invalid_config_exit_2(workdir, capsys):
    cfg = workdir / "c.toml"
    cfg.write_text("[solver]\nlinear_solver = 'magic'\n")
    assert run("solve", "--config", str(cfg), "--out", "o") == 2
    assert "error:" in capsys.readouterr().err
    assert run("radial", "--preset", "flat", "--out", "o", "--threads", "0") == 2


def test_solve_flat_and_stagnation(workdir):
    assert run("solve", "--preset", "flat", "--out", "ok") == 0
    for p in (workdir / "ok").glob("solve_L*.json"):
        assert json.loads(p.read_text())["newton_iterations"] <= 1
    cfg = workdir / "c.toml"
    cfg.write_text('preset = "manufactured-2d"\n[solver]\nmax_newton = 1\ntol = 1e-14\n')
    assert run("solve", "--config", str(cfg), "--out", "bad") == 4


def test_analyze_round_trip_and_missing_input(workdir):
    assert run("solve", "--preset", "flat", "--out", "s") == 0
    fields = sorted(str(p) for p in (workdir / "s").glob("u_*.json"))
    assert run("analyze", "--preset", "flat", "--out", "a", *fields) == 0
    rep = json.loads((workdir / "a" / "analysis_report.json").read_text())
    for f in rep["fields"]:
        assert f["detA"] == pytest.approx(1.0, abs=1e-8)
    assert run("analyze", "--preset", "flat", "--out", "b", "nope.json") == 2
    assert run("analyze", "--preset", "separable-cell", "--out", "c") == 2


def test_verify_assumptions_exit_codes(workdir):
    assert run("verify-assumptions", "--preset", "thm1-n3", "--out", "ok") == 0
    cfg = workdir / "bad.toml"
    cfg.write_text('preset = "thm1-n3"\n[density]\namp_d = 0.99\n')
    assert run("verify-assumptions", "--config", str(cfg), "--out", "bad") == 2
    assert not json.loads((workdir / "bad" / "assumptions.json").read_text())["passed"]


def test_experiment_violation_keeps_stage_marker(workdir):
    cfg = workdir / "bad.toml"
    cfg.write_text('preset = "thm1-n3"\n[density]\namp_d = 0.99\n')
    assert run("experiment", "--config", str(cfg), "--out", "x") == 2
    stage = json.loads((workdir / "x" / "stage.json").read_text())
    assert stage["stage"] == "verify_assumptions" and stage["status"] == "failed"
    assert json.loads((workdir / "x" / "run_report.json").read_text())["failed_stage"] == "verify_assumptions"


def test_experiment_flat_reproducible_and_contained(workdir):
    before = set(os.listdir(workdir))
    assert run("experiment", "--preset", "flat", "--out", "e1") == 0
    assert set(os.listdir(workdir)) - before == {"e1"}
    assert run("experiment", "--config", str(workdir / "e1" / "resolved_config.json"), "--out", "e2") == 0
    r1 = json.loads((workdir / "e1" / "run_report.json").read_text())
    r2 = json.loads((workdir / "e2" / "run_report.json").read_text())
    assert r1["passed"]
    assert strip_timing(r1) == strip_timing(r2)
    for p in (workdir / "e1").glob("*.f64"):
        assert p.read_bytes() == (workdir / "e2" / p.name).read_bytes()
