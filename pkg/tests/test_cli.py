import csv
import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from mfecomp.cli import main, sweep_verdict, worker_count
from mfecomp.lattice import StateGrid


def read_csv(path):
    raw = path.read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert all(len(r) == len(rows[0]) for r in rows)
    return rows[0], rows[1:]


def final_cdf(directory):
    header, rows = read_csv(directory / "population.csv")
    last = max(int(r[0]) for r in rows)
    w = np.array([float(r[2]) for r in rows if int(r[0]) == last])
    return np.cumsum(w)


def assert_svg(path):
    root = ET.parse(path).getroot()
    assert root.tag.endswith("svg")


@pytest.fixture(scope="module")
def baseline_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("solve") / "l-mld"
    assert main(["solve", "security", "--out", str(out)]) == 0
    return out


# --- validate


@pytest.mark.parametrize("name", ["security", "coordination", "search", "heterogeneous"])
def test_validate_passes_bundled_models(name, capsys):
    assert main(["validate", name]) == 0
    assert "all conditions satisfied" in capsys.readouterr().out


def test_validate_reports_violations(tmp_path, capsys):
    assert main(["validate", "broken_security", "--out", str(tmp_path)]) == 1
    assert "utility-increasing-differences-x-f" in capsys.readouterr().out
    header, rows = read_csv(tmp_path / "violations.csv")
    assert header == ["condition", "witness", "lhs", "rhs", "margin"]
    assert rows and all(float(r[4]) < 0 for r in rows)
    assert (tmp_path / "manifest.json").exists()


def test_validate_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text('model = "security"\n[payoff]\ncots = 1\n')
    assert main(["validate", str(bad)]) == 2
    assert "cots" in capsys.readouterr().err
    bad.write_text("model = [")
    assert main(["validate", str(bad)]) == 2
    assert main(["validate", str(tmp_path / "missing.toml")]) == 2


# --- solve


def test_solve_writes_artifacts(baseline_dir):
    names = {p.name for p in baseline_dir.iterdir()}
    assert {"population.csv", "strategy.csv", "convergence.csv", "equilibrium.csv", "cdf.svg", "manifest.json"} <= names
    header, rows = read_csv(baseline_dir / "population.csv")
    assert header == ["iteration", "state", "weight"]
    header, conv = read_csv(baseline_dir / "convergence.csv")
    assert header == ["iteration", "tv_step"] and conv[0][0] == "1"
    assert float(conv[-1][1]) < 5e-4
    header, eq = read_csv(baseline_dir / "equilibrium.csv")
    assert header == ["residual", "gap", "iterations", "converged"]
    assert eq[0][3] == "true" and int(eq[0][2]) == len(conv)
    header, strat = read_csv(baseline_dir / "strategy.csv")
    assert header == ["iteration", "state", "action"]
    last = max(int(r[0]) for r in strat)
    actions = [float(r[2]) for r in strat if int(r[0]) == last]
    assert all(0 <= a <= 25 for a in actions)
    manifest = json.loads((baseline_dir / "manifest.json").read_text())
    assert manifest["command"] == "solve" and manifest["config"]["model"] == "security"
    assert_svg(baseline_dir / "cdf.svg")


def test_solve_cap_reports_non_convergence(tmp_path):
    assert main(["solve", "security", "--max-iters", "1", "--out", str(tmp_path)]) == 3
    _, conv = read_csv(tmp_path / "convergence.csv")
    assert len(conv) == 1


def test_solve_refuses_invalid_model(tmp_path):
    assert main(["solve", "broken_security", "--out", str(tmp_path / "x")]) == 1
    assert main(["solve", "broken_security", "--skip-validate", "--max-iters", "5", "--out", str(tmp_path / "y")]) in (0, 3)


def test_lower_and_upper_runs_are_ordered(tmp_path, baseline_dir):
    assert main(["solve", "security", "--algorithm", "u-mld", "--out", str(tmp_path)]) == 0
    assert np.all(final_cdf(baseline_dir) >= final_cdf(tmp_path) - 1e-10)


def test_solve_typed_model(tmp_path):
    assert main(["solve", "heterogeneous", "--out", str(tmp_path)]) == 0
    header, _ = read_csv(tmp_path / "strategy.csv")
    assert header == ["iteration", "type", "state", "action"]
    assert main(["solve", "heterogeneous", "--algorithm", "l-brd", "--out", str(tmp_path / "b")]) == 2


def test_single_value_sweep_matches_solve(tmp_path, baseline_dir):
    assert main(["sweep", "security", "--param", "cost", "--values", "0.05", "--out", str(tmp_path)]) == 0
    point = tmp_path / "point_00"
    for name in ("population.csv", "strategy.csv", "convergence.csv", "equilibrium.csv"):
        assert (point / name).read_bytes() == (baseline_dir / name).read_bytes()
    assert (tmp_path / "verdict.txt").read_text().startswith("single value")


# --- sweeps


def test_cost_sweep_is_sd_nonincreasing(tmp_path, monkeypatch):
    monkeypatch.setenv("MFECOMP_WORKERS", "3")
    assert main(["sweep", "security", "--param", "cost", "--values", "0.005,0.01,0.05", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "verdict.txt").read_text().startswith("SD-nonincreasing")
    header, rows = read_csv(tmp_path / "sweep.csv")
    assert header[:2] == ["value", "directory"] and len(rows) == 3
    means = [float(r[header.index("mean_state")]) for r in rows]
    assert means[0] >= means[1] >= means[2]
    header, rel = read_csv(tmp_path / "sd_matrix.csv")
    assert header == ["value_i", "value_j", "relation"] and len(rel) == 9
    read_csv(tmp_path / "cdfs.csv")
    assert_svg(tmp_path / "sweep.svg")


def test_tilt_sweep_is_sd_nonincreasing(tmp_path):
    values = "0.4/0.4,0.45/0.35,0.5/0.3"
    assert main(["sweep", "security", "--param", "tilt", "--values", values, "--out", str(tmp_path)]) == 0
    assert (tmp_path / "verdict.txt").read_text().startswith("SD-nonincreasing")


def test_sweep_rejects_unknown_parameter(tmp_path):
    assert main(["sweep", "security", "--param", "beta", "--values", "0.5", "--out", str(tmp_path)]) == 2
    assert main(["sweep", "security", "--param", "tilt", "--values", "0.5", "--out", str(tmp_path)]) == 2


def test_sweep_verdict_classification():
    grid = StateGrid.integers(0, 2)
    lo, mid, hi = [1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]
    assert sweep_verdict([lo, mid, hi], list("abc"), grid)[1].startswith("SD-nondecreasing")
    assert sweep_verdict([hi, mid, lo], list("abc"), grid)[1].startswith("SD-nonincreasing")
    assert sweep_verdict([lo, lo], list("ab"), grid)[1].startswith("constant")
    verdict = sweep_verdict([[0.5, 0, 0.5], mid], list("ab"), grid)[1]
    assert verdict.startswith("not SD-monotone") and "a vs b" in verdict


def test_worker_count_respects_environment(monkeypatch):
    monkeypatch.setenv("MFECOMP_WORKERS", "1")
    assert worker_count(10) == 1
    monkeypatch.setenv("MFECOMP_WORKERS", "lots")
    assert worker_count(1) == 1
    monkeypatch.delenv("MFECOMP_WORKERS")
    assert 1 <= worker_count(4) <= 4


# --- simulate


def test_simulate_is_deterministic(tmp_path, monkeypatch):
    monkeypatch.setenv("MFECOMP_WORKERS", "2")
    args = ["simulate", "security", "--players", "20,40", "--steps", "15", "--replications", "2", "--seed", "4"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    monkeypatch.setenv("MFECOMP_WORKERS", "1")
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("empirical.csv", "tv_series.csv", "summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    header, rows = read_csv(tmp_path / "a" / "summary.csv")
    assert header[0] == "players" and [r[0] for r in rows] == ["20", "40"]
    header, rows = read_csv(tmp_path / "a" / "tv_series.csv")
    assert len(rows) == 2 * 2 * 15
    assert_svg(tmp_path / "a" / "tv.svg")


def test_simulate_deterministic_kernel_has_zero_gap(tmp_path):
    assert main(["simulate", "deterministic", "--players", "7", "--steps", "10", "--replications", "1",
                 "--out", str(tmp_path)]) == 0
    header, rows = read_csv(tmp_path / "tv_series.csv")
    col = header.index("tv_meanfield")
    assert all(float(r[col]) == 0.0 for r in rows)


def test_simulate_rejects_action_coupled_model(tmp_path):
    assert main(["simulate", "search", "--players", "10", "--steps", "2", "--out", str(tmp_path)]) == 2
