import csv
import json

import pytest

from telapsed import cli

STEP = {"kind": "step", "r0": 0.5, "sigma_affine": [0.5, 1.0]}
TANH = {"kind": "tanh_phi", "r0": 0.5, "gamma": 1.5}


def write(tmp_path, name, cfg):
    p = tmp_path / f"{name}.json"
    p.write_text(json.dumps(cfg))
    return str(p)


def run(argv):
    return cli.main(argv)


@pytest.fixture
def base(tmp_path):
    return {"model": STEP, "grid": {"dx": 0.02, "x_max": 30},
            "initial": {"family": "indicator", "width": 2},
            "initial_b": {"family": "exp", "rate": 2}, "run": {"T": 3, "particles": 3000}}


@pytest.mark.parametrize("cmd,files", [
    ("steady", ["steady_density.csv"]),
    ("simulate", ["trace.csv", "final_density.csv"]),
    ("contract", ["contract.csv"]),
    ("distr", ["trace.csv", "final_density.csv"]),
    ("system", ["system.csv"]),
    ("oracle", ["oracle_trace.csv", "histogram.csv"]),
])
def test_subcommands(tmp_path, base, cmd, files):
    out = tmp_path / cmd
    assert run([cmd, "--config", write(tmp_path, "c", base), "--out", str(out)]) == 0
    for f in files + ["summary.json", "manifest.json"]:
        assert (out / f).exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["files"]) >= set(files)


def test_trace_columns(tmp_path, base):
    out = tmp_path / "o"
    run(["simulate", "--config", write(tmp_path, "c", base), "--out", str(out)])
    with open(out / "trace.csv") as fh:
        assert next(csv.reader(fh)) == ["t", "I", "mass", "dist_L1"]


def test_map_and_delay(tmp_path):
    cfg = {"model": TANH, "grid": {"dx": 0.05, "x_max": 40}, "run": {"map_points": 11}}
    out = tmp_path / "map"
    assert run(["map", "--config", write(tmp_path, "m", cfg), "--out", str(out)]) == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["classification"] == "Period2"
    assert s["period2"][0] + s["period2"][1] == pytest.approx(1.5, abs=1e-8)
    dcfg = {**cfg, "initial": {"family": "stationary", "at_I": s["period2"][0]}}
    out = tmp_path / "delay"
    code = run(["delay", "--config", write(tmp_path, "d", dcfg), "--out", str(out),
                "--delay", "10", "--intervals", "3", "--i-ini", "I_minus"])
    assert code == 0
    with open(out / "delay_trace.csv") as fh:
        assert next(csv.reader(fh)) == ["tau", "I_d", "I_inf"]
    s = json.loads((out / "summary.json").read_text())
    assert s["cesaro_activity"] < s["bound_activity"]


def test_validation_errors(tmp_path, capsys):
    bad = {"model": TANH, "run": {"mode": "delayed", "d": -1.0, "I_ini": 0.5}}
    assert run(["delay", "--config", write(tmp_path, "b", bad)]) == 2
    assert "run.d" in capsys.readouterr().err
    assert run(["steady", "--config", write(tmp_path, "u", {"model": {"kind": "step"}})]) == 2
    mismatch = {"model": TANH, "run": {"mode": "map"}}
    assert run(["steady", "--config", write(tmp_path, "x", mismatch), "--out", str(tmp_path / "x")]) == 2
    excit = {"model": {"kind": "step", "r0": 0.5, "sigma_affine": [1.5, -1.0]}}
    assert run(["simulate", "--config", write(tmp_path, "e", excit), "--out", str(tmp_path / "e")]) == 2


def test_numerical_failure_exit_code(tmp_path):
    cfg = {"model": STEP, "grid": {"dx": 0.1, "x_max": 3}}
    assert run(["steady", "--config", write(tmp_path, "t", cfg), "--out", str(tmp_path / "t")]) == 3


def test_env_default_output(tmp_path, base, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "root"))
    assert run(["steady", "--config", write(tmp_path, "envcfg", base)]) == 0
    assert (tmp_path / "root" / "envcfg" / "summary.json").exists()


def test_sweep(tmp_path, base):
    a = write(tmp_path, "a", {**base, "run": {"mode": "steady"}})
    b = write(tmp_path, "b", {**base, "run": {"mode": "map"}})
    assert run(["sweep", "--config", a, b, "--out", str(tmp_path / "sw"), "--workers", "2"]) == 0
    assert (tmp_path / "sw" / "a" / "steady_density.csv").exists()
    assert (tmp_path / "sw" / "b" / "map.csv").exists()


def test_schema(capsys):
    assert run(["schema"]) == 0
    assert "ExperimentConfig" in capsys.readouterr().out
