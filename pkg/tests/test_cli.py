from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from u2mfql.cli import main
from u2mfql.errors import CheckpointError


def read(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_solve_benchmark(tmp_path, capsys):
    assert main(["solve-benchmark", "--output-dir", str(tmp_path)]) == 0
    rows = read(tmp_path / "oracle.csv")
    assert list(rows[0]) == ["x", "control_mfg", "control_mfc", "value_mfg", "value_mfc", "mu_stat_mfg",
                             "mu_stat_mfc"]
    assert len(rows) == 41
    at = {round(float(r["x"]), 10): r for r in rows}
    assert abs(float(at[0.8]["control_mfg"])) <= 1e-12
    scalars = {r["name"]: float(r["value"]) for r in read(tmp_path / "oracle_scalars.csv")}
    assert scalars["m_mfg"] == pytest.approx(0.8, abs=1e-12)
    assert scalars["m_mfc"] == pytest.approx(0.0539326, abs=1e-7)
    assert (scalars["lambda1_mfg"], scalars["lambda2_mfg"]) == (-0.5, 1.5)
    assert "m_mfg" in capsys.readouterr().out


def test_train_smoke_and_determinism(tmp_path):
    args = ["train", "--episodes", "1", "--runs", "1", "--jobs", "1"]
    assert main(args + ["--output-dir", str(tmp_path / "a")]) == 0
    assert main(args + ["--output-dir", str(tmp_path / "b")]) == 0
    for name in ("run_0/metrics.csv", "run_0/checkpoint.qt", "summary.csv", "learned.csv", "runs.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    metrics = read(tmp_path / "a" / "run_0" / "metrics.csv")
    assert len(metrics) == 1 and list(metrics[0]) == ["episode", "mse_control", "mse_mean", "tv_mu", "q11"]
    learned = read(tmp_path / "a" / "learned.csv")
    assert list(learned[0]) == ["x", "control_learned_avg", "value_learned_avg", "mu_learned_avg"]


def test_train_parallel_matches_serial(tmp_path):
    base = ["train", "--episodes", "3", "--runs", "2", "--config", "benchmark_mfc"]
    assert main(base + ["--jobs", "2", "--output-dir", str(tmp_path / "p")]) == 0
    assert main(base + ["--jobs", "1", "--output-dir", str(tmp_path / "s")]) == 0
    for name in ("summary.csv", "learned.csv", "runs.csv", "run_1/metrics.csv"):
        assert (tmp_path / "p" / name).read_bytes() == (tmp_path / "s" / name).read_bytes()


def test_train_seed_override(tmp_path):
    assert main(["train", "--episodes", "1", "--runs", "2", "--seed", "5", "--jobs", "1",
                 "--output-dir", str(tmp_path)]) == 0
    assert [r["seed"] for r in read(tmp_path / "runs.csv")] == ["5", "6"]


def test_evaluate(tmp_path, capsys):
    assert main(["train", "--episodes", "2", "--runs", "1", "--output-dir", str(tmp_path)]) == 0
    assert main(["evaluate", str(tmp_path / "run_0" / "checkpoint.qt"), "--output-dir", str(tmp_path / "ev")]) == 0
    ev = {r["name"]: r["value"] for r in read(tmp_path / "ev" / "evaluate.csv")}
    metrics = read(tmp_path / "run_0" / "metrics.csv")[-1]
    assert ev["mse_control"] == metrics["mse_control"] and ev["mse_mean"] == metrics["mse_mean"]
    assert ev["episode"] == "2"


def test_iterate_toy_regimes(tmp_path):
    mus = {}
    for regime in ("mfg", "mfc"):
        out = tmp_path / regime
        assert main(["iterate", "--regime", regime, "--stop-tol", "1e-9", "--output-dir", str(out)]) == 0
        hist = read(out / "iterate.csv")
        assert list(hist[0]) == ["k", "resid_T_inf", "resid_P_inf"]
        assert len(hist) < 100_000
        last = hist[-1]
        assert float(last["resid_T_inf"]) <= 1e-6 and float(last["resid_P_inf"]) <= 1e-6
        mus[regime] = np.array([float(r["mu"]) for r in read(out / "iterate_final.csv")])
    assert np.abs(mus["mfg"] - mus["mfc"]).sum() > 1e-3


def test_iterate_fixed_point_input(tmp_path):
    doc = {"kernel": [[[0.5, 0.5]], [[0.5, 0.5]]], "base": [[1.0], [1.0]], "gamma": 0.5,
           "mu0": [0.5, 0.5], "q0": [[2.0], [2.0]]}
    path = tmp_path / "fp.json"
    path.write_text(json.dumps(doc))
    assert main(["iterate", "--mdp", str(path), "--iters", "3", "--output-dir", str(tmp_path)]) == 0
    first = read(tmp_path / "iterate.csv")[0]
    assert float(first["resid_T_inf"]) == 0.0 and float(first["resid_P_inf"]) == 0.0


def test_iterate_stochastic(tmp_path):
    assert main(["iterate", "--stochastic", "--iters", "50", "--seed", "3", "--output-dir", str(tmp_path / "a")]) == 0
    assert main(["iterate", "--stochastic", "--iters", "50", "--seed", "3", "--output-dir", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "iterate.csv").read_bytes() == (tmp_path / "b" / "iterate.csv").read_bytes()


def test_exit_code_config_error(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense = 1\n")
    assert main(["train", "--config", str(bad), "--output-dir", str(tmp_path)]) == 2
    assert "unknown key" in capsys.readouterr().err
    assert main(["train", "--jobs", "0", "--output-dir", str(tmp_path)]) == 2
    assert main(["iterate", "--mdp", str(tmp_path / "none.json"), "--output-dir", str(tmp_path)]) == 2
    assert main(["evaluate", str(tmp_path / "none.qt"), "--output-dir", str(tmp_path)]) == 2


def test_exit_code_numerical_failure(tmp_path):
    degenerate = tmp_path / "deg.cfg"
    degenerate.write_text("c1 = 0.5\nc2 = 2.0\nc3 = 0.5\n")
    assert main(["solve-benchmark", "--config", str(degenerate), "--output-dir", str(tmp_path)]) == 3
    doc = {"kernel": [[[1.0]]], "base": [[1.0]], "gamma": 0.99,
           "rates": {"mfg": {"omega_mu": 0.6, "omega_q": 0.0, "scale_q": 300.0}}}
    path = tmp_path / "div.json"
    path.write_text(json.dumps(doc))
    assert main(["iterate", "--mdp", str(path), "--regime", "mfg", "--output-dir", str(tmp_path)]) == 3


def test_output_env_variable(tmp_path, monkeypatch):
    monkeypatch.setenv("U2MFQL_OUTPUT", str(tmp_path / "envroot"))
    assert main(["solve-benchmark"]) == 0
    assert (tmp_path / "envroot" / "oracle.csv").exists()


def test_evaluate_shape_mismatch(tmp_path):
    from u2mfql.checkpoint import save_checkpoint
    from u2mfql.learner import TrainConfig, init_train

    save_checkpoint(init_train(TrainConfig(steps_per_episode=2), 3, 2), tmp_path / "s.qt")
    assert main(["evaluate", str(tmp_path / "s.qt"), "--output-dir", str(tmp_path)]) == 2
    assert CheckpointError
