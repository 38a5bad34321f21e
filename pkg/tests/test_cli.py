import json

import numpy as np
import pytest

from lqr_homotopy.cli import Experiment, main

CE_PROBLEM = {"scalar": {"a": 0.0, "b": 1.0, "q": 1.0, "r": 0.25}}
CE_CLASS = {"counterexample": {"delta": 5e-4}}
CE_DIST = {"mu0": {"eps": 0.0}}


def write_config(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def run(tmp_path, command, cfg):
    path = write_config(tmp_path, cfg)
    return main([command, "--config", path, "--out", str(tmp_path)])


def test_dare_single_gamma_zero(tmp_path):
    cfg = {"mode": "dare", "problem": CE_PROBLEM, "gammas": [0.0]}
    assert run(tmp_path, "dare", cfg) == 0
    lines = (tmp_path / "dare.csv").read_text().strip().splitlines()
    assert lines[0] == "gamma,P_0_0,K_0_0,residual,optimal_cost"
    assert len(lines) == 2
    row = lines[1].split(",")
    assert float(row[2]) == 0.0  # K* = 0 at gamma = 0


def test_dare_sweep_monotone_cost(tmp_path):
    cfg = {
        "mode": "dare",
        "problem": {"scalar": {"a": 0.1, "b": 1.0, "q": 1.0, "r": 0.1}},
        "schedule": {"step": 0.02, "gamma_max": 0.98},
    }
    assert run(tmp_path, "dare", cfg) == 0
    lines = (tmp_path / "dare.csv").read_text().strip().splitlines()
    assert len(lines) == 51  # header + 50 grid points
    costs = [float(l.split(",")[-1]) for l in lines[1:]]
    assert all(b >= a - 1e-12 for a, b in zip(costs, costs[1:]))


def test_malformed_config_exit_code(tmp_path, capsys):
    cfg = {"mode": "dare"}  # missing problem
    assert run(tmp_path, "dare", cfg) == 1
    err = capsys.readouterr().err
    assert "problem" in err


def test_unknown_mode_exit_code(tmp_path):
    cfg = {"mode": "nonsense", "problem": CE_PROBLEM}
    assert run(tmp_path, "dare", cfg) == 1


def test_mode_command_mismatch(tmp_path):
    cfg = {"mode": "dare", "problem": CE_PROBLEM}
    assert run(tmp_path, "verify", cfg) == 1


def test_train_vanilla_trap(tmp_path):
    cfg = {
        "mode": "vanilla",
        "problem": CE_PROBLEM,
        "policy_class": CE_CLASS,
        "dist": CE_DIST,
        "gamma": 0.5,
        "theta0": [0.0, 1.0],
        "pg": {"max_iters": 500},
    }
    assert run(tmp_path, "train", cfg) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["final_gap"] > 0.5
    assert summary["tag"] == "stalled"
    lines = (tmp_path / "train.csv").read_text().strip().splitlines()
    assert lines[0] == "stage,iter,gamma,cost,grad_norm,theta_0,theta_1"


def test_train_homotopy_escape(tmp_path):
    cfg = {
        "mode": "homotopy",
        "problem": CE_PROBLEM,
        "policy_class": CE_CLASS,
        "dist": CE_DIST,
        "theta0": [0.0, 0.0],
        "schedule": {"gammas": [0.0, 0.25, 0.5]},
    }
    assert run(tmp_path, "train", cfg) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert abs(summary["final_gap"]) <= 1e-3
    assert len(summary["stages"]) == 3


def test_landscape_output(tmp_path):
    cfg = {
        "mode": "landscape",
        "problem": CE_PROBLEM,
        "policy_class": CE_CLASS,
        "dist": CE_DIST,
        "gamma": 0.5,
        "landscape": {"center": [0.0, 1.0], "half_widths": [1e-4, 1e-4],
                      "resolution": 5},
    }
    assert run(tmp_path, "landscape", cfg) == 0
    lines = (tmp_path / "landscape.csv").read_text().strip().splitlines()
    assert lines[0] == "theta0,theta1,cost"
    assert len(lines) == 26
    costs = np.array([float(l.split(",")[2]) for l in lines[1:]])
    # row-major 5x5 grid: center cell is index 12
    assert costs.argmin() == 12


def test_verify_ok_exit_code(tmp_path):
    cfg = {
        "mode": "verify",
        "problem": CE_PROBLEM,
        "policy_class": CE_CLASS,
        "dist": CE_DIST,
        "gamma": 0.5,
        "verify": {"n_directions": 60},
    }
    assert run(tmp_path, "verify", cfg) == 0
    report = json.loads((tmp_path / "verify.json").read_text())
    assert report["min_ratio"] > 0
    assert set(report["constants"]) == {"K", "Kprime", "eps_max", "alpha",
                                        "M"}


def test_verify_finding_exit_code(tmp_path):
    # atoms moved off the spike: (0, 1) is no longer a minimum there
    cfg = {
        "mode": "verify",
        "problem": CE_PROBLEM,
        "policy_class": CE_CLASS,
        "dist": {"atoms": [{"x": [-3.0], "w": 0.5},
                           {"x": [-2.8], "w": 0.5}]},
        "gamma": 0.5,
        "verify": {"n_directions": 60},
    }
    assert run(tmp_path, "verify", cfg) == 4
    report = json.loads((tmp_path / "verify.json").read_text())
    assert report["negative_samples"]


def test_gradcheck(tmp_path):
    cfg = {
        "mode": "gradcheck",
        "problem": CE_PROBLEM,
        "policy_class": CE_CLASS,
        "dist": CE_DIST,
        "gradcheck": {"n_points": 5, "gammas": [0.0, 0.5]},
        "seed": 3,
    }
    assert run(tmp_path, "gradcheck", cfg) == 0
    summary = json.loads((tmp_path / "gradcheck.json").read_text())
    assert summary["max_rel_err"] < 1e-5


def test_reproducibility_byte_identical(tmp_path):
    cfg = {
        "mode": "vanilla",
        "problem": CE_PROBLEM,
        "policy_class": CE_CLASS,
        "dist": CE_DIST,
        "gamma": 0.5,
        "theta0": [0.3, 0.0],
        "pg": {"max_iters": 50},
    }
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    out_a.mkdir()
    out_b.mkdir()
    path = write_config(tmp_path, cfg)
    assert main(["train", "--config", path, "--out", str(out_a)]) == 0
    assert main(["train", "--config", path, "--out", str(out_b)]) == 0
    assert (out_a / "train.csv").read_bytes() == (
        out_b / "train.csv"
    ).read_bytes()


def test_seed_irrelevant_without_random_elements(tmp_path):
    cfg = {
        "mode": "vanilla",
        "problem": CE_PROBLEM,
        "policy_class": CE_CLASS,
        "dist": CE_DIST,
        "gamma": 0.5,
        "theta0": [0.3, 0.0],
        "pg": {"max_iters": 50},
    }
    path = write_config(tmp_path, cfg)
    out_a = tmp_path / "s1"
    out_b = tmp_path / "s2"
    out_a.mkdir()
    out_b.mkdir()
    assert main(["train", "--config", path, "--out", str(out_a),
                 "--seed", "1"]) == 0
    assert main(["train", "--config", path, "--out", str(out_b),
                 "--seed", "2"]) == 0
    assert (out_a / "train.csv").read_bytes() == (
        out_b / "train.csv"
    ).read_bytes()


def test_config_roundtrip_idempotent(tmp_path):
    cfg = {
        "mode": "vanilla",
        "problem": CE_PROBLEM,
        "policy_class": CE_CLASS,
        "dist": {"atoms": [{"x": [-2.0], "w": 1.0}]},
        "gamma": 0.5,
        "theta0": [0.0, 1.0],
    }
    exp1 = Experiment(cfg)
    once = exp1.serialized()
    twice = Experiment(once).serialized()
    assert once == twice


def test_shipped_recipes_parse():
    from pathlib import Path

    recipe_dir = Path(__file__).resolve().parents[1] / "recipes"
    recipes = sorted(recipe_dir.glob("*.json"))
    assert recipes, "no experiment recipes shipped"
    for r in recipes:
        cfg = json.loads(r.read_text())
        exp = Experiment(cfg)
        assert exp.mode in ("homotopy", "vanilla", "dare", "landscape",
                            "verify", "gradcheck")
