"""Tests for the solve, train and risk runners."""

import numpy as np
import pytest
import yaml
from numpy.testing import assert_allclose

from catlab.config import Config, build_experiment
from catlab.errors import DimensionError
from catlab.model import LsaeParams, load_params, save_params
from catlab.records import read_blocks
from catlab.runs import run_risk, run_solve, run_train
from catlab.solver import optimal_predictor_matrix


def test_solve_writes_predictor_params_and_bound(small_experiment, tmp_path):
    exp = small_experiment
    results = run_solve(exp, tmp_path, deterministic=True)
    names = sorted(p.name for p in results["files"])
    assert names == ["bound.csv", "optimal_params.csv", "predictor.csv"]

    expected = optimal_predictor_matrix(exp.we, exp.lam, exp.n, exp.eps).b
    assert_allclose(read_blocks(tmp_path / "predictor.csv")["b"], expected, rtol=0, atol=0)

    params = load_params(tmp_path / "optimal_params.csv")
    assert isinstance(results["params"], LsaeParams)
    assert_allclose(params.kq11, results["params"].kq11, rtol=0, atol=0)

    header, row = (tmp_path / "bound.csv").read_text().splitlines()
    assert header.split(",")[-4:] == ["eps", "rho", "m", "n"]
    assert float(row.split(",")[7]) == pytest.approx(results["bound"].bound)


def test_solve_reports_infeasible_factorization(tmp_path):
    path = tmp_path / "narrow.yaml"
    path.write_text(yaml.safe_dump({
        "model": {"d0": 2, "d": 1, "n": 4},
        "lambda": {"kind": "diagonal", "values": [1.0, 2.0]},
        "embedding": {"init": "explicit", "matrix": [[1.0, 0.5]]},
        "radii": {"eps": 0.1, "m": 1},
    }))
    exp = build_experiment(Config(path))
    results = run_solve(exp, tmp_path / "out", deterministic=True)
    assert results["params"] is None
    assert not (tmp_path / "out" / "optimal_params.csv").exists()
    assert (tmp_path / "out" / "predictor.csv").exists()


def test_train_writes_trajectory_and_params(small_experiment, tmp_path):
    results = run_train(small_experiment, tmp_path, deterministic=True)
    assert sorted(p.name for p in results["files"]) == ["params.csv", "trajectory.csv"]
    lines = (tmp_path / "trajectory.csv").read_text().splitlines()
    assert lines[0].startswith("step,")
    assert len(lines) == len(results["result"].rows) + 1

    saved = load_params(tmp_path / "params.csv")
    trained = results["result"].params
    assert_allclose(saved.kq11, trained.kq11, rtol=0, atol=0)
    assert saved.v22 == trained.v22
    assert not np.any(saved.kq21) and not np.any(saved.v21)


def test_risk_of_optimal_predictor(small_experiment, tmp_path):
    results = run_risk(small_experiment, tmp_path, deterministic=True)
    lines = (tmp_path / "risk.csv").read_text().splitlines()
    assert lines[0] == "kind,value,stderr,num_tasks,m,rho,attack_steps,attack_step_size"
    assert [line.split(",")[0] for line in lines[1:]] == ["clean", "robust"]
    assert results["robust"].value >= results["clean"].value


def test_risk_of_saved_params(small_experiment, tmp_path):
    solved = run_solve(small_experiment, tmp_path, deterministic=True)
    from_file = run_risk(small_experiment, tmp_path, True, params_path=tmp_path / "optimal_params.csv")
    from_matrix = run_risk(small_experiment, tmp_path / "direct", True)
    assert from_file["clean"].value == pytest.approx(from_matrix["clean"].value, rel=1e-10)
    assert solved["params"] is not None


def test_risk_rejects_mismatched_params(small_experiment, tmp_path):
    path = save_params(LsaeParams.zeros(3, 3).replace(we=np.eye(3)), tmp_path / "wide.csv")
    with pytest.raises(DimensionError):
        run_risk(small_experiment, tmp_path, True, params_path=path)


def test_solve_on_scalar_scenario(tmp_path):
    path = tmp_path / "s1.yaml"
    path.write_text(yaml.safe_dump({
        "model": {"d0": 1, "d": 1, "n": 2},
        "radii": {"eps": 0.0, "rho": 0.0, "m": 1},
    }))
    results = run_solve(build_experiment(Config(path)), tmp_path / "out", deterministic=True)
    assert results["bound"].bound == pytest.approx(1.5, abs=1e-12)
    assert_allclose(results["predictor"].b, [[0.5]])
