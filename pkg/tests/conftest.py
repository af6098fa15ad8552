"""Shared fixtures: seeded generators, scalar scenarios and a small experiment config."""

import copy

import numpy as np
import pytest
import yaml

from catlab.config import Config, build_experiment
from catlab.mathcore import SpdMatrix
from catlab.model import LsaeParams
from catlab.tasks import TaskConfig

SMALL_CONFIG = {
    "model": {"d0": 2, "d": 2, "n": 4},
    "radii": {"eps": 0.1, "rho": 0.5, "m": 1},
    "mc": {"num_tasks": 64, "seed": 3},
    "train": {"steps": 200, "lr": 0.05, "log_every": 50},
    "verify": {
        "instances": 2,
        "moment_samples": 2000,
        "fd_instances": 2,
        "grid_instances": 2,
        "grid_points": 21,
        "oracle_steps": 30,
        "lemma_tasks": 200,
        "lemma_instances": 2,
        "risk_tasks": 400,
        "bound_tasks": 200,
        "train_steps": 300,
        "eps_grid": [0.0, 0.1],
        "rho_grid": [0.0, 0.5],
        "m_grid": [1],
        "train_eps_grid": [0.0, 0.3],
    },
}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def s1():
    """Scalar scenario: W^E = 1, Lambda = 1, N = 2, eps = 0."""
    return {"we": np.eye(1), "lam": SpdMatrix.identity(1), "n": 2, "eps": 0.0}


@pytest.fixture
def s2():
    """Scalar scenario S1 with eps = 1."""
    return {"we": np.eye(1), "lam": SpdMatrix.identity(1), "n": 2, "eps": 1.0}


@pytest.fixture
def tasks3():
    return TaskConfig(d0=3, n=8, lam=SpdMatrix.diagonal([1.0, 2.0, 0.5]))


@pytest.fixture
def small_config():
    return copy.deepcopy(SMALL_CONFIG)


@pytest.fixture
def small_config_path(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(yaml.safe_dump(SMALL_CONFIG, sort_keys=False))
    return path


@pytest.fixture
def small_experiment(small_config_path):
    return build_experiment(Config(small_config_path))


def make_params(rng, d, d0):
    """Dense random LSA-E parameters, off-diagonal blocks included."""
    return LsaeParams(
        we=rng.standard_normal((d, d0)),
        kq11=rng.standard_normal((d, d)),
        kq12=rng.standard_normal(d),
        kq21=rng.standard_normal(d),
        kq22=float(rng.standard_normal()),
        v11=rng.standard_normal((d, d)),
        v12=rng.standard_normal(d),
        v21=rng.standard_normal(d),
        v22=float(rng.standard_normal()),
    )


@pytest.fixture
def random_params():
    return make_params
