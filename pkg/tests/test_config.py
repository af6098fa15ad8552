"""Tests for configuration loading and validation."""

from pathlib import Path

import numpy as np
import pytest
import yaml
from numpy.testing import assert_allclose

from catlab.config import DEFAULT_CONFIG, Config, build_experiment
from catlab.errors import ConfigError


def write_config(tmp_path, data, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return path


def test_defaults_build():
    exp = build_experiment(Config())
    assert (exp.d0, exp.d, exp.n, exp.m) == (4, 4, 16, 1)
    assert exp.eps == 0.05 and exp.rho == 0.5
    assert exp.attack.steps == 10 and exp.attack.step_size == 0.01 and exp.attack.radius == 0.05
    assert exp.train.beta == 0.5 and exp.train.eps == exp.eps
    assert exp.init.zeta == 0.1
    assert exp.mc.num_tasks == 10000 and exp.mc.workers == 1
    assert_allclose(exp.we, np.eye(4))
    assert exp.risk_attack().step_size == pytest.approx(0.05)
    assert exp.tasks.d0 == 4
    assert exp.verify.grid_points == 401
    assert exp.verify.lemma_instances == 20


def test_default_file_matches_defaults():
    with open(Path(__file__).parent.parent / "config" / "catlab.yaml") as f:
        assert yaml.safe_load(f) == DEFAULT_CONFIG


def test_user_config_merges(tmp_path):
    path = write_config(tmp_path, {"model": {"n": 8}, "lambda": {"kind": "diagonal", "values": [1, 2, 3, 4]}})
    cfg = Config(path)
    assert cfg.get("model.n") == 8
    assert cfg.get("model.d0") == 4
    exp = build_experiment(cfg, workers=3)
    assert_allclose(exp.lam.eigenvalues, [4, 3, 2, 1])
    assert exp.mc.workers == 3


def test_effective_config_reproduces(tmp_path):
    cfg = Config(write_config(tmp_path, {"radii": {"eps": 0.2}}))
    cfg.set("mc.seed", 9)
    saved = cfg.save(tmp_path / "out" / "effective_config.yaml")
    again = Config(saved)
    assert again.as_dict() == cfg.as_dict()
    assert build_experiment(again).mc.seed == 9


@pytest.mark.parametrize(
    "override, message",
    [
        ({"model": {"d": 5}}, "d <= d0"),
        ({"radii": {"m": 20}}, "exceeds context length"),
        ({"radii": {"eps": -0.1}}, "radii.eps"),
        ({"model": {"n": 2.5}}, "integer"),
        ({"attack": {"step_size": 0}}, "attack.step_size"),
        ({"lambda": {"kind": "diagonal", "values": [1, 2]}}, "4 entries"),
        ({"lambda": {"kind": "banded"}}, "lambda.kind"),
        ({"embedding": {"init": "explicit"}}, "embedding.matrix"),
        ({"mc": {"antithetic": "yes"}}, "true or false"),
        ({"mc": {"num_tasks": 5, "antithetic": True}}, "even"),
        ({"verify": {"grid_points": 400}}, "odd"),
        ({"verify": {"rho_grid": []}}, "nonempty"),
        ({"verify": {"m_grid": [1.5]}}, "integers"),
        ({"colour": {"mode": 1}}, "unknown"),
        ({"model": {"depth": 2}}, "unknown"),
    ],
)
def test_invalid_configs(tmp_path, override, message):
    with pytest.raises(ConfigError, match=message):
        build_experiment(Config(write_config(tmp_path, override)))


def test_rank_deficient_embedding_allowed_without_bound(tmp_path):
    path = write_config(tmp_path, {"model": {"d": 5}, "bound": {"enabled": False}})
    exp = build_experiment(Config(path))
    assert exp.we.shape == (5, 4)
    assert not exp.bound_enabled


def test_unreadable_config(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("model: [unclosed\n")
    with pytest.raises(ConfigError, match="invalid YAML"):
        Config(path)
    with pytest.raises(ConfigError, match="cannot read"):
        Config(tmp_path / "missing.yaml")
    with pytest.raises(ConfigError):
        Config().set("model.depth", 3)
