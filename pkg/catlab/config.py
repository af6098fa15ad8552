"""
Configuration management for catlab.
"""

import copy
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from catlab.attacks import AttackConfig
from catlab.errors import ConfigError
from catlab.mathcore import SpdMatrix
from catlab.montecarlo import McConfig
from catlab.tasks import TaskConfig
from catlab.trainer import InitSpec, TrainConfig, initial_embedding


DEFAULT_CONFIG = {
    "model": {
        "d0": 4,
        "d": 4,
        "n": 16,
    },
    "lambda": {
        "kind": "identity",
        "values": None,
        "seed": 0,
        "condition": 4.0,
    },
    "radii": {
        "eps": 0.05,
        "rho": 0.5,
        "m": 1,
    },
    "embedding": {
        "init": "identity",
        "scale": 1.0,
        "matrix": None,
    },
    "attack": {
        "steps": 10,
        "step_size": 0.01,
    },
    "risk_attack": {
        "steps": 20,
        "step_ratio": 0.1,
    },
    "mc": {
        "num_tasks": 10000,
        "seed": 0,
        "antithetic": False,
    },
    "train": {
        "steps": 20000,
        "lr": 0.01,
        "train_we": False,
        "beta": 0.5,
        "tol": 0.0,
        "log_every": 100,
    },
    "init": {
        "zeta": 0.1,
    },
    "bound": {
        "enabled": True,
    },
    "verify": {
        "instances": 20,
        "moment_samples": 100000,
        "fd_instances": 50,
        "grid_instances": 20,
        "grid_points": 401,
        "oracle_steps": 50,
        "lemma_tasks": 10000,
        "lemma_instances": 20,
        "risk_tasks": 100000,
        "bound_tasks": 10000,
        "train_steps": 20000,
        "eps_grid": [0.0, 0.05, 0.1, 0.2, 0.5],
        "rho_grid": [0.0, 0.5, 1.0],
        "m_grid": [1, 4],
        "train_eps_grid": [0.0, 0.1, 0.3],
    },
}


class Config:
    """Configuration manager for catlab."""

    def __init__(self, config_path: Optional[Path] = None):
        self.config_path = Path(config_path) if config_path else None
        self._config = self._load_config()

    def _load_config(self) -> dict:
        """Load configuration from YAML file, merging with defaults."""
        config = copy.deepcopy(DEFAULT_CONFIG)

        if self.config_path is not None:
            try:
                with open(self.config_path) as f:
                    user_config = yaml.safe_load(f) or {}
            except OSError as e:
                raise ConfigError(f"cannot read config {self.config_path}: {e.strerror}") from e
            except yaml.YAMLError as e:
                raise ConfigError(f"invalid YAML in {self.config_path}: {e}") from e
            if not isinstance(user_config, dict):
                raise ConfigError(f"{self.config_path} must contain a mapping")
            self._check_keys(DEFAULT_CONFIG, user_config, "")
            config = self._deep_merge(config, user_config)

        return config

    def _check_keys(self, schema: dict, user: dict, prefix: str) -> None:
        """Reject keys that the schema does not know."""
        for key, value in user.items():
            name = f"{prefix}{key}"
            if key not in schema:
                raise ConfigError(f"unknown config key: {name}")
            if isinstance(schema[key], dict):
                if not isinstance(value, dict):
                    raise ConfigError(f"config key {name} must be a mapping")
                self._check_keys(schema[key], value, f"{name}.")

    def _deep_merge(self, base: dict, override: dict) -> dict:
        """Deep merge two dictionaries."""
        result = base.copy()
        for key, value in override.items():
            if key in result and isinstance(result[key], dict) and isinstance(value, dict):
                result[key] = self._deep_merge(result[key], value)
            else:
                result[key] = value
        return result

    def get(self, key: str, default: Any = None) -> Any:
        """Get a config value using dot notation (e.g., 'mc.num_tasks')."""
        keys = key.split(".")
        value = self._config
        for k in keys:
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default
        return value

    def set(self, key: str, value: Any) -> None:
        """Set a known config value using dot notation."""
        keys = key.split(".")
        node = self._config
        for k in keys[:-1]:
            if not isinstance(node.get(k), dict):
                raise ConfigError(f"unknown config key: {key}")
            node = node[k]
        if keys[-1] not in node:
            raise ConfigError(f"unknown config key: {key}")
        node[keys[-1]] = value

    def as_dict(self) -> dict:
        return copy.deepcopy(self._config)

    def save(self, path: Path) -> Path:
        """Write the effective configuration; loading it reproduces this config."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            yaml.dump(self._config, f, default_flow_style=False, sort_keys=False)
        return path


def _number(cfg: Config, key: str, kind=float, minimum=None, strict=False):
    value = cfg.get(key)
    try:
        if kind is int and (isinstance(value, bool) or float(value) != int(value)):
            raise ValueError
        value = kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a{'n integer' if kind is int else ' number'}, got {value!r}")
    if minimum is not None and (value <= minimum if strict else value < minimum):
        relation = ">" if strict else ">="
        raise ConfigError(f"{key} must be {relation} {minimum}, got {value}")
    return value


def _flag(cfg: Config, key: str) -> bool:
    value = cfg.get(key)
    if not isinstance(value, bool):
        raise ConfigError(f"{key} must be true or false, got {value!r}")
    return value


@dataclass(frozen=True)
class VerifySettings:
    """Sizes and grids of the verification suite."""
    instances: int
    moment_samples: int
    fd_instances: int
    grid_instances: int
    grid_points: int
    oracle_steps: int
    lemma_tasks: int
    lemma_instances: int
    risk_tasks: int
    bound_tasks: int
    train_steps: int
    eps_grid: tuple[float, ...]
    rho_grid: tuple[float, ...]
    m_grid: tuple[int, ...]
    train_eps_grid: tuple[float, ...]


def _grid(cfg: Config, key: str, kind=float) -> tuple:
    values = cfg.get(key)
    if not isinstance(values, list) or not values:
        raise ConfigError(f"{key} must be a nonempty list")
    out = []
    for value in values:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} entries must be numbers, got {value!r}")
        if value < 0 or (kind is int and value != int(value)):
            raise ConfigError(f"{key} entries must be nonnegative {'integers' if kind is int else 'numbers'}")
        out.append(kind(value))
    return tuple(out)


def _build_verify(cfg: Config) -> VerifySettings:
    counts = {
        key: _number(cfg, f"verify.{key}", int, 1)
        for key in (
            "instances",
            "fd_instances",
            "grid_instances",
            "oracle_steps",
            "lemma_tasks",
            "lemma_instances",
            "risk_tasks",
            "bound_tasks",
            "train_steps",
        )
    }
    moment_samples = _number(cfg, "verify.moment_samples", int, 2)
    grid_points = _number(cfg, "verify.grid_points", int, 3)
    if grid_points % 2 == 0:
        raise ConfigError(f"verify.grid_points must be odd so the grid holds 0 and the corners, got {grid_points}")
    for key in ("lemma_tasks", "risk_tasks", "bound_tasks"):
        if counts[key] < 2:
            raise ConfigError(f"verify.{key} must be >= 2, got {counts[key]}")
    return VerifySettings(
        moment_samples=moment_samples,
        grid_points=grid_points,
        eps_grid=_grid(cfg, "verify.eps_grid"),
        rho_grid=_grid(cfg, "verify.rho_grid"),
        m_grid=_grid(cfg, "verify.m_grid", int),
        train_eps_grid=_grid(cfg, "verify.train_eps_grid"),
        **counts,
    )


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated, typed view of a Config."""
    d0: int
    d: int
    n: int
    m: int
    eps: float
    rho: float
    lam: SpdMatrix
    we: np.ndarray
    attack: AttackConfig
    risk_steps: int
    risk_step_ratio: float
    mc: McConfig
    train: TrainConfig
    init: InitSpec
    bound_enabled: bool
    verify: VerifySettings
    raw: Config

    @property
    def tasks(self) -> TaskConfig:
        return TaskConfig(d0=self.d0, n=self.n, lam=self.lam)

    def risk_attack(self, rho: Optional[float] = None) -> AttackConfig:
        rho = self.rho if rho is None else rho
        return AttackConfig.for_risk(rho, self.risk_steps, self.risk_step_ratio)


def _build_lambda(cfg: Config, d0: int) -> SpdMatrix:
    kind = cfg.get("lambda.kind")
    try:
        if kind == "identity":
            return SpdMatrix.identity(d0)
        if kind == "diagonal":
            values = cfg.get("lambda.values")
            if not isinstance(values, list) or len(values) != d0:
                raise ConfigError(f"lambda.values must list {d0} entries for a diagonal Lambda")
            return SpdMatrix.diagonal(values)
        if kind == "random":
            seed = _number(cfg, "lambda.seed", int, 0)
            condition = _number(cfg, "lambda.condition", float, 1.0)
            return SpdMatrix.random(d0, np.random.default_rng(seed), condition)
    except ConfigError:
        raise
    except (ValueError, ArithmeticError) as e:
        raise ConfigError(f"invalid Lambda: {e}") from e
    raise ConfigError(f"lambda.kind must be identity, diagonal or random, got {kind!r}")


def _build_init(cfg: Config) -> InitSpec:
    kind = cfg.get("embedding.init")
    zeta = _number(cfg, "init.zeta", float, 0.0, strict=True)
    if kind == "explicit":
        matrix = cfg.get("embedding.matrix")
        if matrix is None:
            raise ConfigError("embedding.matrix is required when embedding.init is explicit")
        return InitSpec(zeta=zeta, we_init=np.asarray(matrix, dtype=float))
    if kind not in ("identity", "scaled"):
        raise ConfigError(f"embedding.init must be identity, scaled or explicit, got {kind!r}")
    return InitSpec(zeta=zeta, we_init=kind, we_scale=_number(cfg, "embedding.scale"))


def build_experiment(cfg: Config, workers: int = 1) -> ExperimentConfig:
    """Validate ``cfg`` and build the typed experiment objects."""
    d0 = _number(cfg, "model.d0", int, 1)
    d = _number(cfg, "model.d", int, 1)
    n = _number(cfg, "model.n", int, 1)
    m = _number(cfg, "radii.m", int, 0)
    eps = _number(cfg, "radii.eps", float, 0.0)
    rho = _number(cfg, "radii.rho", float, 0.0)
    bound_enabled = _flag(cfg, "bound.enabled")

    if m > n:
        raise ConfigError(f"radii.m={m} exceeds context length model.n={n}")
    if bound_enabled and d > d0:
        raise ConfigError(
            f"robust bound requires embedding dimension d <= d0 (got d={d}, d0={d0}); "
            "set bound.enabled: false to run without it"
        )

    lam = _build_lambda(cfg, d0)
    init = _build_init(cfg)
    try:
        we = initial_embedding(d, d0, init)
        attack = AttackConfig(
            steps=_number(cfg, "attack.steps", int, 1),
            step_size=_number(cfg, "attack.step_size", float, 0.0, strict=True),
            radius=eps,
        )
        mc = McConfig(
            num_tasks=_number(cfg, "mc.num_tasks", int, 1),
            seed=_number(cfg, "mc.seed", int, 0),
            antithetic=_flag(cfg, "mc.antithetic"),
            workers=workers,
        )
        train = TrainConfig(
            steps=_number(cfg, "train.steps", int, 1),
            lr=_number(cfg, "train.lr", float, 0.0, strict=True),
            eps=eps,
            train_we=_flag(cfg, "train.train_we"),
            beta=_number(cfg, "train.beta", float, 0.0),
            tol=_number(cfg, "train.tol", float, 0.0),
            log_every=_number(cfg, "train.log_every", int, 1),
        )
    except ValueError as e:
        raise ConfigError(str(e)) from e

    return ExperimentConfig(
        d0=d0,
        d=d,
        n=n,
        m=m,
        eps=eps,
        rho=rho,
        lam=lam,
        we=we,
        attack=attack,
        risk_steps=_number(cfg, "risk_attack.steps", int, 1),
        risk_step_ratio=_number(cfg, "risk_attack.step_ratio", float, 0.0, strict=True),
        mc=mc,
        train=train,
        init=init,
        bound_enabled=bound_enabled,
        verify=_build_verify(cfg),
        raw=cfg,
    )
