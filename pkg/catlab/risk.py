"""
Monte Carlo clean and robust generalization risk.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from catlab.attacks import AttackConfig, pgd_suffix
from catlab.errors import DimensionError, PreconditionError
from catlab.mathcore import SpdMatrix
from catlab.model import LsaeParams, predict, squared_error
from catlab.montecarlo import McConfig, map_tasks, mean_stderr
from catlab.solver import PredictorMatrix
from catlab.tasks import TaskConfig, TaskSample

logger = logging.getLogger(__name__)

Predictor = Union[LsaeParams, PredictorMatrix]


@dataclass(frozen=True)
class RiskEstimate:
    """Mean squared error over S tasks; robust when an attack is attached."""
    value: float
    stderr: float
    num_tasks: int
    attack: Optional[AttackConfig] = None
    m: int = 0
    rho: float = 0.0
    per_task: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @property
    def kind(self) -> str:
        return "clean" if self.attack is None else "robust"

    def as_row(self) -> dict:
        return {
            "kind": self.kind,
            "value": self.value,
            "stderr": self.stderr,
            "num_tasks": self.num_tasks,
            "m": self.m,
            "rho": self.rho,
            "attack_steps": self.attack.steps if self.attack else 0,
            "attack_step_size": self.attack.step_size if self.attack else 0.0,
        }


def as_params(predictor: Predictor) -> LsaeParams:
    return predictor.as_params() if isinstance(predictor, PredictorMatrix) else predictor


def clean_task_losses(predictor: Predictor, batch: TaskSample) -> np.ndarray:
    """Per-task (1/2)(y_hat - yq)^2."""
    if isinstance(predictor, PredictorMatrix):
        if predictor.d0 != batch.d0:
            raise DimensionError(f"B is {predictor.d0}x{predictor.d0}, tasks have d0={batch.d0}")
        return squared_error(predictor.predict(batch), batch.yq)
    return squared_error(predict(predictor, batch), batch.yq)


def _task_config(lam: SpdMatrix, n: int) -> TaskConfig:
    return TaskConfig(d0=lam.dim, n=n, lam=lam)


def _check_suffix(m: int, n: int) -> None:
    if not 0 <= m <= n:
        raise DimensionError(f"suffix length must be in [0, {n}], got {m}")


def mc_clean_risk(predictor: Predictor, lam: SpdMatrix, n: int, mc: McConfig) -> RiskEstimate:
    values = map_tasks(_task_config(lam, n), mc, lambda b: clean_task_losses(predictor, b))
    value, stderr = mean_stderr(values, mc.antithetic)
    return RiskEstimate(value=value, stderr=stderr, num_tasks=mc.num_tasks, per_task=values)


def _robust_chunk(
    predictor: Predictor,
    batch: TaskSample,
    m: int,
    attacks: Sequence[AttackConfig],
) -> tuple[np.ndarray, ...]:
    """Robust losses for increasing radii, each attack warm-started from the previous one."""
    clean = clean_task_losses(predictor, batch)
    params = as_params(predictor)
    previous = None
    out = []
    for atk in attacks:
        if atk.radius == 0 or m == 0:
            out.append(clean)
            continue
        pert = pgd_suffix(params, batch, m, atk, init=previous)
        # the zero perturbation is feasible, so the clean loss is attainable
        out.append(np.maximum(pert.loss, clean))
        previous = pert.delta
    return tuple(out)


def mc_robust_risk(
    predictor: Predictor,
    lam: SpdMatrix,
    n: int,
    m: int,
    rho: float,
    mc: McConfig,
    atk: Optional[AttackConfig] = None,
) -> RiskEstimate:
    """Mean per-task PGD suffix-attacked loss, a lower estimate of the robust risk."""
    _check_suffix(m, n)
    atk = atk or AttackConfig.for_risk(rho)
    if atk.radius != rho:
        raise PreconditionError(f"attack radius {atk.radius} differs from rho {rho}")

    (values,) = map_tasks(_task_config(lam, n), mc, lambda b: _robust_chunk(predictor, b, m, [atk]))
    value, stderr = mean_stderr(values, mc.antithetic)
    return RiskEstimate(
        value=value, stderr=stderr, num_tasks=mc.num_tasks, attack=atk, m=m, rho=rho, per_task=values
    )


def mc_robust_risk_sweep(
    predictor: Predictor,
    lam: SpdMatrix,
    n: int,
    m: int,
    rhos: Sequence[float],
    mc: McConfig,
    steps: int = 20,
    step_ratio: float = 0.1,
) -> list[RiskEstimate]:
    """Robust risk over several radii on common tasks, in the order given.

    Radii are attacked in ascending order and every attack starts from the
    previous radius's solution, so per-task losses never decrease in rho.
    """
    _check_suffix(m, n)
    if not rhos:
        raise ValueError("no radii to sweep")
    order = sorted(range(len(rhos)), key=lambda i: rhos[i])
    attacks = [AttackConfig.for_risk(rhos[i], steps, step_ratio) for i in order]

    values = map_tasks(_task_config(lam, n), mc, lambda b: _robust_chunk(predictor, b, m, attacks))
    estimates: list[Optional[RiskEstimate]] = [None] * len(rhos)
    for position, i in enumerate(order):
        value, stderr = mean_stderr(values[position], mc.antithetic)
        estimates[i] = RiskEstimate(
            value=value,
            stderr=stderr,
            num_tasks=mc.num_tasks,
            attack=attacks[position],
            m=m,
            rho=float(rhos[i]),
            per_task=values[position],
        )
    logger.debug("robust sweep over %d radii", len(rhos))
    return estimates
