"""
Gradient-flow training of the closed-form surrogate.

Training starts from the structured initialization (W^V zero except
v22 = zeta, W^KQ zero except kq11 = zeta Theta Theta^T) and follows explicit
Euler steps on (kq11, v22), optionally also W^E with a beta-weighted
singular-value-variance penalty. kq21 and v21 are never updated.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import linalg

from catlab.errors import DimensionError, DivergenceError, PreconditionError
from catlab.losses import check_offdiag_zero, closed_form_surrogate, embedding_reg, embedding_reg_grad
from catlab.mathcore import SpdMatrix, sv_stats
from catlab.model import LsaeParams
from catlab.solver import regularized_gram
from catlab.tasks import gamma_n

logger = logging.getLogger(__name__)

DIVERGENCE_LOSS = 1e12

# Relative slack under which a step counts as non-increasing.
_TIE = 4 * np.finfo(float).eps


def default_theta(d: int) -> np.ndarray:
    """Theta = d^{-1/4} I, so that ||Theta Theta^T||_F = 1."""
    return d ** -0.25 * np.eye(d)


@dataclass(frozen=True)
class InitSpec:
    """Structured initialization and the starting embedding.

    ``we_init`` is ``"identity"`` (I_{d x d0}), ``"scaled"`` (we_scale * I_{d x d0})
    or an explicit d x d0 matrix.
    """
    zeta: float = 0.1
    theta: Optional[np.ndarray] = None
    we_init: Union[str, np.ndarray] = "identity"
    we_scale: float = 1.0

    def __post_init__(self):
        if self.zeta <= 0:
            raise ValueError(f"zeta must be positive, got {self.zeta}")
        if isinstance(self.we_init, str) and self.we_init not in ("identity", "scaled"):
            raise ValueError(f"unknown embedding init {self.we_init!r}")


@dataclass(frozen=True)
class TrainConfig:
    """Euler discretization of the gradient flow."""
    steps: int = 20_000
    lr: float = 1e-2
    eps: float = 0.05
    train_we: bool = False
    beta: float = 0.5
    tol: float = 0.0
    log_every: int = 100
    adaptive: bool = True
    min_lr: float = 1e-12

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.beta < 0:
            raise ValueError(f"beta must be nonnegative, got {self.beta}")
        if self.eps < 0:
            raise ValueError(f"eps must be nonnegative, got {self.eps}")
        if self.log_every < 1:
            raise ValueError(f"log_every must be >= 1, got {self.log_every}")


def initial_embedding(d: int, d0: int, spec: InitSpec) -> np.ndarray:
    if isinstance(spec.we_init, str):
        scale = spec.we_scale if spec.we_init == "scaled" else 1.0
        return scale * np.eye(d, d0)
    we = np.asarray(spec.we_init, dtype=float)
    if we.shape != (d, d0):
        raise DimensionError(f"explicit W^E has shape {we.shape}, expected ({d}, {d0})")
    return we


def init_params(d: int, d0: int, spec: InitSpec, lam: Optional[SpdMatrix] = None) -> LsaeParams:
    """Structured initial parameters, off-diagonal blocks zero."""
    theta = default_theta(d) if spec.theta is None else np.asarray(spec.theta, dtype=float)
    if theta.shape != (d, d):
        raise DimensionError(f"Theta has shape {theta.shape}, expected ({d}, {d})")
    gram = theta @ theta.T
    norm = float(np.linalg.norm(gram))
    if abs(norm - 1.0) > 1e-10:
        raise PreconditionError(f"||Theta Theta^T||_F must be 1, got {norm:.12g}")

    we = initial_embedding(d, d0, spec)
    # Theta lives in embedding space, so Theta Lambda is read through W^E
    if lam is not None and not np.any(theta @ we @ lam.entries):
        raise PreconditionError("Theta W^E Lambda is zero; the flow cannot leave the origin")

    p = LsaeParams.zeros(d, d0)
    return p.replace(we=we, kq11=spec.zeta * gram, v22=spec.zeta)


@dataclass(frozen=True)
class SurrogateGradient:
    """Gradient over the trained blocks; ``we`` is None when W^E is frozen."""
    kq11: np.ndarray
    v22: float
    we: Optional[np.ndarray] = None

    def max_norm(self) -> float:
        parts = [np.abs(self.kq11).max(), abs(self.v22)]
        if self.we is not None:
            parts.append(np.abs(self.we).max())
        return float(max(parts))


def surrogate_grad(
    p: LsaeParams,
    lam: SpdMatrix,
    n: int,
    eps: float,
    beta: float = 0.0,
    train_we: bool = False,
) -> SurrogateGradient:
    """Analytic gradient of the closed-form surrogate (+ beta * regularizer when W^E trains)."""
    check_offdiag_zero(p)
    we, k, v = p.we, p.kq11, p.v22
    big_l = lam.entries
    a = regularized_gram(we, lam, n, eps)
    w = we @ big_l @ we.T
    cross = we @ lam.power(2) @ we.T

    g_k = 4.0 * v ** 2 * a @ k @ w - 4.0 * v * cross
    g_v = 4.0 * v * np.trace(a @ k @ w @ k.T) - 4.0 * np.trace(k @ cross)

    g_we = None
    if train_we:
        gl = gamma_n(lam, n).entries @ big_l
        g_we = (
            4.0 * v ** 2 * (k @ w @ k.T @ we @ gl + k.T @ a @ k @ we @ big_l)
            - 4.0 * v * (k + k.T) @ we @ lam.power(2)
        )
        if beta > 0:
            g_we = g_we + beta * embedding_reg_grad(we)[0]

    return SurrogateGradient(kq11=g_k, v22=float(g_v), we=g_we)


def training_objective(p: LsaeParams, lam: SpdMatrix, n: int, cfg: TrainConfig) -> float:
    value = closed_form_surrogate(p, lam, n, cfg.eps)
    if cfg.train_we and cfg.beta > 0:
        value += cfg.beta * embedding_reg(p.we)
    return value


def check_stationarity(p: LsaeParams, lam: SpdMatrix, n: int, eps: float) -> float:
    """||v22 W^E^T kq11 W^E - W^E^T A^{-1} W^E Lambda||_F."""
    a = regularized_gram(p.we, lam, n, eps)
    target = p.we.T @ linalg.solve(a, p.we @ lam.entries, assume_a="pos")
    return float(np.linalg.norm(p.v22 * p.we.T @ p.kq11 @ p.we - target))


@dataclass(frozen=True)
class TrajectoryRow:
    step: int
    loss: float
    stationarity_residual: float
    sv_min: float
    sv_max: float
    sv_var: float
    reg_value: float
    lr: float


@dataclass
class TrainResult:
    """Logged trajectory and final parameters; unpacks as ``(rows, params)``."""
    rows: list[TrajectoryRow]
    params: LsaeParams
    steps_taken: int
    converged: bool = False
    halvings: int = field(default=0)
    # tolerance, min_lr or steps
    stop_reason: str = "steps"

    def __iter__(self):
        return iter((self.rows, self.params))

    @property
    def final_loss(self) -> float:
        return self.rows[-1].loss


def _log_row(step: int, p: LsaeParams, lam: SpdMatrix, n: int, cfg: TrainConfig, lr: float) -> TrajectoryRow:
    stats = sv_stats(p.we)
    return TrajectoryRow(
        step=step,
        loss=closed_form_surrogate(p, lam, n, cfg.eps),
        stationarity_residual=check_stationarity(p, lam, n, cfg.eps),
        sv_min=stats.sigma_min,
        sv_max=stats.sigma_max,
        sv_var=stats.variance,
        reg_value=cfg.beta * stats.variance if cfg.train_we else 0.0,
        lr=lr,
    )


def _step(p: LsaeParams, g: SurrogateGradient, lr: float) -> LsaeParams:
    changes = {"kq11": p.kq11 - lr * g.kq11, "v22": p.v22 - lr * g.v22}
    if g.we is not None:
        changes["we"] = p.we - lr * g.we
    return p.replace(**changes)


def train_surrogate(init: LsaeParams, lam: SpdMatrix, n: int, cfg: TrainConfig) -> TrainResult:
    """Explicit Euler steps with halve-on-increase step control.

    A step that raises the objective is rejected and the step size halved.
    Training stops early when the gradient max-norm drops to ``cfg.tol`` or the
    step size falls below ``cfg.min_lr``.
    """
    check_offdiag_zero(init)
    p = init
    lr = cfg.lr
    objective = training_objective(p, lam, n, cfg)
    if not np.isfinite(objective) or objective > DIVERGENCE_LOSS:
        raise DivergenceError("initial surrogate loss is out of range", step=0, loss=objective, lr=lr)

    rows = [_log_row(0, p, lam, n, cfg, lr)]
    halvings = 0
    converged = False
    stop_reason = "steps"
    step = 0
    while step < cfg.steps:
        g = surrogate_grad(p, lam, n, cfg.eps, cfg.beta, cfg.train_we)
        if g.max_norm() <= cfg.tol:
            converged = True
            stop_reason = "tolerance"
            break

        candidate = _step(p, g, lr)
        value = training_objective(candidate, lam, n, cfg)
        if not cfg.adaptive and (not np.isfinite(value) or value > DIVERGENCE_LOSS):
            raise DivergenceError("surrogate loss diverged", step=step + 1, loss=value, lr=lr)

        if cfg.adaptive and not value <= objective + _TIE * abs(objective):
            lr /= 2.0
            halvings += 1
            logger.debug("step %d: objective rose to %.6g, lr halved to %.3g", step + 1, value, lr)
            if lr < cfg.min_lr:
                logger.info("step size fell below %.3g at step %d; stopping", cfg.min_lr, step)
                stop_reason = "min_lr"
                break
            continue

        p, objective = candidate, value
        step += 1
        if step % cfg.log_every == 0 or step == cfg.steps:
            rows.append(_log_row(step, p, lam, n, cfg, lr))

    if rows[-1].step != step:
        rows.append(_log_row(step, p, lam, n, cfg, lr))
    return TrainResult(
        rows=rows,
        params=p,
        steps_taken=step,
        converged=converged,
        halvings=halvings,
        stop_reason=stop_reason,
    )
