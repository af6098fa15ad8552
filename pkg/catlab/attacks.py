"""
Inner maximization for embedding-space and input-suffix attacks.

PGD starts from zero, takes normalized ascent steps per column and projects
each column back onto the radius ball. The highest-loss feasible iterate is
returned, so an attack never lowers the loss of its starting point.
"""

import dataclasses
import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from catlab.errors import DimensionError
from catlab.model import (
    LsaeParams,
    Perturbation,
    PerturbationSpace,
    bilinear_grad,
    bilinear_prediction,
    embedded_matrix,
    query_key,
    squared_error,
    suffix_context,
)
from catlab.tasks import TaskSample

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AttackConfig:
    """PGD settings: K steps of size eta inside a ball of the given radius."""
    steps: int = 10
    step_size: float = 1e-2
    radius: float = 0.05
    restarts: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"attack steps must be >= 1, got {self.steps}")
        if self.step_size <= 0:
            raise ValueError(f"attack step size must be positive, got {self.step_size}")
        if self.radius < 0:
            raise ValueError(f"attack radius must be nonnegative, got {self.radius}")
        if self.restarts < 0:
            raise ValueError(f"restarts must be >= 0, got {self.restarts}")

    @classmethod
    def for_risk(cls, rho: float, steps: int = 20, step_ratio: float = 0.1) -> "AttackConfig":
        """Risk-evaluation attack: eta = step_ratio * rho (1e-2 when rho is 0)."""
        step_size = step_ratio * rho if rho > 0 else 1e-2
        return cls(steps=steps, step_size=step_size, radius=rho)

    def with_radius(self, radius: float) -> "AttackConfig":
        return dataclasses.replace(self, radius=radius)


def project_columns(delta, radius: float) -> np.ndarray:
    """Scale every column with norm above ``radius`` back onto the ball."""
    if radius < 0:
        raise ValueError(f"radius must be nonnegative, got {radius}")
    delta = np.asarray(delta, dtype=float)
    if radius == 0:
        return np.zeros_like(delta)
    norms = np.linalg.norm(delta, axis=-2, keepdims=True)
    scale = np.where(norms > radius, radius / np.where(norms > 0, norms, 1.0), 1.0)
    return delta * scale


def _check_embedding_delta(p: LsaeParams, s: TaskSample, delta: np.ndarray) -> None:
    if delta.shape[-2:] != (p.d, s.n):
        raise DimensionError(f"delta has shape {delta.shape[-2:]}, expected {(p.d, s.n)}")


def embedding_loss(p: LsaeParams, s: TaskSample, delta) -> np.ndarray:
    """(1/2)(y_hat_adv - yq)^2 under an embedding perturbation."""
    delta = np.asarray(delta, dtype=float)
    _check_embedding_delta(p, s, delta)
    pred = bilinear_prediction(p, embedded_matrix(p, s, delta), query_key(p, s))
    return squared_error(pred, s.yq)


def suffix_loss(p: LsaeParams, s: TaskSample, delta) -> np.ndarray:
    """(1/2)(y_hat(Z_adv) - yq)^2 with the last M context points shifted."""
    shifted = suffix_context(s, np.asarray(delta, dtype=float))
    pred = bilinear_prediction(p, embedded_matrix(p, shifted), query_key(p, shifted))
    return squared_error(pred, s.yq)


def grad_embedding(p: LsaeParams, s: TaskSample, delta) -> np.ndarray:
    """Gradient of :func:`embedding_loss` with respect to the d x N perturbation."""
    delta = np.asarray(delta, dtype=float)
    _check_embedding_delta(p, s, delta)
    e = embedded_matrix(p, s, delta)
    k = query_key(p, s)
    residual = bilinear_prediction(p, e, k) - s.yq
    return bilinear_grad(p, e, k)[..., : p.d, : s.n] * np.asarray(residual)[..., None, None]


def grad_suffix(p: LsaeParams, s: TaskSample, delta, m: int) -> np.ndarray:
    """Gradient of :func:`suffix_loss` with respect to the d0 x M suffix perturbation."""
    delta = np.asarray(delta, dtype=float)
    if delta.shape[-1] != m:
        raise DimensionError(f"suffix delta has {delta.shape[-1]} columns, expected M={m}")
    shifted = suffix_context(s, delta)
    if m == 0:
        return np.zeros_like(delta)
    e = embedded_matrix(p, shifted)
    k = query_key(p, shifted)
    residual = bilinear_prediction(p, e, k) - s.yq
    de = bilinear_grad(p, e, k)[..., : p.d, s.n - m : s.n]
    return np.einsum("ij,...in->...jn", p.we, de) * np.asarray(residual)[..., None, None]


def _random_start(shape: tuple, radius: float, seed: int, restart: int) -> np.ndarray:
    rng = np.random.default_rng([seed, restart])
    direction = rng.standard_normal(shape)
    norms = np.linalg.norm(direction, axis=-2, keepdims=True)
    lengths = radius * rng.random(shape[:-2] + (1, shape[-1]))
    return direction / np.where(norms > 0, norms, 1.0) * lengths


def _ascend(
    loss_fn: Callable[[np.ndarray], np.ndarray],
    grad_fn: Callable[[np.ndarray], np.ndarray],
    shape: tuple,
    cfg: AttackConfig,
    init: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, np.ndarray]:
    radius = cfg.radius
    if init is None:
        start = np.zeros(shape)
    else:
        start = project_columns(np.broadcast_to(init, shape), radius)

    best = start
    best_loss = loss_fn(start)
    if radius == 0 or shape[-1] == 0:
        return best, best_loss

    starts = [start] + [_random_start(shape, radius, cfg.seed, r) for r in range(cfg.restarts)]
    for attempt, delta in enumerate(starts):
        if attempt:
            loss = loss_fn(delta)
            better = loss > best_loss
            best = np.where(better[..., None, None], delta, best)
            best_loss = np.where(better, loss, best_loss)

        for _ in range(cfg.steps):
            g = grad_fn(delta)
            norms = np.linalg.norm(g, axis=-2, keepdims=True)
            direction = np.divide(g, norms, out=np.zeros_like(g), where=norms > 0)
            delta = project_columns(delta + cfg.step_size * direction, radius)
            loss = loss_fn(delta)
            better = loss > best_loss
            best = np.where(better[..., None, None], delta, best)
            best_loss = np.where(better, loss, best_loss)

    logger.debug("PGD radius=%g steps=%d restarts=%d", radius, cfg.steps, cfg.restarts)
    return best, best_loss


def pgd_embedding(
    p: LsaeParams,
    s: TaskSample,
    cfg: AttackConfig,
    init: Optional[np.ndarray] = None,
) -> Perturbation:
    """Attack the context embeddings; ``init`` warm-starts from a previous solution."""
    shape = s.batch_shape + (p.d, s.n)
    delta, loss = _ascend(
        lambda dl: embedding_loss(p, s, dl),
        lambda dl: grad_embedding(p, s, dl),
        shape,
        cfg,
        init,
    )
    return Perturbation(delta=delta, radius=cfg.radius, space=PerturbationSpace.EMBEDDING, loss=loss)


def pgd_suffix(
    p: LsaeParams,
    s: TaskSample,
    m: int,
    cfg: AttackConfig,
    init: Optional[np.ndarray] = None,
) -> Perturbation:
    """Attack the last ``m`` context points in input space."""
    if m < 0 or m > s.n:
        raise DimensionError(f"suffix length must be in [0, {s.n}], got {m}")
    shape = s.batch_shape + (s.d0, m)
    delta, loss = _ascend(
        lambda dl: suffix_loss(p, s, dl),
        lambda dl: grad_suffix(p, s, dl, m),
        shape,
        cfg,
        init,
    )
    return Perturbation(delta=delta, radius=cfg.radius, space=PerturbationSpace.SUFFIX, loss=loss)
