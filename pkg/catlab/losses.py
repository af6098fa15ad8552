"""
Adversarial training losses.

Monte Carlo estimators of the embedding-space adversarial loss and of the four
surrogate terms l1..l4, the closed form the surrogate takes on the
zero-off-diagonal manifold, and the singular-value-variance regularizer.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from catlab.attacks import AttackConfig, pgd_embedding
from catlab.errors import DimensionError, PreconditionError
from catlab.mathcore import SpdMatrix, sv_stats
from catlab.model import (
    LsaeParams,
    bilinear_prediction,
    embedded_matrix,
    query_key,
)
from catlab.montecarlo import McConfig, map_tasks, mean_stderr, observations
from catlab.solver import regularized_gram
from catlab.tasks import TaskConfig, TaskSample

logger = logging.getLogger(__name__)

# Singular values closer than this are treated as repeated.
SV_GAP = 1e-8


@dataclass(frozen=True)
class SurrogateTerms:
    """Estimates of l1..l4 with their standard errors."""
    l1: float
    l2: float
    l3: float
    l4: float
    stderr1: float
    stderr2: float
    stderr3: float
    stderr4: float
    stderr_total: float

    @property
    def total(self) -> float:
        return self.l1 + self.l2 + self.l3 + self.l4


@dataclass(frozen=True)
class OffdiagGradient:
    """Gradient of the Monte Carlo surrogate total in kq21 and v21."""
    kq21: np.ndarray
    v21: np.ndarray

    def max_norm(self) -> float:
        return float(max(np.abs(self.kq21).max(), np.abs(self.v21).max()))


def check_offdiag_zero(p: LsaeParams) -> None:
    """Require kq21 = v21 = 0 exactly."""
    for name in ("kq21", "v21"):
        if np.any(getattr(p, name) != 0):
            raise PreconditionError(f"block {name} must be zero, found max |{name}| = "
                                    f"{np.abs(getattr(p, name)).max():.3g}")


def mc_adversarial_loss(
    p: LsaeParams,
    tasks: TaskConfig,
    eps: float,
    mc: McConfig,
    atk: AttackConfig,
) -> tuple[float, float]:
    """Mean PGD-attacked squared error under embedding perturbations of radius eps.

    PGD only finds a lower bound of the inner supremum, so this underestimates
    the adversarial training loss.
    """
    if atk.radius != eps:
        raise PreconditionError(f"attack radius {atk.radius} differs from eps {eps}")
    values = map_tasks(tasks, mc, lambda batch: pgd_embedding(p, batch, atk).loss)
    return mean_stderr(values, mc.antithetic)


def _surrogate_parts(p: LsaeParams, s: TaskSample) -> tuple[np.ndarray, ...]:
    e = embedded_matrix(p, s)
    k = query_key(p, s)
    n = s.n
    ctx = e[..., :, :n]
    residual = bilinear_prediction(p, e, k) - s.yq
    ctx_key = np.einsum("...in,...i->...n", ctx, k)
    row = np.einsum("i,...in->...n", p.value_row(), ctx)
    query = np.einsum("...i,...i->...", k[..., :-1], k[..., :-1])
    return (
        2.0 * residual ** 2,
        np.sum(ctx_key ** 2, axis=-1),
        np.sum(row ** 2, axis=-1),
        query,
    )


def mc_surrogate_terms(p: LsaeParams, tasks: TaskConfig, eps: float, mc: McConfig) -> SurrogateTerms:
    """Monte Carlo estimates of l1..l4; l3's two expectations share one task batch."""
    l1_vals, ctx_key_sq, row_sq, query_sq = map_tasks(tasks, mc, lambda b: _surrogate_parts(p, b))
    anti = mc.antithetic
    c = 2.0 * eps ** 2 / tasks.n
    v21_sq = float(p.v21 @ p.v21)

    l1, se1 = mean_stderr(l1_vals, anti)
    m_ctx, se_ctx = mean_stderr(ctx_key_sq, anti)
    m_row, se_row = mean_stderr(row_sq, anti)
    m_query, se_query = mean_stderr(query_sq, anti)

    # per-task linearization of the total, covering the l1/l3 covariance
    linear = (
        l1_vals
        + c * v21_sq * ctx_key_sq
        + c * (m_query * row_sq + m_row * query_sq)
        + 2.0 * eps ** 4 * v21_sq * query_sq
    )
    _, se_total = mean_stderr(linear, anti)

    return SurrogateTerms(
        l1=l1,
        l2=c * v21_sq * m_ctx,
        l3=c * m_row * m_query,
        l4=2.0 * eps ** 4 * v21_sq * m_query,
        stderr1=se1,
        stderr2=c * v21_sq * se_ctx,
        stderr3=c * float(np.hypot(m_query * se_row, m_row * se_query)),
        stderr4=2.0 * eps ** 4 * v21_sq * se_query,
        stderr_total=se_total,
    )


def _offdiag_parts(p: LsaeParams, s: TaskSample) -> tuple[np.ndarray, ...]:
    d, n = p.d, s.n
    e = embedded_matrix(p, s)
    k = query_key(p, s)
    u = s.xq @ p.we.T
    ctx = e[..., :, :n]

    left = np.einsum("i,...in->...n", p.value_row(), e)
    right = np.einsum("...in,...i->...n", e, k)
    residual = (np.sum(left * right, axis=-1) / n - s.yq)[..., None]

    dpred_v21 = np.einsum("...in,...n->...i", e, right)[..., :d] / n
    dpred_kq21 = (np.einsum("...n,...n->...", left, e[..., d, :]) / n)[..., None] * u

    ctx_key = np.einsum("...in,...i->...n", ctx, k)
    row = np.einsum("i,...in->...n", p.value_row(), ctx)
    label_key = np.einsum("...n,...n->...", s.y, ctx_key)[..., None]

    return (
        4.0 * residual * dpred_kq21,
        4.0 * residual * dpred_v21,
        2.0 * label_key * u,
        np.sum(ctx_key ** 2, axis=-1),
        2.0 * np.einsum("...in,...n->...i", ctx[..., :d, :], row),
        np.einsum("...i,...i->...", k[..., :-1], k[..., :-1]),
    )


def mc_surrogate_offdiag_grad(p: LsaeParams, tasks: TaskConfig, eps: float, mc: McConfig) -> OffdiagGradient:
    """Analytic gradient of the Monte Carlo surrogate total in kq21 and v21.

    Every mean runs over observations, so with antithetic pairs the odd-in-w
    integrands cancel exactly at kq21 = v21 = 0.
    """
    parts = map_tasks(tasks, mc, lambda b: _offdiag_parts(p, b))
    g1_kq21, g1_v21, g2_kq21, ctx_key_sq, g3_v21, query_sq = (
        observations(part, mc.antithetic).mean(axis=0) for part in parts
    )
    c = 2.0 * eps ** 2 / tasks.n
    v21_sq = float(p.v21 @ p.v21)

    kq21 = g1_kq21 + c * v21_sq * g2_kq21
    v21 = (
        g1_v21
        + 2.0 * c * ctx_key_sq * p.v21
        + c * g3_v21 * query_sq
        + 4.0 * eps ** 4 * query_sq * p.v21
    )
    return OffdiagGradient(kq21=kq21, v21=v21)


def closed_form_surrogate(p: LsaeParams, lam: SpdMatrix, n: int, eps: float) -> float:
    """Surrogate loss on the kq21 = v21 = 0 manifold.

    2 v22^2 Tr[A P P^T] - 4 v22 Tr[P Lambda^{3/2} W^E^T] + 2 Tr(Lambda),
    with P = kq11 W^E Lambda^{1/2}.
    """
    check_offdiag_zero(p)
    a = regularized_gram(p.we, lam, n, eps)
    proj = p.kq11 @ p.we @ lam.sqrt()
    quad = np.trace(a @ proj @ proj.T)
    cross = np.trace(proj @ lam.power(1.5) @ p.we.T)
    return float(2.0 * p.v22 ** 2 * quad - 4.0 * p.v22 * cross + 2.0 * lam.trace)


def embedding_reg(we) -> float:
    """Population variance of the singular values of W^E."""
    return sv_stats(we).variance


def embedding_reg_grad(we) -> tuple[np.ndarray, bool]:
    """Gradient sum_i (2(sigma_i - mean)/d) u_i v_i^T and a repeated-singular-value flag.

    With repeated singular values the returned matrix is a subgradient.
    """
    we = np.asarray(we, dtype=float)
    if we.ndim != 2 or we.size == 0:
        raise DimensionError(f"embedding_reg_grad needs a nonempty 2-D matrix, got shape {we.shape}")
    u, s, vt = linalg.svd(we, full_matrices=False)
    weights = 2.0 * (s - s.mean()) / len(s)
    degenerate = bool(len(s) > 1 and np.min(-np.diff(s)) <= SV_GAP)
    if degenerate:
        logger.debug("repeated singular values, returning a subgradient")
    return (u * weights) @ vt, degenerate
