"""
Closed-form objects of surrogate adversarial training.

With A = W^E Gamma_N Lambda W^E^T + Tr(Lambda) eps^2 I, the optimal predictor is
B = W^E^T A^{-1} W^E Lambda. This module builds B, factors it back into LSA-E
parameters where possible, evaluates its exact clean risk and computes the
robust generalization bound with every constant exposed.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Optional, Union

import numpy as np
from scipy import linalg

from catlab.errors import DimensionError, NotInvertibleError, PreconditionError
from catlab.mathcore import SpdMatrix, as_matrix
from catlab.model import LsaeParams
from catlab.tasks import TaskSample, gamma_n

logger = logging.getLogger(__name__)

# Relative residual below which a least-squares factorization counts as exact.
FACTOR_RTOL = 1e-9


def _check_embedding(we, lam: SpdMatrix) -> np.ndarray:
    we = as_matrix(we, "W^E")
    if we.shape[1] != lam.dim:
        raise DimensionError(f"W^E has {we.shape[1]} columns, Lambda has dimension {lam.dim}")
    return we


def regularized_gram(we, lam: SpdMatrix, n: int, eps: float) -> np.ndarray:
    """A = W^E Gamma_N Lambda W^E^T + Tr(Lambda) eps^2 I_d."""
    we = _check_embedding(we, lam)
    gl = gamma_n(lam, n).entries @ lam.entries
    a = we @ gl @ we.T + lam.trace * eps ** 2 * np.eye(we.shape[0])
    return 0.5 * (a + a.T)


def _gram_factor(we, lam: SpdMatrix, n: int, eps: float):
    a = regularized_gram(we, lam, n, eps)
    try:
        factor = linalg.cho_factor(a)
    except linalg.LinAlgError as e:
        raise NotInvertibleError(
            f"regularized Gram matrix is singular (eps={eps}); W^E must have full row rank"
        ) from e
    # Cholesky can succeed on numerically singular matrices
    diag = np.abs(np.diag(factor[0]))
    if diag.min() <= 1e-10 * diag.max():
        raise NotInvertibleError(f"regularized Gram matrix is numerically singular (eps={eps})")
    return factor


@dataclass(frozen=True)
class PredictorMatrix:
    """The predictor y_hat = (1/N) Y X^T B xq with its provenance."""
    b: np.ndarray
    we_used: np.ndarray
    eps: float
    n: int

    @classmethod
    def from_params(cls, p: LsaeParams, eps: float, n: int) -> "PredictorMatrix":
        """B = v22 W^E^T kq11 W^E, the predictor of parameters with kq21 = v21 = 0."""
        if np.any(p.kq21 != 0) or np.any(p.v21 != 0):
            raise PreconditionError("parameters with nonzero kq21 or v21 have no predictor matrix")
        return cls(b=p.v22 * p.we.T @ p.kq11 @ p.we, we_used=p.we.copy(), eps=float(eps), n=int(n))

    @property
    def d0(self) -> int:
        return self.b.shape[0]

    def as_params(self) -> LsaeParams:
        """Encode B as LSA-E parameters: W^E = I, kq11 = B, v22 = 1, zero elsewhere."""
        p = LsaeParams.zeros(self.d0, self.d0)
        return p.replace(we=np.eye(self.d0), kq11=self.b, v22=1.0)

    def predict(self, s: TaskSample) -> np.ndarray:
        ctx = np.einsum("...n,...in->...i", s.y, s.x)
        return np.einsum("...i,ij,...j->...", ctx, self.b, s.xq) / s.n


def optimal_predictor_matrix(we, lam: SpdMatrix, n: int, eps: float) -> PredictorMatrix:
    we = _check_embedding(we, lam)
    factor = _gram_factor(we, lam, n, eps)
    b = we.T @ linalg.cho_solve(factor, we @ lam.entries)
    return PredictorMatrix(b=b, we_used=we.copy(), eps=float(eps), n=int(n))


@dataclass(frozen=True)
class InfeasibleFactorization:
    """No attention block satisfies v22 kq11 W^E = A^{-1} W^E Lambda."""
    reason: str
    residual: float
    tolerance: float


def factor_optimal_params(
    we,
    lam: SpdMatrix,
    n: int,
    eps: float,
    v22: float = 1.0,
) -> Union[LsaeParams, InfeasibleFactorization]:
    """Attention blocks realizing the global minimizer at a fixed W^E.

    Solves v22 kq11 W^E = A^{-1} W^E Lambda by least squares and accepts the
    solution only when its residual vanishes. This holds when W^E is square
    and invertible or Lambda is isotropic; otherwise a report is returned.
    """
    if v22 == 0:
        raise PreconditionError("v22 must be nonzero to factor the optimum")
    we = _check_embedding(we, lam)
    factor = _gram_factor(we, lam, n, eps)

    target = linalg.cho_solve(factor, we @ lam.entries)
    kq11 = target @ linalg.pinv(we) / v22

    root = lam.sqrt()
    lhs = v22 * kq11 @ we @ root
    rhs = target @ root
    residual = float(np.linalg.norm(lhs - rhs))
    scale = max(float(np.linalg.norm(rhs)), np.finfo(float).tiny)
    if residual > FACTOR_RTOL * scale:
        logger.debug("factorization residual %.3g exceeds tolerance", residual)
        return InfeasibleFactorization(
            reason="range of Lambda W^E^T is not contained in range of W^E^T",
            residual=residual,
            tolerance=FACTOR_RTOL * scale,
        )

    p = LsaeParams.zeros(we.shape[0], we.shape[1])
    return p.replace(we=we, kq11=kq11, v22=float(v22))


def clean_risk_exact(b: Union[PredictorMatrix, np.ndarray], lam: SpdMatrix, n: int) -> float:
    """(1/2)(Tr[B^T Gamma_N Lambda B Lambda] - 2 Tr[Lambda B Lambda] + Tr Lambda)."""
    bm = b.b if isinstance(b, PredictorMatrix) else as_matrix(b, "B")
    if bm.shape != (lam.dim, lam.dim):
        raise DimensionError(f"B has shape {bm.shape}, expected ({lam.dim}, {lam.dim})")
    big_l = lam.entries
    gl = gamma_n(lam, n).entries @ big_l
    quad = np.trace(bm.T @ gl @ bm @ big_l)
    cross = np.trace(big_l @ bm @ big_l)
    return float(0.5 * (quad - 2.0 * cross + lam.trace))


@dataclass(frozen=True)
class BoundReport:
    """Robust generalization bound with every factor exposed."""
    sigma_max_gamma_lambda: float
    attack_term: float
    lambda_max_cubed: float
    sum_sigma4: float
    denom: float
    main_term: float
    residual: float
    bound: float

    def as_row(self) -> dict:
        return asdict(self)


def robust_bound(we, lam: SpdMatrix, n: int, eps: float, m: int, rho: float) -> BoundReport:
    """Upper bound on the robust risk of the optimal predictor under an (M, rho) suffix attack.

    bound = (sigma_max(Gamma_N Lambda) + M rho^2 Tr(Lambda)/N^2) lambda_max(Lambda)^3
            sum_i sigma_i(W^E)^4 / (sigma_min(Gamma_N Lambda) sigma_min(W^E)^2 + Tr(Lambda) eps^2)^2
            + Tr(Lambda)
    """
    we = _check_embedding(we, lam)
    d, d0 = we.shape
    if d > d0:
        raise PreconditionError(f"robust bound requires embedding dimension d <= d0, got d={d}, d0={d0}")
    if not 0 <= m <= n:
        raise PreconditionError(f"suffix length must be in [0, {n}], got {m}")
    if rho < 0 or eps < 0:
        raise ValueError("radii must be nonnegative")

    gl = gamma_n(lam, n).entries @ lam.entries
    gl_eig = linalg.eigvalsh(0.5 * (gl + gl.T))
    sigma = linalg.svd(we, compute_uv=False)

    sigma_max_gl = float(gl_eig[-1])
    attack_term = m * rho ** 2 * lam.trace / n ** 2
    lambda_max_cubed = lam.lambda_max ** 3
    sum_sigma4 = float(np.sum(sigma ** 4))
    denom = (float(gl_eig[0]) * float(sigma[-1]) ** 2 + lam.trace * eps ** 2) ** 2
    if denom <= 0:
        raise NotInvertibleError("bound denominator vanishes: eps = 0 with rank-deficient W^E")

    main_term = (sigma_max_gl + attack_term) * lambda_max_cubed * sum_sigma4 / denom
    return BoundReport(
        sigma_max_gamma_lambda=sigma_max_gl,
        attack_term=attack_term,
        lambda_max_cubed=lambda_max_cubed,
        sum_sigma4=sum_sigma4,
        denom=denom,
        main_term=main_term,
        residual=lam.trace,
        bound=main_term + lam.trace,
    )


def surrogate_minimum(we, lam: SpdMatrix, n: int, eps: float, factor: Optional[tuple] = None) -> float:
    """-2 Tr[A^{-1} W^E Lambda^3 W^E^T] + 2 Tr(Lambda)."""
    we = _check_embedding(we, lam)
    factor = factor or _gram_factor(we, lam, n, eps)
    inner = linalg.cho_solve(factor, we @ lam.power(3) @ we.T)
    return float(-2.0 * np.trace(inner) + 2.0 * lam.trace)
