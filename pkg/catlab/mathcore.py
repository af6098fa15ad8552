"""
Dense SPD matrix utilities, Gaussian moment identities and spectral statistics.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from catlab.errors import DimensionError, NotInvertibleError, PreconditionError

# Samples per block in the Monte Carlo moment estimators.
_MOMENT_BLOCK = 50_000


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a 2-D float array or raise DimensionError."""
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def check_square(a: np.ndarray, dim: int, name: str = "matrix") -> np.ndarray:
    """Check that ``a`` is ``dim x dim``."""
    arr = as_matrix(a, name)
    if arr.shape != (dim, dim):
        raise DimensionError(f"{name} has shape {arr.shape}, expected ({dim}, {dim})")
    return arr


class SpdMatrix:
    """Symmetric positive definite matrix with a cached eigendecomposition.

    Eigenvalues are stored in descending order with orthonormal eigenvectors as
    columns. The input is symmetrized as (A + A^T)/2 after checking that its
    asymmetry is below ``rtol`` relative to its largest entry.
    """

    def __init__(self, entries, rtol: float = 1e-8):
        a = as_matrix(entries, "SPD matrix")
        if a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise DimensionError(f"SPD matrix must be square and nonempty, got {a.shape}")

        scale = float(np.abs(a).max())
        if scale == 0.0:
            raise NotInvertibleError("SPD matrix is identically zero")
        asymmetry = float(np.abs(a - a.T).max()) / scale
        if asymmetry > rtol:
            raise ValueError(f"matrix is not symmetric (relative asymmetry {asymmetry:.3g})")

        a = 0.5 * (a + a.T)
        values, vectors = linalg.eigh(a)
        values, vectors = values[::-1], vectors[:, ::-1]
        if values[-1] <= 0.0:
            raise NotInvertibleError(
                f"matrix is not positive definite (smallest eigenvalue {values[-1]:.3g})"
            )

        recon = (vectors * values) @ vectors.T
        if float(np.abs(recon - a).max()) > 1e-10 * scale:
            raise NotInvertibleError("eigendecomposition does not reproduce the matrix")

        for arr in (a, values, vectors):
            arr.setflags(write=False)
        self._entries = a
        self._values = values
        self._vectors = vectors

    @classmethod
    def identity(cls, dim: int, scale: float = 1.0) -> "SpdMatrix":
        return cls(scale * np.eye(dim))

    @classmethod
    def diagonal(cls, values) -> "SpdMatrix":
        return cls(np.diag(np.asarray(values, dtype=float)))

    @classmethod
    def random(cls, dim: int, rng: np.random.Generator, condition: float = 4.0) -> "SpdMatrix":
        """Random SPD matrix with eigenvalues spread over [1, condition]."""
        if condition < 1.0:
            raise ValueError(f"condition must be >= 1, got {condition}")
        q, _ = linalg.qr(rng.standard_normal((dim, dim)))
        eig = 1.0 + (condition - 1.0) * rng.random(dim)
        return cls((q * eig) @ q.T)

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def dim(self) -> int:
        return self._entries.shape[0]

    @property
    def eigenvalues(self) -> np.ndarray:
        return self._values

    @property
    def eigenvectors(self) -> np.ndarray:
        return self._vectors

    @property
    def trace(self) -> float:
        return float(np.trace(self._entries))

    @property
    def lambda_max(self) -> float:
        return float(self._values[0])

    @property
    def lambda_min(self) -> float:
        return float(self._values[-1])

    def power(self, p: float) -> np.ndarray:
        """Matrix power through the cached eigendecomposition."""
        return (self._vectors * self._values ** p) @ self._vectors.T

    def sqrt(self) -> np.ndarray:
        return self.power(0.5)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` N(0, self) vectors as the columns of a dim x size matrix."""
        z = rng.standard_normal((self.dim, size))
        return self._vectors @ (np.sqrt(self._values)[:, None] * z)

    def __repr__(self) -> str:
        return f"SpdMatrix(dim={self.dim}, eig=[{self.lambda_max:.4g} .. {self.lambda_min:.4g}])"


@dataclass(frozen=True)
class SpectralStats:
    """Singular values of a matrix with their mean and population variance."""
    singular_values: np.ndarray
    mean: float
    variance: float

    @property
    def count(self) -> int:
        return len(self.singular_values)

    @property
    def sigma_max(self) -> float:
        return float(self.singular_values[0])

    @property
    def sigma_min(self) -> float:
        return float(self.singular_values[-1])

    @property
    def sum_fourth(self) -> float:
        return float(np.sum(self.singular_values ** 4))


def gaussian_fourth_moment(lam: SpdMatrix, a) -> np.ndarray:
    """E[x x^T A x x^T] for x ~ N(0, lam): lam (A + A^T) lam + Tr(A lam) lam."""
    a = check_square(a, lam.dim, "A")
    big_l = lam.entries
    return big_l @ (a + a.T) @ big_l + np.trace(a @ big_l) * big_l


def quad_form_expectation(lam: SpdMatrix, a) -> float:
    """E[x^T A x] for x ~ N(0, lam), which is Tr(A lam)."""
    a = check_square(a, lam.dim, "A")
    return float(np.trace(a @ lam.entries))


def sample_fourth_moment(
    lam: SpdMatrix,
    a,
    num_samples: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo mean and entrywise standard error of x x^T A x x^T."""
    a = check_square(a, lam.dim, "A")
    total = np.zeros_like(a)
    total_sq = np.zeros_like(a)
    remaining = num_samples
    while remaining > 0:
        size = min(remaining, _MOMENT_BLOCK)
        x = lam.sample(rng, size).T
        q = np.einsum("si,ij,sj->s", x, a, x)
        outer = q[:, None, None] * x[:, :, None] * x[:, None, :]
        total += outer.sum(axis=0)
        total_sq += (outer ** 2).sum(axis=0)
        remaining -= size
    mean = total / num_samples
    var = (total_sq - num_samples * mean ** 2) / (num_samples - 1)
    return mean, np.sqrt(np.maximum(var, 0.0) / num_samples)


def sample_quad_form(
    lam: SpdMatrix,
    a,
    num_samples: int,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """Monte Carlo mean and standard error of x^T A x."""
    a = check_square(a, lam.dim, "A")
    values = []
    remaining = num_samples
    while remaining > 0:
        size = min(remaining, _MOMENT_BLOCK)
        x = lam.sample(rng, size).T
        values.append(np.einsum("si,ij,sj->s", x, a, x))
        remaining -= size
    q = np.concatenate(values)
    return float(q.mean()), float(q.std(ddof=1) / np.sqrt(num_samples))


def sv_stats(w) -> SpectralStats:
    """Singular-value statistics over the min(rows, cols) singular values of ``w``."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.size == 0:
        raise DimensionError(f"sv_stats needs a nonempty 2-D matrix, got shape {w.shape}")
    s = linalg.svd(w, compute_uv=False)
    mean = float(s.mean())
    variance = float(np.mean((s - mean) ** 2))
    return SpectralStats(singular_values=s, mean=mean, variance=variance)


def trace_sandwich(a, b) -> tuple[float, float, float]:
    """(lambda_min(B) Tr A, Tr AB, lambda_max(B) Tr A) for PSD A and symmetric B."""
    a = as_matrix(a, "A")
    b = check_square(b, a.shape[0], "B")
    eig = linalg.eigvalsh(0.5 * (b + b.T))
    tr_a = float(np.trace(a))
    return float(eig[0]) * tr_a, float(np.trace(a @ b)), float(eig[-1]) * tr_a


def rayleigh_max(a, vectors) -> float:
    """Largest Rayleigh quotient of symmetric ``a`` over the columns of ``vectors``."""
    a = as_matrix(a, "A")
    v = as_matrix(vectors, "vectors")
    v = v / np.linalg.norm(v, axis=0, keepdims=True)
    return float(np.max(np.einsum("ik,ij,jk->k", v, a, v)))


def inverse_norm_bound(
    we,
    lam: SpdMatrix,
    n: int,
    eps: float,
    gram: Optional[np.ndarray] = None,
) -> tuple[float, float]:
    """Spectral norm of the inverse regularized Gram matrix and its upper bound.

    Returns ``(lhs, rhs)`` with lhs = ||A^{-1}||_2 for
    A = W^E Gamma_N Lambda W^E^T + Tr(Lambda) eps^2 I and
    rhs = 1 / (sigma_min(Gamma_N Lambda) sigma_min(W^E)^2 + Tr(Lambda) eps^2).
    """
    from catlab.solver import regularized_gram
    from catlab.tasks import gamma_n

    we = as_matrix(we, "W^E")
    d, d0 = we.shape
    if d > d0:
        raise PreconditionError(f"inverse-norm bound requires d <= d0, got d={d}, d0={d0}")

    a = regularized_gram(we, lam, n, eps) if gram is None else gram
    eig = linalg.eigvalsh(a)
    if eig[0] <= 1e-14 * max(abs(eig[-1]), 1.0):
        raise NotInvertibleError(
            f"regularized Gram matrix is not invertible (smallest eigenvalue {eig[0]:.3g})"
        )
    lhs = 1.0 / float(eig[0])

    gamma_lambda = gamma_n(lam, n).entries @ lam.entries
    sigma_gl = float(linalg.eigvalsh(0.5 * (gamma_lambda + gamma_lambda.T))[0])
    sigma_we = float(linalg.svd(we, compute_uv=False)[-1])
    rhs = 1.0 / (sigma_gl * sigma_we ** 2 + lam.trace * eps ** 2)
    return lhs, rhs
