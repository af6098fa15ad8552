"""Tests for SPD matrices, moment identities and spectral helpers."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from catlab.errors import DimensionError, NotInvertibleError, PreconditionError
from catlab.mathcore import (
    SpdMatrix,
    gaussian_fourth_moment,
    inverse_norm_bound,
    quad_form_expectation,
    rayleigh_max,
    sample_fourth_moment,
    sample_quad_form,
    sv_stats,
    trace_sandwich,
)


def test_spd_eigendecomposition_descending(rng):
    lam = SpdMatrix.random(4, rng, condition=5.0)
    assert np.all(np.diff(lam.eigenvalues) <= 0)
    assert 1.0 - 1e-12 <= lam.lambda_min <= lam.lambda_max <= 5.0 + 1e-12
    recon = (lam.eigenvectors * lam.eigenvalues) @ lam.eigenvectors.T
    assert_allclose(recon, lam.entries, atol=1e-12)
    assert_allclose(lam.sqrt() @ lam.sqrt(), lam.entries, atol=1e-12)
    assert_allclose(lam.power(1.5), lam.sqrt() @ lam.entries, atol=1e-12)


def test_spd_rejects_bad_input():
    with pytest.raises(ValueError):
        SpdMatrix([[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(NotInvertibleError):
        SpdMatrix([[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(NotInvertibleError):
        SpdMatrix(np.zeros((2, 2)))
    with pytest.raises(DimensionError):
        SpdMatrix(np.ones((2, 3)))


def test_spd_entries_are_read_only():
    lam = SpdMatrix.identity(2)
    with pytest.raises(ValueError):
        lam.entries[0, 0] = 5.0


def test_sample_covariance(rng):
    lam = SpdMatrix.diagonal([1.0, 4.0])
    x = lam.sample(rng, 200_000)
    assert x.shape == (2, 200_000)
    assert_allclose(np.cov(x), lam.entries, atol=0.05)


def test_gaussian_fourth_moment_matches_sampling(rng):
    lam = SpdMatrix.diagonal([1.0, 2.0])
    a = np.array([[1.0, 0.5], [-0.3, 2.0]])
    exact = gaussian_fourth_moment(lam, a)
    mean, se = sample_fourth_moment(lam, a, 200_000, rng)
    assert np.all(np.abs(mean - exact) <= 6.0 * se + 1e-12)


def test_gaussian_fourth_moment_scalar():
    # E[x^4] = 3 for x ~ N(0, 1)
    assert_allclose(gaussian_fourth_moment(SpdMatrix.identity(1), [[1.0]]), [[3.0]])


def test_quad_form_expectation(rng):
    lam = SpdMatrix.random(3, rng)
    a = rng.standard_normal((3, 3))
    assert quad_form_expectation(lam, a) == pytest.approx(np.trace(a @ lam.entries))
    mean, se = sample_quad_form(lam, a, 100_000, rng)
    assert abs(mean - np.trace(a @ lam.entries)) <= 6.0 * se


def test_moment_shape_checks():
    with pytest.raises(DimensionError):
        gaussian_fourth_moment(SpdMatrix.identity(2), np.eye(3))


@given(st.integers(min_value=1, max_value=5), st.integers(min_value=0, max_value=2**31 - 1))
@settings(max_examples=40, deadline=None)
def test_trace_sandwich_orders(dim, seed):
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((dim, dim))
    a = g @ g.T
    b = rng.standard_normal((dim, dim))
    b = b + b.T
    lo, mid, hi = trace_sandwich(a, b)
    scale = 1e-9 * (1.0 + abs(lo) + abs(hi))
    assert lo - scale <= mid <= hi + scale


def test_rayleigh_max_attained_at_top_eigenvector(rng):
    g = rng.standard_normal((3, 3))
    a = g + g.T
    eig, vec = np.linalg.eigh(a)
    vectors = np.column_stack([rng.standard_normal((3, 5)), 2.0 * vec[:, -1]])
    assert rayleigh_max(a, vectors) == pytest.approx(eig[-1])
    assert rayleigh_max(a, rng.standard_normal((3, 50))) <= eig[-1] + 1e-12


def test_sv_stats():
    stats = sv_stats(np.diag([3.0, 1.0]))
    assert_allclose(stats.singular_values, [3.0, 1.0])
    assert stats.mean == pytest.approx(2.0)
    assert stats.variance == pytest.approx(1.0)
    assert stats.sigma_max == 3.0 and stats.sigma_min == 1.0
    assert stats.sum_fourth == pytest.approx(82.0)
    assert stats.count == 2
    assert sv_stats(np.eye(2, 3)).variance == 0.0
    with pytest.raises(DimensionError):
        sv_stats(np.ones(3))


def test_inverse_norm_bound_scalar(s1, s2):
    assert_allclose(inverse_norm_bound(s1["we"], s1["lam"], s1["n"], s1["eps"]), (0.5, 0.5))
    assert_allclose(inverse_norm_bound(s2["we"], s2["lam"], s2["n"], s2["eps"]), (1 / 3, 1 / 3))


@given(st.integers(min_value=0, max_value=2**31 - 1))
@settings(max_examples=30, deadline=None)
def test_inverse_norm_bound_holds(seed):
    rng = np.random.default_rng(seed)
    d0 = int(rng.integers(1, 5))
    d = int(rng.integers(1, d0 + 1))
    we = rng.standard_normal((d, d0))
    lam = SpdMatrix.random(d0, rng, 3.0)
    lhs, rhs = inverse_norm_bound(we, lam, int(rng.integers(1, 20)), float(rng.uniform(0.01, 1.0)))
    assert lhs <= rhs * (1 + 1e-9)


def test_inverse_norm_bound_preconditions():
    with pytest.raises(PreconditionError):
        inverse_norm_bound(np.ones((3, 2)), SpdMatrix.identity(2), 4, 0.1)
    with pytest.raises(NotInvertibleError):
        inverse_norm_bound(np.zeros((1, 2)), SpdMatrix.identity(2), 4, 0.0)
