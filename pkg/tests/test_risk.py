"""Tests for Monte Carlo clean and robust risk."""

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from catlab.attacks import AttackConfig
from catlab.errors import DimensionError, PreconditionError
from catlab.mathcore import SpdMatrix
from catlab.montecarlo import McConfig
from catlab.risk import mc_clean_risk, mc_robust_risk, mc_robust_risk_sweep
from catlab.solver import PredictorMatrix, clean_risk_exact, optimal_predictor_matrix


@pytest.fixture
def predictor():
    return optimal_predictor_matrix(np.eye(2), SpdMatrix.diagonal([1.0, 2.0]), 6, 0.1)


def test_scalar_clean_risk(s1):
    b = optimal_predictor_matrix(s1["we"], s1["lam"], s1["n"], s1["eps"])
    estimate = mc_clean_risk(b, s1["lam"], s1["n"], McConfig(num_tasks=20_000, seed=0))
    assert abs(estimate.value - 0.25) <= 4.0 * estimate.stderr
    assert estimate.kind == "clean"
    assert estimate.per_task.shape == (20_000,)


def test_params_and_matrix_give_same_risk(predictor):
    lam = SpdMatrix.diagonal([1.0, 2.0])
    mc = McConfig(num_tasks=300, seed=1)
    from_matrix = mc_clean_risk(predictor, lam, 6, mc)
    from_params = mc_clean_risk(predictor.as_params(), lam, 6, mc)
    assert from_matrix.value == pytest.approx(from_params.value, rel=1e-12)


def test_zero_radius_robust_equals_clean(predictor):
    lam = SpdMatrix.diagonal([1.0, 2.0])
    mc = McConfig(num_tasks=200, seed=2)
    clean = mc_clean_risk(predictor, lam, 6, mc)
    robust = mc_robust_risk(predictor, lam, 6, 2, 0.0, mc)
    assert robust.value == clean.value
    no_suffix = mc_robust_risk(predictor, lam, 6, 0, 0.5, mc)
    assert no_suffix.value == clean.value


def test_robust_risk_exceeds_clean_per_task(predictor):
    lam = SpdMatrix.diagonal([1.0, 2.0])
    mc = McConfig(num_tasks=200, seed=3)
    clean = mc_clean_risk(predictor, lam, 6, mc)
    robust = mc_robust_risk(predictor, lam, 6, 2, 0.5, mc)
    assert np.all(robust.per_task >= clean.per_task)
    assert robust.value > clean.value
    row = robust.as_row()
    assert row["kind"] == "robust" and row["m"] == 2 and row["rho"] == 0.5
    assert row["attack_steps"] == 20
    assert row["attack_step_size"] == pytest.approx(0.05)


def test_robust_risk_validates(predictor):
    lam = SpdMatrix.diagonal([1.0, 2.0])
    mc = McConfig(num_tasks=10)
    with pytest.raises(DimensionError):
        mc_robust_risk(predictor, lam, 6, 7, 0.5, mc)
    with pytest.raises(PreconditionError):
        mc_robust_risk(predictor, lam, 6, 1, 0.5, mc, AttackConfig(radius=0.4))
    with pytest.raises(DimensionError):
        mc_clean_risk(PredictorMatrix(np.eye(3), np.eye(3), 0.0, 6), lam, 6, mc)


def test_warm_started_sweep_is_monotone(predictor):
    lam = SpdMatrix.diagonal([1.0, 2.0])
    mc = McConfig(num_tasks=300, seed=4)
    rhos = [1.0, 0.0, 0.25, 0.5]
    estimates = mc_robust_risk_sweep(predictor, lam, 6, 2, rhos, mc)
    assert [e.rho for e in estimates] == rhos
    ordered = sorted(estimates, key=lambda e: e.rho)
    for low, high in zip(ordered, ordered[1:]):
        assert np.all(high.per_task >= low.per_task)
    assert_array_equal(ordered[0].per_task, mc_clean_risk(predictor, lam, 6, mc).per_task)
    with pytest.raises(ValueError):
        mc_robust_risk_sweep(predictor, lam, 6, 2, [], mc)


def test_clean_risk_of_optimum_is_smallest_at_zero_eps():
    lam = SpdMatrix.diagonal([1.0, 2.0])
    risks = [clean_risk_exact(optimal_predictor_matrix(np.eye(2), lam, 6, e), lam, 6) for e in (0.0, 0.3, 1.0)]
    assert risks[0] < risks[1] < risks[2]
