"""Tests for the adversarial loss, the surrogate terms and the embedding regularizer."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from catlab.attacks import AttackConfig
from catlab.errors import DimensionError, PreconditionError
from catlab.losses import (
    check_offdiag_zero,
    closed_form_surrogate,
    embedding_reg,
    embedding_reg_grad,
    mc_adversarial_loss,
    mc_surrogate_offdiag_grad,
    mc_surrogate_terms,
)
from catlab.mathcore import SpdMatrix
from catlab.model import LsaeParams
from catlab.montecarlo import McConfig
from catlab.tasks import TaskConfig


def structured(rng, d, d0, scale=0.5):
    return LsaeParams.zeros(d, d0).replace(
        we=rng.standard_normal((d, d0)) / np.sqrt(d0),
        kq11=scale * rng.standard_normal((d, d)),
        v22=float(scale * rng.standard_normal()),
        kq12=rng.standard_normal(d),
        v11=rng.standard_normal((d, d)),
    )


def test_scalar_surrogate_anchors(s1, s2):
    p = LsaeParams.zeros(1, 1).replace(we=np.eye(1), kq11=np.array([[0.5]]), v22=1.0)
    assert closed_form_surrogate(p, s1["lam"], s1["n"], s1["eps"]) == pytest.approx(1.0, abs=1e-12)
    q = p.replace(kq11=np.array([[1 / 3]]))
    assert closed_form_surrogate(q, s2["lam"], s2["n"], s2["eps"]) == pytest.approx(4 / 3, abs=1e-12)


def test_closed_form_rejects_offdiag():
    p = LsaeParams.zeros(2, 2).replace(we=np.eye(2), v21=np.array([0.0, 1e-3]))
    with pytest.raises(PreconditionError, match="v21"):
        closed_form_surrogate(p, SpdMatrix.identity(2), 4, 0.1)
    with pytest.raises(PreconditionError):
        check_offdiag_zero(p)


def test_mc_surrogate_matches_closed_form(rng):
    lam = SpdMatrix.diagonal([1.0, 0.5, 2.0])
    tasks = TaskConfig(d0=3, n=6, lam=lam)
    p = structured(rng, 2, 3)
    terms = mc_surrogate_terms(p, tasks, 0.2, McConfig(num_tasks=20_000, seed=1))
    exact = closed_form_surrogate(p, lam, 6, 0.2)
    assert terms.l2 == 0.0 and terms.l4 == 0.0
    assert abs(terms.total - exact) <= 4.0 * terms.stderr_total


def test_surrogate_terms_grow_with_eps(rng, tasks3):
    p = structured(rng, 3, 3).replace(v21=0.3 * rng.standard_normal(3), kq21=rng.standard_normal(3))
    mc = McConfig(num_tasks=512, seed=2)
    totals = [mc_surrogate_terms(p, tasks3, eps, mc).total for eps in (0.0, 0.1, 0.3)]
    assert totals[0] <= totals[1] <= totals[2]
    zero = mc_surrogate_terms(p, tasks3, 0.0, mc)
    assert zero.l2 == zero.l3 == zero.l4 == 0.0


def test_surrogate_bounds_adversarial_loss(rng, tasks3):
    p = structured(rng, 3, 3).replace(v21=0.3 * rng.standard_normal(3), kq21=0.3 * rng.standard_normal(3))
    eps = 0.1
    mc = McConfig(num_tasks=2000, seed=4)
    adv, adv_se = mc_adversarial_loss(p, tasks3, eps, mc, AttackConfig(steps=10, step_size=0.01, radius=eps))
    terms = mc_surrogate_terms(p, tasks3, eps, mc)
    assert adv <= terms.total + 3.0 * np.hypot(adv_se, terms.stderr_total)


def test_adversarial_loss_radius_must_match(rng, tasks3):
    p = structured(rng, 3, 3)
    with pytest.raises(PreconditionError):
        mc_adversarial_loss(p, tasks3, 0.1, McConfig(num_tasks=4), AttackConfig(radius=0.2))


def test_offdiag_gradient_vanishes_with_antithetic_pairs(rng, tasks3):
    p = structured(rng, 3, 3)
    grad = mc_surrogate_offdiag_grad(p, tasks3, 0.3, McConfig(num_tasks=400, seed=5, antithetic=True))
    assert grad.kq21.shape == (3,) and grad.v21.shape == (3,)
    assert grad.max_norm() <= 1e-10


def test_offdiag_gradient_matches_finite_differences(rng, tasks3):
    p = structured(rng, 2, 3).replace(v21=0.2 * rng.standard_normal(2), kq21=0.2 * rng.standard_normal(2))
    eps = 0.2
    mc = McConfig(num_tasks=64, seed=6)
    grad = mc_surrogate_offdiag_grad(p, tasks3, eps, mc)

    def total(**blocks):
        return mc_surrogate_terms(p.replace(**blocks), tasks3, eps, mc).total

    h = 1e-6
    for name, exact in (("kq21", grad.kq21), ("v21", grad.v21)):
        base = getattr(p, name)
        approx = np.zeros_like(base)
        for i in range(len(base)):
            step = np.zeros_like(base)
            step[i] = h
            approx[i] = (total(**{name: base + step}) - total(**{name: base - step})) / (2 * h)
        assert_allclose(exact, approx, rtol=1e-5, atol=1e-6)


def test_embedding_regularizer():
    assert embedding_reg(np.eye(3)) == 0.0
    assert embedding_reg(np.diag([3.0, 1.0])) == pytest.approx(1.0)
    grad, degenerate = embedding_reg_grad(np.eye(3))
    assert degenerate
    assert_allclose(grad, np.zeros((3, 3)), atol=1e-15)


def test_embedding_regularizer_rejects_empty_embedding():
    for we in (np.zeros((0, 3)), np.zeros((2, 0)), np.ones(3)):
        with pytest.raises(DimensionError):
            embedding_reg_grad(we)
        with pytest.raises(DimensionError):
            embedding_reg(we)


def test_embedding_regularizer_gradient_matches_finite_differences(rng):
    we = rng.standard_normal((3, 4))
    grad, degenerate = embedding_reg_grad(we)
    assert not degenerate
    h = 1e-6
    approx = np.zeros_like(we)
    for idx in np.ndindex(we.shape):
        step = np.zeros_like(we)
        step[idx] = h
        approx[idx] = (embedding_reg(we + step) - embedding_reg(we - step)) / (2 * h)
    assert_allclose(grad, approx, rtol=1e-5, atol=1e-7)
