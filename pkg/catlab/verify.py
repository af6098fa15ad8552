"""
Verification suite.

Every identity, bound and convergence property of the laboratory is run as a
pass/fail check against a Monte Carlo, finite-difference, brute-force or
closed-form oracle. Checks draw from their own random stream keyed by
(seed, check index), so a subset reproduces the numbers of a full run.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np
from rich.console import Console
from rich.progress import BarColumn, Progress, TextColumn, TimeRemainingColumn
from rich.table import Table
from scipy import linalg, stats

from catlab.attacks import (
    AttackConfig,
    embedding_loss,
    grad_embedding,
    grad_suffix,
    pgd_embedding,
    pgd_suffix,
    suffix_loss,
)
from catlab.config import ExperimentConfig, VerifySettings
from catlab.errors import CatlabError, ConfigError
from catlab.losses import (
    closed_form_surrogate,
    embedding_reg,
    embedding_reg_grad,
    mc_adversarial_loss,
    mc_surrogate_offdiag_grad,
    mc_surrogate_terms,
)
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
from catlab.model import (
    LsaeParams,
    Perturbation,
    PerturbationSpace,
    embed,
    forward_full,
    predict,
    predict_adv_embedding,
)
from catlab.montecarlo import McConfig, mean_stderr
from catlab.records import write_dicts
from catlab.risk import mc_clean_risk, mc_robust_risk, mc_robust_risk_sweep
from catlab.solver import (
    InfeasibleFactorization,
    PredictorMatrix,
    clean_risk_exact,
    factor_optimal_params,
    optimal_predictor_matrix,
    robust_bound,
    surrogate_minimum,
)
from catlab.tasks import TaskConfig, TaskSample, assemble_icl_input, sample_task, sample_tasks
from catlab.trainer import InitSpec, TrainConfig, check_stationarity, init_params, surrogate_grad, train_surrogate

console = Console()
logger = logging.getLogger(__name__)

REPORT_NAME = "verify_report.csv"

# Family-wise false-alarm rate of a statistical check over all its comparisons.
FAMILY_ALPHA = 1e-3

_TINY = np.finfo(float).tiny

# Brute-force grid size of the 1-D suffix oracle; odd so the grid holds 0.
LINE_POINTS = 10_001


@dataclass(frozen=True)
class Outcome:
    passed: bool
    measured: float
    threshold: float
    detail: str = ""


@dataclass(frozen=True)
class CheckResult:
    """One line of the verification report."""
    name: str
    kind: str
    passed: bool
    measured: float
    threshold: float
    detail: str = ""

    def as_row(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "status": "pass" if self.passed else "fail",
            "measured": self.measured,
            "threshold": self.threshold,
            "detail": self.detail,
        }


@dataclass
class CheckRun:
    """What a check gets to work with."""
    exp: ExperimentConfig
    settings: VerifySettings
    rng: np.random.Generator
    seed: int
    workers: int

    def mc(self, num_tasks: int, antithetic: bool = False) -> McConfig:
        if antithetic:
            num_tasks = max(2, num_tasks - num_tasks % 2)
        return McConfig(num_tasks=num_tasks, seed=self.seed, antithetic=antithetic, workers=self.workers)


@dataclass(frozen=True)
class Check:
    name: str
    kind: str
    fn: Callable[[CheckRun], Outcome]


CHECKS: list[Check] = []


def check(name: str, kind: str = "exact"):
    """Register a check; the registration order fixes its random stream."""
    def register(fn: Callable[[CheckRun], Outcome]) -> Callable[[CheckRun], Outcome]:
        CHECKS.append(Check(name=name, kind=kind, fn=fn))
        return fn
    return register


def check_names() -> list[str]:
    return [c.name for c in CHECKS]


def at_most(measured: float, threshold: float, detail: str = "") -> Outcome:
    return Outcome(bool(measured <= threshold), float(measured), float(threshold), detail)


def at_least(measured: float, threshold: float, detail: str = "") -> Outcome:
    return Outcome(bool(measured >= threshold), float(measured), float(threshold), detail)


def family_z(base: float, comparisons: int) -> float:
    """z threshold: ``base`` standard errors, widened for many comparisons."""
    return max(base, float(stats.norm.isf(FAMILY_ALPHA / (2 * max(comparisons, 1)))))


def _z(diff: float, stderr: float) -> float:
    if stderr > 0:
        return diff / stderr
    return 0.0 if diff == 0 else np.copysign(np.inf, diff)


# instance generators


def _random_params(rng: np.random.Generator, d: int, d0: int, offdiag: bool = True, scale: float = 0.5) -> LsaeParams:
    def block(*shape):
        return scale * rng.standard_normal(shape)

    return LsaeParams(
        we=rng.standard_normal((d, d0)) / np.sqrt(d0),
        kq11=block(d, d),
        kq12=block(d),
        kq21=block(d) if offdiag else np.zeros(d),
        kq22=float(block()),
        v11=block(d, d),
        v12=block(d),
        v21=block(d) if offdiag else np.zeros(d),
        v22=float(block()),
    )


def _well_conditioned(rng: np.random.Generator, d: int, d0: int, lo: float = 0.8, hi: float = 1.25) -> np.ndarray:
    """d x d0 matrix with singular values drawn from [lo, hi]."""
    k = min(d, d0)
    left, _ = linalg.qr(rng.standard_normal((d, d)))
    right, _ = linalg.qr(rng.standard_normal((d0, d0)))
    return (left[:, :k] * rng.uniform(lo, hi, k)) @ right[:, :k].T


def _scalar_params(kq11: float, v22: float = 1.0) -> LsaeParams:
    return LsaeParams.zeros(1, 1).replace(we=np.eye(1), kq11=np.array([[kq11]]), v22=v22)


def _repeat(s: TaskSample, count: int) -> TaskSample:
    def rep(a):
        return np.repeat(np.asarray(a)[None], count, axis=0)

    return TaskSample(w=rep(s.w), x=rep(s.x), y=rep(s.y), xq=rep(s.xq), yq=rep(s.yq))


def _fd_gradient(fn: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        step = np.zeros_like(x)
        step[idx] = h
        grad[idx] = (fn(x + step) - fn(x - step)) / (2.0 * h)
    return grad


def _relative_error(approx: np.ndarray, exact: np.ndarray) -> float:
    return float(np.linalg.norm(approx - exact) / max(float(np.linalg.norm(exact)), 1.0))


S1 = dict(we=np.eye(1), lam=SpdMatrix.identity(1), n=2)


# mathcore


@check("gaussian fourth moment", "statistical")
def _fourth_moment(run: CheckRun) -> Outcome:
    s = run.settings
    worst, comparisons = 0.0, 0
    for _ in range(s.instances):
        dim = int(run.rng.integers(1, 7))
        lam = SpdMatrix.random(dim, run.rng, 3.0)
        a = run.rng.standard_normal((dim, dim))
        mean, se = sample_fourth_moment(lam, a, s.moment_samples, run.rng)
        z = np.abs(mean - gaussian_fourth_moment(lam, a)) / np.maximum(se, _TINY)
        worst = max(worst, float(z.max()))
        comparisons += dim * (dim + 1) // 2
    return at_most(worst, family_z(4.0, comparisons), f"max |z| over {comparisons} entries")


@check("quadratic form expectation", "statistical")
def _quad_form(run: CheckRun) -> Outcome:
    s = run.settings
    worst = 0.0
    for _ in range(s.instances):
        dim = int(run.rng.integers(1, 7))
        lam = SpdMatrix.random(dim, run.rng, 3.0)
        a = run.rng.standard_normal((dim, dim))
        mean, se = sample_quad_form(lam, a, s.moment_samples, run.rng)
        worst = max(worst, abs(_z(mean - quad_form_expectation(lam, a), se)))
    return at_most(worst, family_z(4.0, s.instances), f"max |z| over {s.instances} instances")


@check("trace cyclicity")
def _trace_cyclicity(run: CheckRun) -> Outcome:
    worst = 0.0
    for _ in range(run.settings.instances):
        p, q = (int(v) for v in run.rng.integers(1, 7, size=2))
        a = run.rng.standard_normal((p, q))
        b = run.rng.standard_normal((q, p))
        err = abs(np.trace(a @ b) - np.trace(b @ a)) / (1.0 + np.linalg.norm(a) * np.linalg.norm(b))
        worst = max(worst, float(err))
    return at_most(worst, 1e-12)


@check("trace sandwich")
def _trace_sandwich(run: CheckRun) -> Outcome:
    worst = -np.inf
    for _ in range(run.settings.instances):
        dim = int(run.rng.integers(1, 7))
        g = run.rng.standard_normal((dim, dim))
        h = run.rng.standard_normal((dim, dim))
        a, b = g @ g.T, 0.5 * (h + h.T)
        lo, mid, hi = trace_sandwich(a, b)
        scale = 1.0 + np.trace(a) * np.linalg.norm(b, 2)
        worst = max(worst, (lo - mid) / scale, (mid - hi) / scale)
    return at_most(worst, 1e-12, "largest violation, negative is slack")


@check("rayleigh quotient maximum")
def _rayleigh(run: CheckRun) -> Outcome:
    worst = 0.0
    for _ in range(run.settings.instances):
        dim = int(run.rng.integers(1, 7))
        h = run.rng.standard_normal((dim, dim))
        a = 0.5 * (h + h.T)
        eig, vectors = linalg.eigh(a)
        scale = 1.0 + np.abs(eig).max()
        sampled = rayleigh_max(a, run.rng.standard_normal((dim, 64)))
        top = rayleigh_max(a, vectors[:, -1:])
        worst = max(worst, (sampled - eig[-1]) / scale, abs(top - eig[-1]) / scale)
    return at_most(worst, 1e-12)


@check("singular value statistics")
def _sv_stats(run: CheckRun) -> Outcome:
    worst = 0.0
    for _ in range(run.settings.instances):
        rows, cols = (int(v) for v in run.rng.integers(1, 7, size=2))
        w = run.rng.standard_normal((rows, cols))
        st = sv_stats(w)
        gram = np.linalg.norm(w @ w.T) ** 2
        worst = max(
            worst,
            abs(st.sum_fourth - gram) / (1.0 + gram),
            -st.variance,
            st.sigma_min - st.mean,
        )
    return at_most(worst, 1e-12, "sum of sigma^4 against ||W W^T||_F^2")


@check("inverse norm bound")
def _inverse_norm(run: CheckRun) -> Outcome:
    rng = run.rng
    worst = -np.inf
    for _ in range(5 * run.settings.instances):
        d0 = int(rng.integers(1, 6))
        d = int(rng.integers(1, d0 + 1))
        lam = SpdMatrix.random(d0, rng, 4.0)
        lhs, rhs = inverse_norm_bound(
            rng.standard_normal((d, d0)), lam, int(rng.integers(1, 33)), float(rng.uniform(0.0, 0.5))
        )
        worst = max(worst, (lhs - rhs) / rhs)
    for eps, expected in ((0.0, 0.5), (1.0, 1.0 / 3.0)):
        lhs, rhs = inverse_norm_bound(S1["we"], S1["lam"], S1["n"], eps)
        worst = max(worst, abs(lhs - expected) / expected, abs(rhs - expected) / expected)
    return at_most(worst, 1e-10, "relative excess of ||A^-1|| over its bound, scalar anchors included")


# model


@check("forward pass matches prediction")
def _forward_predict(run: CheckRun) -> Outcome:
    rng = run.rng
    worst = 0.0
    for _ in range(5 * run.settings.instances):
        d0, d, n = int(rng.integers(1, 5)), int(rng.integers(1, 5)), int(rng.integers(1, 9))
        p = _random_params(rng, d, d0)
        s = sample_task(TaskConfig(d0, n, SpdMatrix.random(d0, rng, 3.0)), rng)
        z = assemble_icl_input(s)
        full = float(forward_full(p, z)[-1, -1])
        pred = float(predict(p, s))
        e = embed(p, z).e
        scale = 1.0 + np.linalg.norm(p.value_row()) * np.linalg.norm(e) ** 3 * np.linalg.norm(p.wkq()) / n
        worst = max(worst, abs(full - pred) / scale)
    return at_most(worst, 1e-10)


@check("unused blocks do not reach the prediction")
def _unused_blocks(run: CheckRun) -> Outcome:
    exp = run.exp
    p = _random_params(run.rng, exp.d, exp.d0)
    q = p.replace(kq12=np.zeros(p.d), kq22=0.0, v11=np.zeros((p.d, p.d)), v12=np.zeros(p.d))
    batch = sample_tasks(exp.tasks, run.seed, 0, 64)
    diff = float(np.max(np.abs(predict(p, batch) - predict(q, batch))))
    return at_most(diff, 0.0, "kq12, kq22, v11, v12 zeroed")


@check("embedding perturbation is quadratic")
def _perturbation_quadratic(run: CheckRun) -> Outcome:
    rng = run.rng
    worst = 0.0
    for _ in range(run.settings.instances):
        d0, d, n = int(rng.integers(1, 5)), int(rng.integers(1, 5)), int(rng.integers(1, 9))
        p = _random_params(rng, d, d0)
        s = sample_task(TaskConfig(d0, n, SpdMatrix.identity(d0)), rng)
        direction = rng.standard_normal((d, n))
        radius = 3.0 * float(np.linalg.norm(direction, axis=0).max())
        g = [
            float(predict_adv_embedding(p, s, Perturbation(t * direction, radius, PerturbationSpace.EMBEDDING)))
            for t in range(4)
        ]
        third = g[3] - 3.0 * g[2] + 3.0 * g[1] - g[0]
        big = np.linalg.norm(p.we @ s.x) + radius * np.sqrt(n) + np.linalg.norm(s.y) + np.linalg.norm(p.we @ s.xq)
        query = np.linalg.norm(p.we @ s.xq)
        scale = 1.0 + np.linalg.norm(p.value_row()) * big ** 2 * np.linalg.norm(p.wkq()) * query / n
        worst = max(worst, abs(third) / scale)
    return at_most(worst, 1e-9, "third finite difference along a random direction")


# attacks


@check("embedding attack gradient")
def _grad_embedding(run: CheckRun) -> Outcome:
    rng = run.rng
    worst = 0.0
    for _ in range(run.settings.fd_instances):
        d0, d, n = int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.integers(1, 7))
        p = _random_params(rng, d, d0)
        s = sample_task(TaskConfig(d0, n, SpdMatrix.identity(d0)), rng)
        delta = 0.3 * rng.standard_normal((d, n))
        fd = _fd_gradient(lambda dl: float(embedding_loss(p, s, dl)), delta)
        worst = max(worst, _relative_error(fd, grad_embedding(p, s, delta)))
    return at_most(worst, 1e-5, "central differences, h = 1e-6")


@check("suffix attack gradient")
def _grad_suffix(run: CheckRun) -> Outcome:
    rng = run.rng
    worst = 0.0
    for _ in range(run.settings.fd_instances):
        d0, d, n = int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.integers(1, 7))
        m = int(rng.integers(1, n + 1))
        p = _random_params(rng, d, d0)
        s = sample_task(TaskConfig(d0, n, SpdMatrix.identity(d0)), rng)
        delta = 0.3 * rng.standard_normal((d0, m))
        fd = _fd_gradient(lambda dl: float(suffix_loss(p, s, dl)), delta)
        worst = max(worst, _relative_error(fd, grad_suffix(p, s, delta, m)))
    return at_most(worst, 1e-5, "central differences, h = 1e-6")


@check("regularizer gradient")
def _grad_reg(run: CheckRun) -> Outcome:
    rng = run.rng
    worst = 0.0
    for _ in range(run.settings.fd_instances):
        d, d0 = (int(v) for v in rng.integers(1, 6, size=2))
        we = rng.standard_normal((d, d0))
        grad, _ = embedding_reg_grad(we)
        worst = max(worst, _relative_error(_fd_gradient(embedding_reg, we), grad))
    return at_most(worst, 1e-5, "central differences, h = 1e-6")


@check("embedding attack reaches the grid maximum")
def _pgd_embedding_grid(run: CheckRun) -> Outcome:
    rng, s = run.rng, run.settings
    tasks = TaskConfig(d0=1, n=2, lam=SpdMatrix.identity(1))
    worst = np.inf
    for _ in range(s.grid_instances):
        radius = float(rng.uniform(0.1, 1.0))
        axis = np.linspace(-radius, radius, s.grid_points)
        first, second = np.meshgrid(axis, axis, indexing="ij")
        grid = np.stack([first.ravel(), second.ravel()], axis=-1)[:, None, :]
        p = LsaeParams.zeros(1, 1).replace(
            we=rng.standard_normal((1, 1)),
            kq11=rng.standard_normal((1, 1)),
            v22=float(rng.standard_normal()),
        )
        task = sample_task(tasks, rng)
        atk = AttackConfig(steps=s.oracle_steps, step_size=radius / 10.0, radius=radius)
        attacked = float(pgd_embedding(p, task, atk).loss)
        brute = float(embedding_loss(p, _repeat(task, len(grid)), grid).max())
        worst = min(worst, attacked / brute if brute > 0 else 1.0)
    return at_least(worst, 0.98, f"{s.grid_points}^2 grid, d = 1, N = 2")


def _suffix_line_ratio(rng: np.random.Generator, steps: int) -> float:
    """PGD over the brute-force maximum on a 1-D grid, d0 = 1, N = 2, M = 1."""
    radius = float(rng.uniform(0.1, 1.0))
    grid = np.linspace(-radius, radius, LINE_POINTS)[:, None, None]
    p = LsaeParams.zeros(1, 1).replace(
        we=rng.standard_normal((1, 1)),
        kq11=rng.standard_normal((1, 1)),
        v22=float(rng.standard_normal()),
    )
    task = sample_task(TaskConfig(d0=1, n=2, lam=SpdMatrix.identity(1)), rng)
    atk = AttackConfig(steps=steps, step_size=radius / 10.0, radius=radius)
    attacked = float(pgd_suffix(p, task, 1, atk).loss)
    brute = float(suffix_loss(p, _repeat(task, len(grid)), grid).max())
    return attacked / brute if brute > 0 else 1.0


@check("suffix attack reaches the grid maximum")
def _pgd_suffix_grid(run: CheckRun) -> Outcome:
    rng, s = run.rng, run.settings
    tasks = TaskConfig(d0=2, n=2, lam=SpdMatrix.identity(2))
    side = s.grid_points // 4 + 1
    worst = np.inf
    for _ in range(s.grid_instances):
        worst = min(worst, _suffix_line_ratio(rng, s.oracle_steps))
        radius = float(rng.uniform(0.1, 1.0))
        axis = np.linspace(-radius, radius, side)
        first, second = np.meshgrid(axis, axis, indexing="ij")
        points = np.stack([first.ravel(), second.ravel()], axis=-1)
        grid = points[np.linalg.norm(points, axis=-1) <= radius][:, :, None]
        p = LsaeParams.zeros(2, 2).replace(
            we=rng.standard_normal((2, 2)),
            kq11=rng.standard_normal((2, 2)),
            v22=float(rng.standard_normal()),
        )
        task = sample_task(tasks, rng)
        atk = AttackConfig(steps=s.oracle_steps, step_size=radius / 10.0, radius=radius)
        attacked = float(pgd_suffix(p, task, 1, atk).loss)
        brute = float(suffix_loss(p, _repeat(task, len(grid)), grid).max())
        worst = min(worst, attacked / brute if brute > 0 else 1.0)
    return at_least(worst, 0.98, f"{LINE_POINTS} points on [-rho, rho] at d0 = 1; {side}^2 disk grid at d0 = 2")


@check("attacks stay feasible and never lower the loss")
def _pgd_ascent(run: CheckRun) -> Outcome:
    exp = run.exp
    p = _random_params(run.rng, exp.d, exp.d0)
    batch = sample_tasks(exp.tasks, run.seed, 0, 256)
    count = len(batch)
    atk = AttackConfig(
        steps=exp.attack.steps, step_size=exp.attack.step_size, radius=exp.eps, restarts=1, seed=run.seed
    )
    # Perturbation rejects columns outside the ball
    emb = pgd_embedding(p, batch, atk)
    suf = pgd_suffix(p, batch, exp.m, atk.with_radius(exp.rho))
    start_emb = embedding_loss(p, batch, np.zeros((count, p.d, batch.n)))
    start_suf = suffix_loss(p, batch, np.zeros((count, p.d0, exp.m)))
    gap = max(float(np.max(start_emb - emb.loss)), float(np.max(start_suf - suf.loss)))
    return at_most(gap, 0.0, "largest loss drop against the zero start")


# losses


@check("surrogate bounds the adversarial loss", "statistical")
def _surrogate_upper(run: CheckRun) -> Outcome:
    exp, s = run.exp, run.settings
    mc = run.mc(s.lemma_tasks)
    worst = -np.inf
    for _ in range(s.lemma_instances):
        p = _random_params(run.rng, exp.d, exp.d0)
        adv, se_adv = mc_adversarial_loss(p, exp.tasks, exp.eps, mc, exp.attack)
        terms = mc_surrogate_terms(p, exp.tasks, exp.eps, mc)
        worst = max(worst, _z(adv - terms.total, float(np.hypot(se_adv, terms.stderr_total))))
    return at_most(worst, family_z(3.0, s.lemma_instances), "max z of attacked loss over surrogate")


@check("off-diagonal surrogate gradient vanishes")
def _offdiag_zero(run: CheckRun) -> Outcome:
    exp, s = run.exp, run.settings
    mc = run.mc(s.lemma_tasks, antithetic=True)
    eps = max(exp.eps, 0.1)
    worst = 0.0
    for _ in range(s.lemma_instances):
        p = _random_params(run.rng, exp.d, exp.d0, offdiag=False)
        worst = max(worst, mc_surrogate_offdiag_grad(p, exp.tasks, eps, mc).max_norm())
    return at_most(worst, 1e-10, f"antithetic pairs, {mc.num_tasks} tasks")


@check("closed-form surrogate matches Monte Carlo", "statistical")
def _closed_form(run: CheckRun) -> Outcome:
    rng, s = run.rng, run.settings
    mc = run.mc(s.lemma_tasks)
    worst = 0.0
    for _ in range(s.lemma_instances):
        d0 = int(rng.integers(1, 9))
        d = int(rng.integers(1, d0 + 1))
        n, eps = int(rng.integers(1, 33)), float(rng.uniform(0.0, 0.5))
        lam = SpdMatrix.random(d0, rng, 4.0)
        p = _random_params(rng, d, d0, offdiag=False)
        closed = closed_form_surrogate(p, lam, n, eps)
        terms = mc_surrogate_terms(p, TaskConfig(d0, n, lam), eps, mc)
        worst = max(worst, abs(_z(terms.total - closed, terms.stderr_total)))
    detail = "max |z| over random d <= d0 <= 8, N <= 32, anisotropic Lambda"
    return at_most(worst, family_z(3.0, s.lemma_instances), detail)


@check("surrogate scalar anchors")
def _surrogate_anchors(run: CheckRun) -> Outcome:
    we, lam, n = S1["we"], S1["lam"], S1["n"]
    errors = [
        abs(closed_form_surrogate(_scalar_params(0.5), lam, n, 0.0) - 1.0),
        abs(closed_form_surrogate(_scalar_params(1.0 / 3.0), lam, n, 1.0) - 4.0 / 3.0),
        abs(closed_form_surrogate(_scalar_params(0.0), lam, n, 0.0) - 2.0),
        abs(surrogate_minimum(we, lam, n, 0.0) - 1.0),
        abs(surrogate_minimum(we, lam, n, 1.0) - 4.0 / 3.0),
    ]
    return at_most(max(errors), 1e-12, "minimum 1 at eps = 0, 4/3 at eps = 1")


# solver


@check("factored optimum is stationary")
def _factored_stationary(run: CheckRun) -> Outcome:
    rng = run.rng
    worst = 0.0
    for i in range(run.settings.instances):
        if i % 2 == 0:
            d0 = int(rng.integers(1, 5))
            d = d0
            lam = SpdMatrix.random(d0, rng, 2.0)
        else:
            d0 = int(rng.integers(2, 5))
            d = int(rng.integers(1, d0))
            lam = SpdMatrix.identity(d0, float(rng.uniform(0.5, 2.0)))
        we = _well_conditioned(rng, d, d0)
        n, eps = int(rng.integers(2, 33)), float(rng.uniform(0.0, 0.5))
        p = factor_optimal_params(we, lam, n, eps)
        if isinstance(p, InfeasibleFactorization):
            return Outcome(False, np.inf, 1e-8, f"feasible case reported infeasible: {p.reason}")
        minimum = surrogate_minimum(we, lam, n, eps)
        gap = abs(closed_form_surrogate(p, lam, n, eps) - minimum) / (1.0 + abs(minimum))
        worst = max(
            worst,
            check_stationarity(p, lam, n, eps),
            surrogate_grad(p, lam, n, eps).max_norm(),
            gap,
        )
    return at_most(worst, 1e-8, "stationarity residual, gradient and gap to the minimum")


@check("factorization feasibility")
def _factorization(run: CheckRun) -> Outcome:
    rng = run.rng
    wrong = 0
    for _ in range(run.settings.instances):
        d0 = int(rng.integers(2, 5))
        d = int(rng.integers(1, d0))
        lam = SpdMatrix.random(d0, rng, 4.0)
        narrow = factor_optimal_params(_well_conditioned(rng, d, d0), lam, 16, 0.1)
        square = factor_optimal_params(_well_conditioned(rng, d0, d0), lam, 16, 0.1)
        wrong += int(not isinstance(narrow, InfeasibleFactorization))
        wrong += int(not isinstance(square, LsaeParams))
    return at_most(wrong, 0, "misclassified cases: d < d0 anisotropic, d = d0 invertible")


# trainer


@check("training converges to the minimum")
def _train_converges(run: CheckRun) -> Outcome:
    steps = run.settings.train_steps
    n, eps = 16, 0.1
    cases = [
        (SpdMatrix.diagonal([1.0, 0.8]), _well_conditioned(run.rng, 2, 2, 0.9, 1.1)),
        (SpdMatrix.identity(2), np.eye(1, 2)),
    ]
    cfg = TrainConfig(steps=steps, lr=0.01, eps=eps, log_every=steps)
    worst = 0.0
    for lam, we in cases:
        d, d0 = we.shape
        init = init_params(d, d0, InitSpec(zeta=run.exp.init.zeta, we_init=we), lam)
        result = train_surrogate(init, lam, n, cfg)
        p = result.params
        offdiag = float(max(np.abs(p.kq21).max(), np.abs(p.v21).max()))
        worst = max(
            worst,
            check_stationarity(p, lam, n, eps),
            abs(result.final_loss - surrogate_minimum(we, lam, n, eps)),
            offdiag,
        )
    return at_most(worst, 1e-6, f"{steps} steps, square and isotropic cases")


@check("training scalar anchors")
def _train_anchors(run: CheckRun) -> Outcome:
    steps = run.settings.train_steps
    worst = 0.0
    for eps, product, loss in ((0.0, 0.5, 1.0), (1.0, 1.0 / 3.0, 4.0 / 3.0)):
        init = init_params(1, 1, InitSpec(zeta=0.1), S1["lam"])
        cfg = TrainConfig(steps=steps, lr=0.01, eps=eps, log_every=steps)
        result = train_surrogate(init, S1["lam"], S1["n"], cfg)
        p = result.params
        worst = max(
            worst,
            abs(p.v22 * p.kq11[0, 0] - product) / 1e-6,
            abs(result.final_loss - loss) / 1e-8,
        )
    return at_most(worst, 1.0, "error over tolerance: product 1e-6, loss 1e-8")


# risk


@check("clean risk Monte Carlo", "statistical")
def _clean_mc(run: CheckRun) -> Outcome:
    exp, s = run.exp, run.settings
    d0, n = exp.d0, exp.n
    mc = run.mc(s.risk_tasks)
    worst = 0.0
    for i in range(s.lemma_instances):
        lam = SpdMatrix.random(d0, run.rng, 3.0)
        b = np.zeros((d0, d0)) if i == 0 else run.rng.standard_normal((d0, d0)) / d0
        predictor = PredictorMatrix(b=b, we_used=np.eye(d0), eps=0.0, n=n)
        est = mc_clean_risk(predictor, lam, n, mc)
        worst = max(worst, abs(_z(est.value - clean_risk_exact(predictor, lam, n), est.stderr)))
    return at_most(worst, family_z(3.0, s.lemma_instances), "max |z|, B = 0 included")


@check("clean risk scalar anchors")
def _clean_anchors(run: CheckRun) -> Outcome:
    errors = []
    for eps, expected in ((0.0, 0.25), (1.0, 5.0 / 18.0)):
        predictor = optimal_predictor_matrix(S1["we"], S1["lam"], S1["n"], eps)
        errors.append(abs(clean_risk_exact(predictor, S1["lam"], S1["n"]) - expected))
    return at_most(max(errors), 1e-12, "0.25 at eps = 0, 5/18 at eps = 1")


@check("robust bound scalar anchors")
def _bound_anchors(run: CheckRun) -> Outcome:
    errors = [
        abs(robust_bound(S1["we"], S1["lam"], S1["n"], 0.0, 1, 0.0).bound - 1.5),
        abs(robust_bound(S1["we"], S1["lam"], S1["n"], 1.0, 1, 1.0).bound - 1.25),
    ]
    return at_most(max(errors), 1e-12, "1.5 at eps = rho = 0, 1.25 at eps = rho = 1")


@check("robust bound monotonicity")
def _bound_monotone(run: CheckRun) -> Outcome:
    rng, s = run.rng, run.settings
    eps_values = sorted(set(s.eps_grid))
    rho_values = sorted(set(s.rho_grid))
    violations = 0
    for _ in range(s.instances):
        d0 = int(rng.integers(1, 5))
        d = int(rng.integers(1, d0 + 1))
        we = _well_conditioned(rng, d, d0)
        lam = SpdMatrix.random(d0, rng, 3.0)
        n = int(rng.integers(1, 33))
        by_eps = [robust_bound(we, lam, n, e, 1, 0.5).bound for e in eps_values]
        by_rho = [robust_bound(we, lam, n, 0.1, 1, r).bound for r in rho_values]
        by_m = [robust_bound(we, lam, n, 0.1, m, 0.5).bound for m in range(min(n, 4) + 1)]
        violations += sum(b >= a for a, b in zip(by_eps, by_eps[1:]))
        violations += sum(b < a for a, b in zip(by_rho, by_rho[1:]))
        violations += sum(b < a for a, b in zip(by_m, by_m[1:]))
    return at_most(violations, 0, "decreasing in eps, nondecreasing in rho and M")


@check("robust risk stays below the bound", "statistical")
def _bound_valid(run: CheckRun) -> Outcome:
    exp, s = run.exp, run.settings
    lam, n = SpdMatrix.identity(4), 16
    embeddings = (np.eye(4), np.diag([2.0, 1.0, 1.0, 0.5]))
    mc = run.mc(s.bound_tasks)
    worst, points = 0.0, 0
    for we in embeddings:
        for eps in s.eps_grid:
            predictor = optimal_predictor_matrix(we, lam, n, eps)
            for m in s.m_grid:
                if m > n:
                    logger.warning("skipping M=%d, longer than the context", m)
                    continue
                estimates = mc_robust_risk_sweep(
                    predictor, lam, n, m, list(s.rho_grid), mc, exp.risk_steps, exp.risk_step_ratio
                )
                for est in estimates:
                    worst = max(worst, est.value / robust_bound(we, lam, n, eps, m, est.rho).bound)
                    points += 1
    return at_most(worst, 1.0, f"largest risk/bound ratio over {points} grid points")


@check("training radius lowers robust risk", "statistical")
def _eps_helps(run: CheckRun) -> Outcome:
    exp, s = run.exp, run.settings
    lam, n, we = SpdMatrix.identity(4), 16, np.eye(4)
    mc = run.mc(s.bound_tasks)
    atk = AttackConfig.for_risk(1.0, exp.risk_steps, exp.risk_step_ratio)
    per_task = [
        mc_robust_risk(optimal_predictor_matrix(we, lam, n, eps), lam, n, 4, 1.0, mc, atk).per_task
        for eps in sorted(set(s.train_eps_grid))
    ]
    worst = -np.inf
    for before, after in zip(per_task, per_task[1:]):
        diff, se = mean_stderr(after - before, mc.antithetic)
        worst = max(worst, _z(diff, se))
    return at_most(worst, family_z(3.0, max(len(per_task) - 1, 1)), "max paired z of risk increase, M = 4, rho = 1")


@check("regularizer narrows the spectrum")
def _reg_spread(run: CheckRun) -> Outcome:
    exp = run.exp
    steps = run.settings.train_steps
    lam, n = SpdMatrix.identity(4), 16
    we0 = np.diag([3.0, 1.5, 1.0, 0.5])
    m = min(exp.m, n)
    final = {}
    for beta in (0.0, 0.5):
        init = init_params(4, 4, InitSpec(zeta=exp.init.zeta, we_init=we0), lam)
        cfg = TrainConfig(steps=steps, lr=0.01, eps=exp.eps, train_we=True, beta=beta, log_every=steps)
        final[beta] = train_surrogate(init, lam, n, cfg).params.we
    var_off, var_on = embedding_reg(final[0.0]), embedding_reg(final[0.5])
    bound_off = robust_bound(final[0.0], lam, n, exp.eps, m, exp.rho).bound
    bound_on = robust_bound(final[0.5], lam, n, exp.eps, m, exp.rho).bound
    ratio = var_on / var_off if var_off > 0 else np.inf
    passed = var_on < var_off and bound_on <= bound_off * (1.0 + 1e-12)
    return Outcome(
        passed,
        float(ratio),
        1.0,
        f"sv variance {var_on:.6g} vs {var_off:.6g}, bound {bound_on:.6g} vs {bound_off:.6g}",
    )


@check("predictor and parameters agree")
def _dual(run: CheckRun) -> Outcome:
    exp = run.exp
    d0 = exp.d0
    we = _well_conditioned(run.rng, d0, d0)
    p = factor_optimal_params(we, exp.lam, exp.n, exp.eps)
    if isinstance(p, InfeasibleFactorization):
        return Outcome(False, np.inf, 1e-10, f"square embedding reported infeasible: {p.reason}")
    predictor = PredictorMatrix.from_params(p, exp.eps, exp.n)
    batch = sample_tasks(exp.tasks, run.seed, 0, 512)
    direct = predictor.predict(batch)
    scale = np.maximum(1.0, np.abs(direct))
    optimum = optimal_predictor_matrix(we, exp.lam, exp.n, exp.eps).b
    worst = max(
        float(np.max(np.abs(predict(p, batch) - direct) / scale)),
        float(np.max(np.abs(predict(predictor.as_params(), batch) - direct) / scale)),
        float(np.linalg.norm(optimum - predictor.b) / max(np.linalg.norm(optimum), 1.0)),
    )
    return at_most(worst, 1e-10, "per-task predictions of both representations")


@check("warm-started radius sweep is monotone")
def _sweep_monotone(run: CheckRun) -> Outcome:
    exp, s = run.exp, run.settings
    predictor = optimal_predictor_matrix(np.eye(exp.d0), exp.lam, exp.n, exp.eps)
    rhos = sorted(set(s.rho_grid) | {0.0, 2.0 * max(s.rho_grid)}, reverse=True)
    m = max(1, exp.m)
    estimates = mc_robust_risk_sweep(
        predictor, exp.lam, exp.n, m, rhos, run.mc(min(s.bound_tasks, 2048)), exp.risk_steps, exp.risk_step_ratio
    )
    ordered = sorted(estimates, key=lambda e: e.rho)
    drops = [float(np.max(a.per_task - b.per_task)) for a, b in zip(ordered, ordered[1:])]
    return at_most(max(drops, default=0.0), 0.0, "largest per-task decrease between neighbouring radii")


@check("training radius shrinks the predictor")
def _shrinkage(run: CheckRun) -> Outcome:
    exp = run.exp
    we = np.eye(exp.d0)
    eps_values = sorted(set(run.settings.eps_grid))
    minima = [surrogate_minimum(we, exp.lam, exp.n, e) for e in eps_values]
    norms = [np.linalg.norm(optimal_predictor_matrix(we, exp.lam, exp.n, e).b) for e in eps_values]
    violations = sum(b < a for a, b in zip(minima, minima[1:]))
    violations += sum(b >= a for a, b in zip(norms, norms[1:]))
    return at_most(violations, 0, "||B||_F decreasing and the surrogate minimum nondecreasing in eps")


@check("zero-radius attack equals clean risk")
def _zero_radius(run: CheckRun) -> Outcome:
    exp, s = run.exp, run.settings
    lam, n = exp.lam, exp.n
    predictor = optimal_predictor_matrix(np.eye(exp.d0), lam, n, exp.eps)
    mc = run.mc(min(s.bound_tasks, 2048))
    m = max(1, exp.m)
    clean = mc_clean_risk(predictor, lam, n, mc).per_task
    no_radius = mc_robust_risk(predictor, lam, n, m, 0.0, mc).per_task
    no_suffix = mc_robust_risk(predictor, lam, n, 0, max(exp.rho, 0.1), mc).per_task
    attacked = mc_robust_risk(predictor, lam, n, m, max(exp.rho, 0.1), mc).per_task
    worst = max(
        float(np.max(np.abs(no_radius - clean))),
        float(np.max(np.abs(no_suffix - clean))),
        float(np.max(clean - attacked)),
    )
    return at_most(worst, 0.0, "rho = 0 and M = 0 match clean per task; attacks never help")


def select_checks(names: Optional[Iterable[str]] = None) -> list[tuple[int, Check]]:
    """Registered checks with their indices, restricted to ``names`` when given."""
    indexed = list(enumerate(CHECKS))
    if not names:
        return indexed
    wanted = list(names)
    unknown = [n for n in wanted if n not in check_names()]
    if unknown:
        raise ConfigError(f"unknown check(s): {', '.join(unknown)}")
    return [(i, c) for i, c in indexed if c.name in wanted]


def run_check(index: int, spec: Check, exp: ExperimentConfig) -> CheckResult:
    """Run one check on its own random stream; numerical failures fail the check."""
    run = CheckRun(
        exp=exp,
        settings=exp.verify,
        rng=np.random.default_rng([exp.mc.seed, index]),
        seed=exp.mc.seed,
        workers=exp.mc.workers,
    )
    try:
        outcome = spec.fn(run)
    except (CatlabError, ArithmeticError, ValueError, linalg.LinAlgError) as e:
        logger.warning("check %r raised %s: %s", spec.name, type(e).__name__, e)
        outcome = Outcome(False, np.nan, np.nan, f"{type(e).__name__}: {e}")
    return CheckResult(
        name=spec.name,
        kind=spec.kind,
        passed=outcome.passed,
        measured=outcome.measured,
        threshold=outcome.threshold,
        detail=outcome.detail,
    )


def run_verify(
    exp: ExperimentConfig,
    out_dir: Path,
    deterministic: bool = False,
    names: Optional[Iterable[str]] = None,
) -> dict:
    """Run the suite, write the report and return pass/fail lists."""
    selected = select_checks(names)
    results: list[CheckResult] = []

    console.print(f"\n[blue]Running {len(selected)} checks[/blue]")
    console.print(f"[dim]Seed {exp.mc.seed}, {exp.mc.workers} worker(s)[/dim]\n")

    with Progress(
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TextColumn("[progress.percentage]{task.percentage:>3.0f}%"),
        TimeRemainingColumn(),
        console=console,
    ) as progress:
        task = progress.add_task("Verifying...", total=len(selected))
        for index, spec in selected:
            progress.update(task, description=f"{spec.name}...")
            result = run_check(index, spec, exp)
            results.append(result)
            if result.passed:
                console.print(f"[green]✓[/green] {spec.name}")
            else:
                console.print(f"[red]✗[/red] {spec.name} [dim]({result.detail})[/dim]")
            progress.advance(task)

    report = write_dicts(Path(out_dir) / REPORT_NAME, [r.as_row() for r in results], deterministic)

    table = Table(title="Verification", show_header=True)
    table.add_column("Check", style="cyan")
    table.add_column("Kind")
    table.add_column("Measured", justify="right")
    table.add_column("Threshold", justify="right")
    table.add_column("Status")
    for r in results:
        status = "[green]pass[/green]" if r.passed else "[red]fail[/red]"
        table.add_row(r.name, r.kind, f"{r.measured:.3g}", f"{r.threshold:.3g}", status)
    console.print(table)

    passed = [r.name for r in results if r.passed]
    failed = [r.name for r in results if not r.passed]
    console.print("\n[bold]Verification complete:[/bold]")
    console.print(f"  [green]Passed:[/green] {len(passed)}")
    if failed:
        console.print(f"  [red]Failed:[/red] {len(failed)}")

    return {"passed": passed, "failed": failed, "report": report, "results": results}
