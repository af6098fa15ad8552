"""
In-context linear regression tasks and the structured ICL input.

A task draws a weight w ~ N(0, I), N context points and one query point from
N(0, Lambda), and labels every point by y = w^T x. Samples may carry leading
batch dimensions; every array is then stacked along axis 0.
"""

from dataclasses import dataclass

import numpy as np

from catlab.errors import DimensionError
from catlab.mathcore import SpdMatrix


@dataclass(frozen=True)
class TaskConfig:
    """Distribution of ICL regression tasks."""
    d0: int
    n: int
    lam: SpdMatrix

    def __post_init__(self):
        if self.d0 < 1:
            raise DimensionError(f"d0 must be >= 1, got {self.d0}")
        if self.n < 1:
            raise DimensionError(f"context length must be >= 1, got {self.n}")
        if self.lam.dim != self.d0:
            raise DimensionError(f"Lambda is {self.lam.dim}x{self.lam.dim}, expected d0={self.d0}")


@dataclass(frozen=True)
class TaskSample:
    """One task, or a batch of tasks stacked along leading axes."""
    w: np.ndarray
    x: np.ndarray
    y: np.ndarray
    xq: np.ndarray
    yq: np.ndarray

    @property
    def d0(self) -> int:
        return self.x.shape[-2]

    @property
    def n(self) -> int:
        return self.x.shape[-1]

    @property
    def batch_shape(self) -> tuple:
        return self.x.shape[:-2]

    def __len__(self) -> int:
        if not self.batch_shape:
            raise TypeError("single TaskSample has no length")
        return self.batch_shape[0]

    def __getitem__(self, index) -> "TaskSample":
        return TaskSample(
            w=self.w[index],
            x=self.x[index],
            y=self.y[index],
            xq=self.xq[index],
            yq=self.yq[index],
        )

    def with_context(self, x: np.ndarray) -> "TaskSample":
        """Replace the context points and keep every label frozen."""
        if x.shape != self.x.shape:
            raise DimensionError(f"context has shape {x.shape}, expected {self.x.shape}")
        return TaskSample(w=self.w, x=x, y=self.y, xq=self.xq, yq=self.yq)

    def negated(self) -> "TaskSample":
        """Antithetic partner: same inputs, negated weight and labels."""
        return TaskSample(w=-self.w, x=self.x, y=-self.y, xq=self.xq, yq=-self.yq)


@dataclass(frozen=True)
class IclInput:
    """The (d0+1) x (N+1) ICL input matrix Z."""
    z: np.ndarray

    @property
    def d0(self) -> int:
        return self.z.shape[0] - 1

    @property
    def n(self) -> int:
        return self.z.shape[1] - 1

    @property
    def context(self) -> np.ndarray:
        return self.z[:-1, :-1]

    @property
    def labels(self) -> np.ndarray:
        return self.z[-1, :-1]

    @property
    def query(self) -> np.ndarray:
        return self.z[:-1, -1]


def gamma_n(lam: SpdMatrix, n: int) -> SpdMatrix:
    """((N+1)/N) Lambda + (Tr(Lambda)/N) I."""
    if n < 1:
        raise ValueError(f"context length must be >= 1, got {n}")
    return SpdMatrix((n + 1) / n * lam.entries + lam.trace / n * np.eye(lam.dim))


def task_rng(seed: int, index: int) -> np.random.Generator:
    """Random stream for one task, keyed by (seed, index)."""
    return np.random.default_rng([seed, index])


def sample_task(cfg: TaskConfig, rng: np.random.Generator) -> TaskSample:
    w = rng.standard_normal(cfg.d0)
    points = cfg.lam.sample(rng, cfg.n + 1)
    x, xq = points[:, : cfg.n], points[:, cfg.n]
    return TaskSample(w=w, x=x, y=w @ x, xq=xq, yq=float(w @ xq))


def sample_tasks(
    cfg: TaskConfig,
    seed: int,
    start: int,
    stop: int,
    antithetic: bool = False,
) -> TaskSample:
    """Stack tasks ``start .. stop-1`` into one batch.

    Task ``i`` depends only on ``(seed, i)``. With ``antithetic`` the pair
    ``(2k, 2k+1)`` shares the draw keyed by ``k``, and the odd member has its
    weight and labels negated.
    """
    if stop <= start:
        raise ValueError(f"empty task range [{start}, {stop})")

    samples = []
    for index in range(start, stop):
        if antithetic:
            sample = sample_task(cfg, task_rng(seed, index // 2))
            if index % 2:
                sample = sample.negated()
        else:
            sample = sample_task(cfg, task_rng(seed, index))
        samples.append(sample)

    return TaskSample(
        w=np.stack([s.w for s in samples]),
        x=np.stack([s.x for s in samples]),
        y=np.stack([s.y for s in samples]),
        xq=np.stack([s.xq for s in samples]),
        yq=np.array([s.yq for s in samples]),
    )


def assemble_icl_input(s: TaskSample) -> IclInput:
    """Lay out Z = [[X, xq], [Y, 0]] for a single task."""
    if s.batch_shape:
        raise DimensionError("assemble_icl_input takes a single task, not a batch")
    top = np.column_stack([s.x, s.xq])
    bottom = np.append(s.y, 0.0)
    return IclInput(z=np.vstack([top, bottom]))
