"""
Deterministic Monte Carlo over sampled tasks.

Tasks are split into fixed-size chunks that do not depend on the worker count.
Chunks run on a thread pool and per-task values are put back in index order
before any reduction, so estimates are bit-identical for any number of workers.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from catlab.tasks import TaskConfig, TaskSample, sample_tasks

logger = logging.getLogger(__name__)

# Even, so antithetic pairs never straddle two chunks.
CHUNK_SIZE = 512

ChunkResult = Union[np.ndarray, tuple]


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo policy: S tasks keyed by a seed, optionally in antithetic pairs."""
    num_tasks: int
    seed: int = 0
    antithetic: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.num_tasks < 1:
            raise ValueError(f"num_tasks must be >= 1, got {self.num_tasks}")
        if self.antithetic and (self.num_tasks < 2 or self.num_tasks % 2):
            raise ValueError(f"antithetic sampling needs an even num_tasks >= 2, got {self.num_tasks}")
        if self.seed < 0:
            raise ValueError(f"seed must be nonnegative, got {self.seed}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")


def default_workers() -> int:
    """Worker count from CATLAB_THREADS, else 1."""
    value = os.environ.get("CATLAB_THREADS", "")
    return max(1, int(value)) if value.strip() else 1


def chunk_bounds(num_tasks: int) -> list[tuple[int, int]]:
    return [(start, min(start + CHUNK_SIZE, num_tasks)) for start in range(0, num_tasks, CHUNK_SIZE)]


def map_tasks(
    tasks: TaskConfig,
    mc: McConfig,
    fn: Callable[[TaskSample], ChunkResult],
) -> ChunkResult:
    """Apply ``fn`` to every chunk of sampled tasks and concatenate along axis 0.

    ``fn`` returns an array, or a tuple of arrays, with one leading entry per task.
    """
    bounds = chunk_bounds(mc.num_tasks)

    def run(bound: tuple[int, int]) -> ChunkResult:
        batch = sample_tasks(tasks, mc.seed, bound[0], bound[1], mc.antithetic)
        return fn(batch)

    logger.debug("%d tasks in %d chunks on %d workers", mc.num_tasks, len(bounds), mc.workers)
    if mc.workers == 1 or len(bounds) == 1:
        results = [run(b) for b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=mc.workers) as pool:
            results = list(pool.map(run, bounds))

    if isinstance(results[0], tuple):
        return tuple(np.concatenate([np.asarray(r[i]) for r in results]) for i in range(len(results[0])))
    return np.concatenate([np.asarray(r) for r in results])


def observations(values: np.ndarray, antithetic: bool) -> np.ndarray:
    """Per-observation values; an antithetic pair counts as one observation (its average)."""
    values = np.asarray(values, dtype=float)
    if not antithetic:
        return values
    return (values[0::2] + values[1::2]) / 2.0


def mean_stderr(values: np.ndarray, antithetic: bool = False) -> tuple:
    """Mean over axis 0 and its standard error from per-observation values."""
    obs = observations(values, antithetic)
    mean = obs.mean(axis=0)
    if len(obs) < 2:
        stderr = np.zeros_like(mean)
    else:
        stderr = obs.std(axis=0, ddof=1) / np.sqrt(len(obs))
    if np.ndim(mean) == 0:
        return float(mean), float(stderr)
    return mean, stderr
