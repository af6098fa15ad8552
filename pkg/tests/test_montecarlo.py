"""Tests for chunked, seeded Monte Carlo."""

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from catlab.montecarlo import (
    CHUNK_SIZE,
    McConfig,
    chunk_bounds,
    default_workers,
    map_tasks,
    mean_stderr,
    observations,
)


def test_config_validation():
    with pytest.raises(ValueError):
        McConfig(num_tasks=0)
    with pytest.raises(ValueError):
        McConfig(num_tasks=3, antithetic=True)
    with pytest.raises(ValueError):
        McConfig(num_tasks=4, workers=0)


def test_chunk_bounds_cover_range():
    bounds = chunk_bounds(2 * CHUNK_SIZE + 3)
    assert bounds[0] == (0, CHUNK_SIZE)
    assert bounds[-1] == (2 * CHUNK_SIZE, 2 * CHUNK_SIZE + 3)
    assert sum(b - a for a, b in bounds) == 2 * CHUNK_SIZE + 3


@pytest.mark.parametrize("workers", [2, 4, 8])
def test_results_do_not_depend_on_workers(tasks3, workers):
    def fn(batch):
        return batch.yq ** 2 + batch.x.sum(axis=(-2, -1))

    serial = map_tasks(tasks3, McConfig(num_tasks=1500, seed=9), fn)
    parallel = map_tasks(tasks3, McConfig(num_tasks=1500, seed=9, workers=workers), fn)
    assert_array_equal(serial, parallel)
    assert mean_stderr(serial) == mean_stderr(parallel)


def test_map_tasks_tuple_results(tasks3):
    first, second = map_tasks(tasks3, McConfig(num_tasks=600), lambda b: (b.yq, 2 * b.yq))
    assert first.shape == (600,)
    assert_array_equal(second, 2 * first)


def test_antithetic_odd_functions_cancel(tasks3):
    values = map_tasks(tasks3, McConfig(num_tasks=100, antithetic=True), lambda b: b.yq * b.xq[:, 0])
    obs = observations(values, antithetic=True)
    assert obs.shape == (50,)
    assert_array_equal(obs, np.zeros(50))
    assert mean_stderr(values, antithetic=True) == (0.0, 0.0)


def test_mean_stderr():
    mean, stderr = mean_stderr(np.array([1.0, 2.0, 3.0, 4.0]))
    assert mean == 2.5
    assert stderr == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
    assert mean_stderr(np.array([5.0])) == (5.0, 0.0)
    vec_mean, vec_se = mean_stderr(np.array([[1.0, 0.0], [3.0, 0.0]]))
    assert_array_equal(vec_mean, [2.0, 0.0])
    assert vec_se[1] == 0.0


def test_default_workers(monkeypatch):
    monkeypatch.delenv("CATLAB_THREADS", raising=False)
    assert default_workers() == 1
    monkeypatch.setenv("CATLAB_THREADS", "6")
    assert default_workers() == 6
