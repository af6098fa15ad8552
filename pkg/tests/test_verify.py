"""Tests for the verification suite."""

from dataclasses import replace

import numpy as np
import pytest

import catlab.verify as verify
from catlab.errors import ConfigError
from catlab.verify import CHECKS, check_names, family_z, run_check, run_verify, select_checks

EXACT_ANCHORS = [
    "surrogate scalar anchors",
    "clean risk scalar anchors",
    "robust bound scalar anchors",
    "factorization feasibility",
    "predictor and parameters agree",
]


def test_registry():
    names = check_names()
    assert len(names) >= 25
    assert len(set(names)) == len(names)
    assert {c.kind for c in CHECKS} == {"exact", "statistical"}
    for name in EXACT_ANCHORS:
        assert name in names


def test_family_z_widens_with_comparisons():
    assert family_z(4.0, 1) == 4.0
    assert family_z(1.0, 1) == pytest.approx(3.2905, abs=1e-4)
    assert family_z(10.0, 5) == 10.0
    assert family_z(3.0, 1000) > family_z(3.0, 10) > 3.0


def test_select_checks():
    assert len(select_checks()) == len(CHECKS)
    picked = select_checks(["robust bound scalar anchors", "trace cyclicity"])
    assert {c.name for _, c in picked} == {"robust bound scalar anchors", "trace cyclicity"}
    for index, spec in picked:
        assert CHECKS[index] is spec
    with pytest.raises(ConfigError, match="no such check"):
        select_checks(["no such check"])


@pytest.mark.parametrize("name", EXACT_ANCHORS)
def test_exact_checks_pass(small_experiment, name):
    (index, spec), = select_checks([name])
    result = run_check(index, spec, small_experiment)
    assert result.passed, result.detail
    assert result.kind == "exact"
    assert result.measured <= result.threshold


def test_checks_reproduce_on_their_own_stream(small_experiment):
    (index, spec), = select_checks(["gaussian fourth moment"])
    first = run_check(index, spec, small_experiment)
    again = run_check(index, spec, small_experiment)
    assert first.measured == again.measured
    assert first.kind == "statistical"


def test_numerical_errors_fail_the_check(small_experiment, monkeypatch):
    def broken(*args, **kwargs):
        raise np.linalg.LinAlgError("singular")

    monkeypatch.setattr(verify, "robust_bound", broken)
    (index, spec), = select_checks(["robust bound scalar anchors"])
    result = run_check(index, spec, small_experiment)
    assert not result.passed
    assert "LinAlgError" in result.detail


def test_report_rows(small_experiment, tmp_path):
    names = ["surrogate scalar anchors", "robust bound scalar anchors"]
    results = run_verify(small_experiment, tmp_path, deterministic=True, names=names)
    assert sorted(results["passed"]) == sorted(names)
    assert results["failed"] == []
    lines = results["report"].read_text().splitlines()
    assert lines[0] == "name,kind,status,measured,threshold,detail"
    assert len(lines) == 3
    assert all(",exact,pass," in line for line in lines[1:])


def test_wrong_bound_is_reported(small_experiment, tmp_path, monkeypatch):
    real = verify.robust_bound

    def shifted(*args, **kwargs):
        report = real(*args, **kwargs)
        return replace(report, bound=report.bound + 0.1)

    monkeypatch.setattr(verify, "robust_bound", shifted)
    results = run_verify(small_experiment, tmp_path, deterministic=True, names=["robust bound scalar anchors"])
    assert results["failed"] == ["robust bound scalar anchors"]
    assert ",fail," in results["report"].read_text().splitlines()[1]


def test_closed_form_check_draws_varied_shapes(small_experiment, monkeypatch):
    seen = []
    real = verify.closed_form_surrogate

    def recording(p, lam, n, eps):
        seen.append((p.d, p.d0, n, lam))
        return real(p, lam, n, eps)

    monkeypatch.setattr(verify, "closed_form_surrogate", recording)
    exp = replace(small_experiment, verify=replace(small_experiment.verify, lemma_instances=8))
    (index, spec), = select_checks(["closed-form surrogate matches Monte Carlo"])
    run_check(index, spec, exp)

    assert len(seen) == 8
    assert all(1 <= d <= d0 <= 8 and 1 <= n <= 32 for d, d0, n, _ in seen)
    assert len({(d, d0, n) for d, d0, n, _ in seen}) > 1
    spreads = [np.ptp(lam.eigenvalues) for _, d0, _, lam in seen if d0 > 1]
    assert spreads and min(spreads) > 0


def test_suffix_oracle_includes_line_grid(small_experiment):
    (index, spec), = select_checks(["suffix attack reaches the grid maximum"])
    result = run_check(index, spec, small_experiment)
    assert result.passed, result.detail
    assert f"{verify.LINE_POINTS} points" in result.detail and "d0 = 1" in result.detail
    rng = np.random.default_rng(7)
    assert min(verify._suffix_line_ratio(rng, 30) for _ in range(10)) >= 0.98
