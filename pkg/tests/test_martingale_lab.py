"""
Tests for the Monte-Carlo martingale harness.
Tests simulation reproducibility, tail and Laplace estimates and curve certification.
"""

import math

import numpy as np
import pytest

from src import bounds
from src.laws import Bernoulli, Gaussian, Laplace, Rademacher, StreamKey, StretchedExp
from src.martingale_lab import (
    CSV_COLUMNS,
    ArchProcess,
    ExperimentSpec,
    as_rate_trace,
    estimate_laplace,
    estimate_tail,
    hypothesis_constant,
    lp_rate_trace,
    rademacher_tail_exact,
    rows_to_frame,
    simulate_sums,
    source_from_dict,
    theorem_curve,
    verify_curve,
)
from src.utils import (
    STATUS_FAIL,
    STATUS_INSUFFICIENT,
    ConfigError,
    DomainError,
    McEstimate,
    PreconditionError,
    verification_row,
)


@pytest.fixture
def key():
    """Experiment stream key."""
    return StreamKey(424242).child("martingale-tests")


@pytest.fixture
def rademacher_spec(key):
    """Rademacher walk of length 10 on a coarse grid."""
    return ExperimentSpec(Rademacher(), 10, (0.2, 0.4, 0.6), 20_000, key, "upper", "rademacher-10")


@pytest.mark.parametrize("kwargs", [
    {"replicates": 50},
    {"sides": "both"},
    {"grid": ()},
    {"grid": (0.4, 0.2)},
    {"grid": (-0.1, 0.2)},
    {"n": 0},
])
def test_experiment_spec_validation(key, kwargs):
    """Test that invalid experiment definitions raise DomainError."""
    args = {"law": Rademacher(), "n": 10, "grid": (0.1, 0.2), "replicates": 200, "key": key}
    args.update(kwargs)
    with pytest.raises(DomainError):
        ExperimentSpec(**args)


def test_rademacher_tail_exact():
    """Test the binomial oracle on hand-computed values."""
    assert rademacher_tail_exact(10, 0.8) == pytest.approx(2.0 ** -10)
    assert rademacher_tail_exact(10, 0.8, "two_sided") == pytest.approx(2.0 ** -9)
    assert rademacher_tail_exact(10, 0.0) == pytest.approx(386.0 / 1024.0)
    assert rademacher_tail_exact(10, 0.2) == pytest.approx(176.0 / 1024.0)
    assert bounds.hoeffding_bound(10, 0.8, 1.0) >= rademacher_tail_exact(10, 0.8)
    with pytest.raises(DomainError):
        rademacher_tail_exact(10, -0.1)


def test_simulate_sums_is_prefix_stable(key):
    """Test that the first replicates do not depend on the total count."""
    small = simulate_sums(Rademacher(), 12, 150, key)
    large = simulate_sums(Rademacher(), 12, 300, key)
    assert small.shape == (150, 1)
    assert np.array_equal(small, large[:150])


def test_simulate_sums_is_jobs_independent(key):
    """Test that parallel block dispatch reproduces the serial output."""
    serial = simulate_sums(Gaussian(), 5, 5000, key, jobs=1)
    parallel = simulate_sums(Gaussian(), 5, 5000, key, jobs=2)
    assert np.array_equal(serial, parallel)


def test_simulate_sums_checkpoints(key):
    """Test that checkpoint columns match the full-length sums."""
    sums = simulate_sums(Rademacher(), 10, 200, key, checkpoints=[5, 10])
    assert np.array_equal(sums[:, 1], simulate_sums(Rademacher(), 10, 200, key)[:, 0])
    assert np.all(np.abs(sums[:, 0]) <= 5)
    with pytest.raises(DomainError):
        simulate_sums(Rademacher(), 10, 200, key, checkpoints=[11])


def test_arch_process_increments(key):
    """Test that ARCH-style increments stay within [sigma_lo, sigma_hi] in absolute value."""
    process = ArchProcess(Rademacher(), 0.5, 1.0)
    sums = simulate_sums(process, 8, 300, key, checkpoints=range(1, 9))
    steps = np.abs(np.diff(np.concatenate([np.zeros((300, 1)), sums], axis=1), axis=1))
    assert np.all(steps >= 0.5 - 1e-12)
    assert np.all(steps <= 1.0 + 1e-12)
    assert process.abs_bound == 1.0


def test_arch_process_validation_and_moments():
    """Test ARCH parameter checks and the dominating moment."""
    with pytest.raises(DomainError):
        ArchProcess(Rademacher(), 2.0, 1.0)
    with pytest.raises(PreconditionError):
        ArchProcess(Bernoulli(0.3, 0.0, 1.0))
    process = ArchProcess(Gaussian(), 0.5, 2.0)
    assert process.exp_moment(0.0625, 2.0) == pytest.approx(math.sqrt(2.0))


def test_source_from_dict():
    """Test tagged records for iid laws and ARCH processes."""
    record = {"law": "arch", "innovation": {"law": "rademacher"}, "sigma_lo": 0.25, "sigma_hi": 1.0}
    process = source_from_dict(record)
    assert process == ArchProcess(Rademacher(), 0.25, 1.0)
    assert source_from_dict(process.to_dict()) == process
    assert source_from_dict({"law": "laplace", "scale": 2.0}) == Laplace(2.0)
    with pytest.raises(ConfigError):
        source_from_dict({"law": "arch"})
    with pytest.raises(ConfigError):
        source_from_dict({"law": "arch", "innovation": {"law": "rademacher"}, "gain": 1.0})


def test_estimate_tail_matches_exact(rademacher_spec):
    """Test Monte-Carlo tail frequencies against the binomial oracle."""
    estimates = estimate_tail(rademacher_spec)
    assert len(estimates) == 3
    for x, est in zip(rademacher_spec.grid, estimates):
        assert est.count == 20_000
        assert abs(est.mean - rademacher_tail_exact(10, x)) <= 4.5 * est.stderr + 1e-3


def test_estimate_tail_requires_centering(key):
    """Test that uncentered increments raise PreconditionError."""
    spec = ExperimentSpec(Bernoulli(0.3, 0.0, 1.0), 5, (0.1,), 200, key)
    with pytest.raises(PreconditionError):
        estimate_tail(spec)


def test_estimate_laplace(key):
    """Test the Laplace transform estimate against exp(n lambda(t))."""
    spec = ExperimentSpec(Rademacher(), 5, (0.1,), 20_000, key)
    zero, one = estimate_laplace(spec, [0.0, 1.0])
    assert zero.estimate.mean == 1.0
    assert zero.estimate.stderr == 0.0
    assert one.exact == pytest.approx(math.cosh(1.0) ** 5)
    assert abs(one.estimate.mean - one.exact) <= 4.5 * one.estimate.stderr
    with pytest.raises(DomainError):
        estimate_laplace(ExperimentSpec(Laplace(1.0), 5, (0.1,), 200, key), [1.5])


def test_hypothesis_constant():
    """Test K from the law and its divergence."""
    assert hypothesis_constant(Rademacher(), 1.0) == pytest.approx(math.e)
    with pytest.raises(PreconditionError):
        hypothesis_constant(Laplace(1.0), 1.0)


def test_verify_curve_passes_true_bound(rademacher_spec):
    """Test that the Bernstein curve certifies against Rademacher sums."""
    built = theorem_curve("bernstein", Rademacher())
    assert built.k_used == pytest.approx(math.e)
    rows = verify_curve(rademacher_spec, built.curve, built.k_used, built.delta, built.q)
    assert all(row.passed for row in rows)
    assert all(row.slack_sigmas > 0 for row in rows)


def test_verify_curve_flags_false_bound(rademacher_spec):
    """Test that a curve with a too-small range is reported as failing."""
    rows = verify_curve(rademacher_spec, bounds.hoeffding_curve(0.3), math.e)
    assert rows[0].status == STATUS_FAIL
    assert not rows[0].passed


def test_verify_curve_two_sided_and_resolution(key):
    """Test bound doubling for two-sided events and the resolution floor."""
    spec = ExperimentSpec(Rademacher(), 10, (0.6, 0.99), 200, key, "two_sided")
    rows = verify_curve(spec, bounds.hoeffding_curve(1.0), math.e)
    assert rows[0].bound == pytest.approx(min(1.0, 2.0 * bounds.hoeffding_bound(10, 0.6, 1.0)))
    assert rows[1].status == STATUS_INSUFFICIENT
    assert rows[1].passed


def test_verify_curve_rejects_small_constant(rademacher_spec):
    """Test that a K below the true moment raises PreconditionError."""
    with pytest.raises(PreconditionError):
        verify_curve(rademacher_spec, bounds.bernstein_curve(1.0), 1.0)


def test_theorem_curve_dispatch():
    """Test the named-theorem factory and its preconditions."""
    built = theorem_curve("q_regime", StretchedExp(2.0, 1.0))
    assert (built.delta, built.q) == (0.5, 2.0)
    assert built.k_used == pytest.approx(2.0)
    assert theorem_curve("petrov", Rademacher()).curve.name == "petrov"
    assert theorem_curve("hoeffding", Rademacher()).curve.name == "hoeffding"
    with pytest.raises(PreconditionError):
        theorem_curve("hoeffding", Gaussian())
    with pytest.raises(DomainError):
        theorem_curve("q_regime", Gaussian())
    with pytest.raises(DomainError):
        theorem_curve("epsilon", Rademacher(), {"delta": 0.5})
    with pytest.raises(DomainError):
        theorem_curve("chernoff", Rademacher())


def test_rows_to_frame(rademacher_spec):
    """Test the verification CSV schema."""
    built = theorem_curve("bernstein", Rademacher())
    rows = verify_curve(rademacher_spec, built.curve, built.k_used)
    frame = rows_to_frame("rademacher-10", "rademacher", 10, rows)
    assert list(frame.columns) == CSV_COLUMNS
    assert len(frame) == 3
    assert frame["pass"].all()
    assert frame["within_tolerance"].all()


def test_unresolved_row_keeps_raw_comparison():
    """Test that a row under the resolution floor passes but records a gross exceedance."""
    empirical = McEstimate(0.2, 0.01, 200)
    row = verification_row(0.9, empirical, 1e-4)
    assert row.status == STATUS_INSUFFICIENT
    assert row.passed
    assert not row.within_tolerance
    frame = rows_to_frame("tiny-bound", "rademacher", 10, [row, verification_row(0.1, empirical, 0.5)])
    assert frame["pass"].tolist() == [True, True]
    assert frame["within_tolerance"].tolist() == [False, True]


def test_rate_traces(key):
    """Test the almost-sure and L^p traces of a Rademacher walk."""
    trace = as_rate_trace(Rademacher(), [2, 10, 50], key, 500, k=1.0)
    assert list(trace["n"]) == [10, 50]
    assert (trace["ceiling"] == 2.0).all()
    assert (trace["mean"] > 0).all()
    lp = lp_rate_trace(Rademacher(), 2.0, [10, 40], key, 4000, k=1.0)
    # n E[(S_n/n)^2] = 1 for unit-variance increments
    assert all(abs(row.mean - 1.0) <= 4.5 * row.stderr for row in lp.itertuples())
    assert lp["ceiling"].tolist() == pytest.approx([8.0, 8.0])
    with pytest.raises(DomainError):
        as_rate_trace(Rademacher(), [1, 2], key, 200)
