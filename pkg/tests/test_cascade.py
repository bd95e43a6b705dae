"""
Tests for the cascade module.
Tests theta-moments, the infimum search over theta and the comparison with the polymer.
"""

import math

import numpy as np
import pytest

from src.cascade import (
    CascadeSamples,
    cascade_samples,
    cascade_upper_envelope,
    compare_with_polymer,
    golden_section,
    p_tree,
    p_tree_from_samples,
    theta_grid,
    theta_moment,
    v_of_theta,
)
from src.laws import Gaussian, StreamKey
from src.polymer import PolymerConfig
from src.utils import DomainError


def make_config(d=1, beta=0.5, seed=7):
    """Polymer config for cascade runs; the horizon is replaced per level."""
    return PolymerConfig(d, 1, beta, Gaussian(), StreamKey(seed).child("cascade-tests"))


def test_theta_grid():
    """Test the log-spaced grid endpoints."""
    grid = theta_grid()
    assert grid.size == 32
    assert grid[0] == pytest.approx(0.02)
    assert grid[-1] == 1.0
    assert np.all(np.diff(grid) > 0)


def test_golden_section():
    """Test the minimizer on a parabola and a degenerate interval."""
    x, y = golden_section(lambda t: (t - 0.3) ** 2, 0.0, 1.0, 1e-8)
    assert x == pytest.approx(0.3, abs=1e-6)
    assert y == pytest.approx(0.0, abs=1e-12)
    x, _ = golden_section(lambda t: t, 0.5, 0.5, 1e-3)
    assert x == 0.5


@pytest.mark.parametrize("theta", [0.1, 0.25, 0.5, 0.75, 1.0])
def test_zero_temperature_closed_form(theta):
    """Test v_1(theta) = ((1 - theta)/theta) ln 2 at beta = 0 in d = 1."""
    value = v_of_theta(make_config(beta=0.0), 1, theta, 100)
    assert value.mean == pytest.approx((1.0 - theta) / theta * math.log(2.0), abs=1e-12)
    assert value.stderr <= 1e-12


def test_zero_temperature_level_two():
    """Test v_2 at beta = 0 from the binomial endpoint law."""
    theta = 0.5
    expected = math.log(2 * 0.25 ** theta + 0.5 ** theta) / theta
    assert v_of_theta(make_config(beta=0.0), 2, theta, 100).mean == pytest.approx(expected, abs=1e-12)


def test_zero_temperature_infimum_at_one():
    """Test that the infimum sits at the boundary theta = 1 when v is decreasing."""
    est = p_tree(make_config(beta=0.0), 2, 100)
    assert est.theta_star == 1.0
    assert est.p_tree.mean == pytest.approx(0.0, abs=1e-12)
    assert not est.fallback_used
    assert list(est.frame().columns) == ["m", "theta", "v_mean", "v_stderr"]


@pytest.mark.parametrize("theta", [0.0, -0.5, 1.5])
def test_theta_outside_unit_interval(theta):
    """Test that theta outside (0, 1] raises DomainError."""
    samples = cascade_samples(make_config(), 1, 100)
    with pytest.raises(DomainError):
        samples.v(theta)


def test_normalization_at_theta_one():
    """Test Q[W_m] = 1, so v_m(1) is zero within its error."""
    config = make_config(beta=0.5)
    moment = theta_moment(config, 2, 1.0, 2000)
    assert abs(moment.mean - 1.0) <= 4.5 * moment.stderr
    value = v_of_theta(config, 2, 1.0, 2000)
    assert abs(value.mean) <= 4.5 * value.stderr


def test_cascade_samples_reproducible():
    """Test that cascade states do not depend on jobs and v is deterministic."""
    config = make_config(beta=2.0)
    serial = cascade_samples(config, 3, 130, jobs=1)
    parallel = cascade_samples(config, 3, 130, jobs=2)
    assert np.array_equal(serial.log_w, parallel.log_w)
    assert serial.log_totals().shape == (130,)
    first, second = serial.v(1.0), serial.v(1.0)
    assert first == second
    assert first.stderr > 0


def test_p_tree_bounds_grid():
    """Test that theta* does not exceed the grid minimum of v."""
    samples = cascade_samples(make_config(beta=1.0), 2, 300)
    est = p_tree_from_samples(samples)
    assert 0.02 <= est.theta_star <= 1.0
    assert est.p_tree.mean <= min(v.mean for v in est.v_values) + 1e-12
    assert est.p_tree_over_m.mean == pytest.approx(est.p_tree.mean / 2)


def test_v_mean_matches_v():
    """Test that the point estimate used by the search equals the mean of v."""
    samples = cascade_samples(make_config(beta=1.0), 2, 300)
    for theta in (0.05, 0.3, 1.0):
        assert samples.v_mean(theta) == pytest.approx(samples.v(theta).mean, rel=1e-12)


def test_search_uses_point_estimates(monkeypatch):
    """Test that v with its error estimate runs only on the grid and at theta*."""
    samples = cascade_samples(make_config(beta=1.0), 2, 300)
    calls = []
    original = CascadeSamples.v

    def counting_v(self, theta):
        calls.append(theta)
        return original(self, theta)

    monkeypatch.setattr(CascadeSamples, "v", counting_v)
    est = p_tree_from_samples(samples, grid_size=16)
    assert len(calls) == 17
    assert calls[-1] == est.theta_star


def test_cascade_upper_envelope():
    """Test the envelope formula and its open theta domain."""
    assert cascade_upper_envelope(1, 1, 0.0, 1.0, 0.5) == pytest.approx(2.0 * math.log(2.0) + 1.0)
    with pytest.raises(DomainError):
        cascade_upper_envelope(1, 1, 0.0, 1.0, 1.0)


def test_compare_with_polymer():
    """Test the comparison tables and the finite-size inequality."""
    result = compare_with_polymer(make_config(beta=0.5), [1, 2], 5, 200)
    assert list(result.summary.columns) == ["m", "theta_star", "p_tree_over_m", "stderr",
                                            "polymer_estimate", "polymer_stderr", "gap"]
    assert list(result.summary["m"]) == [1, 2]
    assert len(result.theta_table) == 64
    assert result.passed
    at_one = result.theta_table[result.theta_table["theta"] == 1.0]
    assert at_one["envelope"].isna().all()
    assert math.isfinite(result.summary["gap"].iloc[0])
