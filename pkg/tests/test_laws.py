"""
Tests for the laws module.
Tests closed-form moments, config records and reproducible sampling.
"""

import math

import numpy as np
import pytest
from scipy.stats import norm

from src.laws import (
    Bernoulli,
    Gaussian,
    Laplace,
    Rademacher,
    StreamKey,
    StretchedExp,
    Uniform,
    centered,
    derive_stream_index,
    exp_moment,
    law_from_dict,
    log_mgf,
    sample,
    sample_rows,
)
from src.utils import ConfigError, DomainError


@pytest.fixture
def key():
    """Stream key shared by the sampling tests."""
    return StreamKey(20240611, 5)


def test_log_mgf_closed_forms():
    """Test lambda(t) on the laws with elementary expressions."""
    assert log_mgf(Gaussian(0.0, 1.0), 0.5) == pytest.approx(0.125)
    assert log_mgf(Gaussian(1.0, 2.0), 0.5) == pytest.approx(0.5 + 0.5)
    assert log_mgf(Rademacher(), 1.0) == pytest.approx(math.log(math.cosh(1.0)))
    assert log_mgf(Rademacher(), 40.0) == pytest.approx(40.0 - math.log(2.0))
    assert log_mgf(Laplace(1.0), 0.5) == pytest.approx(-math.log(0.75))
    assert log_mgf(Uniform(-1.0, 1.0), 1.0) == pytest.approx(math.log(math.sinh(1.0)))
    assert log_mgf(Bernoulli(0.3, 0.0, 1.0), 2.0) == pytest.approx(math.log(0.3 * math.e ** 2 + 0.7))
    assert log_mgf(StretchedExp(1.0, 1.0), 0.5) == pytest.approx(-math.log(0.75))


def test_log_mgf_at_zero_and_small_t():
    """Test lambda(0) = 0 and the series branch of the uniform law."""
    for law in (Gaussian(), Rademacher(), Laplace(), Uniform(), StretchedExp()):
        assert log_mgf(law, 0.0) == 0.0
    t = 1e-6
    assert log_mgf(Uniform(-1.0, 1.0), t) == pytest.approx(t * t / 6.0, rel=1e-6)


def test_log_mgf_stretched_quadrature():
    """Test the quadrature lambda of the q=2 stretched law against its power series."""
    # E cosh(t sqrt(E)) = sum_k t^(2k) k! / (2k)!
    t = 1.0
    series = sum(t ** (2 * k) * math.factorial(k) / math.factorial(2 * k) for k in range(30))
    assert log_mgf(StretchedExp(2.0, 1.0), t) == pytest.approx(math.log(series), rel=1e-8)


def test_log_mgf_outside_domain():
    """Test that the Laplace law rejects t beyond 1/scale."""
    with pytest.raises(DomainError):
        log_mgf(Laplace(1.0), 1.0)
    with pytest.raises(DomainError):
        log_mgf(Gaussian(), math.nan)


def test_exp_moment_closed_forms():
    """Test E exp(delta |X|^q) on closed forms and divergence."""
    assert exp_moment(Rademacher(), 1.0) == pytest.approx(math.e)
    assert exp_moment(Gaussian(0.0, 1.0), 0.25, 2.0) == pytest.approx(math.sqrt(2.0))
    assert exp_moment(Gaussian(0.0, 1.0), 0.5, 2.0) == math.inf
    assert exp_moment(Gaussian(0.0, 1.0), 0.5) == pytest.approx(2.0 * math.exp(0.125) * norm.cdf(0.5))
    assert exp_moment(Laplace(1.0), 0.5) == pytest.approx(2.0)
    assert exp_moment(Laplace(1.0), 0.5, 2.0) == math.inf
    assert exp_moment(Uniform(-1.0, 1.0), 1.0) == pytest.approx(math.e - 1.0)
    assert exp_moment(Bernoulli(0.5, -1.0, 1.0), 1.0, 2.0) == pytest.approx(math.e)
    assert exp_moment(StretchedExp(2.0, 1.0), 0.5, 2.0) == pytest.approx(2.0)
    assert exp_moment(StretchedExp(2.0, 1.0), 1.0, 2.0) == math.inf
    assert exp_moment(StretchedExp(2.0, 1.0), 0.5, 3.0) == math.inf


def test_exp_moment_stretched_lower_power():
    """Test E exp(delta |X|) for the q=2 stretched law against its series."""
    delta = 0.7
    series = sum(delta ** k * math.gamma(1.0 + k / 2.0) / math.factorial(k) for k in range(60))
    assert exp_moment(StretchedExp(2.0, 1.0), delta, 1.0) == pytest.approx(series, rel=1e-8)


def test_centered():
    """Test that centering subtracts the mean."""
    shifted = centered(Bernoulli(0.3, 0.0, 1.0))
    assert shifted.lo == pytest.approx(-0.3)
    assert shifted.hi == pytest.approx(0.7)
    assert shifted.mean == pytest.approx(0.0)
    assert centered(Gaussian(3.0, 1.0)) == Gaussian(0.0, 1.0)
    assert centered(Uniform(0.0, 2.0)) == Uniform(-1.0, 1.0)
    assert centered(Rademacher()) == Rademacher()


def test_moments_and_bounds():
    """Test the mean, variance and almost-sure bounds."""
    assert StretchedExp(2.0, 1.0).variance == pytest.approx(1.0)
    assert Laplace(2.0).variance == pytest.approx(8.0)
    assert Bernoulli(0.3, 0.0, 1.0).variance == pytest.approx(0.21)
    assert Rademacher().abs_bound == 1.0
    assert Gaussian().abs_bound == math.inf


@pytest.mark.parametrize("kwargs", [{"p": 0.0}, {"p": 1.0}, {"lo": 1.0, "hi": 1.0}])
def test_bernoulli_rejects_bad_parameters(kwargs):
    """Test that degenerate Bernoulli laws raise DomainError."""
    with pytest.raises(DomainError):
        Bernoulli(**kwargs)


def test_law_from_dict():
    """Test building laws from tagged config records."""
    assert law_from_dict({"law": "gaussian", "mean": 1.0, "sd": 2.0}) == Gaussian(1.0, 2.0)
    assert law_from_dict({"law": "rademacher"}) == Rademacher()
    law = StretchedExp(1.5, 0.5)
    assert law_from_dict(law.to_dict()) == law
    assert law_from_dict(Gaussian(1.0, 2.0).to_dict()) == Gaussian(1.0, 2.0)


@pytest.mark.parametrize("record", [
    {"sd": 1.0},
    {"law": "cauchy"},
    {"law": "gaussian", "variance": 1.0},
    "gaussian",
])
def test_law_from_dict_rejects_bad_records(record):
    """Test that malformed records raise ConfigError."""
    with pytest.raises(ConfigError):
        law_from_dict(record)


def test_labels():
    """Test the human-readable law labels."""
    assert Gaussian().label() == "gaussian(mean=0,sd=1)"
    assert Rademacher().label() == "rademacher"
    assert Laplace(2.0).label() == "laplace(scale=2)"


def test_stream_key_reproducibility(key):
    """Test that equal keys give identical draws and distinct keys do not."""
    law = Gaussian()
    first = sample(law, key, 500)
    assert np.array_equal(first, sample(law, StreamKey(20240611, 5), 500))
    assert not np.array_equal(first, sample(law, key.child(1), 500))
    assert not np.array_equal(first, sample(law, StreamKey(20240612, 5), 500))
    assert sample(law, key, 0).shape == (0,)


@pytest.mark.parametrize("args", [(-1,), (2 ** 64,), (True,), (1.5,), (1, -3)])
def test_stream_key_validation(args):
    """Test that out-of-range or non-integer keys raise DomainError."""
    with pytest.raises(DomainError):
        StreamKey(*args)


def test_derive_stream_index():
    """Test that label hashing is stable and fits in 63 bits."""
    index = derive_stream_index("energy", 10, 3)
    assert index == derive_stream_index("energy", 10, 3)
    assert index != derive_stream_index("energy", 10, 4)
    assert 0 <= index < 2 ** 63


def test_sample_rows_is_block_independent(key):
    """Test that each row depends only on its replicate number."""
    law = Rademacher()
    full = sample_rows(law, key, range(6), 8)
    part = sample_rows(law, key, [3, 4], 8)
    assert np.array_equal(full[3:5], part)
    assert np.array_equal(full[2], sample(law, key.child(2), 8))
    assert set(np.unique(full)) <= {-1.0, 1.0}


def test_sample_statistics(key):
    """Test sample moments and the stretched-exponential tail."""
    draws = sample(Gaussian(3.0, 1.0), key, 20_000)
    assert abs(draws.mean() - 3.0) < 0.05
    draws = sample(StretchedExp(2.0, 1.0), key, 200_000)
    assert np.mean(np.abs(draws) > 1.0) == pytest.approx(math.exp(-1.0), abs=0.006)
    draws = sample(Bernoulli(0.3, 0.0, 1.0), key, 20_000)
    assert abs(draws.mean() - 0.3) < 0.02
