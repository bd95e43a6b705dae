"""
One-dimensional probability laws for martingale increments and polymer environments.

Each law samples from a numpy Generator, reports its mean, and evaluates its
log-moment generating function lambda(t) = ln E[e^{tX}] and the exponential
moments E[e^{delta |X|^q}] the bounds are stated in terms of.
"""
import hashlib
import logging
import math
from dataclasses import asdict, dataclass, fields
from typing import Any, ClassVar, Dict, Iterable, Tuple

import numpy as np
from scipy.integrate import quad
from scipy.special import gamma, ndtr

from .utils import ConfigError, DomainError, require_count, require_finite, require_positive

logger = logging.getLogger(__name__)

QUAD_TOL = 1e-10
SERIES_CUTOFF = 1e-4
MAX_SEED = 2 ** 64
INDEX_MASK = 2 ** 63 - 1


def derive_stream_index(*labels: Any) -> int:
    """
    Hash a sequence of labels into a 63-bit stream index.

    Args:
        *labels: Experiment identifiers, replicate numbers, slice numbers...

    Returns:
        int: A stable non-negative index.
    """
    digest = hashlib.blake2b(digest_size=8)
    for label in labels:
        digest.update(repr(label).encode("utf-8"))
        digest.update(b"\x1f")
    return int.from_bytes(digest.digest(), "little") & INDEX_MASK


@dataclass(frozen=True)
class StreamKey:
    """Address of one reproducible pseudo-random stream."""
    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        for name in ("master_seed", "stream_index"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise DomainError(f"{name} must be an integer, got {value!r}")
            if not 0 <= value < MAX_SEED:
                raise DomainError(f"{name} must lie in [0, 2^64), got {value}")

    def child(self, *labels: Any) -> "StreamKey":
        return StreamKey(self.master_seed, derive_stream_index(self.stream_index, *labels))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(int(self.master_seed), spawn_key=(int(self.stream_index),))
        return np.random.Generator(np.random.Philox(seq))


def _log_cosh(t: float) -> float:
    a = abs(t)
    return a + math.log1p(math.exp(-2.0 * a)) - math.log(2.0)


def _uniform_log_mgf_unit(w: float) -> float:
    # ln((e^w - 1) / w)
    if abs(w) < SERIES_CUTOFF:
        w2 = w * w
        return w / 2.0 + w2 / 24.0 - w2 ** 2 / 2880.0 + w2 ** 3 / 181440.0 - w2 ** 4 / 9676800.0
    if w > 0:
        return w + math.log(-math.expm1(-w)) - math.log(w)
    return math.log(-math.expm1(w)) - math.log(-w)


def _quad(fn, lo: float, hi: float) -> float:
    value, _ = quad(fn, lo, hi, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)
    return value


def _half_line_moment(scale: float, power: float) -> float:
    """E e^{scale * E^power} for E a unit exponential, power < 1."""
    peak = (scale * power) ** (1.0 / (1.0 - power)) if scale > 0 else 0.0
    shift = scale * peak ** power - peak

    def integrand(u: float) -> float:
        return math.exp(scale * u ** power - u - shift)

    total = _quad(integrand, 0.0, peak) if peak > 0 else 0.0
    total += _quad(integrand, peak, math.inf)
    return math.exp(shift) * total


class Law:
    """Base class of the shipped laws; subclasses are frozen dataclasses."""
    tag: ClassVar[str] = ""

    @property
    def mean(self) -> float:
        raise NotImplementedError

    @property
    def variance(self) -> float:
        raise NotImplementedError

    @property
    def abs_bound(self) -> float:
        """Essential supremum of |X|; inf for unbounded laws."""
        return math.inf

    def mgf_domain(self) -> Tuple[float, float]:
        """Open interval on which lambda is finite."""
        return -math.inf, math.inf

    def draw(self, rng: np.random.Generator, count: int) -> np.ndarray:
        raise NotImplementedError

    def _log_mgf(self, t: float) -> float:
        raise NotImplementedError

    def log_mgf(self, t: float) -> float:
        t = require_finite("t", t)
        lo, hi = self.mgf_domain()
        if not lo < t < hi:
            raise DomainError(f"t={t} outside the mgf domain ({lo}, {hi}) of {self.label()}")
        if t == 0:
            return 0.0
        return self._log_mgf(t)

    def exp_moment(self, delta: float, q: float = 1.0) -> float:
        raise NotImplementedError

    def centered(self) -> "Law":
        raise NotImplementedError

    def to_dict(self) -> Dict[str, Any]:
        record = {"law": self.tag}
        record.update(asdict(self))
        return record

    def label(self) -> str:
        params = ",".join(f"{f.name}={getattr(self, f.name):g}" for f in fields(self))
        return f"{self.tag}({params})" if params else self.tag


@dataclass(frozen=True)
class Gaussian(Law):
    tag: ClassVar[str] = "gaussian"
    mean_: float = 0.0
    sd: float = 1.0

    def __post_init__(self):
        require_finite("mean", self.mean_)
        require_positive("sd", self.sd)

    @property
    def mean(self) -> float:
        return self.mean_

    @property
    def variance(self) -> float:
        return self.sd ** 2

    def draw(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.normal(self.mean_, self.sd, count)

    def _log_mgf(self, t: float) -> float:
        return self.mean_ * t + 0.5 * self.sd ** 2 * t * t

    def exp_moment(self, delta: float, q: float = 1.0) -> float:
        """
        E[e^{delta |X|^q}] in closed form for q in {1, 2}, by quadrature for 1 < q < 2.

        Args:
            delta (float): Moment rate > 0.
            q (float): Power >= 1.

        Returns:
            float: The moment, or inf when it diverges.
        """
        delta = require_positive("delta", delta)
        q = _require_power(q)
        mu, sd = self.mean_, self.sd
        if q == 1:
            spread = 0.5 * delta * delta * sd * sd
            plus = math.exp(delta * mu + spread) * ndtr(mu / sd + delta * sd)
            minus = math.exp(-delta * mu + spread) * ndtr(-mu / sd + delta * sd)
            return float(plus + minus)
        if q == 2:
            gap = 1.0 - 2.0 * delta * sd * sd
            if gap <= 0:
                return math.inf
            return math.exp(delta * mu * mu / gap) / math.sqrt(gap)
        if q > 2:
            return math.inf

        def integrand(x: float) -> float:
            z = (x - mu) / sd
            return math.exp(delta * abs(x) ** q - 0.5 * z * z) / (sd * math.sqrt(2.0 * math.pi))

        return _quad(integrand, -math.inf, 0.0) + _quad(integrand, 0.0, math.inf)

    def centered(self) -> "Gaussian":
        return Gaussian(0.0, self.sd)

    def to_dict(self) -> Dict[str, Any]:
        return {"law": self.tag, "mean": self.mean_, "sd": self.sd}

    def label(self) -> str:
        return f"gaussian(mean={self.mean_:g},sd={self.sd:g})"


@dataclass(frozen=True)
class Rademacher(Law):
    tag: ClassVar[str] = "rademacher"

    @property
    def mean(self) -> float:
        return 0.0

    @property
    def variance(self) -> float:
        return 1.0

    @property
    def abs_bound(self) -> float:
        return 1.0

    def draw(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return 2.0 * rng.integers(0, 2, count) - 1.0

    def _log_mgf(self, t: float) -> float:
        return _log_cosh(t)

    def exp_moment(self, delta: float, q: float = 1.0) -> float:
        delta = require_positive("delta", delta)
        _require_power(q)
        return math.exp(delta)

    def centered(self) -> "Rademacher":
        return self


@dataclass(frozen=True)
class Bernoulli(Law):
    """Two-point law: hi with probability p, lo otherwise."""
    tag: ClassVar[str] = "bernoulli"
    p: float = 0.5
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        p = require_finite("p", self.p)
        if not 0 < p < 1:
            raise DomainError(f"p must lie in (0, 1), got {p}")
        if not require_finite("lo", self.lo) < require_finite("hi", self.hi):
            raise DomainError(f"lo must be < hi, got lo={self.lo}, hi={self.hi}")

    @property
    def mean(self) -> float:
        return self.p * self.hi + (1.0 - self.p) * self.lo

    @property
    def variance(self) -> float:
        return self.p * (1.0 - self.p) * (self.hi - self.lo) ** 2

    @property
    def abs_bound(self) -> float:
        return max(abs(self.lo), abs(self.hi))

    def draw(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return np.where(rng.random(count) < self.p, self.hi, self.lo)

    def _log_mgf(self, t: float) -> float:
        return float(np.logaddexp(math.log(self.p) + t * self.hi, math.log1p(-self.p) + t * self.lo))

    def exp_moment(self, delta: float, q: float = 1.0) -> float:
        delta = require_positive("delta", delta)
        q = _require_power(q)
        return (self.p * math.exp(delta * abs(self.hi) ** q)
                + (1.0 - self.p) * math.exp(delta * abs(self.lo) ** q))

    def centered(self) -> "Bernoulli":
        m = self.mean
        return Bernoulli(self.p, self.lo - m, self.hi - m)


@dataclass(frozen=True)
class Uniform(Law):
    tag: ClassVar[str] = "uniform"
    lo: float = -1.0
    hi: float = 1.0

    def __post_init__(self):
        if not require_finite("lo", self.lo) < require_finite("hi", self.hi):
            raise DomainError(f"lo must be < hi, got lo={self.lo}, hi={self.hi}")

    @property
    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def variance(self) -> float:
        return (self.hi - self.lo) ** 2 / 12.0

    @property
    def abs_bound(self) -> float:
        return max(abs(self.lo), abs(self.hi))

    def draw(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, count)

    def _log_mgf(self, t: float) -> float:
        return self.lo * t + _uniform_log_mgf_unit(t * (self.hi - self.lo))

    def exp_moment(self, delta: float, q: float = 1.0) -> float:
        delta = require_positive("delta", delta)
        q = _require_power(q)
        width = self.hi - self.lo

        def integrand(x: float) -> float:
            return math.exp(delta * abs(x) ** q) / width

        if self.lo < 0 < self.hi:
            return _quad(integrand, self.lo, 0.0) + _quad(integrand, 0.0, self.hi)
        return _quad(integrand, self.lo, self.hi)

    def centered(self) -> "Uniform":
        m = self.mean
        return Uniform(self.lo - m, self.hi - m)


@dataclass(frozen=True)
class Laplace(Law):
    """Centered Laplace law with density exp(-|x|/scale) / (2 scale)."""
    tag: ClassVar[str] = "laplace"
    scale: float = 1.0

    def __post_init__(self):
        require_positive("scale", self.scale)

    @property
    def mean(self) -> float:
        return 0.0

    @property
    def variance(self) -> float:
        return 2.0 * self.scale ** 2

    def mgf_domain(self) -> Tuple[float, float]:
        return -1.0 / self.scale, 1.0 / self.scale

    def draw(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.laplace(0.0, self.scale, count)

    def _log_mgf(self, t: float) -> float:
        return -math.log1p(-(self.scale * t) ** 2)

    def exp_moment(self, delta: float, q: float = 1.0) -> float:
        delta = require_positive("delta", delta)
        q = _require_power(q)
        if q > 1 or delta * self.scale >= 1:
            return math.inf
        return 1.0 / (1.0 - delta * self.scale)

    def centered(self) -> "Laplace":
        return self


@dataclass(frozen=True)
class StretchedExp(Law):
    """Symmetric law with P[|X| > x] = exp(-r x^q)."""
    tag: ClassVar[str] = "stretched_exp"
    q: float = 2.0
    r: float = 1.0

    def __post_init__(self):
        if require_finite("q", self.q) < 1:
            raise DomainError(f"q must be >= 1, got {self.q}")
        require_positive("r", self.r)

    @property
    def mean(self) -> float:
        return 0.0

    @property
    def variance(self) -> float:
        return self.r ** (-2.0 / self.q) * float(gamma(1.0 + 2.0 / self.q))

    def mgf_domain(self) -> Tuple[float, float]:
        if self.q == 1:
            return -self.r, self.r
        return -math.inf, math.inf

    def draw(self, rng: np.random.Generator, count: int) -> np.ndarray:
        magnitude = (rng.standard_exponential(count) / self.r) ** (1.0 / self.q)
        signs = 2.0 * rng.integers(0, 2, count) - 1.0
        return signs * magnitude

    def _log_mgf(self, t: float) -> float:
        if self.q == 1:
            return -math.log1p(-(t / self.r) ** 2)
        # u = r x^q turns the density into e^{-u}; E e^{tX} = E cosh(t (u/r)^{1/q})
        a = abs(t) * self.r ** (-1.0 / self.q)
        power = 1.0 / self.q
        peak = (a * power) ** (1.0 / (1.0 - power))
        shift = a * peak ** power - peak

        def integrand(u: float) -> float:
            s = a * u ** power
            return 0.5 * (math.exp(s - u - shift) + math.exp(-s - u - shift))

        total = _quad(integrand, 0.0, peak) + _quad(integrand, peak, math.inf)
        return shift + math.log(total)

    def exp_moment(self, delta: float, q: float = 1.0) -> float:
        """E[e^{delta |X|^q}]; |X|^q0 r is a unit exponential."""
        delta = require_positive("delta", delta)
        q = _require_power(q)
        if q > self.q:
            return math.inf
        if q == self.q:
            return math.inf if delta >= self.r else self.r / (self.r - delta)
        return _half_line_moment(delta * self.r ** (-q / self.q), q / self.q)

    def centered(self) -> "StretchedExp":
        return self


def _require_power(q: float) -> float:
    q = require_finite("q", q)
    if q < 1:
        raise DomainError(f"q must be >= 1, got {q}")
    return q


LAW_TYPES = {cls.tag: cls for cls in (Gaussian, Rademacher, Bernoulli, Uniform, Laplace, StretchedExp)}


def law_from_dict(record: Dict[str, Any]) -> Law:
    """
    Build a law from its tagged config record, e.g. {"law": "gaussian", "mean": 0, "sd": 1}.

    Args:
        record (dict): Tagged record.

    Returns:
        Law: The law.

    Raises:
        ConfigError: On a missing or unknown tag or unknown parameter.
        DomainError: On invalid parameter values.
    """
    if not isinstance(record, dict) or "law" not in record:
        raise ConfigError(f"law record must be an object with a 'law' tag, got {record!r}")
    params = dict(record)
    tag = params.pop("law")
    if tag not in LAW_TYPES:
        raise ConfigError(f"unknown law '{tag}', expected one of {sorted(LAW_TYPES)}")
    cls = LAW_TYPES[tag]
    if cls is Gaussian and "mean" in params:
        params["mean_"] = params.pop("mean")
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(params) - allowed)
    if unknown:
        raise ConfigError(f"unknown parameter(s) {unknown} for law '{tag}'")
    return cls(**params)


def sample(law: Law, key: StreamKey, count: int) -> np.ndarray:
    """
    Draw count values of law from the stream addressed by key.

    Args:
        law (Law): Law to sample.
        key (StreamKey): Stream address; equal keys give identical output.
        count (int): Number of draws, >= 0.

    Returns:
        np.ndarray: The draws.
    """
    count = require_count("count", count, minimum=0)
    return law.draw(key.generator(), count)


def sample_rows(law: Law, key: StreamKey, replicates: Iterable[int], length: int) -> np.ndarray:
    """One row of length draws per replicate, row r taken from key.child(r)."""
    replicates = list(replicates)
    out = np.empty((len(replicates), length))
    for row, replicate in enumerate(replicates):
        out[row] = law.draw(key.child(replicate).generator(), length)
    return out


def log_mgf(law: Law, t: float) -> float:
    return law.log_mgf(t)


def centered(law: Law) -> Law:
    return law.centered()


def exp_moment(law: Law, delta: float, q: float = 1.0) -> float:
    return law.exp_moment(delta, q)
