import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Iterable, List, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class DomainError(ValueError):
    """Input lies outside the mathematical domain of an operation."""


class PreconditionError(ValueError):
    """A closed form or experiment precondition does not hold."""


class ConfigError(ValueError):
    """Malformed or invalid experiment configuration."""


def require_finite(name: str, value: float) -> float:
    """
    Reject NaN and infinite inputs.

    Args:
        name (str): Parameter name used in the error message.
        value (float): Value to check.

    Returns:
        float: The value as a float.

    Raises:
        DomainError: If the value is not a finite real.
    """
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise DomainError(f"{name} must be a real number, got {value!r}")
    if not math.isfinite(value):
        raise DomainError(f"{name} must be finite, got {value}")
    return value


def require_positive(name: str, value: float, strict: bool = True) -> float:
    value = require_finite(name, value)
    if value < 0 or (strict and value == 0):
        bound = "> 0" if strict else ">= 0"
        raise DomainError(f"{name} must be {bound}, got {value}")
    return value


def require_in_range(name: str, value: float, lo: float, hi: float,
                     lo_open: bool = True, hi_open: bool = False) -> float:
    value = require_finite(name, value)
    below = value <= lo if lo_open else value < lo
    above = value >= hi if hi_open else value > hi
    if below or above:
        left = "(" if lo_open else "["
        right = ")" if hi_open else "]"
        raise DomainError(f"{name} must lie in {left}{lo}, {hi}{right}, got {value}")
    return value


def require_count(name: str, value: int, minimum: int = 1) -> int:
    if isinstance(value, bool) or int(value) != value or value < minimum:
        raise DomainError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


@dataclass(frozen=True)
class McEstimate:
    """Monte-Carlo estimate: mean, standard error and replicate count."""
    mean: float
    stderr: float
    count: int

    @classmethod
    def from_samples(cls, samples: Sequence[float]) -> "McEstimate":
        """
        Summarize a sample by its mean and sample-std / sqrt(count).

        Args:
            samples: Replicate values.

        Returns:
            McEstimate: Summary of the sample.
        """
        values = np.asarray(samples, dtype=float)
        count = values.size
        if count == 0:
            raise DomainError("cannot summarize an empty sample")
        mean = float(values.mean())
        if count == 1:
            return cls(mean, 0.0, 1)
        stderr = float(values.std(ddof=1) / math.sqrt(count))
        return cls(mean, stderr, count)

    @classmethod
    def from_moments(cls, count: int, total: float, total_sq: float) -> "McEstimate":
        # reducer form: (count, sum, sum of squares)
        mean = total / count
        if count == 1:
            return cls(mean, 0.0, 1)
        var = max(total_sq - count * mean * mean, 0.0) / (count - 1)
        return cls(mean, math.sqrt(var / count), count)

    def scaled(self, factor: float) -> "McEstimate":
        return McEstimate(self.mean * factor, self.stderr * abs(factor), self.count)


STATUS_PASS = "pass"
STATUS_FAIL = "fail"
STATUS_INSUFFICIENT = "insufficient_resolution"


@dataclass(frozen=True)
class VerificationRow:
    """One grid point of a bound-versus-simulation check."""
    abscissa: float
    empirical: McEstimate
    bound: float
    slack_sigmas: float
    status: str
    within_tolerance: bool = True

    @property
    def passed(self) -> bool:
        return self.status != STATUS_FAIL


def verification_row(abscissa: float, empirical: McEstimate, bound: float,
                     z: float = 3.0) -> VerificationRow:
    """
    Compare an empirical probability against a theoretical bound.

    The row passes when empirical.mean <= bound + z * stderr. Bounds below the
    Monte-Carlo floor 10/count are reported as insufficient resolution and never fail;
    within_tolerance still records the raw comparison for them.

    Args:
        abscissa (float): Grid value (x or t).
        empirical (McEstimate): Monte-Carlo estimate.
        bound (float): Theoretical upper bound.
        z (float): Standard-error multiplier.

    Returns:
        VerificationRow: The classified row.
    """
    gap = bound - empirical.mean
    if empirical.stderr > 0:
        slack = gap / empirical.stderr
    else:
        slack = math.inf if gap >= 0 else -math.inf
    within = bool(empirical.mean <= bound + z * empirical.stderr)
    if bound < 10.0 / empirical.count:
        status = STATUS_INSUFFICIENT
        if not within:
            logger.warning("bound %.3g at %.4g is below the resolution floor but exceeded by %.1f sigmas",
                           bound, abscissa, -slack)
    elif within:
        status = STATUS_PASS
    else:
        status = STATUS_FAIL
    return VerificationRow(float(abscissa), empirical, float(bound), float(slack), status, within)


def all_passed(rows: Iterable[VerificationRow]) -> bool:
    return all(row.passed for row in rows)


def blocks(count: int, block_size: int) -> List[range]:
    """Split range(count) into consecutive blocks of fixed size."""
    return [range(start, min(start + block_size, count)) for start in range(0, count, block_size)]


def default_jobs() -> int:
    return os.cpu_count() or 1


def parallel_map(fn: Callable[[Any], Any], tasks: Sequence[Any],
                 jobs: Optional[int] = 1) -> List[Any]:
    """
    Map a module-level function over tasks, preserving task order.

    Args:
        fn: Picklable function of one argument.
        tasks: Task arguments.
        jobs (int, optional): Worker count; 1 runs serially.

    Returns:
        list: Results in the order of tasks.
    """
    tasks = list(tasks)
    jobs = default_jobs() if jobs is None else jobs
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(task) for task in tasks]
    workers = min(jobs, len(tasks))
    logger.debug("dispatching %d tasks to %d workers", len(tasks), workers)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def configure_logging(level: str = "WARNING") -> None:
    logging.basicConfig(level=getattr(logging, level.upper(), logging.WARNING), format=LOG_FORMAT)
