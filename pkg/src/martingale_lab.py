"""
Monte-Carlo harness for martingale sums.

Simulates S_n = X_1 + ... + X_n for iid centered increments or the ARCH-style
sequence X_i = eps_i * sigma(S_{i-1}), estimates tail probabilities and Laplace
transforms, and certifies them against the closed-form curves of src.bounds.
"""
import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.stats import binom

from . import bounds
from .laws import Law, StreamKey, StretchedExp, law_from_dict, sample_rows
from .utils import (
    ConfigError,
    DomainError,
    McEstimate,
    PreconditionError,
    VerificationRow,
    blocks,
    parallel_map,
    require_count,
    require_positive,
    verification_row,
)

logger = logging.getLogger(__name__)

BLOCK_SIZE = 2048
SIDES = ("upper", "lower", "two_sided")
CENTERING_TOL = 1e-12
MIN_REPLICATES = 100

CSV_COLUMNS = ["experiment_id", "law", "n", "abscissa", "empirical_mean", "stderr",
               "bound", "slack_sigmas", "pass", "status", "within_tolerance"]


@dataclass(frozen=True)
class ArchProcess:
    """
    Non-iid martingale differences X_i = eps_i * sigma(S_{i-1}).

    sigma(s) = sigma_lo + (sigma_hi - sigma_lo) / (1 + s^2) stays in [sigma_lo, sigma_hi],
    so every conditional exponential moment is dominated by the innovation's moment
    at scale sigma_hi.
    """
    innovation: Law
    sigma_lo: float = 0.5
    sigma_hi: float = 1.0
    tag = "arch"

    def __post_init__(self):
        require_positive("sigma_lo", self.sigma_lo)
        require_positive("sigma_hi", self.sigma_hi)
        if self.sigma_lo > self.sigma_hi:
            raise DomainError(f"sigma_lo must be <= sigma_hi, got {self.sigma_lo} > {self.sigma_hi}")
        if abs(self.innovation.mean) > CENTERING_TOL:
            raise PreconditionError(f"innovation {self.innovation.label()} is not centered")

    @property
    def mean(self) -> float:
        return 0.0

    @property
    def abs_bound(self) -> float:
        return self.innovation.abs_bound * self.sigma_hi

    def mgf_domain(self) -> Tuple[float, float]:
        lo, hi = self.innovation.mgf_domain()
        return lo / self.sigma_hi, hi / self.sigma_hi

    def sigma(self, s: np.ndarray) -> np.ndarray:
        return self.sigma_lo + (self.sigma_hi - self.sigma_lo) / (1.0 + s * s)

    def exp_moment(self, delta: float, q: float = 1.0) -> float:
        return self.innovation.exp_moment(delta * self.sigma_hi ** q, q)

    def label(self) -> str:
        return f"arch({self.innovation.label()},sigma_lo={self.sigma_lo:g},sigma_hi={self.sigma_hi:g})"

    def to_dict(self) -> Dict[str, Any]:
        return {"law": self.tag, "innovation": self.innovation.to_dict(),
                "sigma_lo": self.sigma_lo, "sigma_hi": self.sigma_hi}


IncrementSource = Union[Law, ArchProcess]


def source_from_dict(record: Dict[str, Any]) -> IncrementSource:
    """Build an iid law or an ARCH-style process from its tagged config record."""
    if isinstance(record, dict) and record.get("law") == ArchProcess.tag:
        params = dict(record)
        params.pop("law")
        if "innovation" not in params:
            raise ConfigError("arch record needs an 'innovation' law")
        unknown = sorted(set(params) - {"innovation", "sigma_lo", "sigma_hi"})
        if unknown:
            raise ConfigError(f"unknown parameter(s) {unknown} for law 'arch'")
        innovation = law_from_dict(params.pop("innovation"))
        return ArchProcess(innovation, **params)
    return law_from_dict(record)


@dataclass(frozen=True)
class ExperimentSpec:
    """One Monte-Carlo experiment on S_n."""
    law: IncrementSource
    n: int
    grid: Tuple[float, ...]
    replicates: int
    key: StreamKey
    sides: str = "upper"
    experiment_id: str = "experiment"

    def __post_init__(self):
        require_count("n", self.n)
        require_count("replicates", self.replicates, minimum=MIN_REPLICATES)
        if self.sides not in SIDES:
            raise DomainError(f"sides must be one of {SIDES}, got {self.sides}")
        grid = tuple(float(x) for x in self.grid)
        if not grid:
            raise DomainError("grid must not be empty")
        if any(x <= 0 for x in grid):
            raise DomainError(f"grid values must be positive, got {grid}")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise DomainError(f"grid must be strictly increasing, got {grid}")
        object.__setattr__(self, "grid", grid)


def _require_centered(source: IncrementSource) -> None:
    if abs(source.mean) > CENTERING_TOL:
        raise PreconditionError(f"law {source.label()} has mean {source.mean}, expected 0")


def _simulate_block(task: Tuple[IncrementSource, StreamKey, int, int, int, Tuple[int, ...]]) -> np.ndarray:
    """Partial sums S_m at each checkpoint m for replicates [start, stop)."""
    source, key, start, stop, n, checkpoints = task
    columns = [m - 1 for m in checkpoints]
    if isinstance(source, ArchProcess):
        eps = sample_rows(source.innovation, key, range(start, stop), n)
        sums = np.zeros(stop - start)
        out = np.empty((stop - start, len(columns)))
        wanted = {col: j for j, col in enumerate(columns)}
        for i in range(n):
            sums += eps[:, i] * source.sigma(sums)
            if i in wanted:
                out[:, wanted[i]] = sums
        return out
    increments = sample_rows(source, key, range(start, stop), n)
    return np.cumsum(increments, axis=1)[:, columns]


def simulate_sums(source: IncrementSource, n: int, replicates: int, key: StreamKey,
                  checkpoints: Optional[Sequence[int]] = None, jobs: int = 1) -> np.ndarray:
    """
    Simulate partial sums of replicates independent paths.

    Replicate r draws from key.child(r); blocks of BLOCK_SIZE replicates are the
    parallel tasks, so the output does not depend on jobs.

    Args:
        source: Increment law or ARCH-style process.
        n (int): Path length.
        replicates (int): Number of paths.
        key (StreamKey): Experiment stream key.
        checkpoints (list, optional): Times m <= n at which S_m is recorded; defaults to [n].
        jobs (int): Worker processes.

    Returns:
        np.ndarray: Shape (replicates, len(checkpoints)).
    """
    n = require_count("n", n)
    replicates = require_count("replicates", replicates)
    checkpoints = tuple(int(m) for m in (checkpoints or [n]))
    if any(not 1 <= m <= n for m in checkpoints):
        raise DomainError(f"checkpoints must lie in [1, {n}], got {checkpoints}")
    tasks = [(source, key, block.start, block.stop, n, checkpoints)
             for block in blocks(replicates, BLOCK_SIZE)]
    logger.debug("simulating %d paths of length %d in %d blocks", replicates, n, len(tasks))
    return np.concatenate(parallel_map(_simulate_block, tasks, jobs), axis=0)


def _side_statistic(sums: np.ndarray, n: int, side: str) -> np.ndarray:
    scaled = sums / n
    if side == "upper":
        return scaled
    if side == "lower":
        return -scaled
    return np.abs(scaled)


def estimate_tail(spec: ExperimentSpec, jobs: int = 1) -> List[McEstimate]:
    """
    Monte-Carlo frequency of the event {S_n/n > x} (or its lower / two-sided version) per grid x.

    All grid points share the same paths.

    Args:
        spec (ExperimentSpec): Experiment definition.
        jobs (int): Worker processes.

    Returns:
        list: One McEstimate per grid value.

    Raises:
        PreconditionError: If the increments are not centered.
    """
    _require_centered(spec.law)
    sums = simulate_sums(spec.law, spec.n, spec.replicates, spec.key, jobs=jobs)[:, 0]
    stat = _side_statistic(sums, spec.n, spec.sides)
    return [McEstimate.from_samples(stat > x) for x in spec.grid]


@dataclass(frozen=True)
class LaplaceEstimate:
    t: float
    estimate: McEstimate
    exact: Optional[float]


def estimate_laplace(spec: ExperimentSpec, t_grid: Sequence[float], jobs: int = 1) -> List[LaplaceEstimate]:
    """
    Monte-Carlo estimate of E[e^{t S_n}] per t, with the exact value exp(n lambda(t)) for iid increments.

    Raises:
        DomainError: If some t lies outside the increments' mgf domain.
    """
    _require_centered(spec.law)
    lo, hi = spec.law.mgf_domain()
    for t in t_grid:
        if not lo < t < hi:
            raise DomainError(f"t={t} outside the mgf domain ({lo}, {hi}) of {spec.law.label()}")
    sums = simulate_sums(spec.law, spec.n, spec.replicates, spec.key, jobs=jobs)[:, 0]
    results = []
    for t in t_grid:
        exact = None
        if isinstance(spec.law, Law):
            exact = math.exp(spec.n * spec.law.log_mgf(t))
        if t == 0:
            estimate = McEstimate(1.0, 0.0, spec.replicates)
        else:
            estimate = McEstimate.from_samples(np.exp(t * sums))
        results.append(LaplaceEstimate(float(t), estimate, exact))
    return results


def hypothesis_constant(source: IncrementSource, delta: float, q: float = 1.0) -> float:
    """
    Smallest admissible K for the hypothesis E[e^{delta |X|^q}] <= K.

    Raises:
        PreconditionError: If the moment diverges.
    """
    k = source.exp_moment(delta, q)
    if not math.isfinite(k):
        raise PreconditionError(f"E exp({delta}|X|^{q}) diverges for {source.label()}")
    return k


def verify_curve(spec: ExperimentSpec, curve: bounds.TailBoundCurve, k_used: float,
                 delta: float = 1.0, q: float = 1.0, z: float = 3.0,
                 estimates: Optional[List[McEstimate]] = None, jobs: int = 1) -> List[VerificationRow]:
    """
    Certify a tail curve against simulated sums, one row per grid point.

    Two-sided experiments are compared with twice the one-sided bound, capped at 1.

    Args:
        spec (ExperimentSpec): Experiment definition.
        curve (TailBoundCurve): Bound to certify.
        k_used (float): Constant K the curve was built with.
        delta (float): Moment rate of the curve's hypothesis.
        q (float): Moment power of the curve's hypothesis.
        z (float): Standard-error multiplier.
        estimates (list, optional): Precomputed estimate_tail output.
        jobs (int): Worker processes.

    Returns:
        list: VerificationRow per grid value.

    Raises:
        PreconditionError: If k_used is below the increments' true moment.
    """
    true_k = spec.law.exp_moment(delta, q)
    if k_used < true_k * (1.0 - 1e-12):
        raise PreconditionError(
            f"k_used={k_used} below E exp({delta}|X|^{q})={true_k} for {spec.law.label()}")
    if estimates is None:
        estimates = estimate_tail(spec, jobs=jobs)
    factor = 2.0 if spec.sides == "two_sided" else 1.0
    rows = []
    for x, estimate in zip(spec.grid, estimates):
        bound = min(1.0, factor * curve.bound(spec.n, x))
        rows.append(verification_row(x, estimate, bound, z))
    failing = [row.abscissa for row in rows if not row.passed]
    if failing:
        logger.warning("%s: curve %s fails at x=%s", spec.experiment_id, curve.name, failing)
    return rows


@dataclass(frozen=True)
class TheoremCurve:
    curve: bounds.TailBoundCurve
    k_used: float
    delta: float
    q: float


THEOREMS = ("bernstein", "bernstein_piecewise", "epsilon", "petrov", "hoeffding",
            "hoeffding_type", "q_regime")


def theorem_curve(name: str, source: IncrementSource, params: Optional[Dict[str, float]] = None) -> TheoremCurve:
    """
    Build the curve of a named theorem with K computed from the increments' law.

    Args:
        name (str): One of THEOREMS.
        source: Increment law.
        params (dict, optional): 'delta' (bernstein family), 'eps' (epsilon),
            'r' (hoeffding_type, q_regime), 'q' and 'tau1' (q_regime).

    Returns:
        TheoremCurve: Curve plus the hypothesis (K, delta, q) it relies on.
    """
    params = dict(params or {})
    if name in ("bernstein", "bernstein_piecewise", "epsilon", "petrov"):
        delta = params.get("delta", 1.0)
        k = hypothesis_constant(source, delta, 1.0)
        if name == "bernstein":
            return TheoremCurve(bounds.bernstein_curve(k, scale=delta), k, delta, 1.0)
        if delta != 1.0:
            raise DomainError(f"curve '{name}' is stated for delta = 1")
        if name == "bernstein_piecewise":
            curve = bounds.bernstein_piecewise_curve(k)
        elif name == "epsilon":
            curve = bounds.epsilon_curve(k, params.get("eps", 0.5))
        else:
            curve = bounds.petrov_curve(2.0 * k, 0.5)
        return TheoremCurve(curve, k, 1.0, 1.0)
    if name == "hoeffding":
        a = source.abs_bound
        if not math.isfinite(a):
            raise PreconditionError(f"hoeffding needs bounded increments, {source.label()} is unbounded")
        return TheoremCurve(bounds.hoeffding_curve(a), math.exp(a), 1.0, 1.0)
    if name == "hoeffding_type":
        r = params.get("r", 0.25)
        k = hypothesis_constant(source, r, 2.0)
        return TheoremCurve(bounds.hoeffding_type_curve(r, k), k, r, 2.0)
    if name == "q_regime":
        q = params.get("q", source.q if isinstance(source, StretchedExp) else 2.0)
        if "r" in params:
            r = params["r"]
        elif isinstance(source, StretchedExp):
            r = source.r / 2.0
        else:
            raise DomainError("q_regime needs an explicit 'r' for this law")
        k = hypothesis_constant(source, r, q)
        tau1 = params.get("tau1", 2.0 * bounds.dual_tau(q, r))
        consts = bounds.q_regime_constants(q, r, k, tau1)
        logger.info("q_regime constants for %s: t1=%.6g x1=%.6g r1=%.6g b=%.6g",
                    source.label(), consts.t1, consts.x1, consts.r1, consts.b)
        return TheoremCurve(bounds.q_regime_curve(consts), k, r, q)
    raise DomainError(f"unknown theorem '{name}', expected one of {THEOREMS}")


def rows_to_frame(experiment_id: str, law_label: str, n: int, rows: Sequence[VerificationRow]) -> pd.DataFrame:
    """Verification rows in the report CSV schema."""
    records = [{
        "experiment_id": experiment_id,
        "law": law_label,
        "n": n,
        "abscissa": row.abscissa,
        "empirical_mean": row.empirical.mean,
        "stderr": row.empirical.stderr,
        "bound": row.bound,
        "slack_sigmas": row.slack_sigmas,
        "pass": row.passed,
        "status": row.status,
        "within_tolerance": row.within_tolerance,
    } for row in rows]
    return pd.DataFrame(records, columns=CSV_COLUMNS)


def rademacher_tail_exact(n: int, x: float, side: str = "upper") -> float:
    """
    Exact P[S_n/n > x] for Rademacher increments by binomial enumeration.

    S_n = 2B - n with B ~ Binomial(n, 1/2).
    """
    n = require_count("n", n)
    if side not in SIDES:
        raise DomainError(f"side must be one of {SIDES}, got {side}")
    if x < 0:
        raise DomainError(f"x must be >= 0, got {x}")
    threshold = math.floor(n * (1.0 + x) / 2.0 + 1e-9)
    one_side = float(binom.sf(threshold, n, 0.5))
    return 2.0 * one_side if side == "two_sided" else one_side


def _trace_checkpoints(n_list: Sequence[int]) -> List[int]:
    kept = sorted({int(n) for n in n_list if n >= 3})
    dropped = sorted({int(n) for n in n_list if n < 3})
    if dropped:
        logger.debug("dropping n=%s from the trace (needs ln n > 1)", dropped)
    if not kept:
        raise DomainError(f"n_list needs at least one n >= 3, got {list(n_list)}")
    return kept


def as_rate_trace(source: IncrementSource, n_list: Sequence[int], key: StreamKey, replicates: int,
                  k: Optional[float] = None, jobs: int = 1) -> pd.DataFrame:
    """
    Distribution summary of |S_n| / sqrt(n ln n) along n_list (n >= 3 only).

    Paths are simulated once to max(n_list) and read at every checkpoint.

    Returns:
        pd.DataFrame: Columns n, mean, stderr, count, quantile_99, ceiling (2 sqrt(K) when k is given).
    """
    _require_centered(source)
    checkpoints = _trace_checkpoints(n_list)
    sums = simulate_sums(source, checkpoints[-1], replicates, key, checkpoints, jobs)
    ceiling = 2.0 * math.sqrt(k) if k is not None else math.nan
    records = []
    for j, n in enumerate(checkpoints):
        stat = np.abs(sums[:, j]) / math.sqrt(n * math.log(n))
        est = McEstimate.from_samples(stat)
        records.append({"n": n, "mean": est.mean, "stderr": est.stderr, "count": est.count,
                        "quantile_99": float(np.quantile(stat, 0.99)), "ceiling": ceiling})
    return pd.DataFrame(records)


def lp_rate_trace(source: IncrementSource, p: float, n_list: Sequence[int], key: StreamKey,
                  replicates: int, k: Optional[float] = None, jobs: int = 1) -> pd.DataFrame:
    """
    Monte-Carlo n^{p/2} E[(|S_n|/n)^p] along n_list, with the martingale L^p ceiling when k is given.

    Returns:
        pd.DataFrame: Columns n, mean, stderr, count, ceiling.
    """
    _require_centered(source)
    p = require_positive("p", p)
    checkpoints = sorted({require_count("n", n) for n in n_list})
    sums = simulate_sums(source, checkpoints[-1], replicates, key, checkpoints, jobs)
    ceiling = bounds.asymptotic_limits(p, k, "martingale").lp_limit if k is not None else math.nan
    records = []
    for j, n in enumerate(checkpoints):
        est = McEstimate.from_samples(np.abs(sums[:, j]) ** p / n ** (p / 2.0))
        records.append({"n": n, "mean": est.mean, "stderr": est.stderr, "count": est.count,
                        "ceiling": ceiling})
    return pd.DataFrame(records)
