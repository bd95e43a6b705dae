"""
Directed polymer in random environment on Z^d.

Partition functions are computed exactly per sampled environment by a log-domain
transfer recursion over the reachable cone L_k, then aggregated into free-energy
statistics and checked against the concentration and rate bounds of src.bounds.
"""
import functools
import itertools
import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from . import bounds
from .laws import Law, StreamKey
from .martingale_lab import rows_to_frame
from .utils import (
    DomainError,
    McEstimate,
    VerificationRow,
    blocks,
    parallel_map,
    require_count,
    require_positive,
    verification_row,
)

logger = logging.getLogger(__name__)

BLOCK_SIZE = 64
DENSE_MAX_DIM = 2

Site = Tuple[int, ...]
LogTable = Union[np.ndarray, Dict[Site, float]]


@dataclass(frozen=True)
class PolymerConfig:
    d: int
    n: int
    beta: float
    env_law: Law
    key: StreamKey

    def __post_init__(self):
        require_count("d", self.d)
        require_count("n", self.n)
        require_positive("beta", self.beta, strict=False)
        # raises DomainError when lambda(+-beta) is infinite
        self.env_law.log_mgf(self.beta)
        self.env_law.log_mgf(-self.beta)

    @property
    def lambda_beta(self) -> float:
        return self.env_law.log_mgf(self.beta)

    @property
    def lambda_minus(self) -> float:
        return self.env_law.log_mgf(-self.beta)

    @property
    def k_constant(self) -> float:
        return bounds.polymer_k_constant(self.lambda_beta, self.lambda_minus)

    @property
    def lower_bracket(self) -> float:
        """beta Q[eta] - lambda(beta), a lower bound for every (1/n) Q[ln W_n]."""
        return self.beta * self.env_law.mean - self.lambda_beta

    def with_n(self, n: int) -> "PolymerConfig":
        return replace(self, n=n)


@functools.lru_cache(maxsize=None)
def _sorted_sites(d: int, k: int) -> Tuple[Site, ...]:
    sites = [x for x in itertools.product(range(-k, k + 1), repeat=d)
             if sum(abs(c) for c in x) <= k and sum(x) % 2 == k % 2]
    return tuple(sorted(sites))


@functools.lru_cache(maxsize=None)
def _site_index(d: int, k: int) -> Dict[Site, int]:
    return {x: i for i, x in enumerate(_sorted_sites(d, k))}


def reachable_sites(d: int, k: int) -> frozenset:
    """
    Sites a simple random walk can occupy at time k: |x|_1 <= k with sum(x) = k mod 2.

    Args:
        d (int): Lattice dimension.
        k (int): Time, >= 0.

    Returns:
        frozenset: Sites as d-tuples.
    """
    require_count("d", d)
    require_count("k", k, minimum=0)
    return frozenset(_sorted_sites(d, k))


def cone_size(d: int, k: int) -> int:
    if d == 1:
        return k + 1
    if d == 2:
        return (k + 1) ** 2
    return len(_sorted_sites(d, k))


def _slice_shape(d: int, k: int) -> Tuple[int, ...]:
    # d <= 2 dense layouts: d=1 index (x+k)/2; d=2 rotated (u, v) = (x1+x2, x1-x2) on a (k+1)^2 grid
    if d <= DENSE_MAX_DIM:
        return (k + 1,) * d
    return (cone_size(d, k),)


def _dense_index(d: int, k: int, x: Site) -> Tuple[int, ...]:
    if d == 1:
        return ((x[0] + k) // 2,)
    u, v = x[0] + x[1], x[0] - x[1]
    return (u + k) // 2, (v + k) // 2


def _dense_site(d: int, k: int, index: Tuple[int, ...]) -> Site:
    if d == 1:
        return (2 * index[0] - k,)
    u, v = 2 * index[0] - k, 2 * index[1] - k
    return (u + v) // 2, (u - v) // 2


@dataclass(frozen=True)
class Environment:
    """Environment values eta(k, x) on the reachable cone, one array per time slice."""
    d: int
    n: int
    slices: Tuple[np.ndarray, ...]

    def value(self, k: int, x: Site) -> float:
        table = self.slices[k - 1]
        if self.d <= DENSE_MAX_DIM:
            return float(table[_dense_index(self.d, k, x)])
        return float(table[_site_index(self.d, k)[x]])

    @property
    def size(self) -> int:
        return sum(table.size for table in self.slices)


def environment_slices(config: PolymerConfig, key: Optional[StreamKey] = None) -> Iterator[np.ndarray]:
    """
    Stream the environment one time slice at a time.

    All slices come from one generator seeded by key (default config.key), so the
    streamed and materialized environments are identical.
    """
    rng = (key or config.key).generator()
    for k in range(1, config.n + 1):
        shape = _slice_shape(config.d, k)
        yield config.env_law.draw(rng, int(np.prod(shape))).reshape(shape)


def sample_environment(config: PolymerConfig, key: Optional[StreamKey] = None) -> Environment:
    return Environment(config.d, config.n, tuple(environment_slices(config, key)))


@dataclass(frozen=True)
class PartitionState:
    """Point-to-point values ln W_k(0, x) for x in L_k."""
    d: int
    k: int
    log_w: LogTable

    def values(self) -> np.ndarray:
        if isinstance(self.log_w, dict):
            return np.fromiter(self.log_w.values(), dtype=float)
        return self.log_w.ravel()

    def log_total(self) -> float:
        return float(logsumexp(self.values()))

    def as_dict(self) -> Dict[Site, float]:
        if isinstance(self.log_w, dict):
            return dict(self.log_w)
        return {_dense_site(self.d, self.k, idx): float(v) for idx, v in np.ndenumerate(self.log_w)}


def _initial_table(d: int) -> LogTable:
    if d <= DENSE_MAX_DIM:
        return np.zeros((1,) * d)
    return {(0,) * d: 0.0}


def _neighbours(x: Site) -> Iterator[Site]:
    for axis in range(len(x)):
        for step in (-1, 1):
            y = list(x)
            y[axis] += step
            yield tuple(y)


def _step(d: int, k: int, log_w: LogTable, eta: np.ndarray, beta: float, lambda_beta: float) -> LogTable:
    """Advance ln W_k(0, .) to ln W_{k+1}(0, .) with eta the environment slice at time k+1."""
    log_move = math.log(2.0 * d)
    if d == 1:
        padded = np.pad(log_w, 1, constant_values=-np.inf)
        merged = np.logaddexp(padded[:-1], padded[1:])
    elif d == 2:
        padded = np.pad(log_w, 1, constant_values=-np.inf)
        merged = logsumexp(np.stack([padded[:-1, :-1], padded[1:, :-1],
                                     padded[:-1, 1:], padded[1:, 1:]]), axis=0)
    else:
        sites = _sorted_sites(d, k + 1)
        new = {}
        for i, y in enumerate(sites):
            terms = [log_w[x] for x in _neighbours(y) if x in log_w]
            new[y] = float(logsumexp(terms)) - log_move + beta * eta[i] - lambda_beta
        assert len(new) == len(sites)
        return new
    assert merged.shape == _slice_shape(d, k + 1), "mass outside the reachable cone"
    return merged - log_move + beta * eta - lambda_beta


def _run_dp(d: int, slices, beta: float, lambda_beta: float,
            checkpoints: Sequence[int] = ()) -> Tuple[PartitionState, Dict[int, float]]:
    log_w = _initial_table(d)
    k = 0
    recorded = {}
    wanted = set(checkpoints)
    for eta in slices:
        log_w = _step(d, k, log_w, eta, beta, lambda_beta)
        k += 1
        if k in wanted:
            recorded[k] = PartitionState(d, k, log_w).log_total()
    return PartitionState(d, k, log_w), recorded


def dp_partition(env: Environment, beta: float, lambda_beta: float) -> Tuple[PartitionState, float]:
    """
    Exact point-to-point partition functions by the one-step transfer recursion.

    ln W_{k+1}(0, y) = logsumexp over neighbours x of ln W_k(0, x) - ln(2d) + beta eta(k+1, y) - lambda(beta).

    Args:
        env (Environment): Sampled environment.
        beta (float): Inverse temperature.
        lambda_beta (float): log_mgf(env_law, beta).

    Returns:
        tuple: Final PartitionState at k = n and ln W_n.
    """
    state, _ = _run_dp(env.d, env.slices, beta, lambda_beta)
    return state, state.log_total()


def brute_force_partition(env: Environment, beta: float, lambda_beta: float) -> float:
    """ln W_n by enumerating all (2d)^n paths; only for small n."""
    moves = [m for m in _neighbours((0,) * env.d)]
    log_paths = []
    for path in itertools.product(moves, repeat=env.n):
        x = (0,) * env.d
        energy = 0.0
        for k, move in enumerate(path, start=1):
            x = tuple(a + b for a, b in zip(x, move))
            energy += env.value(k, x)
        log_paths.append(beta * energy)
    return float(logsumexp(log_paths)) - env.n * (lambda_beta + math.log(2.0 * env.d))


def replicate_state(config: PolymerConfig, replicate: int) -> PartitionState:
    """Final PartitionState for replicate r, environment drawn from config.key.child(r)."""
    slices = environment_slices(config, config.key.child(replicate))
    state, _ = _run_dp(config.d, slices, config.beta, config.lambda_beta)
    return state


def _energy_block(task: Tuple[PolymerConfig, int, int, Tuple[int, ...]]) -> np.ndarray:
    config, start, stop, checkpoints = task
    out = np.empty((stop - start, len(checkpoints)))
    lambda_beta = config.lambda_beta
    for row, replicate in enumerate(range(start, stop)):
        slices = environment_slices(config, config.key.child(replicate))
        _, recorded = _run_dp(config.d, slices, config.beta, lambda_beta, checkpoints)
        out[row] = [recorded[m] for m in checkpoints]
    return out


@dataclass(frozen=True)
class EnergyStats:
    """Per-replicate ln W_n values and their summary."""
    n: int
    values: np.ndarray

    @property
    def estimate(self) -> McEstimate:
        return McEstimate.from_samples(self.values)

    @property
    def mean(self) -> float:
        return self.estimate.mean

    @property
    def stderr(self) -> float:
        return self.estimate.stderr

    @property
    def free_energy(self) -> McEstimate:
        return self.estimate.scaled(1.0 / self.n)

    def deviations(self) -> np.ndarray:
        return self.values - self.values.mean()


def energy_samples_at(config: PolymerConfig, n_list: Sequence[int], replicates: int,
                      jobs: int = 1) -> Dict[int, EnergyStats]:
    """
    ln W_n for every n in n_list from the same environments, run once to max(n_list).

    Args:
        config (PolymerConfig): Model; config.n is replaced by max(n_list).
        n_list: Horizons.
        replicates (int): Number of environments M.
        jobs (int): Worker processes.

    Returns:
        dict: n -> EnergyStats.
    """
    replicates = require_count("replicates", replicates)
    checkpoints = tuple(sorted({require_count("n", n) for n in n_list}))
    config = config.with_n(checkpoints[-1])
    tasks = [(config, b.start, b.stop, checkpoints) for b in blocks(replicates, BLOCK_SIZE)]
    logger.info("polymer d=%d beta=%g: %d environments up to n=%d", config.d, config.beta,
                replicates, config.n)
    table = np.concatenate(parallel_map(_energy_block, tasks, jobs), axis=0)
    return {n: EnergyStats(n, table[:, j]) for j, n in enumerate(checkpoints)}


def free_energy_samples(config: PolymerConfig, replicates: int, jobs: int = 1) -> EnergyStats:
    """M independent environments, each run through the transfer recursion to config.n."""
    return energy_samples_at(config, [config.n], replicates, jobs)[config.n]


def energy_frame(stats: EnergyStats) -> pd.DataFrame:
    """Per-replicate CSV table (replicate, n, ln_Wn)."""
    return pd.DataFrame({"replicate": np.arange(stats.values.size), "n": stats.n,
                         "ln_Wn": stats.values})


def energy_summary(config: PolymerConfig, stats_by_n: Dict[int, EnergyStats]) -> pd.DataFrame:
    """Summary table (n, mean, stderr, lower_bracket, upper_bracket) of the free energy ln W_n / n."""
    records = []
    for n, stats in sorted(stats_by_n.items()):
        fe = stats.free_energy
        records.append({"n": n, "mean": fe.mean, "stderr": fe.stderr,
                        "lower_bracket": config.lower_bracket, "upper_bracket": 0.0})
    return pd.DataFrame(records)


@dataclass(frozen=True)
class ConcentrationResult:
    rows: List[VerificationRow]
    k: float
    centering_bias: float
    curve: bounds.TailBoundCurve

    def to_frame(self, experiment_id: str, law_label: str, n: int) -> pd.DataFrame:
        frame = rows_to_frame(experiment_id, law_label, n, self.rows)
        frame["centering_bias"] = self.centering_bias
        return frame


def concentration_curve(config: PolymerConfig, curve: str = "bernstein",
                        params: Optional[Dict[str, float]] = None) -> bounds.TailBoundCurve:
    """
    One-sided tail curve for (ln W_n - Q[ln W_n]) / n.

    'bernstein' uses K = 2 exp(lambda(beta) + lambda(-beta)); 'polymer_q' needs
    params q, r (and optionally tau1) with K0 = Q[e^{r |eta|^q}].
    """
    if curve == "bernstein":
        return bounds.bernstein_curve(config.k_constant)
    if curve == "polymer_q":
        params = dict(params or {})
        q, r = params["q"], params["r"]
        k0 = config.env_law.exp_moment(r, q)
        if not math.isfinite(k0):
            raise DomainError(f"Q[exp({r}|eta|^{q})] diverges for {config.env_law.label()}")
        tau1 = params.get("tau1", 2.0 * bounds.dual_tau(q, r))
        consts = bounds.polymer_q_constants(config.beta, k0, q, r, tau1,
                                            config.lambda_beta, config.lambda_minus)
        return bounds.polymer_q_curve(consts)
    raise DomainError(f"unknown concentration curve '{curve}'")


def concentration_experiment(config: PolymerConfig, replicates: int, x_grid: Sequence[float],
                             z: float = 3.0, curve: str = "bernstein",
                             params: Optional[Dict[str, float]] = None, jobs: int = 1,
                             stats: Optional[EnergyStats] = None) -> ConcentrationResult:
    """
    Two-sided deviation frequencies of ln W_n / n around the sample mean against 2 x the curve.

    The sample mean stands in for Q[ln W_n]; its standard error (in deviation units)
    is reported as centering_bias.

    Args:
        config (PolymerConfig): Model.
        replicates (int): Environments M.
        x_grid: Deviation levels.
        z (float): Standard-error multiplier.
        curve (str): 'bernstein' or 'polymer_q'.
        params (dict, optional): Curve parameters.
        jobs (int): Worker processes.
        stats (EnergyStats, optional): Precomputed samples at config.n.

    Returns:
        ConcentrationResult: Rows, K, centering bias and the curve.
    """
    tail = concentration_curve(config, curve, params)
    if stats is None:
        stats = free_energy_samples(config, replicates, jobs)
    deviation = np.abs(stats.deviations()) / config.n
    rows = []
    for x in x_grid:
        empirical = McEstimate.from_samples(deviation > x)
        rows.append(verification_row(x, empirical, min(1.0, 2.0 * tail.bound(config.n, x)), z))
    centering_bias = stats.stderr / config.n
    logger.info("concentration n=%d: max deviation %.4g, centering bias %.3g",
                config.n, float(deviation.max()), centering_bias)
    return ConcentrationResult(rows, config.k_constant, centering_bias, tail)


def mean_rate_check(config: PolymerConfig, n_list: Sequence[int], replicates: int,
                    z: float = 3.0, jobs: int = 1,
                    stats_by_n: Optional[Dict[int, EnergyStats]] = None) -> pd.DataFrame:
    """
    Deficit of (1/n) mean ln W_n below the largest-n estimate, against the mean-rate bound.

    The largest-n free energy p_hat stands in for the limit p_-(beta).

    Returns:
        pd.DataFrame: Columns n, free_energy, stderr, p_hat, deficit, deficit_stderr, bound,
        lower_ok, upper_ok, monotone_ok, pass.
    """
    if stats_by_n is None:
        stats_by_n = energy_samples_at(config, n_list, replicates, jobs)
    ns = sorted(stats_by_n)
    p_hat = stats_by_n[ns[-1]].free_energy
    k = config.k_constant
    records = []
    previous = None
    for n in ns:
        fe = stats_by_n[n].free_energy
        deficit = p_hat.mean - fe.mean
        deficit_stderr = 0.0 if n == ns[-1] else math.hypot(p_hat.stderr, fe.stderr)
        bound = bounds.mean_rate_bound(n, config.d, k)
        lower_ok = deficit >= -z * deficit_stderr
        upper_ok = deficit <= bound + z * deficit_stderr
        monotone_ok = True
        if previous is not None:
            monotone_ok = fe.mean >= previous.mean - z * math.hypot(fe.stderr, previous.stderr)
        records.append({"n": n, "free_energy": fe.mean, "stderr": fe.stderr, "p_hat": p_hat.mean,
                        "deficit": deficit, "deficit_stderr": deficit_stderr, "bound": bound,
                        "lower_ok": lower_ok, "upper_ok": upper_ok, "monotone_ok": monotone_ok,
                        "pass": lower_ok and upper_ok and monotone_ok})
        previous = fe
    return pd.DataFrame(records)


def as_rate_report(config: PolymerConfig, n_list: Sequence[int], replicates: int, p: float = 2.0,
                   jobs: int = 1, stats_by_n: Optional[Dict[int, EnergyStats]] = None) -> pd.DataFrame:
    """
    Almost-sure and L^p rate statistics sqrt(n/ln n) |ln W_n / n - p_hat| per n >= 3.

    Returns:
        pd.DataFrame: Columns n, quantile_99, as_ceiling = 2 sqrt(K)(1 + sqrt(d)),
        lp_statistic, lp_ceiling = 2 sqrt(K d).
    """
    p = require_positive("p", p)
    if stats_by_n is None:
        stats_by_n = energy_samples_at(config, n_list, replicates, jobs)
    ns = sorted(stats_by_n)
    p_hat = stats_by_n[ns[-1]].free_energy.mean
    k = config.k_constant
    records = []
    for n in ns:
        if n < 3:
            continue
        scale = math.sqrt(n / math.log(n))
        gap = np.abs(stats_by_n[n].values / n - p_hat)
        records.append({
            "n": n,
            "quantile_99": float(scale * np.quantile(gap, 0.99)),
            "as_ceiling": 2.0 * math.sqrt(k) * (1.0 + math.sqrt(config.d)),
            "lp_statistic": float(scale * np.mean(gap ** p) ** (1.0 / p)),
            "lp_ceiling": 2.0 * math.sqrt(k * config.d),
        })
    return pd.DataFrame(records)


def in_probability_report(config: PolymerConfig, n_list: Sequence[int], replicates: int,
                          x_grid: Sequence[float], delta: float = 0.5, jobs: int = 1,
                          stats_by_n: Optional[Dict[int, EnergyStats]] = None) -> pd.DataFrame:
    """
    Empirical P[|ln W_n / n - p_hat| > x] against 2 exp(-n rate((1 - delta) x, K)).

    The bound holds once |Q[ln W_n]/n - p_-| <= delta x, so the comparison is a
    finite-n report rather than a certificate.
    """
    if stats_by_n is None:
        stats_by_n = energy_samples_at(config, n_list, replicates, jobs)
    ns = sorted(stats_by_n)
    p_hat = stats_by_n[ns[-1]].free_energy.mean
    k = config.k_constant
    records = []
    for n in ns:
        gap = np.abs(stats_by_n[n].values / n - p_hat)
        for x in x_grid:
            est = McEstimate.from_samples(gap > x)
            bound = bounds.in_probability_bound(n, x, k, delta)
            records.append({"n": n, "x": float(x), "empirical_mean": est.mean, "stderr": est.stderr,
                            "bound": bound, "within_bound": est.mean <= bound + 3.0 * est.stderr})
    return pd.DataFrame(records)
