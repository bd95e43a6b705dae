"""
Reference battery: pinned-seed dominance checks and oracle equivalences for every module.

Each criterion produces a RunReport; reference_suite writes them under one output
directory together with a sha256 manifest of the CSVs.
"""
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from . import bounds
from .cascade import cascade_samples
from .config import DEFAULT_SEED, ExperimentConfig
from .experiments import plot_report, run_experiment
from .laws import Gaussian, Laplace, Law, Rademacher, StreamKey, StretchedExp
from .martingale_lab import ExperimentSpec, estimate_laplace, estimate_tail, rademacher_tail_exact
from .polymer import PolymerConfig, brute_force_partition, dp_partition, sample_environment
from .reports import RunReport, checksum_manifest, write_csv, write_report
from .utils import PreconditionError

logger = logging.getLogger(__name__)

SUITE_SEED = DEFAULT_SEED
LEGENDRE_TOL = 1e-6
DP_TOL = 1e-10
BETA_ZERO_TOL = 1e-12


@dataclass(frozen=True)
class SuiteScale:
    """Sample sizes of the battery; quick mode shrinks them for smoke runs."""
    mc_replicates: int = 100_000
    polymer_replicates: int = 2000
    legendre_tuples: int = 200
    dp_environments: int = 50

    @classmethod
    def quick(cls) -> "SuiteScale":
        return cls(mc_replicates=10_000, polymer_replicates=300, legendre_tuples=50, dp_environments=10)


@dataclass
class SuiteOutcome:
    reports: List[RunReport]
    elapsed: Dict[str, float] = field(default_factory=dict)
    manifest: Optional[Path] = None

    @property
    def passed(self) -> bool:
        return all(report.passed for report in self.reports)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 2


def _absorb(target: RunReport, source: RunReport, label: str) -> None:
    """Fold a sub-experiment's tables and checks into a criterion report."""
    for name, frame in source.tables.items():
        frame = frame.copy()
        frame.insert(0, "case", label)
        if name in target.tables:
            target.tables[name] = pd.concat([target.tables[name], frame], ignore_index=True)
        else:
            target.tables[name] = frame
    for check in source.checks:
        target.add_check(f"{label}: {check.name}", check.passed, check.detail)
    target.notes.extend(f"{label}: {note}" for note in source.notes)


# --------------------------------------------------------------------------
# Rate machinery against brute-force maximization
# --------------------------------------------------------------------------

def grid_supremum(f: Callable[[np.ndarray], np.ndarray], lo: float, hi: float,
                  points: int = 1001, rounds: int = 8) -> float:
    """
    Brute-force sup of a concave f on [lo, hi] by repeated grid zooms around the argmax.

    Args:
        f: Vectorized function.
        lo (float): Left end.
        hi (float): Right end.
        points (int): Grid points per round.
        rounds (int): Zoom rounds.

    Returns:
        float: Largest grid value found.
    """
    a, b = lo, hi
    best = -math.inf
    for _ in range(rounds):
        t = np.linspace(a, b, points)
        values = f(t)
        i = int(np.nanargmax(values))
        best = max(best, float(values[i]))
        step = (b - a) / (points - 1)
        a, b = max(lo, t[i] - step), min(hi, t[i] + step)
    return best


def _concave_bracket(f: Callable[[np.ndarray], np.ndarray], start: float = 1.0) -> float:
    # doubles hi until f stops increasing, so the max of a concave f lies in [0, hi]
    hi = start
    while f(np.array([2.0 * hi]))[0] > f(np.array([hi]))[0]:
        hi *= 2.0
    return 2.0 * hi


def _rel_error(closed: float, oracle: float) -> float:
    return abs(closed - oracle) / max(abs(oracle), 1e-300)


def legendre_criterion(seed: int, scale: SuiteScale) -> RunReport:
    report = RunReport("legendre_oracle", "suite", seed, "suite")
    rng = StreamKey(seed).child("suite", "legendre").generator()
    records = []
    rejected = []
    for _ in range(scale.legendre_tuples):
        rho, tau, t0 = rng.uniform(1.5, 4.0), rng.uniform(0.1, 3.0), rng.uniform(0.0, 2.0)
        threshold = rho * tau * t0 ** (rho - 1.0)
        x = threshold + rng.uniform(0.1, 5.0)
        f = lambda t, x=x, rho=rho, tau=tau: t * x - tau * t ** rho  # noqa: E731
        oracle = grid_supremum(f, t0, _concave_bracket(f, max(1.0, t0)))
        records.append(("legendre_sup", rho, tau, t0, x, bounds.legendre_sup(rho, tau, t0, x), oracle))
        if t0 > 0.05:
            try:
                bounds.legendre_sup(rho, tau, t0, 0.5 * threshold)
                rejected.append(False)
            except PreconditionError:
                rejected.append(True)

        k, x = rng.uniform(0.1, 5.0), rng.uniform(0.05, 5.0)
        g = lambda t, x=x, k=k: t * x - k * t * t / (1.0 - t)  # noqa: E731
        records.append(("bernstein_rate", k, math.nan, 0.0, x, bounds.bernstein_rate(x, k),
                        grid_supremum(g, 0.0, 1.0 - 1e-12)))

        q, tau = rng.uniform(1.2, 4.0), rng.uniform(0.1, 3.0)
        rho_q = bounds.conjugate_exponent(q)
        h = lambda t, tau=tau, rho_q=rho_q: t - tau * t ** rho_q  # noqa: E731
        records.append(("dual_rate", q, tau, 0.0, 1.0, bounds.dual_rate(q, tau),
                        grid_supremum(h, 0.0, _concave_bracket(h))))
    frame = pd.DataFrame(records, columns=["function", "p1", "p2", "t0", "x", "closed_form", "grid_sup"])
    frame["rel_error"] = [_rel_error(c, o) for c, o in zip(frame["closed_form"], frame["grid_sup"])]
    report.tables["legendre"] = frame
    for name, rows in frame.groupby("function", sort=True):
        worst = float(rows["rel_error"].max())
        report.add_check(f"{name} matches grid maximization", worst <= LEGENDRE_TOL,
                         f"max relative error {worst:.3g} over {len(rows)} tuples")
    report.add_check("legendre_sup rejects x below the threshold", all(rejected),
                     f"{sum(rejected)} of {len(rejected)} rejected")
    return report


# --------------------------------------------------------------------------
# Exact Rademacher and Laplace oracles
# --------------------------------------------------------------------------

def exact_oracle_criterion(seed: int, scale: SuiteScale, z: float, jobs: int) -> RunReport:
    report = RunReport("exact_oracle", "suite", seed, "suite")
    grid = (0.1, 0.2, 0.4, 0.6, 0.8)
    m = scale.mc_replicates
    records = []
    for n in (5, 10, 20, 30):
        spec = ExperimentSpec(Rademacher(), n, grid, m, StreamKey(seed).child("suite", "rademacher", n))
        for x, est in zip(grid, estimate_tail(spec, jobs)):
            exact = rademacher_tail_exact(n, x)
            # binomial stderr of the exact frequency keeps tiny tails from failing on zero counts
            tol = z * max(est.stderr, math.sqrt(exact * (1.0 - exact) / m))
            hoeffding = bounds.hoeffding_bound(n, x, 1.0)
            records.append({"n": n, "x": x, "empirical_mean": est.mean, "stderr": est.stderr,
                            "exact": exact, "agrees": abs(est.mean - exact) <= tol,
                            "hoeffding": hoeffding, "dominates": exact <= hoeffding})
    frame = pd.DataFrame(records)
    report.tables["rademacher"] = frame
    report.add_check("Monte-Carlo tail agrees with binomial enumeration", bool(frame["agrees"].all()))
    report.add_check("exp(-n x^2/2) dominates the exact tail", bool(frame["dominates"].all()))

    laplace_cases = [(Rademacher(), 5, 1.0), (Gaussian(0.0, 1.0), 3, 0.5)]
    laplace_records = []
    for law, n, t in laplace_cases:
        spec = ExperimentSpec(law, n, (1.0,), m, StreamKey(seed).child("suite", "laplace", law.tag, n))
        (result,) = estimate_laplace(spec, [t], jobs)
        laplace_records.append({"law": law.label(), "n": n, "t": t, "empirical_mean": result.estimate.mean,
                                "stderr": result.estimate.stderr, "exact": result.exact,
                                "agrees": abs(result.estimate.mean - result.exact) <= z * result.estimate.stderr})
    laplace = pd.DataFrame(laplace_records)
    report.tables["laplace"] = laplace
    report.add_check("Monte-Carlo Laplace transform agrees with exp(n lambda(t))", bool(laplace["agrees"].all()))
    return report


# --------------------------------------------------------------------------
# Dominance battery and polymer / cascade experiments
# --------------------------------------------------------------------------

BATTERY: Tuple[Tuple[str, Law, str, Tuple[float, ...]], ...] = (
    ("rademacher_bernstein", Rademacher(), "bernstein", (0.05, 0.1, 0.2, 0.3, 0.4, 0.6, 0.8, 0.95)),
    ("gaussian_hoeffding_type", Gaussian(0.0, 1.0), "hoeffding_type", (0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5)),
    ("laplace_bernstein", Laplace(0.5), "bernstein", (0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5)),
    ("stretched_1.5_q_regime", StretchedExp(1.5, 1.0), "q_regime", (0.05, 0.1, 0.2, 0.4, 0.6, 0.9, 1.3, 2.0)),
    ("stretched_3_q_regime", StretchedExp(3.0, 1.0), "q_regime", (0.05, 0.1, 0.2, 0.3, 0.45, 0.6, 0.8, 1.0)),
)


def battery_criterion(seed: int, scale: SuiteScale, z: float, jobs: int) -> RunReport:
    report = RunReport("dominance_battery", "suite", seed, "suite")
    for label, law, theorem, grid in BATTERY:
        cfg = ExperimentConfig(kind="martingale_verify", experiment_id=label, law=law.to_dict(),
                               theorem=theorem, grid=list(grid), n_list=[10, 50],
                               replicates=scale.mc_replicates, z_threshold=z)
        _absorb(report, run_experiment(cfg, seed, "suite", z, jobs), label)
    return report


def dp_criterion(seed: int, scale: SuiteScale) -> RunReport:
    report = RunReport("polymer_dp_oracle", "suite", seed, "suite")
    law = Gaussian(0.0, 1.0)
    beta = 0.7
    records = []
    for d, n_max in ((1, 6), (2, 5)):
        for n in range(1, n_max + 1):
            for e in range(scale.dp_environments):
                key = StreamKey(seed).child("suite", "dp", d, n, e)
                config = PolymerConfig(d, n, beta, law, key)
                env = sample_environment(config)
                _, dp = dp_partition(env, beta, config.lambda_beta)
                brute = brute_force_partition(env, beta, config.lambda_beta)
                _, flat = dp_partition(env, 0.0, 0.0)
                records.append({"d": d, "n": n, "environment": e, "ln_W_dp": dp, "ln_W_paths": brute,
                                "rel_error": abs(math.expm1(dp - brute)), "ln_W_beta0": flat})
    frame = pd.DataFrame(records)
    report.tables["dp_oracle"] = frame
    worst = float(frame["rel_error"].max())
    report.add_check("transfer recursion equals path enumeration", worst <= DP_TOL,
                     f"max relative error {worst:.3g}")
    flat = float(frame["ln_W_beta0"].abs().max())
    report.add_check("beta = 0 gives ln W_n = 0", flat <= BETA_ZERO_TOL, f"max |ln W_n| {flat:.3g}")
    return report


def _polymer_law() -> dict:
    return Gaussian(0.0, 1.0).to_dict()


def brackets_criterion(seed: int, scale: SuiteScale, z: float, jobs: int) -> RunReport:
    report = RunReport("polymer_brackets", "suite", seed, "suite")
    cfg = ExperimentConfig(kind="polymer_energy", experiment_id="polymer_brackets", law=_polymer_law(),
                           d=1, beta=0.5, n_list=[10, 20, 40], replicates=scale.polymer_replicates)
    _absorb(report, run_experiment(cfg, seed, "suite", z, jobs), "d1_beta0.5")
    return report


def concentration_criterion(seed: int, scale: SuiteScale, z: float, jobs: int) -> RunReport:
    report = RunReport("polymer_concentration", "suite", seed, "suite")
    cfg = ExperimentConfig(kind="polymer_concentration", experiment_id="polymer_concentration",
                           law=_polymer_law(), d=1, beta=0.5, n=50, grid=[0.05, 0.1, 0.2, 0.4],
                           replicates=scale.polymer_replicates)
    _absorb(report, run_experiment(cfg, seed, "suite", z, jobs), "d1_n50")
    return report


def mean_rate_criterion(seed: int, scale: SuiteScale, z: float, jobs: int) -> RunReport:
    report = RunReport("polymer_mean_rate", "suite", seed, "suite")
    cfg = ExperimentConfig(kind="polymer_energy", experiment_id="polymer_mean_rate", law=_polymer_law(),
                           d=1, beta=0.5, n_list=[25, 100], replicates=scale.polymer_replicates)
    _absorb(report, run_experiment(cfg, seed, "suite", z, jobs), "d1_n25_vs_n100")
    return report


def cascade_criterion(seed: int, scale: SuiteScale, z: float, jobs: int) -> RunReport:
    report = RunReport("cascade", "suite", seed, "suite")
    law = Gaussian(0.0, 1.0)
    key = StreamKey(seed).child("suite", "cascade")
    records = []
    for m in (1, 2, 4):
        samples = cascade_samples(PolymerConfig(1, m, 0.5, law, key), m, scale.polymer_replicates, jobs)
        v = samples.v(1.0)
        records.append({"check": "v_m(1)", "m": m, "theta": 1.0, "value": v.mean, "stderr": v.stderr,
                        "expected": 0.0, "ok": abs(v.mean) <= z * v.stderr + BETA_ZERO_TOL})
    flat = cascade_samples(PolymerConfig(1, 1, 0.0, law, key.child("beta0")), 1, 100)
    for theta in (0.1, 0.25, 0.5, 0.75, 1.0):
        v = flat.v(theta)
        expected = (1.0 - theta) / theta * math.log(2.0)
        records.append({"check": "beta0_closed_form", "m": 1, "theta": theta, "value": v.mean,
                        "stderr": v.stderr, "expected": expected,
                        "ok": abs(v.mean - expected) <= z * v.stderr + BETA_ZERO_TOL})
    frame = pd.DataFrame(records)
    report.tables["cascade_oracle"] = frame
    report.add_check("v_m(1) = 0", bool(frame.loc[frame["check"] == "v_m(1)", "ok"].all()))
    report.add_check("beta = 0 closed form ((1 - theta)/theta) ln 2",
                     bool(frame.loc[frame["check"] == "beta0_closed_form", "ok"].all()))
    cfg = ExperimentConfig(kind="cascade_compare", experiment_id="cascade_compare", law=law.to_dict(),
                           d=1, beta=0.5, n=20, m_list=[1, 2], replicates=scale.polymer_replicates)
    _absorb(report, run_experiment(cfg, seed, "suite", z, jobs), "d1_n20")
    return report


DETERMINISM_RUNS = (("run1_jobs1", 1), ("run2_jobs1", 1), ("run3_jobs4", 4))


def _determinism_configs() -> List[ExperimentConfig]:
    return [
        ExperimentConfig(kind="martingale_verify", experiment_id="det_martingale", law=Laplace(0.5).to_dict(),
                         theorem="bernstein", grid=[0.1, 0.3, 0.6], n_list=[10, 20], replicates=10_000),
        ExperimentConfig(kind="polymer_energy", experiment_id="det_polymer", law=_polymer_law(),
                         d=1, beta=0.5, n_list=[5, 10], grid=[0.1], replicates=200),
        ExperimentConfig(kind="cascade_compare", experiment_id="det_cascade", law=_polymer_law(),
                         d=1, beta=0.5, n=8, m_list=[1, 2], replicates=200),
    ]


def manifest_mismatches(first: pd.DataFrame, second: pd.DataFrame) -> List[str]:
    """Files whose digests differ between two manifests, or that only one of them lists."""
    merged = first.merge(second, on="file", how="outer", suffixes=("_a", "_b"))
    return sorted(merged.loc[merged["sha256_a"] != merged["sha256_b"], "file"])


def determinism_criterion(seed: int, out_dir: Path) -> RunReport:
    """
    Run a martingale, a polymer and a cascade config twice serially and once with four workers,
    and compare the CSV bytes of the three runs.
    """
    report = RunReport("determinism", "suite", seed, "suite")
    manifests = {}
    for label, width in DETERMINISM_RUNS:
        root = out_dir / "determinism" / label
        paths: List[Path] = []
        for cfg in _determinism_configs():
            paths.extend(write_report(run_experiment(cfg, seed, "suite", jobs=width), root, cfg.prefix))
        manifests[label] = checksum_manifest(paths, root)
    first = manifests["run1_jobs1"]
    report.tables["digests"] = first
    repeat = manifest_mismatches(first, manifests["run2_jobs1"])
    report.add_check("CSV bytes stable across consecutive runs", not repeat,
                     f"{len(first)} files, differing: {repeat}")
    wide = manifest_mismatches(first, manifests["run3_jobs4"])
    report.add_check("CSV bytes independent of --jobs", not wide, f"{len(first)} files, differing: {wide}")
    return report


def _criteria(seed: int, scale: SuiteScale, z: float, jobs: int) -> List[Tuple[str, Callable[[], RunReport]]]:
    return [
        ("legendre_oracle", lambda: legendre_criterion(seed, scale)),
        ("exact_oracle", lambda: exact_oracle_criterion(seed, scale, z, jobs)),
        ("dominance_battery", lambda: battery_criterion(seed, scale, z, jobs)),
        ("polymer_dp_oracle", lambda: dp_criterion(seed, scale)),
        ("polymer_brackets", lambda: brackets_criterion(seed, scale, z, jobs)),
        ("polymer_concentration", lambda: concentration_criterion(seed, scale, z, jobs)),
        ("polymer_mean_rate", lambda: mean_rate_criterion(seed, scale, z, jobs)),
        ("cascade", lambda: cascade_criterion(seed, scale, z, jobs)),
    ]


def _run_pass(criteria: List[Tuple[str, Callable[[], RunReport]]], out_dir: Path, plots: bool,
              elapsed: Dict[str, float]) -> Tuple[List[RunReport], List[Path]]:
    reports: List[RunReport] = []
    written: List[Path] = []
    for name, run in criteria:
        start = time.perf_counter()
        report = run()
        elapsed[name] = time.perf_counter() - start
        logger.info("criterion %s: %s in %.1fs", name, "pass" if report.passed else "FAIL", elapsed[name])
        written.extend(write_report(report, out_dir / name, name))
        if plots:
            plot_report(report, out_dir / name, name)
        reports.append(report)
    return reports, written


def reference_suite(out_dir: Path, seed: int = SUITE_SEED, jobs: int = 1, z: float = 3.0,
                    plots: bool = False, quick: bool = False) -> SuiteOutcome:
    """
    Run the full battery with pinned seeds and write every table plus a checksum manifest.

    The battery is then run a second time with a different worker count (4 after a serial
    pass, 1 otherwise) and every CSV of the second pass must match the first byte for byte.

    Args:
        out_dir (Path): Output directory.
        seed (int): Master seed of every criterion.
        jobs (int): Worker processes; results do not depend on it.
        z (float): Standard-error multiplier.
        plots (bool): Also write SVG figures.
        quick (bool): Use the reduced sample sizes of SuiteScale.quick().

    Returns:
        SuiteOutcome: Reports, timings and the manifest path; exit_code is 0 iff every check passed.
    """
    out_dir = Path(out_dir)
    scale = SuiteScale.quick() if quick else SuiteScale()
    outcome = SuiteOutcome([])
    outcome.reports, written = _run_pass(_criteria(seed, scale, z, jobs), out_dir, plots, outcome.elapsed)

    start = time.perf_counter()
    determinism = determinism_criterion(seed, out_dir)
    rerun_jobs = 4 if jobs == 1 else 1
    rerun_dir = out_dir / "determinism" / f"suite_jobs{rerun_jobs}"
    _, rerun_written = _run_pass(_criteria(seed, scale, z, rerun_jobs), rerun_dir, False, {})
    manifest = checksum_manifest(written, out_dir)
    differing = manifest_mismatches(manifest, checksum_manifest(rerun_written, rerun_dir))
    determinism.add_check(f"suite CSV bytes reproduced with --jobs {rerun_jobs}", not differing,
                          f"{len(manifest)} files, differing: {differing}")
    outcome.elapsed["determinism"] = time.perf_counter() - start
    outcome.reports.append(determinism)
    written.extend(write_report(determinism, out_dir / "determinism", "determinism"))
    outcome.manifest = write_csv(checksum_manifest(written, out_dir), out_dir / "manifest.csv")
    return outcome


def format_matrix(outcome: SuiteOutcome) -> List[str]:
    """One line per criterion: name, PASS/FAIL, passed checks and wall-clock seconds."""
    lines = [f"{'criterion':<24} {'status':<6} {'checks':>7} {'seconds':>8}"]
    for report in outcome.reports:
        ok = sum(check.passed for check in report.checks)
        status = "PASS" if report.passed else "FAIL"
        elapsed = outcome.elapsed.get(report.experiment_id, math.nan)
        lines.append(f"{report.experiment_id:<24} {status:<6} {ok:>3}/{len(report.checks):<3} {elapsed:>8.1f}")
    lines.append(f"overall: {'PASS' if outcome.passed else 'FAIL'}")
    return lines
