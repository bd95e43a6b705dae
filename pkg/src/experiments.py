"""
Per-kind experiment runners turning an ExperimentConfig into a RunReport.
"""
import logging
import math
from pathlib import Path
from typing import Callable, Dict, List, Optional

import pandas as pd

from . import bounds, visualization
from .cascade import compare_with_polymer
from .config import ExperimentConfig
from .laws import Rademacher, StreamKey
from .martingale_lab import (
    ExperimentSpec,
    estimate_tail,
    rademacher_tail_exact,
    rows_to_frame,
    theorem_curve,
    verify_curve,
)
from .polymer import (
    as_rate_report,
    concentration_experiment,
    energy_frame,
    energy_samples_at,
    energy_summary,
    in_probability_report,
    mean_rate_check,
)
from .reports import RunReport
from .utils import all_passed

logger = logging.getLogger(__name__)


def run_bounds_eval(cfg: ExperimentConfig, report: RunReport, z: float, jobs: int) -> None:
    """Rows (n, x, rate, bound) of a named bound over the grid."""
    records = []
    for n in cfg.horizons or [1]:
        for x in cfg.grid:
            rate, bound = bounds.evaluate_bound(cfg.theorem, n, x, cfg.params)
            records.append({"n": n, "x": x, "rate": rate, "bound": bound})
    frame = pd.DataFrame(records)
    report.tables["bounds"] = frame
    report.add_check("bounds are probabilities", bool(((frame["bound"] >= 0) & (frame["bound"] <= 1)).all()))


def run_martingale_verify(cfg: ExperimentConfig, report: RunReport, z: float, jobs: int) -> None:
    source = cfg.increment_source()
    built = theorem_curve(cfg.theorem, source, cfg.params)
    report.notes.append(f"curve {built.curve.describe()}")
    report.notes.append(f"hypothesis E exp({built.delta:g}|X|^{built.q:g}) <= K = {built.k_used:.10g}")
    frames = []
    for n in cfg.horizons:
        spec = ExperimentSpec(source, n, tuple(cfg.grid), cfg.replicates,
                              StreamKey(report.seed).child(cfg.experiment_id, n), cfg.sides, cfg.experiment_id)
        estimates = estimate_tail(spec, jobs=jobs)
        rows = verify_curve(spec, built.curve, built.k_used, built.delta, built.q, z, estimates)
        frame = rows_to_frame(cfg.experiment_id, source.label(), n, rows)
        if isinstance(source, Rademacher):
            frame["exact"] = [rademacher_tail_exact(n, x, cfg.sides) for x in cfg.grid]
        frames.append(frame)
        report.add_check(f"{cfg.theorem} curve at n={n}", all_passed(rows),
                         f"{sum(not r.passed for r in rows)} failing of {len(rows)}")
    report.tables["verification"] = pd.concat(frames, ignore_index=True)


def run_polymer_energy(cfg: ExperimentConfig, report: RunReport, z: float, jobs: int) -> None:
    config = cfg.polymer_config(report.seed, max(cfg.horizons))
    stats_by_n = energy_samples_at(config, cfg.horizons, cfg.replicates, jobs)
    report.tables["energy"] = pd.concat([energy_frame(stats_by_n[n]) for n in sorted(stats_by_n)],
                                        ignore_index=True)
    summary = energy_summary(config, stats_by_n)
    report.tables["summary"] = summary
    for row in summary.itertuples():
        report.add_check(f"Jensen bound at n={row.n}", row.mean <= z * row.stderr,
                         f"mean {row.mean:.6g}, stderr {row.stderr:.3g}")
        report.add_check(f"lower bracket at n={row.n}", row.mean >= row.lower_bracket - z * row.stderr,
                         f"bracket [{row.lower_bracket:.6g}, 0]")
    if len(stats_by_n) > 1:
        rates = mean_rate_check(config, cfg.horizons, cfg.replicates, z, stats_by_n=stats_by_n)
        report.tables["mean_rate"] = rates
        for row in rates.itertuples():
            report.add_check(f"mean-rate deficit at n={row.n}", row.lower_ok and row.upper_ok,
                             f"deficit {row.deficit:.4g}, bound {row.bound:.4g}")
        report.add_check("superadditivity trend", bool(rates["monotone_ok"].all()))
        report.tables["as_rate"] = as_rate_report(config, cfg.horizons, cfg.replicates,
                                                  stats_by_n=stats_by_n)
        report.notes.append(f"p_hat is the n={max(cfg.horizons)} estimate, standing in for the limit free energy")
        if cfg.grid:
            report.tables["in_probability"] = in_probability_report(
                config, cfg.horizons, cfg.replicates, cfg.grid, cfg.params.get("delta", 0.5),
                stats_by_n=stats_by_n)


def run_polymer_concentration(cfg: ExperimentConfig, report: RunReport, z: float, jobs: int) -> None:
    config = cfg.polymer_config(report.seed)
    result = concentration_experiment(config, cfg.replicates, cfg.grid, z, cfg.curve, cfg.params, jobs)
    law_label = config.env_law.label()
    report.tables["concentration"] = result.to_frame(cfg.experiment_id, law_label, config.n)
    report.add_check("concentration curve", all_passed(result.rows),
                     f"K = {result.k:.6g}, curve {result.curve.name}")
    report.notes.append(f"deviations centered at the sample mean, centering bias {result.centering_bias:.3g}")


def run_cascade_compare(cfg: ExperimentConfig, report: RunReport, z: float, jobs: int) -> None:
    config = cfg.polymer_config(report.seed)
    result = compare_with_polymer(config, cfg.m_list, cfg.n, cfg.replicates, z, jobs,
                                  theta_resolution=cfg.theta_resolution)
    report.tables["cascade_summary"] = result.summary
    report.tables["cascade_theta"] = result.theta_table
    report.add_check("finite-size inequality", result.passed)
    at_one = result.theta_table[result.theta_table["theta"] == 1.0]
    normalized = (at_one["v_mean"].abs() <= z * at_one["v_stderr"] + 1e-12).all()
    report.add_check("v_m(1) = 0", bool(normalized))
    report.notes.append(f"gap min_m p_tree/m - polymer estimate = {result.summary['gap'].iloc[0]:.6g}")


RUNNERS: Dict[str, Callable[[ExperimentConfig, RunReport, float, int], None]] = {
    "bounds_eval": run_bounds_eval,
    "martingale_verify": run_martingale_verify,
    "polymer_energy": run_polymer_energy,
    "polymer_concentration": run_polymer_concentration,
    "cascade_compare": run_cascade_compare,
}


def run_experiment(cfg: ExperimentConfig, seed: int, seed_source: str = "default",
                   z: Optional[float] = None, jobs: int = 1) -> RunReport:
    """
    Run one configured experiment.

    Args:
        cfg (ExperimentConfig): Validated config.
        seed (int): Effective master seed.
        seed_source (str): Where the seed came from, echoed in the summary.
        z (float, optional): Overrides cfg.z_threshold.
        jobs (int): Worker processes.

    Returns:
        RunReport: Tables, checks and notes.
    """
    z = cfg.z_threshold if z is None else z
    report = RunReport(cfg.experiment_id, cfg.kind, seed, seed_source)
    logger.info("running %s (%s) with seed %d from %s", cfg.experiment_id, cfg.kind, seed, seed_source)
    RUNNERS[cfg.kind](cfg, report, z, jobs)
    return report


def plot_report(report: RunReport, out_dir: Path, prefix: str) -> List[Path]:
    """SVG figures derived from the report tables."""
    out_dir = Path(out_dir)
    written = []
    tables = report.tables
    if "verification" in tables:
        fig = visualization.plot_verification(tables["verification"], report.experiment_id)
        written.append(visualization.save_svg(fig, out_dir / f"{prefix}_verification.svg"))
    if "concentration" in tables:
        fig = visualization.plot_verification(tables["concentration"], report.experiment_id)
        written.append(visualization.save_svg(fig, out_dir / f"{prefix}_concentration.svg"))
    if "summary" in tables:
        fig = visualization.plot_free_energy(tables["summary"], report.experiment_id)
        written.append(visualization.save_svg(fig, out_dir / f"{prefix}_free_energy.svg"))
    if "cascade_theta" in tables:
        estimate = float(tables["cascade_summary"]["polymer_estimate"].iloc[0])
        if math.isfinite(estimate):
            fig = visualization.plot_cascade(tables["cascade_theta"], estimate, report.experiment_id)
            written.append(visualization.save_svg(fig, out_dir / f"{prefix}_cascade.svg"))
    return written
