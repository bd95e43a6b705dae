"""
Tests for the reference battery.
Runs the cheap criteria at reduced scale and checks the outcome plumbing.
"""

import math

import pandas as pd
import pytest

from src import suite
from src.reports import RunReport
from src.suite import (
    SUITE_SEED,
    SuiteOutcome,
    SuiteScale,
    _absorb,
    determinism_criterion,
    dp_criterion,
    exact_oracle_criterion,
    format_matrix,
    grid_supremum,
    legendre_criterion,
    manifest_mismatches,
)


def test_grid_supremum():
    """Test zoomed grid maximization on a parabola."""
    assert grid_supremum(lambda t: -(t - 2.0) ** 2, 0.0, 5.0) == pytest.approx(0.0, abs=1e-12)
    assert grid_supremum(lambda t: t, 0.0, 3.0) == pytest.approx(3.0)


def test_quick_scale():
    """Test the reduced smoke-run sizes."""
    quick = SuiteScale.quick()
    assert (quick.mc_replicates, quick.polymer_replicates) == (10_000, 300)
    assert (quick.legendre_tuples, quick.dp_environments) == (50, 10)


def test_legendre_criterion():
    """Test closed forms against grid maximization on a few random tuples."""
    report = legendre_criterion(SUITE_SEED, SuiteScale(legendre_tuples=5))
    table = report.tables["legendre"]
    assert len(table) == 15
    assert (table.loc[table["function"] == "legendre_sup", "t0"] > 0).all()
    assert len(report.checks) == 4
    assert report.passed


def test_dp_criterion():
    """Test the transfer recursion oracle on one environment per (d, n)."""
    report = dp_criterion(SUITE_SEED, SuiteScale(dp_environments=1))
    assert len(report.tables["dp_oracle"]) == 11
    assert report.passed


def test_exact_oracle_criterion():
    """Test the Rademacher and Laplace oracles at a small sample size."""
    report = exact_oracle_criterion(SUITE_SEED, SuiteScale(mc_replicates=2000), 5.0, 1)
    assert len(report.tables["rademacher"]) == 20
    assert report.tables["rademacher"]["dominates"].all()
    assert report.passed


def test_determinism_criterion(tmp_path):
    """Test that repeated serial runs and a four-worker run write identical CSV bytes."""
    report = determinism_criterion(SUITE_SEED, tmp_path)
    assert [c.name for c in report.checks] == ["CSV bytes stable across consecutive runs",
                                               "CSV bytes independent of --jobs"]
    assert report.passed
    files = set(report.tables["digests"]["file"])
    assert "det_polymer_energy.csv" in files
    assert "det_cascade_cascade_theta.csv" in files
    assert (tmp_path / "determinism" / "run3_jobs4" / "det_martingale_verification.csv").exists()


def test_manifest_mismatches():
    """Test that differing digests and files listed once are both reported."""
    first = pd.DataFrame({"file": ["a.csv", "b.csv", "c.csv"], "sha256": ["1", "2", "3"]})
    second = pd.DataFrame({"file": ["a.csv", "b.csv", "d.csv"], "sha256": ["1", "9", "4"]})
    assert manifest_mismatches(first, second) == ["b.csv", "c.csv", "d.csv"]
    assert manifest_mismatches(first, first.copy()) == []


def test_reference_suite_reruns_battery(monkeypatch, tmp_path):
    """Test that the suite reruns its criteria with another worker count and compares the CSVs."""
    def cheap_criteria(seed, scale, z, jobs):
        return [("legendre_oracle", lambda: legendre_criterion(seed, SuiteScale(legendre_tuples=2)))]

    monkeypatch.setattr(suite, "_criteria", cheap_criteria)
    monkeypatch.setattr(suite, "determinism_criterion",
                        lambda seed, out_dir: RunReport("determinism", "suite", seed, "suite"))
    outcome = suite.reference_suite(tmp_path, jobs=1)
    determinism = outcome.reports[-1]
    assert [c.name for c in determinism.checks] == ["suite CSV bytes reproduced with --jobs 4"]
    assert outcome.exit_code == 0
    assert (tmp_path / "determinism" / "suite_jobs4" / "legendre_oracle" / "legendre_oracle_legendre.csv").exists()
    manifest = pd.read_csv(outcome.manifest)
    assert "legendre_oracle/legendre_oracle_legendre.csv" in set(manifest["file"])


def test_absorb_prefixes_cases():
    """Test that sub-reports are folded in with a case column and prefixed checks."""
    target = RunReport("battery", "suite", 1, "suite")
    source = RunReport("sub", "martingale_verify", 1, "suite")
    source.tables["verification"] = pd.DataFrame({"x": [0.1]})
    source.add_check("curve at n=10", True)
    _absorb(target, source, "a")
    _absorb(target, source, "b")
    assert list(target.tables["verification"]["case"]) == ["a", "b"]
    assert [c.name for c in target.checks] == ["a: curve at n=10", "b: curve at n=10"]


def test_outcome_and_matrix():
    """Test exit codes and the pass/fail matrix."""
    good = RunReport("legendre_oracle", "suite", 1, "suite")
    good.add_check("ok", True)
    bad = RunReport("cascade", "suite", 1, "suite")
    bad.add_check("broken", False)
    assert SuiteOutcome([good]).exit_code == 0
    outcome = SuiteOutcome([good, bad], {"legendre_oracle": 1.25})
    assert outcome.exit_code == 2
    lines = format_matrix(outcome)
    assert lines[0].split() == ["criterion", "status", "checks", "seconds"]
    assert lines[1].split()[:3] == ["legendre_oracle", "PASS", "1/1"]
    assert lines[2].split()[:2] == ["cascade", "FAIL"]
    assert lines[2].split()[-1] == str(math.nan)
    assert lines[-1] == "overall: FAIL"
