"""
Report emission: CSV tables, a plain-text summary and a checksum manifest.
"""
import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List

import pandas as pd

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.10g"


@dataclass(frozen=True)
class Check:
    """A hard pass/fail check of a run."""
    name: str
    passed: bool
    detail: str = ""


@dataclass
class RunReport:
    experiment_id: str
    kind: str
    seed: int
    seed_source: str
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    checks: List[Check] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def add_check(self, name: str, passed: bool, detail: str = "") -> None:
        self.checks.append(Check(name, bool(passed), detail))

    def summary_lines(self) -> List[str]:
        lines = [
            f"experiment: {self.experiment_id}",
            f"kind: {self.kind}",
            f"seed: {self.seed} ({self.seed_source})",
            f"status: {'PASS' if self.passed else 'FAIL'}",
        ]
        for check in self.checks:
            mark = "pass" if check.passed else "FAIL"
            lines.append(f"  [{mark}] {check.name}" + (f": {check.detail}" if check.detail else ""))
        for note in self.notes:
            lines.append(f"note: {note}")
        return lines


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    """
    Write a table with a fixed float format and newline so equal data gives equal bytes.

    Args:
        frame (pd.DataFrame): Table.
        path (Path): Target file; parent directories are created.

    Returns:
        Path: The written path.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.debug("wrote %s (%d rows)", path, len(frame))
    return path


def write_report(report: RunReport, out_dir: Path, prefix: str) -> List[Path]:
    """Write every table as <prefix>_<name>.csv and the summary as <prefix>_summary.txt."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [write_csv(frame, out_dir / f"{prefix}_{name}.csv") for name, frame in report.tables.items()]
    summary = out_dir / f"{prefix}_summary.txt"
    summary.write_text("\n".join(report.summary_lines()) + "\n", encoding="utf-8")
    written.append(summary)
    return written


def file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def checksum_manifest(paths: List[Path], root: Path) -> pd.DataFrame:
    """sha256 of each CSV, relative to root, sorted by name."""
    records = [{"file": str(Path(p).relative_to(root)), "sha256": file_digest(p)}
               for p in paths if str(p).endswith(".csv")]
    return pd.DataFrame(records, columns=["file", "sha256"]).sort_values("file", ignore_index=True)
