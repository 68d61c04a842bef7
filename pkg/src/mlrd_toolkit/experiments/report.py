"""ConvergenceReport model, canonical JSON, digest and CSV summary."""
from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field, computed_field

from mlrd_toolkit.experiments.kinds import Experiment

Matrix = List[List[float]]

CSV_COLUMNS = ["experiment", "block", "row", "col", "empirical", "target", "distance", "se", "tolerance", "passed"]


def to_matrix(a: Any) -> Matrix:
    return np.atleast_2d(np.asarray(a, dtype=float)).tolist()


class MatrixComparison(BaseModel):
    label: str
    empirical: Matrix
    target: Matrix
    standard_error: Matrix
    max_abs: float
    frobenius: float
    tolerance: float
    se_multiplier: float = 4.0
    passed: bool
    note: Optional[str] = None

    @classmethod
    def build(
        cls,
        label: str,
        empirical: Any,
        target: Any,
        se: Any,
        tolerance: float,
        se_multiplier: float = 4.0,
        note: Optional[str] = None,
    ) -> "MatrixComparison":
        emp = np.atleast_2d(np.asarray(empirical, dtype=float))
        tgt = np.atleast_2d(np.asarray(target, dtype=float))
        err = np.atleast_2d(np.asarray(se, dtype=float))
        diff = np.abs(emp - tgt)
        threshold = np.maximum(tolerance, se_multiplier * err)
        return cls(
            label=label,
            empirical=emp.tolist(),
            target=tgt.tolist(),
            standard_error=err.tolist(),
            max_abs=float(np.max(diff)),
            frobenius=float(np.linalg.norm(emp - tgt)),
            tolerance=float(tolerance),
            se_multiplier=float(se_multiplier),
            passed=bool(np.all(diff <= threshold)),
            note=note,
        )


class NormalityStat(BaseModel):
    label: str
    ks_statistic: float
    p_value: float
    alpha: float
    passed: bool
    reference: str = "standard_normal"


class ScalarCheck(BaseModel):
    label: str
    value: float
    bound: float
    relation: str
    passed: bool
    note: Optional[str] = None


class ReportTiming(BaseModel):
    started_at: str
    duration_ms: float
    stages_ms: Dict[str, float] = Field(default_factory=dict)


class ConvergenceReport(BaseModel):
    experiment: Experiment
    version: str
    spec_digest: str
    config: Dict[str, Any]
    comparisons: List[MatrixComparison] = Field(default_factory=list)
    normality: List[NormalityStat] = Field(default_factory=list)
    checks: List[ScalarCheck] = Field(default_factory=list)
    normalizers: Dict[str, Matrix] = Field(default_factory=dict)
    diagnostics: Dict[str, Any] = Field(default_factory=dict)
    flags: Dict[str, bool] = Field(default_factory=dict)
    digest: Optional[str] = None
    timing: Optional[ReportTiming] = None

    @computed_field  # type: ignore[prop-decorator]
    @property
    def passed(self) -> bool:
        return (
            all(c.passed for c in self.comparisons)
            and all(s.passed for s in self.normality)
            and all(c.passed for c in self.checks)
        )

    def canonical_json(self) -> str:
        """Sorted, timing-free JSON: the digest input and the main report file body."""
        payload = self.model_dump(mode="json", exclude={"timing", "digest"})
        return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)

    def compute_digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def sealed(self) -> "ConvergenceReport":
        return self.model_copy(update={"digest": self.compute_digest()})

    def report_json(self) -> str:
        payload = self.model_dump(mode="json", exclude={"timing"})
        return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def parse(cls, text: str) -> "ConvergenceReport":
        data = json.loads(text)
        data.pop("passed", None)
        return cls.model_validate(data)

    def csv_rows(self) -> List[List[Any]]:
        rows: List[List[Any]] = []
        for comp in self.comparisons:
            emp = np.asarray(comp.empirical)
            tgt = np.asarray(comp.target)
            se = np.asarray(comp.standard_error)
            for (i, j), value in np.ndenumerate(emp):
                rows.append([
                    self.experiment.value, comp.label, i + 1, j + 1, repr(float(value)), repr(float(tgt[i, j])),
                    repr(float(abs(value - tgt[i, j]))), repr(float(se[i, j])), repr(comp.tolerance), comp.passed,
                ])
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        writer.writerows(self.csv_rows())
        return buf.getvalue()


def write_report(report: ConvergenceReport, out_dir: Path, fmt: str = "json") -> List[Path]:
    """Write <experiment>_report.json (timing-free), the timing sidecar and/or the CSV summary."""
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{report.experiment.value}_report"
    written: List[Path] = []
    if fmt in ("json", "both"):
        path = out_dir / f"{stem}.json"
        path.write_text(report.report_json(), encoding="utf-8")
        written.append(path)
        if report.timing is not None:
            side = out_dir / f"{stem}.timing.json"
            side.write_text(report.timing.model_dump_json(indent=2) + "\n", encoding="utf-8")
            written.append(side)
    if fmt in ("csv", "both"):
        path = out_dir / f"{report.experiment.value}_summary.csv"
        path.write_text(report.to_csv(), encoding="utf-8")
        written.append(path)
    return written
