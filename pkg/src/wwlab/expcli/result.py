"""Experiment results: tables, fits, threshold checks and provenance."""

from __future__ import annotations

import operator
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

from .. import __version__
from ..fitting import PowerFit

_OPS = {"<=": operator.le, ">=": operator.ge, "<": operator.lt, ">": operator.gt}


@dataclass
class Table:
    columns: List[str]
    rows: List[Dict[str, Any]] = field(default_factory=list)

    def add(self, **row):
        self.rows.append(row)

    def column(self, name):
        return [r[name] for r in self.rows]


@dataclass
class PlotSpec:
    name: str
    table: str
    x: str
    y: str
    group: Optional[str] = None
    loglog: bool = True
    fits: Dict[str, str] = field(default_factory=dict)   # group value -> fit name


@dataclass
class ExperimentResult:
    scenario: str
    thresholds: Dict[str, float]
    tables: Dict[str, Table] = field(default_factory=dict)
    fits: Dict[str, dict] = field(default_factory=dict)
    checks: Dict[str, dict] = field(default_factory=dict)
    findings: Dict[str, Any] = field(default_factory=dict)
    skipped: List[str] = field(default_factory=list)
    plots: List[PlotSpec] = field(default_factory=list)
    provenance: Dict[str, Any] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)   # kept out of summary.json

    def table(self, name, columns) -> Table:
        if name not in self.tables:
            self.tables[name] = Table(list(columns))
        return self.tables[name]

    def add_fit(self, name: str, fit: PowerFit):
        self.fits[name] = fit.as_dict()

    def check(self, name: str, value, op: str, key: str, offset: float = 0.0):
        """Compare ``value op threshold[key] + offset`` if the threshold is declared."""
        if key not in self.thresholds:
            if name not in self.skipped:
                self.skipped.append(name)
            return None
        thr = float(self.thresholds[key]) + offset
        passed = bool(_OPS[op](float(value), thr))
        self.checks[name] = {"value": float(value), "op": op, "threshold": thr,
                             "threshold_key": key, "passed": passed}
        return passed

    def check_flag(self, name: str, ok: bool, key: str):
        """Boolean check, active when ``key`` is declared with a nonzero value."""
        if key not in self.thresholds or not self.thresholds[key]:
            if name not in self.skipped:
                self.skipped.append(name)
            return None
        self.checks[name] = {"value": bool(ok), "op": "==", "threshold": True,
                             "threshold_key": key, "passed": bool(ok)}
        return bool(ok)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    def summary(self) -> dict:
        return {
            "scenario": self.scenario,
            "passed": self.passed,
            "note": None if self.checks else "no checks declared",
            "thresholds": dict(self.thresholds),
            "checks": self.checks,
            "skipped_checks": list(self.skipped),
            "fits": self.fits,
            "findings": self.findings,
            "tables": sorted(self.tables),
            "plots": [asdict(p) for p in self.plots],
            "provenance": self.provenance,
        }


def provenance(cfg) -> dict:
    return {"config_hash": cfg.config_hash(), "code_version": __version__,
            "seed": cfg.seed}
