"""Report emission: summary.json, tables/*.csv and plots/*.svg."""

from __future__ import annotations

import csv
import json
import math
import os
from typing import Iterable

import numpy as np

from .result import ExperimentResult, PlotSpec, Table

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _clean(obj):
    """Make a JSON-safe copy: NaN/inf become null, numpy scalars become Python ones."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def summary_json(result: ExperimentResult) -> str:
    return json.dumps(_clean(result.summary()), sort_keys=True, indent=2) + "\n"


def write_table(path, table: Table) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=table.columns, lineterminator="\n")
        w.writeheader()
        for row in table.rows:
            w.writerow({k: row.get(k) for k in table.columns})


def read_table(path) -> Table:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = list(reader.fieldnames or [])
        rows = []
        for raw in reader:
            row = {}
            for k, v in raw.items():
                try:
                    row[k] = float(v)
                except (TypeError, ValueError):
                    row[k] = v
            rows.append(row)
    return Table(cols, rows)


def _checks_table(result: ExperimentResult) -> Table:
    t = Table(["check", "value", "op", "threshold", "threshold_key", "passed"])
    for name in sorted(result.checks):
        c = result.checks[name]
        t.add(check=name, **c)
    return t


def slope_label(fit: dict) -> str:
    return f"slope = {fit['slope']:.3f}"


def plot(result: ExperimentResult, spec: PlotSpec, path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    table = result.tables[spec.table]
    groups = {}
    for row in table.rows:
        key = str(row[spec.group]) if spec.group else ""
        groups.setdefault(key, []).append(row)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for key, rows in groups.items():
        x = np.array([float(r[spec.x]) for r in rows])
        y = np.array([float(r[spec.y]) for r in rows])
        keep = np.isfinite(y) & (y > 0)
        label = f"{spec.group}={key}" if spec.group else spec.y
        line, = ax.plot(x[keep], y[keep], "o-", label=label)
        fit_name = spec.fits.get(key)
        fit = result.fits.get(fit_name) if fit_name else None
        if fit is not None:
            xs = np.geomspace(fit["x_min"], fit["x_max"], 50)
            ax.plot(xs, fit["constant"] * xs ** fit["slope"], "--", color=line.get_color(),
                    label=f"fit {label}: {slope_label(fit)}")
    if spec.loglog:
        ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(spec.x)
    ax.set_ylabel(spec.y)
    ax.set_title(spec.name)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_report(result: ExperimentResult, out_dir, formats: Iterable[str] = ("json", "csv", "svg")) -> int:
    """Write the report files; returns the exit code (0 iff every declared check passed)."""
    formats = set(formats)
    os.makedirs(out_dir, exist_ok=True)
    if "csv" in formats:
        tdir = os.path.join(out_dir, "tables")
        os.makedirs(tdir, exist_ok=True)
        for name, table in result.tables.items():
            write_table(os.path.join(tdir, f"{name}.csv"), table)
        write_table(os.path.join(tdir, "checks.csv"), _checks_table(result))
    if "svg" in formats and result.plots:
        pdir = os.path.join(out_dir, "plots")
        os.makedirs(pdir, exist_ok=True)
        for spec in result.plots:
            if spec.table in result.tables and result.tables[spec.table].rows:
                plot(result, spec, os.path.join(pdir, f"{spec.name}.svg"))
    if "json" in formats:
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            fh.write(summary_json(result))
        if result.timings:
            with open(os.path.join(out_dir, "timings.json"), "w") as fh:
                json.dump(result.timings, fh, sort_keys=True, indent=2)
    return EXIT_PASS if result.passed else EXIT_FAIL


def load_result(out_dir) -> ExperimentResult:
    """Rebuild a result from a previous report directory (used by the ``report`` command)."""
    with open(os.path.join(out_dir, "summary.json")) as fh:
        summ = json.load(fh)
    res = ExperimentResult(summ["scenario"], summ.get("thresholds", {}))
    res.checks = summ.get("checks", {})
    res.fits = summ.get("fits", {})
    res.findings = summ.get("findings", {})
    res.skipped = summ.get("skipped_checks", [])
    res.provenance = summ.get("provenance", {})
    res.plots = [PlotSpec(**p) for p in summ.get("plots", [])]
    tdir = os.path.join(out_dir, "tables")
    for name in summ.get("tables", []):
        path = os.path.join(tdir, f"{name}.csv")
        if os.path.exists(path):
            res.tables[name] = read_table(path)
    return res
