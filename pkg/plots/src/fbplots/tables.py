"""Pure data transforms from result files to plottable tables.

Input is whatever `forgetbench run` wrote: results.csv rows (one per seed,
fixed header) and metrics.jsonl lines (one per step or episode). Nothing
here imports the harness; the files are the contract.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

RESULTS_FILE = "results.csv"
LOGS_FILE = "metrics.jsonl"

REQUIRED_COLUMNS = ("testbed", "optimizer", "alpha", "seed", "status")

OPTIMIZER_ORDER = ("sgd", "momentum", "rmsprop", "adam")


class SchemaError(ValueError):
    """A required column or field is missing from the input files."""


def read_rows(results_dir) -> list:
    path = Path(results_dir) / RESULTS_FILE
    if not path.exists():
        raise SchemaError(f"no {RESULTS_FILE} under {results_dir}")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for column in REQUIRED_COLUMNS:
            if column not in header:
                raise SchemaError(f"{path} is missing column {column!r}")
        rows = [dict(r) for r in reader]
    if not rows:
        raise SchemaError(f"{path} holds no result rows")
    return rows


def read_logs(results_dir) -> list:
    path = Path(results_dir) / LOGS_FILE
    if not path.exists():
        raise SchemaError(f"no {LOGS_FILE} under {results_dir}")
    lines = []
    with path.open() as fh:
        for i, raw in enumerate(fh, start=1):
            rec = json.loads(raw)
            for field in ("seed", "index"):
                if field not in rec:
                    raise SchemaError(f"{path}:{i} is missing field {field!r}")
            lines.append(rec)
    return lines


def load_directories(dirs, need_logs=False) -> list:
    """One entry per run: row dict plus (optionally) its log records.

    Logs are joined to rows by seed within each directory, so a directory
    must hold one optimizer configuration when logs are needed.
    """
    runs = []
    for d in dirs:
        rows = read_rows(d)
        logs_by_seed = {}
        if need_logs:
            optimizers = {r["optimizer"] for r in rows}
            if len(optimizers) > 1:
                raise SchemaError(
                    f"{d} mixes optimizers {sorted(optimizers)}; curve figures "
                    "join logs to rows by seed and need one configuration per "
                    "directory"
                )
            for rec in read_logs(d):
                logs_by_seed.setdefault(int(rec["seed"]), []).append(rec)
        for row in rows:
            runs.append({
                "dir": str(d),
                "row": row,
                "logs": sorted(
                    logs_by_seed.get(int(row["seed"]), []), key=lambda r: r["index"]
                ),
            })
    return runs


def _float(value):
    if value is None or value == "":
        return None
    return float(value)


def mean_se(values) -> tuple:
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    se = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return float(values.mean()), se, n


def ordered_optimizers(present) -> list:
    known = [k for k in OPTIMIZER_ORDER if k in present]
    extra = sorted(set(present) - set(known))
    return known + extra


def bar_table(rows, metric) -> list:
    """Per-optimizer (name, mean, se, n) for one scalar result column,
    completed runs only, sorted best first (higher is better)."""
    if rows and metric not in rows[0]:
        raise SchemaError(f"result rows are missing column {metric!r}")
    groups = {}
    for row in rows:
        value = _float(row.get(metric))
        if row.get("status") != "completed" or value is None:
            continue
        groups.setdefault(row["optimizer"], []).append(value)
    table = []
    for name in ordered_optimizers(groups):
        mean, se, n = mean_se(groups[name])
        table.append({"optimizer": name, "mean": mean, "se": se, "n": n})
    table.sort(key=lambda entry: entry["mean"], reverse=True)
    return table


def phase_curve_table(runs, metric) -> dict:
    """{(optimizer, phase): list of (step, mean, se, n)} with the cutoff rule:
    points are kept only while at least half of the optimizer's runs are
    still inside the phase (have a record at that step)."""
    per_opt = {}
    for run in runs:
        per_opt.setdefault(run["row"]["optimizer"], []).append(run)
    curves = {}
    for optimizer, members in per_opt.items():
        n_runs = len(members)
        phases = sorted({
            rec["phase"] for run in members for rec in run["logs"]
            if rec.get("phase") is not None
        })
        for phase in phases:
            sequences = []
            for run in members:
                values = [
                    _float(rec.get(metric))
                    for rec in run["logs"] if rec.get("phase") == phase
                ]
                sequences.append([v for v in values if v is not None])
            points = []
            step = 1
            while True:
                alive = [s[step - 1] for s in sequences if len(s) >= step]
                if 2 * len(alive) < n_runs or not alive:
                    break
                mean, se, _ = mean_se(alive)
                points.append((step, mean, se, len(alive)))
                step += 1
            if points:
                curves[(optimizer, phase)] = points
    return curves


def episode_curve_table(runs, metric) -> dict:
    """{optimizer: list of (episode, mean, se, n)} over all runs' logs."""
    per_opt = {}
    for run in runs:
        per_opt.setdefault(run["row"]["optimizer"], []).append(run)
    curves = {}
    for optimizer, members in per_opt.items():
        by_episode = {}
        for run in members:
            for rec in run["logs"]:
                value = _float(rec.get(metric))
                if value is not None:
                    by_episode.setdefault(int(rec["index"]), []).append(value)
        points = []
        for episode in sorted(by_episode):
            mean, se, n = mean_se(by_episode[episode])
            points.append((episode, mean, se, n))
        if points:
            curves[optimizer] = points
    return curves


def sensitivity_table(rows, metric, param="alpha") -> dict:
    """{optimizer: list of (param value, mean, se, n)}.

    A (optimizer, param) cell containing any numerically unstable run is
    dropped entirely, so lines only cover settings where every run was
    stable.
    """
    if rows and param not in rows[0]:
        raise SchemaError(f"result rows are missing column {param!r}")
    cells = {}
    for row in rows:
        key = (row["optimizer"], _float(row.get(param)))
        cell = cells.setdefault(key, {"values": [], "unstable": False})
        if row.get("status") == "numerical-instability":
            cell["unstable"] = True
        value = _float(row.get(metric))
        if row.get("status") == "completed" and value is not None:
            cell["values"].append(value)
    table = {}
    for (optimizer, x), cell in sorted(cells.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        if cell["unstable"] or not cell["values"] or x is None:
            continue
        mean, se, n = mean_se(cell["values"])
        table.setdefault(optimizer, []).append((x, mean, se, n))
    return table
