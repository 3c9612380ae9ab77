"""Command-line entry point and result persistence.

Four subcommands: `ingest` validates local IDX files and records their
checksums, `sweep` selects step sizes, `run` executes seed batches, and
`report` turns result rows back into summary and ranking tables. Result
rows go to CSV with a fixed header, per-step/per-episode metric logs to
line-delimited JSON, and a manifest records what produced them.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfg
from . import data as datasets
from . import runner
from .errors import ForgetBenchError

RESULT_COLUMNS = (
    "testbed",
    "optimizer",
    "alpha",
    "mu",
    "rho",
    "seed",
    "status",
    "phase1_steps",
    "phase2_steps",
    "phase3_steps",
    "phase4_steps",
    "retention",
    "relearning",
    "overlap_final",
    "overlap_mean",
    "pi_final",
    "pi_mean",
    "rmsve_mean",
)

SWEEP_COLUMNS = ("optimizer", "alpha", "objective", "n_completed", "n_unstable", "disqualified")

RESULTS_FILE = "results.csv"
LOGS_FILE = "metrics.jsonl"
MANIFEST_FILE = "manifest.json"
SWEEP_FILE = "sweep.csv"

ARTIFACT_VERSION = "0.1.0"


def _fmt(value) -> str:
    """Empty string for missing; repr for floats so round-trips are exact."""
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _mean_or_none(values):
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def result_row(config: cfg.ExperimentConfig, result) -> dict:
    """Flatten one run result into the fixed CSV schema."""
    opt = config.optimizer
    row = {c: None for c in RESULT_COLUMNS}
    row.update(
        testbed=config.testbed,
        optimizer=opt.kind,
        alpha=opt.alpha,
        mu=opt.mu,
        rho=opt.rho,
        seed=result.seed,
        status=result.status,
    )
    if isinstance(result, runner.SupervisedRunResult):
        for i, n in enumerate(result.phase_lengths[:4], start=1):
            row[f"phase{i}_steps"] = n
        row["retention"] = result.retention
        row["relearning"] = result.relearning
        final_phase = len(result.phase_lengths)
        finals = [r for r in result.records if r.phase == final_phase]
        row["overlap_final"] = _mean_or_none([r.overlap for r in finals])
        row["pi_final"] = _mean_or_none([r.pi for r in finals])
        row["overlap_mean"] = _mean_or_none([r.overlap for r in result.records])
        row["pi_mean"] = _mean_or_none([r.pi for r in result.records])
    else:
        records = result.records
        row["rmsve_mean"] = _mean_or_none([r.rmsve for r in records])
        overlaps = [r.overlap for r in records if r.overlap is not None]
        pis = [r.pi for r in records if r.pi is not None]
        row["overlap_final"] = overlaps[-1] if overlaps else None
        row["pi_final"] = pis[-1] if pis else None
        row["overlap_mean"] = _mean_or_none(overlaps)
        row["pi_mean"] = _mean_or_none(pis)
    return row


def metric_log_lines(result) -> list:
    run_id = f"seed{result.seed}"
    lines = []
    for rec in result.records:
        lines.append(
            {
                "run": run_id,
                "seed": result.seed,
                "index": rec.index,
                "phase": rec.phase,
                "overlap": rec.overlap,
                "pi": rec.pi,
                "rmsve": rec.rmsve,
                "loss": rec.loss,
            }
        )
    return lines


def write_results(rows, logs, out_dir, manifest=None):
    """results.csv + metrics.jsonl (+ manifest.json); returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results_path = out / RESULTS_FILE
    with results_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in RESULT_COLUMNS])
    logs_path = out / LOGS_FILE
    with logs_path.open("w") as fh:
        for line in logs:
            fh.write(json.dumps(line, sort_keys=True) + "\n")
    paths = [results_path, logs_path]
    if manifest is not None:
        manifest_path = out / MANIFEST_FILE
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        paths.append(manifest_path)
    return paths


def read_results(results_dir) -> list:
    """Rows as dicts of plain strings, exactly as written."""
    path = Path(results_dir) / RESULTS_FILE
    if not path.exists():
        raise ForgetBenchError(f"no {RESULTS_FILE} under {results_dir}")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        return [dict(r) for r in reader]


def dataset_checksums(config: cfg.ExperimentConfig) -> dict:
    if config.testbed == cfg.SYNTH:
        d = runner.load_testbed_dataset(config)
        digest = hashlib.sha256(d.images.tobytes() + d.labels.tobytes()).hexdigest()
        return {"synth": digest}
    if config.is_supervised:
        out = {}
        for p in datasets.idx_file_candidates(config.data_dir, config.testbed):
            if p.exists():
                out[p.name] = hashlib.sha256(p.read_bytes()).hexdigest()
        return out
    return {}


def build_manifest(config, command, seeds) -> dict:
    return {
        "artifact_version": ARTIFACT_VERSION,
        "command": command,
        "config_hash": cfg.config_hash(config),
        "seeds": list(seeds),
        "dataset_checksums": dataset_checksums(config),
        "created_unix": time.time(),
    }


# -- report tables -----------------------------------------------------------

PHASE_METRICS = ("phase1_steps", "phase2_steps", "phase3_steps", "phase4_steps")

RANKED_METRICS_SUPERVISED = (
    ("retention", "higher", 0.01),
    ("relearning", "higher", None),
    ("overlap_final", "lower", None),
    ("pi_final", "lower", None),
)
RANKED_METRICS_RL = (
    ("overlap_final", "lower", None),
    ("pi_final", "lower", None),
)


def summary_table(rows) -> list:
    """Per-optimizer phase-length and metric means (mean +/- stderr) as text."""
    testbed = rows[0]["testbed"] if rows else "?"
    supervised = any(r.get("phase1_steps") for r in rows)
    metrics = PHASE_METRICS + ("retention", "relearning") if supervised else ("rmsve_mean",)
    lines = [f"testbed: {testbed}"]
    header = ["optimizer"] + [m for m in metrics] + ["n", "excluded"]
    lines.append("  ".join(f"{h:>14}" for h in header))
    for kind in runner.KINDS:
        of_kind = [r for r in rows if r["optimizer"] == kind]
        if not of_kind:
            continue
        cells = [f"{kind:>14}"]
        n = n_excluded = 0
        for m in metrics:
            summary = runner.aggregate(of_kind, ("optimizer",), m)
            if summary:
                s = summary[0]
                cells.append(f"{s['mean']:>8.2f}±{s['stderr']:<5.2f}")
                n, n_excluded = s["n"], s["n_excluded"]
            else:
                cells.append(f"{'-':>14}")
        cells.append(f"{n:>14}")
        cells.append(f"{n_excluded:>14}")
        lines.append("  ".join(cells))
    return lines


def ranking_table(rows) -> list:
    """One ranking line per metric, shared ranks rendered '=k'."""
    supervised = any(r.get("phase1_steps") for r in rows)
    spec = RANKED_METRICS_SUPERVISED if supervised else RANKED_METRICS_RL
    lines = []
    for metric, direction, negligible in spec:
        summaries = runner.aggregate(rows, ("optimizer",), metric)
        ranking = runner.rank_optimizers(summaries, metric, direction, negligible)
        if ranking.no_meaningful_ranking:
            lines.append(f"{metric:>14}: no meaningful ranking (all below {negligible})")
            continue
        if not ranking.entries:
            lines.append(f"{metric:>14}: no data")
            continue
        cells = [f"{name} {label}" for name, label in ranking.entries]
        if ranking.missing:
            cells.append(f"missing: {','.join(ranking.missing)}")
        lines.append(f"{metric:>14}: " + "  ".join(cells))
    return lines


# -- subcommands -------------------------------------------------------------

RETRIEVAL_NOTE = """\
Expected files (standard IDX training split, gzipped or plain) under
<dir>/<dataset>/:
  train-images-idx3-ubyte.gz
  train-labels-idx1-ubyte.gz
Obtain them from the usual dataset distribution points and copy them in;
this tool never downloads anything. The holdout (t10k) files are not used.
"""


def _cmd_ingest(args) -> int:
    dataset_id = args.dataset
    paths = datasets.idx_file_candidates(args.dir, dataset_id)
    missing = [p for p in paths if not p.exists()]
    if missing:
        print(f"missing files for {dataset_id}:", file=sys.stderr)
        for p in missing:
            print(f"  {p}", file=sys.stderr)
        print(RETRIEVAL_NOTE, file=sys.stderr)
        return 1
    ds = datasets.load_dataset(args.dir, dataset_id)
    checksums = {
        p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in paths
    }
    out = Path(args.dir) / dataset_id / "checksums.json"
    out.write_text(json.dumps(checksums, indent=2, sort_keys=True) + "\n")
    counts = ds.class_counts()
    print(f"{dataset_id}: {ds.n} examples, classes {sorted(counts)}")
    for cls in sorted(counts):
        print(f"  class {cls}: {counts[cls]}")
    print(f"checksums written to {out}")
    return 0


def _cmd_sweep(args) -> int:
    config = cfg.load_config(args.config)
    optimizers = [args.optimizer] if args.optimizer else None
    result = runner.sweep_alpha(config, optimizers=optimizers, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sweep_path = out / SWEEP_FILE
    with sweep_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_COLUMNS)
        for entry in result.table():
            writer.writerow([_fmt(entry[c]) for c in SWEEP_COLUMNS])
    manifest = build_manifest(config, "sweep", config.sweep_seeds)
    manifest["criterion"] = result.criterion
    manifest["best_alpha"] = result.best
    (out / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    for kind, alpha in result.best.items():
        print(f"{kind}: alpha = {alpha}")
    print(f"sweep table written to {sweep_path}")
    return 0


def _cmd_run(args) -> int:
    config = cfg.load_config(args.config)
    seeds = cfg.parse_seed_spec(args.seeds) if args.seeds else config.seeds
    results = runner.run_batch(config, seeds, workers=args.workers)
    rows = [result_row(config, r) for r in results]
    logs = []
    for r in results:
        logs.extend(metric_log_lines(r))
    manifest = build_manifest(config, "run", seeds)
    paths = write_results(rows, logs, args.out, manifest)
    n_done = sum(1 for r in results if r.completed)
    print(f"{len(results)} runs ({n_done} completed) -> {paths[0].parent}")
    return 0


def _cmd_report(args) -> int:
    rows = read_results(args.results)
    if not rows:
        print("no result rows found", file=sys.stderr)
        return 1
    wanted = args.style
    if wanted in (None, "table4"):
        print("== summary ==")
        for line in summary_table(rows):
            print(line)
    if wanted in (None, "table7"):
        print("== rankings ==")
        for line in ranking_table(rows):
            print(line)
    return 0


def execute(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="forgetbench",
        description="Measure catastrophic forgetting under different optimizers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate local IDX files and record checksums")
    p.add_argument("--dataset", required=True, choices=[cfg.MNIST, cfg.FASHION_MNIST])
    p.add_argument("--dir", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("sweep", help="select the best step size per optimizer")
    p.add_argument("--config", required=True)
    p.add_argument("--optimizer", choices=list(runner.KINDS))
    p.add_argument("--out", default="sweep_results")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("run", help="execute a seed batch and write result rows")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", help="inclusive range a..b, overrides the config")
    p.add_argument("--out", default="results")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("report", help="summaries and rankings from result rows")
    p.add_argument("--results", required=True)
    p.add_argument("--style", choices=["table4", "table7"])
    p.set_defaults(func=_cmd_report)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ForgetBenchError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def main():  # console entry point
    raise SystemExit(execute())
