"""Figure rendering for result directories produced by the harness.

    fbplots --results <dir> [<dir>...] --figure <kind> --out <path>

Kinds: bars (retention/relearning per optimizer), phase-curves (supervised
overlap/interference by phase with the half-runs cutoff), episode-curves
(per-episode value error/overlap/interference with standard-error shading),
sensitivity (scalar metrics against a swept hyperparameter). Output format
follows the --out extension (png, svg, pdf).
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .tables import (  # noqa: E402
    SchemaError,
    bar_table,
    episode_curve_table,
    load_directories,
    ordered_optimizers,
    phase_curve_table,
    sensitivity_table,
)

FIGURE_KINDS = ("bars", "phase-curves", "episode-curves", "sensitivity")

COLORS = {
    "sgd": "tab:blue",
    "momentum": "tab:orange",
    "rmsprop": "tab:green",
    "adam": "tab:red",
}


@dataclass
class FigureSpec:
    kind: str
    results_dirs: list
    out_path: str
    param: str = "alpha"
    metrics: tuple = ()

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}")
        if not self.results_dirs:
            raise SchemaError("no results directories given")


def _color(name):
    return COLORS.get(name, "tab:gray")


def render_bars(spec: FigureSpec, fig):
    rows = []
    for d in spec.results_dirs:
        rows.extend(r["row"] for r in load_directories([d]))
    metrics = spec.metrics or ("retention", "relearning")
    axes = fig.subplots(1, len(metrics), squeeze=False)[0]
    for ax, metric in zip(axes, metrics):
        table = bar_table(rows, metric)
        names = [e["optimizer"] for e in table]
        ax.bar(
            range(len(table)),
            [e["mean"] for e in table],
            yerr=[e["se"] for e in table],
            color=[_color(n) for n in names],
            capsize=3,
        )
        ax.set_xticks(range(len(table)))
        ax.set_xticklabels(names, rotation=20)
        ax.set_title(f"{metric} (higher is better)")
    fig.suptitle("per-optimizer means with standard error, best first")


def render_phase_curves(spec: FigureSpec, fig):
    runs = load_directories(spec.results_dirs, need_logs=True)
    metrics = spec.metrics or ("overlap", "pi")
    phases = sorted({
        rec["phase"] for run in runs for rec in run["logs"]
        if rec.get("phase") is not None
    })
    if not phases:
        raise SchemaError("logs carry no supervised phase records")
    axes = fig.subplots(len(metrics), len(phases), squeeze=False)
    for i, metric in enumerate(metrics):
        curves = phase_curve_table(runs, metric)
        for j, phase in enumerate(phases):
            ax = axes[i][j]
            for (optimizer, curve_phase), points in curves.items():
                if curve_phase != phase:
                    continue
                steps = [p[0] for p in points]
                means = [p[1] for p in points]
                ses = [p[2] for p in points]
                ax.plot(steps, means, label=optimizer, color=_color(optimizer))
                ax.fill_between(
                    steps,
                    [m - s for m, s in zip(means, ses)],
                    [m + s for m, s in zip(means, ses)],
                    alpha=0.25, color=_color(optimizer), linewidth=0,
                )
            if i == 0:
                ax.set_title(f"phase {phase}")
            if j == 0:
                ax.set_ylabel(metric)
    axes[0][0].legend(fontsize="small")
    fig.suptitle("per-phase curves; lines stop once fewer than half the runs remain")


def render_episode_curves(spec: FigureSpec, fig):
    runs = load_directories(spec.results_dirs, need_logs=True)
    metrics = spec.metrics or ("rmsve", "overlap", "pi")
    axes = fig.subplots(1, len(metrics), squeeze=False)[0]
    drew = False
    for ax, metric in zip(axes, metrics):
        curves = episode_curve_table(runs, metric)
        for optimizer in ordered_optimizers(curves):
            points = curves[optimizer]
            episodes = [p[0] for p in points]
            means = [p[1] for p in points]
            ses = [p[2] for p in points]
            ax.plot(episodes, means, label=optimizer, color=_color(optimizer))
            ax.fill_between(
                episodes,
                [m - s for m, s in zip(means, ses)],
                [m + s for m, s in zip(means, ses)],
                alpha=0.25, color=_color(optimizer), linewidth=0,
            )
            drew = True
        ax.set_title(metric)
        ax.set_xlabel("episode")
    if not drew:
        raise SchemaError("logs carry none of the requested episode metrics")
    axes[0].legend(fontsize="small")
    fig.suptitle("per-episode means with standard-error shading")


def render_sensitivity(spec: FigureSpec, fig):
    rows = []
    for d in spec.results_dirs:
        rows.extend(r["row"] for r in load_directories([d]))
    metrics = spec.metrics or ("retention", "relearning")
    axes = fig.subplots(1, len(metrics), squeeze=False)[0]
    for ax, metric in zip(axes, metrics):
        table = sensitivity_table(rows, metric, spec.param)
        for optimizer in ordered_optimizers(table):
            points = table[optimizer]
            xs = [p[0] for p in points]
            means = [p[1] for p in points]
            ses = [p[2] for p in points]
            ax.plot(xs, means, marker="o", markersize=3,
                    label=optimizer, color=_color(optimizer))
            ax.fill_between(
                xs,
                [m - s for m, s in zip(means, ses)],
                [m + s for m, s in zip(means, ses)],
                alpha=0.25, color=_color(optimizer), linewidth=0,
            )
        if spec.param == "alpha":
            ax.set_xscale("log", base=2)
        ax.set_title(metric)
        ax.set_xlabel(spec.param)
    axes[0].legend(fontsize="small")
    fig.suptitle(f"sensitivity to {spec.param}; settings with unstable runs omitted")


RENDERERS = {
    "bars": render_bars,
    "phase-curves": render_phase_curves,
    "episode-curves": render_episode_curves,
    "sensitivity": render_sensitivity,
}


def render(spec: FigureSpec) -> Path:
    """Build the figure and write it; the input files are never touched."""
    width = {"bars": 8, "phase-curves": 12, "episode-curves": 12, "sensitivity": 9}
    fig = plt.figure(figsize=(width[spec.kind], 4.2), dpi=110)
    try:
        RENDERERS[spec.kind](spec, fig)
        out = Path(spec.out_path)
        out.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(out, metadata=_stable_metadata(out.suffix))
    finally:
        plt.close(fig)
    return Path(spec.out_path)


def _stable_metadata(suffix):
    # strip writer timestamps/versions so identical inputs give identical bytes
    if suffix == ".png":
        return {"Software": None}
    if suffix == ".svg":
        return {"Date": None}
    if suffix == ".pdf":
        return {"CreationDate": None}
    return None


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fbplots", description="Render figures from harness result directories."
    )
    parser.add_argument("--results", nargs="+", required=True,
                        help="one or more directories written by the run command")
    parser.add_argument("--figure", required=True, choices=list(FIGURE_KINDS))
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--param", default="alpha",
                        help="swept column for sensitivity figures (alpha, mu, rho)")
    args = parser.parse_args(argv)
    try:
        spec = FigureSpec(args.figure, args.results, args.out, args.param)
        path = render(spec)
    except (SchemaError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
