#!/usr/bin/env python3
"""Step-size selection, a seed batch, and the report tables, end to end.

Uses the synthetic testbed so it runs anywhere: a short sweep picks alpha
per optimizer, a batch produces result rows, and the report renders the
summary and ranking tables the CLI prints.
"""
import tempfile
from pathlib import Path

from forgetbench import cli
from forgetbench import config as cfg
from forgetbench import runner
from forgetbench.optim import OptimizerConfig

base = cfg.ExperimentConfig(
    testbed=cfg.SYNTH,
    optimizer=OptimizerConfig("sgd", 0.05),
    metrics=cfg.MetricSettings(every=0),
)

grid = [2.0 ** -k for k in range(3, 11)]
print(f"sweeping {len(grid)} step sizes x 3 seeds per optimizer "
      "(objective: mean steps to finish all four phases)")
sweep = runner.sweep_alpha(base, grid=grid, seeds=[100, 101, 102], workers=1)
for kind, alpha in sweep.best.items():
    entries = [e for e in sweep.entries if e.optimizer == kind and not e.disqualified]
    chosen = next(e for e in entries if e.alpha == alpha)
    print(f"  {kind:>9}: alpha {alpha:.6f}  ({chosen.objective:.1f} steps, "
          f"{chosen.n_completed} completed)")

print("\nrunning 6 seeds per optimizer at the selected alphas")
rows = []
for kind, alpha in sweep.best.items():
    config = cfg.with_optimizer(base, kind, alpha)
    for result in runner.run_batch(config, seeds=range(6), workers=1):
        rows.append(cli.result_row(config, result))

with tempfile.TemporaryDirectory() as tmp:
    cli.write_results(rows, [], tmp)
    back = cli.read_results(tmp)
    print(f"wrote and re-read {len(back)} result rows from {Path(tmp).name}/results.csv\n")

print("== summary ==")
for line in cli.summary_table(rows):
    print(line)
print("\n== rankings ==")
for line in cli.ranking_table(rows):
    print(line)
