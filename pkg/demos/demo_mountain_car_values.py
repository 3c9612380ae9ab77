#!/usr/bin/env python3
"""Mountain Car under the fixed accelerate-with-motion policy.

Shows the exact state values on the 6x6 probe grid (negated steps to the
goal by deterministic rollout) and then lets a small value network learn
them online with semi-gradient TD(0).
"""
import numpy as np

from forgetbench import config as cfg
from forgetbench import runner
from forgetbench.envs import MountainCar, true_value
from forgetbench.optim import OptimizerConfig

env = MountainCar()
print("true values on the 6x6 probe grid (rows: position low->high):")
grid = env.probe_states()
values = np.array([true_value(env, s) for s in grid]).reshape(6, 6)
for i in range(6):
    row = "  ".join(f"{v:7.0f}" for v in values[i])
    print(f"  p={grid[i * 6][0]:+.2f}: {row}")

print("\nepisode lengths from a few random starts:")
rng = np.random.default_rng(0)
for _ in range(5):
    s = env.reset(rng)
    print(f"  start p {s[0]:+.3f} -> {int(-true_value(env, s))} steps")

config = cfg.ExperimentConfig(
    testbed="mountain_car",
    optimizer=OptimizerConfig("adam", 2.0 ** -11),
    rl=cfg.RLSettings(episodes=40, eval_transitions=20_000, eval_states=200),
    metrics=cfg.MetricSettings(every=5),
)
print("\nlearning the values online with TD(0) + adam:")
context = runner.build_rl_context(config)
result = runner.run_rl(context, config, seed=0)
for rec in result.records:
    if rec.index % 5 == 0 or rec.index == 1:
        extra = ""
        if rec.overlap is not None:
            extra = f"  overlap {rec.overlap:8.4f}  interference {rec.pi:+.4f}"
        print(f"  episode {rec.index:3d}: value error {rec.rmsve:7.3f}{extra}")
