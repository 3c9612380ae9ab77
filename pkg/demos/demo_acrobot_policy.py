#!/usr/bin/env python3
"""Acrobot's fixed swing-up policy and online value estimation.

The policy applies positive torque while the inner joint swings negative,
coasts while it swings positive, and brakes when the outer joint spins at
least ten times faster. Episode lengths concentrate around 156 steps.
"""
import numpy as np

from forgetbench import config as cfg
from forgetbench import runner
from forgetbench.envs import Acrobot, episode_length
from forgetbench.optim import OptimizerConfig

env = Acrobot()
rng = np.random.default_rng(0)
lengths = np.array([episode_length(env, rng) for _ in range(1500)])
print("episode lengths over 1500 episodes:")
print(f"  mean {lengths.mean():.2f}  std {lengths.std():.2f}  "
      f"min {lengths.min()}  max {lengths.max()}")
hist, edges = np.histogram(lengths, bins=8)
for count, lo, hi in zip(hist, edges[:-1], edges[1:]):
    print(f"  [{lo:5.0f}, {hi:5.0f}): {'#' * max(1, count // 20)} {count}")

config = cfg.ExperimentConfig(
    testbed="acrobot",
    optimizer=OptimizerConfig("rmsprop", 2.0 ** -8),
    rl=cfg.RLSettings(episodes=30, eval_transitions=15_000, eval_states=200),
    metrics=cfg.MetricSettings(every=10),
)

print("\nlearning state values online with TD(0) + rmsprop:")
context = runner.build_rl_context(config)
result = runner.run_rl(context, config, seed=0)
for rec in result.records:
    if rec.index % 5 == 0 or rec.index == 1:
        print(f"  episode {rec.index:3d} ({result.episode_lengths[rec.index - 1]} steps): "
              f"value error {rec.rmsve:7.3f}")
