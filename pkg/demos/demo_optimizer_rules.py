#!/usr/bin/env python3
"""The four update rules side by side on a two-dimensional quadratic bowl.

f(w) = 0.5 * (4 w0^2 + w1^2): steep in one direction, shallow in the other.
Watch how far each rule travels in 60 steps from the same start.
"""
import numpy as np

from forgetbench import nets
from forgetbench.nets import Gradients, NetworkParams, NetworkSpec
from forgetbench.optim import OptimizerConfig, apply_update, init_state

spec = NetworkSpec((1, 2, 1), output_kind=nets.VALUE)


def as_params(w):
    # park the two bowl coordinates in the first-layer weights
    return NetworkParams(
        spec,
        [np.array([[w[0], w[1]]]), np.zeros((2, 1))],
        [np.zeros(2), np.zeros(1)],
    )


def bowl_grad(params):
    w = params.weights[0][0]
    g = np.array([4.0 * w[0], 1.0 * w[1]])
    return Gradients(
        [np.array([g]), np.zeros((2, 1))],
        [np.zeros(2), np.zeros(1)],
        0.5 * (4 * w[0] ** 2 + w[1] ** 2),
    )


start = np.array([2.0, 2.0])
configs = [
    OptimizerConfig("sgd", 0.1),
    OptimizerConfig("momentum", 0.1, mu=0.9),
    OptimizerConfig("rmsprop", 0.1, rho=0.999),
    OptimizerConfig("adam", 0.1),
]

print(f"start at w = {start}, f = {0.5 * (4 * start[0]**2 + start[1]**2):.3f}\n")
for config in configs:
    params = as_params(start)
    state = init_state(config, params)
    for step in range(60):
        params, state = apply_update(config, state, params, bowl_grad(params))
    w = params.weights[0][0]
    f = 0.5 * (4 * w[0] ** 2 + w[1] ** 2)
    print(f"{config.kind:>9}: w = ({w[0]:+.5f}, {w[1]:+.5f})  f = {f:.6f}  steps = {state.t}")

print("\nSingle hand-checkable steps (unit gradient, alpha 0.1):")
print("  sgd        -0.1")
print("  momentum   -0.1 then cumulative -0.29 (buffer 1.0, 1.9)")
print(f"  rmsprop    {-0.1 / (np.sqrt(0.001) + 1e-8):.6f} (second moment 0.001)")
print(f"  adam       {-0.1 * (1 / (1 + 1e-8)):.6f} (bias-corrected moments are 1)")
