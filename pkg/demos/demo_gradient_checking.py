#!/usr/bin/env python3
"""Backpropagation sanity tour: exact gradients vs central differences.

Builds the three network shapes used by the testbeds, evaluates the
analytic gradient of each loss, and compares against finite differences.
"""
import numpy as np

from forgetbench import nets
from forgetbench.nets import NetworkSpec, finite_difference_check, init_network, loss_and_gradient

shapes = {
    "image classifier 784-100-4 (cross-entropy)": (
        NetworkSpec((784, 100, 4)), nets.CROSS_ENTROPY, 2),
    "small value net 2-50-1 (squared error)": (
        NetworkSpec((2, 50, 1), output_kind=nets.VALUE, init_scheme=nets.XAVIER),
        nets.SQUARED_ERROR, -40.0),
    "two-layer value net 6-32-256-1 (squared error)": (
        NetworkSpec((6, 32, 256, 1), output_kind=nets.VALUE, init_scheme=nets.HE),
        nets.SQUARED_ERROR, -100.0),
}

rng = np.random.default_rng(0)
for name, (spec, loss_kind, target) in shapes.items():
    params = init_network(spec, seed=0)
    x = rng.random(spec.input_size)
    grads = loss_and_gradient(params, x, target, loss_kind)
    err = finite_difference_check(params, x, target, loss_kind, n_sample=200)
    n_params = sum(a.size for a in params.arrays())
    print(f"{name}")
    print(f"  parameters: {n_params}, loss at random point: {grads.loss:.4f}")
    print(f"  worst relative gradient error vs central differences: {err:.2e}")

print("\nA deliberately corrupted gradient is caught immediately:")
real = nets.loss_and_gradient


def corrupted(params, x, target, kind):
    g = real(params, x, target, kind)
    g.weights[0][0, 0] += 0.1
    return g


nets.loss_and_gradient = corrupted
try:
    spec = NetworkSpec((4, 3, 2))
    bad = finite_difference_check(init_network(spec, 1), np.ones(4), 0, nets.CROSS_ENTROPY)
    print(f"  corrupted-gradient check value: {bad:.2e} (should be large)")
finally:
    nets.loss_and_gradient = real
