"""The four stochastic gradient update rules.

Updates are pure: apply_update returns fresh parameter and state values and
never touches its inputs, which is what makes virtual updates (used by the
interference metric) free of bookkeeping.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericalInstabilityError, ShapeError
from .nets import Gradients, NetworkParams

SGD = "sgd"
MOMENTUM = "momentum"
RMSPROP = "rmsprop"
ADAM = "adam"
KINDS = (SGD, MOMENTUM, RMSPROP, ADAM)


@dataclass(frozen=True)
class OptimizerConfig:
    """Update rule plus its hyperparameters.

    alpha is the step size. mu is the momentum coefficient, rho the
    moving-average coefficient of the squared-gradient buffer, beta1/beta2
    the first/second moment decays. alpha = 0 is legal and freezes the
    parameters (the interference metric relies on it).
    """

    kind: str
    alpha: float
    mu: float = 0.9
    rho: float = 0.999
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown optimizer kind {self.kind!r}")
        if self.alpha < 0:
            raise ConfigurationError("alpha must be nonnegative")
        for name in ("mu", "rho", "beta1", "beta2"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1); got {v}")
        if self.epsilon <= 0:
            raise ConfigurationError("epsilon must be positive")


@dataclass
class OptimizerState:
    """Moment buffers congruent with NetworkParams.arrays(), plus step count.

    sgd carries no buffers; momentum uses m; rmsprop uses v; adam uses both.
    t counts applied updates (virtual updates leave it alone).
    """

    m: list | None
    v: list | None
    t: int = 0

    def copy(self):
        return OptimizerState(
            None if self.m is None else [a.copy() for a in self.m],
            None if self.v is None else [a.copy() for a in self.v],
            self.t,
        )


def init_state(config: OptimizerConfig, params: NetworkParams) -> OptimizerState:
    zeros = lambda: [np.zeros_like(a) for a in params.arrays()]
    if config.kind == SGD:
        return OptimizerState(None, None)
    if config.kind == MOMENTUM:
        return OptimizerState(zeros(), None)
    if config.kind == RMSPROP:
        return OptimizerState(None, zeros())
    return OptimizerState(zeros(), zeros())


def _check_grads(config, state, params, grads):
    p_arrays = params.arrays()
    g_arrays = grads.arrays()
    if len(p_arrays) != len(g_arrays):
        raise ShapeError("gradient structure does not match parameters")
    for p, g in zip(p_arrays, g_arrays):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} vs parameter shape {p.shape}")
    for i, g in enumerate(g_arrays):
        if not np.isfinite(g).all():
            raise NumericalInstabilityError(
                "non-finite gradient",
                context={"array_index": i, "kind": config.kind, "t": state.t},
            )
    return p_arrays, g_arrays


def apply_update(
    config: OptimizerConfig,
    state: OptimizerState,
    params: NetworkParams,
    grads: Gradients,
):
    """One optimizer step; returns (new params, new state), inputs untouched."""
    p_arrays, g_arrays = _check_grads(config, state, params, grads)
    t_next = state.t + 1
    a = config.alpha

    if config.kind == SGD:
        new_p = [p - a * g for p, g in zip(p_arrays, g_arrays)]
        new_state = OptimizerState(None, None, t_next)
    elif config.kind == MOMENTUM:
        new_m = [config.mu * m + g for m, g in zip(state.m, g_arrays)]
        new_p = [p - a * m for p, m in zip(p_arrays, new_m)]
        new_state = OptimizerState(new_m, None, t_next)
    elif config.kind == RMSPROP:
        new_v = [config.rho * v + (1.0 - config.rho) * g * g for v, g in zip(state.v, g_arrays)]
        new_p = [
            p - a * g / (np.sqrt(v) + config.epsilon)
            for p, g, v in zip(p_arrays, g_arrays, new_v)
        ]
        new_state = OptimizerState(None, new_v, t_next)
    else:  # adam
        b1, b2 = config.beta1, config.beta2
        new_m = [b1 * m + (1.0 - b1) * g for m, g in zip(state.m, g_arrays)]
        new_v = [b2 * v + (1.0 - b2) * g * g for v, g in zip(state.v, g_arrays)]
        c1 = 1.0 - b1**t_next
        c2 = 1.0 - b2**t_next
        new_p = [
            p - a * (m / c1) / (np.sqrt(v / c2) + config.epsilon)
            for p, m, v in zip(p_arrays, new_m, new_v)
        ]
        new_state = OptimizerState(new_m, new_v, t_next)

    weights = new_p[0::2]
    biases = new_p[1::2]
    return NetworkParams(params.spec, weights, biases), new_state


def virtual_update(
    config: OptimizerConfig,
    state: OptimizerState,
    params: NetworkParams,
    grads: Gradients,
) -> NetworkParams:
    """The parameters apply_update would produce, with nothing advanced."""
    new_params, _ = apply_update(config, state, params, grads)
    return new_params
