"""Small dense rectified-linear networks with explicit backpropagation.

Everything here is a pure function of its arguments: parameters are never
mutated, new arrays are returned instead. All arithmetic is float64.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ShapeError

CLASSIFICATION = "classification"
VALUE = "value"

GAUSSIAN = "gaussian"
XAVIER = "xavier"
HE = "he"

CROSS_ENTROPY = "cross_entropy"
SQUARED_ERROR = "squared_error"


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture and initialization recipe for one network.

    layer_sizes runs input, hidden..., output. Hidden layers are always
    rectified-linear; the output is either a softmax over classes or a
    single linear value unit. Biases are drawn N(0, bias_std^2) under
    every scheme; xavier/he apply to the non-bias weights only.
    """

    layer_sizes: tuple
    output_kind: str = CLASSIFICATION
    init_scheme: str = GAUSSIAN
    init_mean: float = 0.0
    init_std: float = 0.1
    bias_std: float = 0.1
    hidden_activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(n) for n in self.layer_sizes))
        if len(self.layer_sizes) < 3:
            raise ConfigurationError(
                "layer_sizes needs input, at least one hidden layer, and output; "
                f"got {self.layer_sizes}"
            )
        if any(n <= 0 for n in self.layer_sizes):
            raise ConfigurationError(f"layer sizes must be positive: {self.layer_sizes}")
        if self.output_kind == CLASSIFICATION:
            if self.layer_sizes[-1] < 2:
                raise ConfigurationError("classification output needs at least 2 units")
        elif self.output_kind == VALUE:
            if self.layer_sizes[-1] != 1:
                raise ConfigurationError("value output must be a single unit")
        else:
            raise ConfigurationError(f"unknown output_kind {self.output_kind!r}")
        if self.init_scheme not in (GAUSSIAN, XAVIER, HE):
            raise ConfigurationError(f"unknown init_scheme {self.init_scheme!r}")
        if self.hidden_activation != "relu":
            raise ConfigurationError("only rectified-linear hidden layers are supported")

    @property
    def input_size(self):
        return self.layer_sizes[0]

    @property
    def output_size(self):
        return self.layer_sizes[-1]

    @property
    def n_hidden_units(self):
        return sum(self.layer_sizes[1:-1])


@dataclass
class NetworkParams:
    """Per-layer weight matrices (fan_in, fan_out) and bias vectors."""

    spec: NetworkSpec
    weights: list
    biases: list

    @property
    def n_layers(self):
        return len(self.weights)

    def arrays(self):
        """Flat [W0, b0, W1, b1, ...] view; order is the update-rule contract."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy(self):
        return NetworkParams(
            self.spec,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )

    def all_finite(self):
        return all(np.isfinite(a).all() for a in self.arrays())


@dataclass
class ForwardTrace:
    """Everything one forward pass produced.

    pre_activations has one entry per layer (hidden layers then output);
    hidden_activations holds the rectified values of the hidden layers only;
    output is the softmax probability vector or the raw value vector.
    """

    pre_activations: list
    hidden_activations: list
    output: np.ndarray


@dataclass
class Gradients:
    """Loss derivative w.r.t. every parameter, shaped like NetworkParams."""

    weights: list
    biases: list
    loss: float

    def arrays(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def all_finite(self):
        return np.isfinite(self.loss) and all(np.isfinite(a).all() for a in self.arrays())


def init_network(spec: NetworkSpec, seed) -> NetworkParams:
    """Draw fresh parameters; bit-identical for identical (spec, seed)."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    sizes = spec.layer_sizes
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        if spec.init_scheme == GAUSSIAN:
            w = rng.normal(spec.init_mean, spec.init_std, size=(fan_in, fan_out))
        elif spec.init_scheme == XAVIER:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        else:  # he
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        b = rng.normal(0.0, spec.bias_std, size=fan_out)
        weights.append(w)
        biases.append(b)
    return NetworkParams(spec, weights, biases)


def _softmax(z):
    e = np.exp(z - z.max())
    return e / e.sum()


def _check_input(params, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.spec.input_size,):
        raise ShapeError(
            f"input shape {x.shape} does not match first layer size "
            f"{params.spec.input_size}"
        )
    return x


def forward(params: NetworkParams, x) -> ForwardTrace:
    """Evaluate the network on one input, keeping every intermediate."""
    x = _check_input(params, x)
    pre, hidden = [], []
    a = x
    last = params.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w + b
        pre.append(z)
        if i < last:
            a = np.maximum(z, 0.0)
            hidden.append(a)
    if params.spec.output_kind == CLASSIFICATION:
        out = _softmax(pre[-1])
    else:
        out = pre[-1]
    return ForwardTrace(pre, hidden, out)


def hidden_activations(params: NetworkParams, x) -> np.ndarray:
    """All hidden-unit activations as one flat vector, layer-major."""
    trace = forward(params, x)
    return np.concatenate(trace.hidden_activations)


def _output_delta_and_loss(params, z_out, target, loss_kind):
    kind = params.spec.output_kind
    if loss_kind == CROSS_ENTROPY:
        if kind != CLASSIFICATION:
            raise ConfigurationError("cross_entropy requires a classification output")
        y = int(target)
        if not 0 <= y < params.spec.output_size:
            raise ConfigurationError(f"target class {y} outside output range")
        # loss = logsumexp(z) - z[y], computed shifted for stability
        m = z_out.max()
        lse = m + np.log(np.exp(z_out - m).sum())
        loss = lse - z_out[y]
        delta = _softmax(z_out)
        delta[y] -= 1.0
        return delta, float(loss)
    if loss_kind == SQUARED_ERROR:
        if kind != VALUE:
            raise ConfigurationError("squared_error requires a value output")
        err = z_out[0] - float(target)
        return np.array([2.0 * err]), float(err * err)
    raise ConfigurationError(f"unknown loss kind {loss_kind!r}")


def loss_and_gradient(params: NetworkParams, x, target, loss_kind) -> Gradients:
    """Exact derivative of the loss at (params, x, target) by backpropagation."""
    x = _check_input(params, x)
    trace = forward(params, x)
    delta, loss = _output_delta_and_loss(params, trace.pre_activations[-1], target, loss_kind)

    grad_w = [None] * params.n_layers
    grad_b = [None] * params.n_layers
    for layer in range(params.n_layers - 1, -1, -1):
        a_prev = x if layer == 0 else trace.hidden_activations[layer - 1]
        grad_w[layer] = np.outer(a_prev, delta)
        grad_b[layer] = delta
        if layer > 0:
            delta = (params.weights[layer] @ delta) * (
                trace.pre_activations[layer - 1] > 0.0
            )
    return Gradients(grad_w, grad_b, loss)


def loss_only(params: NetworkParams, x, target, loss_kind) -> float:
    trace = forward(params, x)
    _, loss = _output_delta_and_loss(params, trace.pre_activations[-1], target, loss_kind)
    return loss


def _loss_longdouble(weights, biases, x, target, loss_kind, output_kind):
    """Loss in extended precision; the difference quotient in the gradient
    checker would otherwise sit on the float64 cancellation floor."""
    a = x
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        z = a @ w + b
        a = np.maximum(z, 0.0) if i < last else z
    if loss_kind == CROSS_ENTROPY:
        m = z.max()
        return (m + np.log(np.exp(z - m).sum())) - z[int(target)]
    err = z[0] - np.longdouble(target)
    return err * err


def finite_difference_check(
    params: NetworkParams,
    x,
    target,
    loss_kind,
    h: float = 1e-5,
    n_sample: int | None = None,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Relative error per coordinate is |analytic - numeric| divided by
    max(1e-12, |analytic| + |numeric|). With n_sample set, only that many
    randomly chosen coordinates are probed (seeded); otherwise all of them.
    """
    x = _check_input(params, x)
    analytic = loss_and_gradient(params, x, target, loss_kind)
    weights = [w.astype(np.longdouble) for w in params.weights]
    biases = [b.astype(np.longdouble) for b in params.biases]
    param_arrays = []
    for w, b in zip(weights, biases):
        param_arrays.append(w)
        param_arrays.append(b)
    grad_arrays = analytic.arrays()
    x_ld = x.astype(np.longdouble)
    kind = params.spec.output_kind

    sizes = [a.size for a in param_arrays]
    total = sum(sizes)
    if n_sample is None or n_sample >= total:
        coords = np.arange(total)
    else:
        coords = np.random.default_rng(seed).choice(total, size=n_sample, replace=False)

    h = np.longdouble(h)
    bounds = np.cumsum([0] + sizes)
    worst = 0.0
    for flat in coords:
        k = int(np.searchsorted(bounds, flat, side="right") - 1)
        offset = int(flat - bounds[k])
        arr = param_arrays[k]
        idx = np.unravel_index(offset, arr.shape)
        saved = arr[idx]
        arr[idx] = saved + h
        up = _loss_longdouble(weights, biases, x_ld, target, loss_kind, kind)
        arr[idx] = saved - h
        down = _loss_longdouble(weights, biases, x_ld, target, loss_kind, kind)
        arr[idx] = saved
        numeric = float((up - down) / (2.0 * h))
        a = grad_arrays[k][idx]
        rel = abs(a - numeric) / max(1e-12, abs(a) + abs(numeric))
        if rel > worst:
            worst = rel
    return worst


# Batched evaluation over row-stacked inputs. These back the metrics and
# evaluation passes; results agree with per-example forward() up to the
# usual last-ulp matmul reassociation.

def batch_outputs(params: NetworkParams, inputs) -> np.ndarray:
    """(m, output_size) softmax probabilities or raw values."""
    z = _batch_final_pre(params, inputs)
    if params.spec.output_kind == CLASSIFICATION:
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)
    return z


def batch_values(params: NetworkParams, inputs) -> np.ndarray:
    """(m,) scalar value estimates of a value network."""
    if params.spec.output_kind != VALUE:
        raise ConfigurationError("batch_values needs a value network")
    return _batch_final_pre(params, inputs)[:, 0]


def batch_hidden(params: NetworkParams, inputs) -> np.ndarray:
    """(m, total hidden units) rectified activations, layer-major."""
    a = _as_batch(params, inputs)
    blocks = []
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        a = np.maximum(a @ w + b, 0.0)
        blocks.append(a)
    return np.concatenate(blocks, axis=1)


def batch_losses(params: NetworkParams, inputs, targets, loss_kind) -> np.ndarray:
    """(m,) per-example losses."""
    z = _batch_final_pre(params, inputs)
    if loss_kind == CROSS_ENTROPY:
        if params.spec.output_kind != CLASSIFICATION:
            raise ConfigurationError("cross_entropy requires a classification output")
        y = np.asarray(targets, dtype=np.intp)
        m = z.max(axis=1)
        lse = m + np.log(np.exp(z - m[:, None]).sum(axis=1))
        return lse - z[np.arange(len(y)), y]
    if loss_kind == SQUARED_ERROR:
        if params.spec.output_kind != VALUE:
            raise ConfigurationError("squared_error requires a value output")
        err = z[:, 0] - np.asarray(targets, dtype=np.float64)
        return err * err
    raise ConfigurationError(f"unknown loss kind {loss_kind!r}")


def _as_batch(params, inputs):
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.spec.input_size:
        raise ShapeError(
            f"batch shape {x.shape} does not match (m, {params.spec.input_size})"
        )
    return x


def _batch_final_pre(params, inputs):
    a = _as_batch(params, inputs)
    last = params.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w + b
        a = np.maximum(z, 0.0) if i < last else z
    return a
