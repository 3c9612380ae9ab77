"""Forgetting metrics, all observation-only.

Nothing in this module mutates the learner: parameter updates happen on
copies via virtual_update, and every function is a pure read of its
arguments.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nets
from .errors import NumericalInstabilityError
from .nets import batch_hidden, batch_losses, batch_outputs, batch_values, loss_and_gradient
from .optim import virtual_update


@dataclass
class MetricRecord:
    """One row of a run's metric log; None where a field does not apply."""

    index: int
    phase: int | None
    overlap: float | None
    pi: float | None
    rmsve: float | None
    loss: float | None


@dataclass(frozen=True)
class ClassificationObjective:
    """Probe examples scored by cross-entropy; updates use the true labels."""

    inputs: np.ndarray
    labels: np.ndarray


@dataclass(frozen=True)
class ValueObjective:
    """Probe states scored by squared value error against cached ground
    truth; updates are one bootstrapped temporal-difference step on the
    transition recorded for each state."""

    inputs: np.ndarray
    true_values: np.ndarray
    transitions: list


def retention_accuracy(params, inputs, labels) -> float:
    """Fraction of a held-out first-subtask set classified correctly."""
    inputs = np.asarray(inputs)
    if inputs.ndim != 2 or inputs.shape[0] == 0:
        raise ValueError("retention needs a nonempty (m, d) evaluation set")
    # argmax breaks ties toward the lowest class id
    predicted = np.argmax(batch_outputs(params, inputs), axis=1)
    return float(np.mean(predicted == np.asarray(labels)))


def relearning_score(phase_lengths) -> float:
    """First-phase steps over third-phase steps; above 1 means the first
    subtask came back faster than it was first learned."""
    if len(phase_lengths) < 3:
        raise ValueError("relearning needs completed phases 1 and 3")
    return phase_lengths[0] / phase_lengths[2]


def activation_overlap(params, inputs) -> float:
    """Mean pairwise dot product of hidden activations over distinct probe
    pairs, normalized by the number of hidden units."""
    inputs = np.asarray(inputs)
    m = inputs.shape[0]
    if m < 2:
        raise ValueError("activation overlap needs at least two probe items")
    h = batch_hidden(params, inputs)
    n_hidden = h.shape[1]
    gram = h @ h.T
    off_diagonal = gram.sum() - np.trace(gram)
    return float(off_diagonal / (m * (m - 1)) / n_hidden)


def _objective_losses(params, objective) -> np.ndarray:
    if isinstance(objective, ClassificationObjective):
        return batch_losses(params, objective.inputs, objective.labels, nets.CROSS_ENTROPY)
    err = batch_values(params, objective.inputs) - objective.true_values
    return err * err


def _update_gradient(params, objective, b):
    if isinstance(objective, ClassificationObjective):
        return loss_and_gradient(
            params, objective.inputs[b], int(objective.labels[b]), nets.CROSS_ENTROPY
        )
    obs, reward, next_obs, terminal = objective.transitions[b]
    target = reward if terminal else reward + float(batch_values(params, next_obs[None, :])[0])
    return loss_and_gradient(params, obs, target, nets.SQUARED_ERROR)


def pairwise_interference(
    params, opt_config, opt_state, objective, return_exclusions: bool = False
):
    """Mean over ordered probe pairs (a, b), a != b, of the change in the
    objective at a caused by one virtual optimizer update computed at b.

    The learner's parameters and optimizer state are read-only here; the
    virtual update runs on copies seeded with the live moment buffers so
    the measurement reflects the optimizer actually in use. A probe item
    whose virtual update goes non-finite drops its pairs from the mean;
    the count of such items is available via return_exclusions.
    """
    m = objective.inputs.shape[0]
    if m < 2:
        raise ValueError("pairwise interference needs at least two probe items")
    before = _objective_losses(params, objective)
    before_total = before.sum()

    total = 0.0
    excluded = 0
    for b in range(m):
        try:
            grads = _update_gradient(params, objective, b)
            nudged = virtual_update(opt_config, opt_state, params, grads)
        except NumericalInstabilityError:
            excluded += 1
            continue
        after = _objective_losses(nudged, objective)
        if not np.isfinite(after).all():
            excluded += 1
            continue
        # sum over a != b of J(after; a) - J(before; a)
        total += (after.sum() - after[b]) - (before_total - before[b])

    kept = m - excluded
    if kept == 0:
        raise NumericalInstabilityError(
            "every probe item produced a non-finite virtual update",
            context={"probe_size": m},
        )
    value = total / (kept * (m - 1))
    if return_exclusions:
        return value, excluded
    return value


def rmsve(params, eval_set) -> float:
    """Root of the visitation-weighted mean squared value error."""
    estimates = batch_values(params, eval_set.observations)
    err = estimates - eval_set.true_values
    return float(np.sqrt(np.sum(eval_set.weights * err * err)))
