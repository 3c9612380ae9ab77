"""Experiment orchestration: supervised phase runs, online TD(0) runs,
step-size sweeps, seed batches, and aggregation into ranking tables.

A whole experiment is a pure function of (config, seed list): every source
of randomness is derived from the run seed, runs never share mutable state,
and batches return results sorted by seed so worker scheduling cannot leak
into the output.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import config as cfg
from . import data as datasets
from . import envs as environments
from . import metrics as fm
from . import nets
from .errors import (
    ConfigurationError,
    NonTerminatingPolicyError,
    NumericalInstabilityError,
    StreamExhaustedError,
)
from .optim import KINDS, apply_update, init_state

COMPLETED = "completed"
STREAM_EXHAUSTED = "stream-exhausted"
UNSTABLE = "numerical-instability"


@dataclass
class MasteryTracker:
    """Cumulative in-phase accuracy with a consecutive-satisfaction streak."""

    steps: int = 0
    correct: int = 0
    streak: int = 0

    @property
    def running_accuracy(self) -> float:
        return self.correct / self.steps if self.steps else 0.0

    def update(self, was_correct: bool, threshold: float):
        self.steps += 1
        if was_correct:
            self.correct += 1
        if self.running_accuracy >= threshold:
            self.streak += 1
        else:
            self.streak = 0


@dataclass
class SupervisedRunResult:
    seed: int
    phase_lengths: list
    retention: float | None
    relearning: float | None
    records: list
    status: str

    @property
    def completed(self):
        return self.status == COMPLETED

    @property
    def total_steps(self):
        return sum(self.phase_lengths)


@dataclass
class RLRunResult:
    seed: int
    episode_lengths: list
    records: list  # one MetricRecord per finished episode
    status: str

    @property
    def completed(self):
        return self.status == COMPLETED


@dataclass
class SupervisedContext:
    """Everything immutable a supervised run needs, shared across seeds."""

    dataset: datasets.Dataset
    folds: datasets.FoldAssignment
    schedule: datasets.PhaseSchedule
    probe: datasets.ProbeSet
    retention_inputs: np.ndarray
    retention_labels: np.ndarray


@dataclass
class RLContext:
    env: object
    eval_set: environments.EvalStateSet
    probe: environments.RLProbe


def load_testbed_dataset(config: cfg.ExperimentConfig) -> datasets.Dataset:
    if config.testbed == cfg.SYNTH:
        s = config.synth
        return datasets.synth_dataset(s.n_per_class, s.class_count, s.seed, s.spread)
    return datasets.load_dataset(config.data_dir, config.testbed)


def build_supervised_context(config: cfg.ExperimentConfig, sweep: bool = False) -> SupervisedContext:
    sup = config.supervised
    dataset = load_testbed_dataset(config)
    folds = datasets.stratified_folds(dataset.labels, sup.n_folds, sup.fold_seed)
    if config.testbed == cfg.SYNTH:
        # blobs are labeled 0..k-1; the default 1..4 pairs target the image sets
        subtask_a, subtask_b = (0, 1), (2, 3)
        if set(sup.subtask_a) | set(sup.subtask_b) <= set(range(config.synth.class_count)):
            subtask_a, subtask_b = sup.subtask_a, sup.subtask_b
    else:
        subtask_a, subtask_b = sup.subtask_a, sup.subtask_b
    if sweep:
        schedule = datasets.PhaseSchedule(
            subtask_a, subtask_b, sup.sweep_first_fold, sup.sweep_second_fold
        )
    else:
        schedule = datasets.PhaseSchedule(subtask_a, subtask_b, sup.first_fold, sup.second_fold)
    excluded = set(range(sup.n_folds)) - set(sup.probe_folds)
    excluded |= {schedule.first_fold, schedule.second_fold}
    probe = datasets.build_probe_set(
        dataset, folds, excluded, sup.probe_per_class, sup.probe_seed, classes=schedule.classes
    )
    retention_idx = folds.indices(sup.retention_fold, subtask_a, dataset.labels)
    retention_inputs = dataset.images[retention_idx].astype(np.float64) / 255.0
    retention_labels = dataset.labels[retention_idx]
    return SupervisedContext(dataset, folds, schedule, probe, retention_inputs, retention_labels)


def build_rl_context(config: cfg.ExperimentConfig) -> RLContext:
    env = environments.get_env(config.testbed, config.rl.mc_literal_dynamics)
    eval_set = environments.get_eval_states(
        env,
        config.rl.eval_transitions,
        config.rl.eval_states,
        config.rl.eval_seed,
        cache_dir=config.rl.cache_dir,
        step_cap=config.rl.step_cap,
    )
    probe = environments.build_rl_probe(env, config.rl.step_cap)
    return RLContext(env, eval_set, probe)


def build_context(config: cfg.ExperimentConfig, sweep: bool = False):
    if config.is_supervised:
        return build_supervised_context(config, sweep)
    return build_rl_context(config)


def run_supervised(
    context: SupervisedContext, config: cfg.ExperimentConfig, seed: int
) -> SupervisedRunResult:
    """One four-phase online run; strictly one example per update."""
    sup = config.supervised
    init_ss, stream_ss = np.random.SeedSequence(seed).spawn(2)
    params = nets.init_network(config.network, init_ss)
    opt_state = init_state(config.optimizer, params)
    streams = datasets.build_phase_stream(context.dataset, context.folds, context.schedule, stream_ss)

    probe_objective = fm.ClassificationObjective(context.probe.inputs, context.probe.labels)
    records = []
    phase_lengths = []
    retention = None
    relearning = None
    status = COMPLETED
    global_step = 0

    for phase_number, stream in enumerate(streams, start=1):
        tracker = MasteryTracker()
        while True:
            try:
                example = next(stream)
            except StreamExhaustedError:
                status = STREAM_EXHAUSTED
                break
            global_step += 1

            # prediction is scored before the update it triggers
            output = nets.forward(params, example.features).output
            was_correct = int(np.argmax(output)) == example.label
            grads = nets.loss_and_gradient(
                params, example.features, example.label, nets.CROSS_ENTROPY
            )
            try:
                params, opt_state = apply_update(config.optimizer, opt_state, params, grads)
            except NumericalInstabilityError:
                status = UNSTABLE
                break
            if not params.all_finite():
                status = UNSTABLE
                break

            tracker.update(was_correct, sup.mastery_threshold)
            if config.metrics.due(global_step, phase_number):
                overlap = fm.activation_overlap(params, context.probe.inputs)
                pi, excluded = fm.pairwise_interference(
                    params, config.optimizer, opt_state, probe_objective, return_exclusions=True
                )
                if excluded:
                    status = UNSTABLE
                    break
                records.append(
                    fm.MetricRecord(global_step, phase_number, overlap, pi, None, grads.loss)
                )
            if tracker.streak >= sup.mastery_streak:
                phase_lengths.append(tracker.steps)
                break
        if status != COMPLETED:
            break
        if phase_number == 2:
            retention = fm.retention_accuracy(
                params, context.retention_inputs, context.retention_labels
            )
        if phase_number == 3:
            relearning = fm.relearning_score(phase_lengths)

    return SupervisedRunResult(seed, phase_lengths, retention, relearning, records, status)


def run_rl(context: RLContext, config: cfg.ExperimentConfig, seed: int) -> RLRunResult:
    """Online TD(0) value estimation under the fixed policy."""
    env = context.env
    init_ss, env_ss = np.random.SeedSequence(seed).spawn(2)
    params = nets.init_network(config.network, init_ss)
    opt_state = init_state(config.optimizer, params)
    rng = np.random.default_rng(env_ss)

    objective = None
    if config.metrics.every > 0:
        objective = fm.ValueObjective(
            context.probe.observations, context.probe.true_values, context.probe.transitions
        )
    records = []
    episode_lengths = []
    status = COMPLETED

    for episode in range(1, config.rl.episodes + 1):
        state = env.reset(rng)
        steps = 0
        loss_sum = 0.0
        while True:
            action = env.policy(state)
            next_state, reward, terminal = env.step(state, action)
            obs = env.observe(state)
            if terminal:
                target = reward
            else:
                target = reward + float(
                    nets.forward(params, env.observe(next_state)).output[0]
                )
            grads = nets.loss_and_gradient(params, obs, target, nets.SQUARED_ERROR)
            try:
                params, opt_state = apply_update(config.optimizer, opt_state, params, grads)
            except NumericalInstabilityError:
                status = UNSTABLE
                break
            if not params.all_finite():
                status = UNSTABLE
                break
            loss_sum += grads.loss
            steps += 1
            state = next_state
            if terminal:
                break
            if steps >= config.rl.step_cap:
                raise NonTerminatingPolicyError(
                    f"{env.name} episode exceeded {config.rl.step_cap} steps"
                )
        if status != COMPLETED:
            break
        episode_lengths.append(steps)

        value_error = fm.rmsve(params, context.eval_set)
        overlap = None
        pi = None
        if config.metrics.due(episode):
            overlap = fm.activation_overlap(params, context.probe.observations)
            pi, excluded = fm.pairwise_interference(
                params, config.optimizer, opt_state, objective, return_exclusions=True
            )
            if excluded:
                status = UNSTABLE
                break
        records.append(
            fm.MetricRecord(episode, None, overlap, pi, value_error, loss_sum / steps)
        )

    return RLRunResult(seed, episode_lengths, records, status)


def run_one(context, config: cfg.ExperimentConfig, seed: int):
    if config.is_supervised:
        return run_supervised(context, config, seed)
    return run_rl(context, config, seed)


# -- seed batches ------------------------------------------------------------

_WORKER = {}


def _init_worker(config, sweep):
    _WORKER["context"] = build_context(config, sweep)
    _WORKER["config"] = config


def _run_worker(seed):
    return run_one(_WORKER["context"], _WORKER["config"], seed)


def _run_task(task):
    """One (kind, alpha, seed) sweep cell against the shared context."""
    kind, alpha, seed = task
    candidate = cfg.with_optimizer(_WORKER["config"], kind, alpha)
    return kind, alpha, run_one(_WORKER["context"], candidate, seed)


def resolve_workers(requested=None, n_tasks=None) -> int:
    cap = os.environ.get("FB_WORKERS")
    workers = requested if requested is not None else (os.cpu_count() or 1)
    if cap is not None:
        workers = min(workers, max(1, int(cap)))
    if n_tasks is not None:
        workers = min(workers, n_tasks)
    return max(1, workers)


def run_batch(
    config: cfg.ExperimentConfig,
    seeds=None,
    sweep: bool = False,
    workers: int | None = None,
    context=None,
) -> list:
    """Independent runs for every seed, returned in seed order."""
    seeds = list(config.seeds if seeds is None else seeds)
    if not seeds:
        raise ConfigurationError("no seeds to run")
    workers = resolve_workers(workers, len(seeds))
    if workers == 1 or len(seeds) < 4:
        if context is None:
            context = build_context(config, sweep)
        results = [run_one(context, config, seed) for seed in seeds]
    else:
        if not config.is_supervised and config.rl.cache_dir is not None:
            build_context(config, sweep)  # warm the eval-state cache once
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker, initargs=(config, sweep)
        ) as pool:
            results = list(pool.map(_run_worker, seeds))
    return sorted(results, key=lambda r: r.seed)


# -- step-size sweeps --------------------------------------------------------

@dataclass
class SweepEntry:
    optimizer: str
    alpha: float
    objective: float | None
    n_completed: int
    n_unstable: int
    disqualified: bool


@dataclass
class SweepResult:
    criterion: str
    best: dict
    entries: list = field(default_factory=list)

    def table(self) -> list:
        return [
            {
                "optimizer": e.optimizer,
                "alpha": e.alpha,
                "objective": e.objective,
                "n_completed": e.n_completed,
                "n_unstable": e.n_unstable,
                "disqualified": e.disqualified,
            }
            for e in self.entries
        ]


def _sweep_objective(config, results):
    if config.is_supervised:
        done = [r.total_steps for r in results if r.completed]
        return (float(np.mean(done)) if done else None), done
    done = [
        sum(rec.rmsve**2 for rec in r.records) for r in results if r.completed
    ]
    return (float(np.mean(done)) if done else None), done


def sweep_alpha(
    config: cfg.ExperimentConfig,
    grid=None,
    seeds=None,
    optimizers=None,
    workers: int | None = None,
) -> SweepResult:
    """Pick the best step size per optimizer over a grid.

    Supervised runs are scored by mean steps to finish all four phases,
    value-estimation runs by the per-episode squared value error summed
    over the run (both averaged over completed seeds, lower is better).
    Any numerically unstable run disqualifies its alpha outright; ties go
    to the larger alpha.
    """
    grid = list(grid if grid is not None else cfg.default_alpha_grid(config.testbed))
    if not grid:
        raise ConfigurationError("sweep grid is empty")
    seeds = list(seeds if seeds is not None else config.sweep_seeds)
    optimizers = list(optimizers if optimizers is not None else KINDS)
    # sweeps measure completion/error, not the forgetting metrics
    sweep_config = replace(config, metrics=cfg.MetricSettings(every=0))

    tasks = [(kind, alpha, seed) for kind in optimizers for alpha in grid for seed in seeds]
    workers = resolve_workers(workers, len(tasks))
    cells = {}
    if workers == 1:
        context = build_context(sweep_config, sweep=True)
        for kind, alpha, seed in tasks:
            candidate = cfg.with_optimizer(sweep_config, kind, alpha)
            cells.setdefault((kind, alpha), []).append(
                run_one(context, candidate, seed)
            )
    else:
        if not sweep_config.is_supervised and sweep_config.rl.cache_dir is not None:
            build_context(sweep_config, sweep=True)  # warm the cache once
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker, initargs=(sweep_config, True)
        ) as pool:
            for kind, alpha, result in pool.map(_run_task, tasks, chunksize=16):
                cells.setdefault((kind, alpha), []).append(result)

    entries = []
    best = {}
    criterion = "mean total steps" if config.is_supervised else "squared value error area"
    for kind in optimizers:
        best_alpha = None
        best_objective = math.inf
        for alpha in grid:
            results = cells[(kind, alpha)]
            n_unstable = sum(1 for r in results if r.status == UNSTABLE)
            objective, done = _sweep_objective(config, results)
            disqualified = n_unstable > 0 or objective is None
            entries.append(
                SweepEntry(kind, alpha, objective, len(done), n_unstable, disqualified)
            )
            if disqualified:
                continue
            # ties break toward the larger step size
            if objective < best_objective or (
                objective == best_objective and (best_alpha is None or alpha > best_alpha)
            ):
                best_objective = objective
                best_alpha = alpha
        if best_alpha is None:
            raise ConfigurationError(
                f"every candidate step size for {kind} was disqualified"
            )
        best[kind] = best_alpha
    return SweepResult(criterion, best, entries)


# -- aggregation and ranking -------------------------------------------------

def aggregate(rows, group_by, value):
    """Per-group mean, sample standard error, and counts.

    Rows whose status is not completed, or whose value is missing, are
    excluded from the statistics and counted in n_excluded. Groups appear
    in first-seen order; an empty group is omitted.
    """
    groups = {}
    order = []
    for row in rows:
        key = tuple(row[k] for k in group_by)
        if key not in groups:
            groups[key] = {"values": [], "excluded": 0}
            order.append(key)
        status = row.get("status", COMPLETED)
        v = row.get(value)
        if status != COMPLETED or v is None or v == "":
            groups[key]["excluded"] += 1
        else:
            groups[key]["values"].append(float(v))
    out = []
    for key in order:
        values = groups[key]["values"]
        if not values:
            continue
        n = len(values)
        mean = float(np.mean(values))
        stderr = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        summary = dict(zip(group_by, key))
        summary.update(
            {"metric": value, "mean": mean, "stderr": stderr, "n": n,
             "n_excluded": groups[key]["excluded"]}
        )
        out.append(summary)
    return out


@dataclass
class Ranking:
    metric: str
    direction: str
    entries: list            # (optimizer, rank label) best first
    no_meaningful_ranking: bool = False
    missing: tuple = ()

    def label_of(self, optimizer) -> str:
        for name, label in self.entries:
            if name == optimizer:
                return label
        return "-"


def rank_optimizers(summaries, metric, direction, negligible_below=None) -> Ranking:
    """Ranks 1-4 with shared '=k' labels when two means sit within one
    pooled standard error of each other."""
    if direction not in ("higher", "lower"):
        raise ConfigurationError("direction must be 'higher' or 'lower'")
    by_opt = {s["optimizer"]: s for s in summaries}
    missing = tuple(k for k in KINDS if k not in by_opt)
    present = [by_opt[k] for k in KINDS if k in by_opt]
    if not present:
        return Ranking(metric, direction, [], missing=missing)

    if negligible_below is not None and all(
        abs(s["mean"]) < negligible_below for s in present
    ):
        return Ranking(
            metric, direction,
            [(s["optimizer"], "-") for s in present],
            no_meaningful_ranking=True, missing=missing,
        )

    reverse = direction == "higher"
    ordered = sorted(present, key=lambda s: s["mean"], reverse=reverse)
    # chain adjacent ties into groups
    groups = [[ordered[0]]]
    for s in ordered[1:]:
        prev = groups[-1][-1]
        pooled = math.sqrt(prev["stderr"] ** 2 + s["stderr"] ** 2)
        if abs(s["mean"] - prev["mean"]) < pooled:
            groups[-1].append(s)
        else:
            groups.append([s])
    entries = []
    position = 1
    for group in groups:
        label = f"={position}" if len(group) > 1 else str(position)
        for s in group:
            entries.append((s["optimizer"], label))
        position += len(group)
    return Ranking(metric, direction, entries, missing=missing)
