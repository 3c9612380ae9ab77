import math
from dataclasses import replace

import numpy as np
import pytest

from forgetbench import config as cfg
from forgetbench import nets, runner
from forgetbench.envs import EvalStateSet
from forgetbench.errors import ConfigurationError
from forgetbench.nets import NetworkSpec
from forgetbench.optim import OptimizerConfig
from forgetbench.runner import (
    COMPLETED,
    STREAM_EXHAUSTED,
    MasteryTracker,
    RLRunResult,
    aggregate,
    rank_optimizers,
    run_batch,
    run_rl,
    run_supervised,
    sweep_alpha,
)


def synth_config(**kw):
    defaults = dict(
        testbed=cfg.SYNTH,
        optimizer=OptimizerConfig("sgd", 0.05),
        seeds=(0, 1, 2),
        metrics=cfg.MetricSettings(every=0),
    )
    defaults.update(kw)
    return cfg.ExperimentConfig(**defaults)


class TestMasteryTracker:
    def test_cumulative_accuracy(self):
        t = MasteryTracker()
        t.update(True, 0.9)
        t.update(False, 0.9)
        assert t.running_accuracy == 0.5

    def test_streak_resets_when_accuracy_drops(self):
        t = MasteryTracker()
        for _ in range(5):
            t.update(True, 0.9)
        assert t.streak == 5
        for _ in range(2):
            t.update(False, 0.9)
        assert t.streak == 0


class TestRunSupervised:
    def test_zero_threshold_gives_streak_length_phases(self):
        config = synth_config(
            supervised=cfg.SupervisedSettings(mastery_threshold=0.0, mastery_streak=5)
        )
        context = runner.build_supervised_context(config)
        result = run_supervised(context, config, seed=0)
        assert result.status == COMPLETED
        assert result.phase_lengths == [5, 5, 5, 5]

    def test_deterministic_per_seed(self):
        config = synth_config(metrics=cfg.MetricSettings(every=1))
        context = runner.build_supervised_context(config)
        a = run_supervised(context, config, seed=7)
        b = run_supervised(context, config, seed=7)
        assert a.phase_lengths == b.phase_lengths
        assert a.retention == b.retention
        assert a.relearning == b.relearning
        for ra, rb in zip(a.records, b.records):
            assert (ra.index, ra.phase, ra.overlap, ra.pi, ra.loss) == (
                rb.index, rb.phase, rb.overlap, rb.pi, rb.loss)

    def test_phases_complete_on_separable_blobs(self):
        config = synth_config()
        context = runner.build_supervised_context(config)
        result = run_supervised(context, config, seed=1)
        assert result.status == COMPLETED
        assert len(result.phase_lengths) == 4
        assert all(n >= 5 for n in result.phase_lengths)
        assert result.retention is not None
        assert abs(result.relearning - result.phase_lengths[0] / result.phase_lengths[2]) < 1e-12

    def test_stream_exhaustion_marks_run(self):
        config = synth_config(
            synth=cfg.SynthSettings(n_per_class=30, seed=3),
            supervised=cfg.SupervisedSettings(mastery_threshold=1.0, mastery_streak=50),
        )
        context = runner.build_supervised_context(config)
        result = run_supervised(context, config, seed=0)
        assert result.status == STREAM_EXHAUSTED
        assert len(result.phase_lengths) < 4

    def test_metric_cadence_and_phase_filter(self):
        config = synth_config(metrics=cfg.MetricSettings(every=1, phases=(4,)))
        context = runner.build_supervised_context(config)
        result = run_supervised(context, config, seed=2)
        assert result.records
        assert all(r.phase == 4 for r in result.records)

    def test_instability_flagged_at_huge_alpha(self):
        config = synth_config(optimizer=OptimizerConfig("sgd", 1e18))
        context = runner.build_supervised_context(config)
        result = run_supervised(context, config, seed=0)
        assert result.status in (runner.UNSTABLE, STREAM_EXHAUSTED)


class ScriptedTwoStep:
    """0 -> 1 -> done, reward -1 each; observations are fixed scalars."""

    name = "scripted"
    obs_dim = 1
    xs = (0.8, 0.5, 0.0)

    def reset(self, rng):
        return 0

    def policy(self, state):
        return 1

    def step(self, state, action):
        return state + 1, -1.0, state + 1 == 2

    def observe(self, state):
        return np.array([self.xs[state]])

    def is_terminal(self, state):
        return state == 2


def hand_td_updates(w1, b1, w2, b2, alpha, xs):
    """Symbolic TD(0) on v(x) = w2 relu(w1 x + b1) + b2 for the scripted
    episode: bootstrapped target at the first step, bare reward at the end."""

    def value(x):
        return w2 * max(w1 * x + b1, 0.0) + b2

    for x, target_of in ((xs[0], lambda: -1.0 + value(xs[1])), (xs[1], lambda: -1.0)):
        target = target_of()
        z = w1 * x + b1
        h = max(z, 0.0)
        e = (w2 * h + b2) - target
        gw2 = 2.0 * e * h
        gb2 = 2.0 * e
        gw1 = 2.0 * e * w2 * x if z > 0 else 0.0
        gb1 = 2.0 * e * w2 if z > 0 else 0.0
        w1, b1, w2, b2 = w1 - alpha * gw1, b1 - alpha * gb1, w2 - alpha * gw2, b2 - alpha * gb2
    return w1, b1, w2, b2


class TestRunRL:
    def scripted_context(self):
        env = ScriptedTwoStep()
        eval_set = EvalStateSet(
            env_name="scripted",
            states=np.zeros((1, 1)),
            observations=np.array([[0.8]]),
            true_values=np.array([-2.0]),
            weights=np.array([1.0]),
            seed=0,
            n_transitions=1,
        )
        return runner.RLContext(env, eval_set, probe=None)

    def rl_config(self, alpha=0.05, episodes=1):
        return cfg.ExperimentConfig(
            testbed="mountain_car",
            optimizer=OptimizerConfig("sgd", alpha),
            network=NetworkSpec((1, 1, 1), output_kind=nets.VALUE),
            rl=cfg.RLSettings(episodes=episodes),
            metrics=cfg.MetricSettings(every=0),
        )

    def test_two_step_td_hand_oracle(self):
        config = self.rl_config(alpha=0.05)
        context = self.scripted_context()
        seed = 4
        result = run_rl(context, config, seed)
        assert result.status == COMPLETED
        assert result.episode_lengths == [2]

        init_ss, _ = np.random.SeedSequence(seed).spawn(2)
        p0 = nets.init_network(config.network, init_ss)
        w1, b1 = p0.weights[0][0, 0], p0.biases[0][0]
        w2, b2 = p0.weights[1][0, 0], p0.biases[1][0]
        fw1, fb1, fw2, fb2 = hand_td_updates(w1, b1, w2, b2, 0.05, ScriptedTwoStep.xs)
        v_hand = fw2 * max(fw1 * 0.8 + fb1, 0.0) + fb2
        want_rmsve = abs(v_hand - (-2.0))
        assert abs(result.records[0].rmsve - want_rmsve) < 1e-12

    def test_terminal_target_is_bare_reward(self):
        # one-step scripted episode: the only TD target is exactly -1
        class OneStep(ScriptedTwoStep):
            def step(self, state, action):
                return 2, -1.0, True

        env = OneStep()
        context = runner.RLContext(env, self.scripted_context().eval_set, probe=None)
        config = self.rl_config(alpha=0.5)
        seed = 9
        result = run_rl(context, config, seed)

        init_ss, _ = np.random.SeedSequence(seed).spawn(2)
        p0 = nets.init_network(config.network, init_ss)
        w1, b1 = p0.weights[0][0, 0], p0.biases[0][0]
        w2, b2 = p0.weights[1][0, 0], p0.biases[1][0]
        z = w1 * 0.8 + b1
        h = max(z, 0.0)
        e = (w2 * h + b2) - (-1.0)
        w2f = w2 - 0.5 * 2.0 * e * h
        b2f = b2 - 0.5 * 2.0 * e
        w1f = w1 - (0.5 * 2.0 * e * w2 * 0.8 if z > 0 else 0.0)
        b1f = b1 - (0.5 * 2.0 * e * w2 if z > 0 else 0.0)
        v_hand = w2f * max(w1f * 0.8 + b1f, 0.0) + b2f
        assert abs(result.records[0].rmsve - abs(v_hand + 2.0)) < 1e-12

    def test_alpha_zero_freezes_rmsve(self):
        config = self.rl_config(alpha=0.0, episodes=5)
        result = run_rl(self.scripted_context(), config, seed=0)
        values = [r.rmsve for r in result.records]
        assert len(set(values)) == 1

    def test_record_per_episode(self):
        config = self.rl_config(alpha=0.01, episodes=7)
        result = run_rl(self.scripted_context(), config, seed=1)
        assert len(result.records) == 7
        assert [r.index for r in result.records] == list(range(1, 8))

    def test_mountain_car_end_to_end(self):
        config = cfg.ExperimentConfig(
            testbed="mountain_car",
            optimizer=OptimizerConfig("sgd", 2.0**-8),
            rl=cfg.RLSettings(episodes=3, eval_transitions=1500, eval_states=30),
            metrics=cfg.MetricSettings(every=1),
        )
        context = runner.build_rl_context(config)
        result = run_rl(context, config, seed=0)
        assert result.status == COMPLETED
        assert len(result.records) == 3
        assert all(r.rmsve is not None and r.overlap is not None and r.pi is not None
                   for r in result.records)


class TestBatch:
    def test_seed_isolation(self):
        config = synth_config()
        context = runner.build_supervised_context(config)
        alone = run_supervised(context, config, seed=1)
        batch = run_batch(config, seeds=[0, 1, 2], workers=1)
        from_batch = [r for r in batch if r.seed == 1][0]
        assert from_batch.phase_lengths == alone.phase_lengths
        assert from_batch.retention == alone.retention

    def test_sorted_by_seed(self):
        config = synth_config()
        results = run_batch(config, seeds=[2, 0, 1], workers=1)
        assert [r.seed for r in results] == [0, 1, 2]

    def test_empty_seed_list_rejected(self):
        with pytest.raises(ConfigurationError):
            run_batch(synth_config(), seeds=[], workers=1)

    def test_workers_cap_from_environment(self, monkeypatch):
        monkeypatch.setenv("FB_WORKERS", "1")
        assert runner.resolve_workers(None, 8) == 1
        monkeypatch.delenv("FB_WORKERS")
        assert runner.resolve_workers(3, 8) == 3
        assert runner.resolve_workers(8, 2) == 2


class TestSweep:
    def test_single_candidate_grid(self):
        config = synth_config(sweep_seeds=(0,))
        result = sweep_alpha(config, grid=[0.05], seeds=[0], optimizers=["sgd"], workers=1)
        assert result.best == {"sgd": 0.05}

    def test_default_grids(self):
        sup = cfg.supervised_alpha_grid()
        assert len(sup) == 16
        assert sup[0] == 2.0**-3 and sup[-1] == 2.0**-18
        rl = cfg.rl_alpha_grid()
        assert len(rl) == 31
        assert rl[0] == 2.0**-3 and rl[-1] == 2.0**-18
        assert abs(rl[1] - 2.0**-3.5) < 1e-18

    def test_selects_brute_force_argmin(self, monkeypatch):
        # quadratic bowl in alpha with per-seed jitter; one unstable cell
        grid = [0.08, 0.04, 0.02, 0.01]
        calls = {}

        def fake_context(config, sweep=False):
            return None

        def fake_run_one(context, config, seed):
            alpha = config.optimizer.alpha
            if config.optimizer.kind == "adam" and alpha == 0.02:
                return RLRunResult(seed, [], [], runner.UNSTABLE)
            auc = (alpha - 0.03) ** 2 + 1e-6 * seed
            from forgetbench.metrics import MetricRecord
            rec = MetricRecord(1, None, None, None, math.sqrt(auc), 0.0)
            calls.setdefault((config.optimizer.kind, alpha), []).append(seed)
            return RLRunResult(seed, [2], [rec], COMPLETED)

        monkeypatch.setattr(runner, "build_context", fake_context)
        monkeypatch.setattr(runner, "run_one", fake_run_one)
        config = cfg.ExperimentConfig(
            testbed="mountain_car", optimizer=OptimizerConfig("sgd", 0.1),
            rl=cfg.RLSettings(episodes=1),
        )
        result = sweep_alpha(config, grid=grid, seeds=[0, 1], workers=1)

        # oracle: exhaustive evaluation of the same objective
        def objective(kind, alpha):
            return np.mean([(alpha - 0.03) ** 2 + 1e-6 * s for s in (0, 1)])

        for kind in ("sgd", "momentum", "rmsprop"):
            want = min(grid, key=lambda a: (objective(kind, a), -a))
            assert result.best[kind] == want
        # adam's 0.02 cell was unstable: disqualified outright
        adam_entries = {e.alpha: e for e in result.entries if e.optimizer == "adam"}
        assert adam_entries[0.02].disqualified
        assert result.best["adam"] == min(
            (a for a in grid if a != 0.02), key=lambda a: (objective("adam", a), -a)
        )

    def test_tie_breaks_toward_larger_alpha(self, monkeypatch):
        def fake_context(config, sweep=False):
            return None

        def fake_run_one(context, config, seed):
            from forgetbench.metrics import MetricRecord
            rec = MetricRecord(1, None, None, None, 1.0, 0.0)  # identical AUC
            return RLRunResult(seed, [2], [rec], COMPLETED)

        monkeypatch.setattr(runner, "build_context", fake_context)
        monkeypatch.setattr(runner, "run_one", fake_run_one)
        config = cfg.ExperimentConfig(
            testbed="mountain_car", optimizer=OptimizerConfig("sgd", 0.1),
        )
        for grid in ([0.04, 0.01], [0.01, 0.04]):
            result = sweep_alpha(config, grid=grid, seeds=[0],
                                 optimizers=["sgd"], workers=1)
            assert result.best["sgd"] == 0.04

    def test_all_unstable_raises(self, monkeypatch):
        def fake_context(config, sweep=False):
            return None

        def fake_run_one(context, config, seed):
            return RLRunResult(seed, [], [], runner.UNSTABLE)

        monkeypatch.setattr(runner, "build_context", fake_context)
        monkeypatch.setattr(runner, "run_one", fake_run_one)
        config = cfg.ExperimentConfig(
            testbed="mountain_car", optimizer=OptimizerConfig("sgd", 0.1),
        )
        with pytest.raises(ConfigurationError):
            sweep_alpha(config, grid=[0.1, 0.2], seeds=[0], optimizers=["sgd"], workers=1)


class TestAggregate:
    def test_hand_arithmetic(self):
        rows = [{"optimizer": "sgd", "status": COMPLETED, "m": v} for v in (1.0, 2.0, 3.0)]
        out = aggregate(rows, ("optimizer",), "m")
        assert len(out) == 1
        assert out[0]["mean"] == 2.0
        assert abs(out[0]["stderr"] - 1.0 / math.sqrt(3)) < 1e-12
        assert out[0]["n"] == 3

    def test_single_value_flagged(self):
        rows = [{"optimizer": "sgd", "status": COMPLETED, "m": 5.0}]
        out = aggregate(rows, ("optimizer",), "m")
        assert out[0]["stderr"] == 0.0 and out[0]["n"] == 1

    def test_incomplete_runs_excluded_and_counted(self):
        rows = [
            {"optimizer": "sgd", "status": COMPLETED, "m": 1.0},
            {"optimizer": "sgd", "status": STREAM_EXHAUSTED, "m": 50.0},
            {"optimizer": "sgd", "status": COMPLETED, "m": None},
        ]
        out = aggregate(rows, ("optimizer",), "m")
        assert out[0]["mean"] == 1.0
        assert out[0]["n"] == 1 and out[0]["n_excluded"] == 2

    def test_group_keys_preserved(self):
        rows = [
            {"testbed": "synth", "optimizer": "sgd", "alpha": 0.1, "status": COMPLETED, "m": 1.0},
            {"testbed": "synth", "optimizer": "adam", "alpha": 0.2, "status": COMPLETED, "m": 2.0},
        ]
        out = aggregate(rows, ("testbed", "optimizer", "alpha"), "m")
        assert [(r["optimizer"], r["alpha"]) for r in out] == [("sgd", 0.1), ("adam", 0.2)]

    def test_empty_group_omitted(self):
        rows = [{"optimizer": "sgd", "status": STREAM_EXHAUSTED, "m": 1.0}]
        assert aggregate(rows, ("optimizer",), "m") == []


def summaries(**means):
    return [
        {"optimizer": k, "mean": v[0], "stderr": v[1]} for k, v in means.items()
    ]


class TestRankings:
    def test_clear_ordering(self):
        s = summaries(sgd=(2.0, 0.05), rmsprop=(1.5, 0.05), momentum=(1.0, 0.05),
                      adam=(0.5, 0.05))
        ranking = rank_optimizers(s, "relearning", "higher")
        assert ranking.entries == [
            ("sgd", "1"), ("rmsprop", "2"), ("momentum", "3"), ("adam", "4")]

    def test_total_tie(self):
        s = summaries(sgd=(1.0, 0.2), momentum=(1.0, 0.2), rmsprop=(1.0, 0.2),
                      adam=(1.0, 0.2))
        ranking = rank_optimizers(s, "overlap_final", "lower")
        assert all(label == "=1" for _, label in ranking.entries)

    def test_shared_middle_rank(self):
        s = summaries(rmsprop=(0.9, 0.01), sgd=(0.7, 0.01), adam=(0.41, 0.02),
                      momentum=(0.40, 0.02))
        ranking = rank_optimizers(s, "retention", "higher")
        labels = dict(ranking.entries)
        assert labels["rmsprop"] == "1" and labels["sgd"] == "2"
        assert labels["adam"] == "=3" and labels["momentum"] == "=3"

    def test_negligible_retention_marker(self):
        s = summaries(sgd=(0.004, 0.001), momentum=(0.002, 0.001),
                      rmsprop=(0.009, 0.002), adam=(0.0005, 0.0002))
        ranking = rank_optimizers(s, "retention", "higher", negligible_below=0.01)
        assert ranking.no_meaningful_ranking
        assert all(label == "-" for _, label in ranking.entries)

    def test_missing_optimizer_flagged(self):
        s = summaries(sgd=(1.0, 0.1), adam=(0.5, 0.1), rmsprop=(0.8, 0.1))
        ranking = rank_optimizers(s, "pi_final", "lower")
        assert ranking.missing == ("momentum",)
        assert len(ranking.entries) == 3
