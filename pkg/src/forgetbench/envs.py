"""Deterministic Mountain Car and Acrobot simulators with fixed policies.

States are plain float tuples and the dynamics use scalar math: the hot
loops (policy statistics, evaluation trajectories) run millions of steps
and per-step numpy overhead would dominate. Every function is a pure
value-to-value map; the only randomness enters through the caller's rng
at reset time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, NonTerminatingPolicyError

MOUNTAIN_CAR = "mountain_car"
ACROBOT = "acrobot"

DEFAULT_STEP_CAP = 100_000

# master seed for the Acrobot metric probe states (the grid needs none)
ACROBOT_PROBE_SEED = 1730


class MountainCar:
    """Car in a valley; actions decelerate (0), coast (1), accelerate (2).

    With literal_accel the velocity update uses 0.001*a directly, which
    gives the coasting action a drift; the default 0.001*(a-1) keeps
    "do neither" force-free.
    """

    name = MOUNTAIN_CAR
    n_actions = 3
    obs_dim = 2

    MIN_P, MAX_P = -1.2, 0.6
    MAX_V = 0.07
    GOAL_P = 0.5

    def __init__(self, literal_accel: bool = False):
        self.literal_accel = literal_accel

    def reset(self, rng) -> tuple:
        return (float(rng.uniform(-0.6, 0.4)), 0.0)

    def is_terminal(self, state) -> bool:
        return state[0] >= self.GOAL_P

    def step(self, state, action):
        if action not in (0, 1, 2):
            raise ConfigurationError(f"invalid action {action!r} for {self.name}")
        p, v = state
        force = 0.001 * action if self.literal_accel else 0.001 * (action - 1)
        v2 = v + force - 0.0025 * math.cos(3.0 * p)
        if v2 > self.MAX_V:
            v2 = self.MAX_V
        elif v2 < -self.MAX_V:
            v2 = -self.MAX_V
        p2 = p + v2
        if p2 > self.MAX_P:
            p2 = self.MAX_P
        if p2 <= self.MIN_P:
            # harmless impassable wall on the left
            p2, v2 = self.MIN_P, 0.0
        return (p2, v2), -1.0, p2 >= self.GOAL_P

    def policy(self, state) -> int:
        v = state[1]
        if v > 0.0:
            return 2
        if v < 0.0:
            return 0
        return 1

    def observe(self, state) -> np.ndarray:
        # affine map of the state box onto [0, 1]^2
        p, v = state
        return np.array(
            [(p - self.MIN_P) / (self.MAX_P - self.MIN_P), (v + self.MAX_V) / (2 * self.MAX_V)]
        )

    def probe_states(self) -> list:
        """Cell centers of a 6x6 grid over position (up to the goal) x velocity."""
        states = []
        for i in range(6):
            p = self.MIN_P + (i + 0.5) * (self.GOAL_P - self.MIN_P) / 6.0
            for j in range(6):
                v = -self.MAX_V + (j + 0.5) * (2 * self.MAX_V) / 6.0
                states.append((p, v))
        return states


class Acrobot:
    """Two-link underactuated pendulum; torque on the middle joint.

    Equal unit links, unit masses and inertias, centers mid-link, gravity
    9.8; one control step integrates the equations of motion with
    fourth-order Runge-Kutta over 0.2 s. Angles wrap to [-pi, pi] and the
    joint velocities are clipped to [-4pi, 4pi] and [-9pi, 9pi]. An episode
    ends once the tip is a full link length above the pivot.
    """

    name = ACROBOT
    n_actions = 3
    obs_dim = 6

    DT = 0.2
    MAX_VEL_1 = 4 * math.pi
    MAX_VEL_2 = 9 * math.pi
    M1 = M2 = 1.0
    L1 = 1.0
    LC1 = LC2 = 0.5
    I1 = I2 = 1.0
    G = 9.8

    def reset(self, rng) -> tuple:
        th1, th2, w1, w2 = rng.uniform(-0.1, 0.1, size=4)
        return (float(th1), float(th2), float(w1), float(w2))

    def is_terminal(self, state) -> bool:
        th1, th2 = state[0], state[1]
        return -math.cos(th1) - math.cos(th1 + th2) > 1.0

    def _deriv(self, th1, th2, w1, w2, torque):
        m1, m2, l1, lc1, lc2, i1, i2, g = (
            self.M1, self.M2, self.L1, self.LC1, self.LC2, self.I1, self.I2, self.G,
        )
        c2 = math.cos(th2)
        s2 = math.sin(th2)
        d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * c2) + i1 + i2
        d2 = m2 * (lc2 * lc2 + l1 * lc2 * c2) + i2
        phi2 = m2 * lc2 * g * math.cos(th1 + th2 - math.pi / 2.0)
        phi1 = (
            -m2 * l1 * lc2 * w2 * w2 * s2
            - 2.0 * m2 * l1 * lc2 * w2 * w1 * s2
            + (m1 * lc1 + m2 * l1) * g * math.cos(th1 - math.pi / 2.0)
            + phi2
        )
        ddth2 = (
            torque + (d2 / d1) * phi1 - m2 * l1 * lc2 * w1 * w1 * s2 - phi2
        ) / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1)
        ddth1 = -(d2 * ddth2 + phi1) / d1
        return (w1, w2, ddth1, ddth2)

    @staticmethod
    def _wrap(x):
        while x > math.pi:
            x -= 2.0 * math.pi
        while x < -math.pi:
            x += 2.0 * math.pi
        return x

    def step(self, state, action):
        if action not in (0, 1, 2):
            raise ConfigurationError(f"invalid action {action!r} for {self.name}")
        torque = float(action - 1)
        th1, th2, w1, w2 = state
        dt = self.DT
        half = dt / 2.0
        k1 = self._deriv(th1, th2, w1, w2, torque)
        k2 = self._deriv(
            th1 + half * k1[0], th2 + half * k1[1], w1 + half * k1[2], w2 + half * k1[3], torque
        )
        k3 = self._deriv(
            th1 + half * k2[0], th2 + half * k2[1], w1 + half * k2[2], w2 + half * k2[3], torque
        )
        k4 = self._deriv(
            th1 + dt * k3[0], th2 + dt * k3[1], w1 + dt * k3[2], w2 + dt * k3[3], torque
        )
        sixth = dt / 6.0
        th1 = self._wrap(th1 + sixth * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]))
        th2 = self._wrap(th2 + sixth * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]))
        w1 = w1 + sixth * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        w2 = w2 + sixth * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
        if w1 > self.MAX_VEL_1:
            w1 = self.MAX_VEL_1
        elif w1 < -self.MAX_VEL_1:
            w1 = -self.MAX_VEL_1
        if w2 > self.MAX_VEL_2:
            w2 = self.MAX_VEL_2
        elif w2 < -self.MAX_VEL_2:
            w2 = -self.MAX_VEL_2
        new = (th1, th2, w1, w2)
        return new, -1.0, self.is_terminal(new)

    def policy(self, state) -> int:
        """Fixed evaluation policy keyed on the inner joint's motion.

        Positive torque while the inner joint swings negative, no torque
        while it swings positive, and negative torque when the outer
        joint is at least ten times faster (the inner joint is pinned by
        centripetal force) or the inner joint is still. Episode lengths
        under this rule: mean ~156, std ~23, min ~109 steps.
        """
        w1, w2 = state[2], state[3]
        if w1 == 0.0 or abs(w2) >= 10.0 * abs(w1):
            return 0
        return 1 if w1 > 0.0 else 2

    def observe(self, state) -> np.ndarray:
        th1, th2, w1, w2 = state
        return np.array(
            [
                math.cos(th1),
                math.sin(th1),
                math.cos(th2),
                math.sin(th2),
                w1 / self.MAX_VEL_1,
                w2 / self.MAX_VEL_2,
            ]
        )

    def probe_states(self, n: int = 180, seed=ACROBOT_PROBE_SEED) -> list:
        rng = np.random.default_rng(seed)
        states = []
        for _ in range(n):
            th1 = float(rng.uniform(-math.pi, math.pi))
            th2 = float(rng.uniform(-math.pi, math.pi))
            w1 = float(rng.uniform(-self.MAX_VEL_1, self.MAX_VEL_1))
            w2 = float(rng.uniform(-self.MAX_VEL_2, self.MAX_VEL_2))
            states.append((th1, th2, w1, w2))
        return states


def get_env(name, mc_literal_dynamics: bool = False):
    if name == MOUNTAIN_CAR:
        return MountainCar(literal_accel=mc_literal_dynamics)
    if name == ACROBOT:
        return Acrobot()
    raise ConfigurationError(f"unknown environment {name!r}")


def true_value(env, state, step_cap: int = DEFAULT_STEP_CAP) -> float:
    """Negated steps to termination under the fixed policy.

    Dynamics and policy are both deterministic, so one rollout is exact.
    A state already past the terminal predicate has value 0.
    """
    if env.is_terminal(state):
        return 0.0
    s = state
    for steps in range(1, step_cap + 1):
        s, _, terminal = env.step(s, env.policy(s))
        if terminal:
            return float(-steps)
    raise NonTerminatingPolicyError(
        f"{env.name} rollout exceeded {step_cap} steps from state {state}"
    )


def episode_states(env, rng, step_cap: int = DEFAULT_STEP_CAP) -> list:
    """States a policy episode acts from (the terminal state is not one)."""
    s = env.reset(rng)
    visited = []
    for _ in range(step_cap):
        visited.append(s)
        s, _, terminal = env.step(s, env.policy(s))
        if terminal:
            return visited
    raise NonTerminatingPolicyError(f"{env.name} episode exceeded {step_cap} steps")


def episode_length(env, rng, step_cap: int = DEFAULT_STEP_CAP) -> int:
    return len(episode_states(env, rng, step_cap))


@dataclass
class EvalStateSet:
    """States for the value-error measure: observations, ground truth,
    and visitation weights (uniform over the sample, duplicates allowed)."""

    env_name: str
    states: np.ndarray        # (n, state_dim) raw internal states
    observations: np.ndarray  # (n, obs_dim) network inputs
    true_values: np.ndarray   # (n,)
    weights: np.ndarray       # (n,) summing to 1
    seed: int
    n_transitions: int

    def __len__(self):
        return self.states.shape[0]


def sample_eval_states(
    env, n_transitions: int, n_states: int, seed, step_cap: int = DEFAULT_STEP_CAP
) -> EvalStateSet:
    """Sample n_states uniformly with replacement from a long policy trajectory.

    Whole episodes are concatenated until at least n_transitions source
    states accumulate. The trajectory is generated twice from the same
    stream (count pass, then collect pass) so nothing scales with its
    length but time.
    """
    if n_transitions < 1 or n_states < 1:
        raise ConfigurationError("n_transitions and n_states must be positive")
    traj_ss, pick_ss = np.random.SeedSequence(seed).spawn(2)

    rng = np.random.default_rng(traj_ss)
    lengths = []
    total = 0
    while total < n_transitions:
        n = episode_length(env, rng, step_cap)
        lengths.append(n)
        total += n

    picks = np.sort(np.random.default_rng(pick_ss).integers(0, total, size=n_states))

    rng = np.random.default_rng(traj_ss)  # identical episode sequence
    collected = []
    pos = 0
    next_pick = 0
    for n in lengths:
        if next_pick >= len(picks):
            break
        if picks[next_pick] >= pos + n:
            # no picks inside this episode; still consume its reset draw
            env.reset(rng)
            pos += n
            continue
        states = episode_states(env, rng, step_cap)
        assert len(states) == n
        while next_pick < len(picks) and picks[next_pick] < pos + n:
            collected.append(states[picks[next_pick] - pos])
            next_pick += 1
        pos += n

    values = np.array([true_value(env, s, step_cap) for s in collected])
    observations = np.stack([env.observe(s) for s in collected])
    return EvalStateSet(
        env_name=env.name,
        states=np.array(collected, dtype=np.float64),
        observations=observations,
        true_values=values,
        weights=np.full(n_states, 1.0 / n_states),
        seed=int(seed),
        n_transitions=int(n_transitions),
    )


_CACHE_VERSION = 1


def save_eval_states(path, eval_set: EvalStateSet):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    np.savez(
        path,
        version=_CACHE_VERSION,
        env_name=eval_set.env_name,
        seed=eval_set.seed,
        n_transitions=eval_set.n_transitions,
        n_states=len(eval_set),
        states=eval_set.states,
        observations=eval_set.observations,
        true_values=eval_set.true_values,
        weights=eval_set.weights,
    )


def load_eval_states(path, env_name, seed, n_transitions, n_states):
    """Load a cached set; None when absent or built under other settings."""
    path = Path(path)
    if not path.exists():
        return None
    with np.load(path, allow_pickle=False) as z:
        header = (
            int(z["version"]),
            str(z["env_name"]),
            int(z["seed"]),
            int(z["n_transitions"]),
            int(z["n_states"]),
        )
        if header != (_CACHE_VERSION, env_name, int(seed), int(n_transitions), int(n_states)):
            return None
        return EvalStateSet(
            env_name=env_name,
            states=z["states"],
            observations=z["observations"],
            true_values=z["true_values"],
            weights=z["weights"],
            seed=int(seed),
            n_transitions=int(n_transitions),
        )


def get_eval_states(
    env, n_transitions, n_states, seed, cache_dir=None, step_cap=DEFAULT_STEP_CAP
) -> EvalStateSet:
    if cache_dir is None:
        return sample_eval_states(env, n_transitions, n_states, seed, step_cap)
    path = Path(cache_dir) / f"eval-{env.name}-s{seed}-t{n_transitions}-n{n_states}.npz"
    cached = load_eval_states(path, env.name, seed, n_transitions, n_states)
    if cached is not None:
        return cached
    built = sample_eval_states(env, n_transitions, n_states, seed, step_cap)
    save_eval_states(path, built)
    return built


@dataclass
class RLProbe:
    """Probe states with everything the metrics need precomputed:
    observations, ground-truth values, and the one-step transition taken
    from each state under the fixed policy."""

    states: list
    observations: np.ndarray
    true_values: np.ndarray
    transitions: list  # (obs, reward, next_obs, terminal) per state


def build_rl_probe(env, step_cap: int = DEFAULT_STEP_CAP) -> RLProbe:
    states = env.probe_states()
    observations = np.stack([env.observe(s) for s in states])
    values = np.array([true_value(env, s, step_cap) for s in states])
    transitions = []
    for s in states:
        s2, r, terminal = env.step(s, env.policy(s))
        transitions.append((env.observe(s), r, env.observe(s2), terminal))
    return RLProbe(states, observations, values, transitions)
