"""Experiment configuration: defaults per testbed, strict file parsing.

Config files are YAML with one section per concern. Unknown keys are
rejected by name, never ignored: a config that loads is a config whose
every field means something.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import yaml

from .errors import ConfigurationError
from .nets import CLASSIFICATION, GAUSSIAN, HE, VALUE, XAVIER, NetworkSpec
from .optim import OptimizerConfig

MNIST = "mnist"
FASHION_MNIST = "fashion_mnist"
SYNTH = "synth"
SUPERVISED_TESTBEDS = (MNIST, FASHION_MNIST, SYNTH)
RL_TESTBEDS = ("mountain_car", "acrobot")
TESTBEDS = SUPERVISED_TESTBEDS + RL_TESTBEDS

DESK = "desk"
PAPER_SCALE = "paper"


@dataclass(frozen=True)
class SupervisedSettings:
    mastery_threshold: float = 0.90
    mastery_streak: int = 5
    subtask_a: tuple = (1, 2)
    subtask_b: tuple = (3, 4)
    n_folds: int = 10
    fold_seed: int = 510
    first_fold: int = 2
    second_fold: int = 3
    sweep_first_fold: int = 0
    sweep_second_fold: int = 1
    retention_fold: int = 4
    probe_folds: tuple = (4, 5, 6, 7, 8, 9)
    probe_per_class: int = 10
    probe_seed: int = 1104

    def __post_init__(self):
        if not 0.0 <= self.mastery_threshold <= 1.0:
            raise ConfigurationError("mastery_threshold must lie in [0, 1]")
        if self.mastery_streak < 1:
            raise ConfigurationError("mastery_streak must be at least 1")


@dataclass(frozen=True)
class RLSettings:
    episodes: int = 100
    eval_transitions: int = 100_000
    eval_states: int = 500
    eval_seed: int = 424242
    step_cap: int = 100_000
    mc_literal_dynamics: bool = False
    cache_dir: str | None = None

    def __post_init__(self):
        if self.episodes < 1:
            raise ConfigurationError("episodes must be at least 1")


@dataclass(frozen=True)
class MetricSettings:
    """Cadence of the overlap/interference measurements.

    every = k computes them each k-th step (supervised) or episode (RL);
    0 switches them off. phases, when set, restricts supervised
    measurement to those phase numbers.
    """

    every: int = 1
    phases: tuple | None = None

    def due(self, step_or_episode: int, phase: int | None = None) -> bool:
        if self.every <= 0:
            return False
        if phase is not None and self.phases is not None and phase not in self.phases:
            return False
        return step_or_episode % self.every == 0


@dataclass(frozen=True)
class SynthSettings:
    n_per_class: int = 2500
    class_count: int = 4
    seed: int = 7
    spread: float = 0.04


@dataclass(frozen=True)
class ExperimentConfig:
    testbed: str
    optimizer: OptimizerConfig
    seeds: tuple = ()
    sweep_seeds: tuple = ()
    scale: str = DESK
    network: NetworkSpec | None = None
    supervised: SupervisedSettings = field(default_factory=SupervisedSettings)
    rl: RLSettings = field(default_factory=RLSettings)
    metrics: MetricSettings = field(default_factory=MetricSettings)
    synth: SynthSettings = field(default_factory=SynthSettings)
    data_dir: str = "data"

    def __post_init__(self):
        if self.testbed not in TESTBEDS:
            raise ConfigurationError(
                f"unknown testbed {self.testbed!r}; expected one of {TESTBEDS}"
            )
        if self.scale not in (DESK, PAPER_SCALE):
            raise ConfigurationError(f"unknown scale {self.scale!r}")
        if self.network is None:
            object.__setattr__(self, "network", default_network(self.testbed))

    @property
    def is_supervised(self) -> bool:
        return self.testbed in SUPERVISED_TESTBEDS


def default_network(testbed) -> NetworkSpec:
    if testbed in (MNIST, FASHION_MNIST, SYNTH):
        return NetworkSpec((784, 100, 4), output_kind=CLASSIFICATION, init_scheme=GAUSSIAN)
    if testbed == "mountain_car":
        return NetworkSpec((2, 50, 1), output_kind=VALUE, init_scheme=XAVIER)
    if testbed == "acrobot":
        return NetworkSpec((6, 32, 256, 1), output_kind=VALUE, init_scheme=HE)
    raise ConfigurationError(f"unknown testbed {testbed!r}")


def supervised_alpha_grid() -> list:
    """2^-3 through 2^-18 at whole-power spacing."""
    return [2.0**-k for k in range(3, 19)]


def rl_alpha_grid() -> list:
    """2^-3 through 2^-18 at half-power spacing."""
    return [2.0 ** (-k / 2.0) for k in range(6, 37)]


def default_alpha_grid(testbed) -> list:
    return supervised_alpha_grid() if testbed in SUPERVISED_TESTBEDS else rl_alpha_grid()


def default_seed_blocks(scale) -> tuple:
    """(report seeds, sweep seeds); the two blocks never overlap."""
    if scale == PAPER_SCALE:
        return tuple(range(500)), tuple(range(10_000, 10_050))
    return tuple(range(100)), tuple(range(10_000, 10_025))


def scale_preset(scale) -> dict:
    if scale == PAPER_SCALE:
        return {"episodes": 500, "eval_transitions": 10_000_000}
    return {"episodes": 100, "eval_transitions": 100_000}


def parse_seed_spec(spec) -> tuple:
    """Seeds as a list of ints or an inclusive 'a..b' range string."""
    if isinstance(spec, str):
        parts = spec.split("..")
        if len(parts) != 2:
            raise ConfigurationError(f"bad seed range {spec!r}; expected 'a..b'")
        try:
            lo, hi = int(parts[0]), int(parts[1])
        except ValueError:
            raise ConfigurationError(f"bad seed range {spec!r}; expected integers")
        if hi < lo:
            raise ConfigurationError(f"empty seed range {spec!r}")
        return tuple(range(lo, hi + 1))
    if isinstance(spec, (list, tuple)):
        return tuple(int(s) for s in spec)
    raise ConfigurationError(f"seeds must be a list or 'a..b' string, got {spec!r}")


_SECTION_FIELDS = {
    "run": ("testbed", "scale", "seeds", "sweep_seeds", "data_dir"),
    "optimizer": ("kind", "alpha", "mu", "rho", "beta1", "beta2", "epsilon"),
    "network": ("layer_sizes", "output_kind", "init_scheme", "init_mean", "init_std", "bias_std"),
    "supervised": tuple(SupervisedSettings.__dataclass_fields__),
    "rl": tuple(RLSettings.__dataclass_fields__),
    "metrics": tuple(MetricSettings.__dataclass_fields__),
    "synth": tuple(SynthSettings.__dataclass_fields__),
}


def _strict(section: str, mapping: dict) -> dict:
    if mapping is None:
        return {}
    if not isinstance(mapping, dict):
        raise ConfigurationError(f"section {section!r} must be a mapping")
    allowed = _SECTION_FIELDS[section]
    for key in mapping:
        if key not in allowed:
            raise ConfigurationError(f"unknown key {section}.{key}")
    return dict(mapping)


def _tupled(mapping: dict, *keys) -> dict:
    for key in keys:
        if key in mapping and mapping[key] is not None:
            mapping[key] = tuple(mapping[key])
    return mapping


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigurationError("config root must be a mapping")
    for key in raw:
        if key not in _SECTION_FIELDS:
            raise ConfigurationError(f"unknown key {key}")

    run = _strict("run", raw.get("run"))
    if "testbed" not in run:
        raise ConfigurationError("run.testbed is required")
    testbed = run["testbed"]
    scale = run.get("scale", DESK)

    opt = _strict("optimizer", raw.get("optimizer"))
    if "kind" not in opt or "alpha" not in opt:
        raise ConfigurationError("optimizer.kind and optimizer.alpha are required")
    optimizer = OptimizerConfig(**opt)

    network = None
    if "network" in raw and raw["network"] is not None:
        net = _tupled(_strict("network", raw["network"]), "layer_sizes")
        defaults = default_network(testbed)
        if "layer_sizes" not in net:
            net["layer_sizes"] = defaults.layer_sizes
        net.setdefault("output_kind", defaults.output_kind)
        net.setdefault("init_scheme", defaults.init_scheme)
        network = NetworkSpec(**net)

    supervised = SupervisedSettings(
        **_tupled(
            _strict("supervised", raw.get("supervised")),
            "subtask_a", "subtask_b", "probe_folds",
        )
    )

    rl_raw = _strict("rl", raw.get("rl"))
    preset = scale_preset(scale)
    rl_raw.setdefault("episodes", preset["episodes"])
    rl_raw.setdefault("eval_transitions", preset["eval_transitions"])
    rl = RLSettings(**rl_raw)

    metrics = MetricSettings(**_tupled(_strict("metrics", raw.get("metrics")), "phases"))
    synth = SynthSettings(**_strict("synth", raw.get("synth")))

    report_block, sweep_block = default_seed_blocks(scale)
    seeds = parse_seed_spec(run["seeds"]) if "seeds" in run else report_block
    sweep_seeds = (
        parse_seed_spec(run["sweep_seeds"]) if "sweep_seeds" in run else sweep_block
    )

    return ExperimentConfig(
        testbed=testbed,
        optimizer=optimizer,
        seeds=seeds,
        sweep_seeds=sweep_seeds,
        scale=scale,
        network=network,
        supervised=supervised,
        rl=rl,
        metrics=metrics,
        synth=synth,
        data_dir=run.get("data_dir", "data"),
    )


def load_config(path) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as e:
        raise ConfigurationError(f"malformed config {path}: {e}")
    if raw is None:
        raise ConfigurationError(f"empty config {path}")
    return config_from_dict(raw)


def config_hash(config: ExperimentConfig) -> str:
    """Stable digest of every semantic field (paths excluded)."""
    payload = asdict(config)
    payload.pop("data_dir")
    payload["rl"].pop("cache_dir")
    canonical = json.dumps(payload, sort_keys=True, default=_jsonable)
    return hashlib.sha256(canonical.encode()).hexdigest()


def _jsonable(value):
    if isinstance(value, tuple):
        return list(value)
    raise TypeError(f"not serializable: {value!r}")


def with_optimizer(config: ExperimentConfig, kind: str, alpha: float) -> ExperimentConfig:
    return replace(config, optimizer=replace(config.optimizer, kind=kind, alpha=alpha))
