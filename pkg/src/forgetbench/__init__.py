"""forgetbench: measuring catastrophic forgetting in small networks.

Four gradient-based update rules, two phase-based supervised testbeds and
two value-estimation testbeds, scored by retention, relearning, activation
overlap, and pairwise interference.
"""

from .config import ExperimentConfig, load_config
from .data import synth_dataset
from .envs import Acrobot, MountainCar, get_env
from .metrics import (
    activation_overlap,
    pairwise_interference,
    relearning_score,
    retention_accuracy,
    rmsve,
)
from .nets import NetworkSpec, finite_difference_check, forward, init_network, loss_and_gradient
from .optim import OptimizerConfig, apply_update, init_state, virtual_update
from .runner import run_batch, run_rl, run_supervised, sweep_alpha

__version__ = "0.1.0"

__all__ = [
    "Acrobot",
    "ExperimentConfig",
    "MountainCar",
    "NetworkSpec",
    "OptimizerConfig",
    "activation_overlap",
    "apply_update",
    "finite_difference_check",
    "forward",
    "get_env",
    "init_network",
    "init_state",
    "load_config",
    "loss_and_gradient",
    "pairwise_interference",
    "relearning_score",
    "retention_accuracy",
    "rmsve",
    "run_batch",
    "run_rl",
    "run_supervised",
    "sweep_alpha",
    "synth_dataset",
    "virtual_update",
]
