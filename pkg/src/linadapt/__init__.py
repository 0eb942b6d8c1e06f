"""Meta-RL with a shared trunk, per-task linear heads, and a weight-predicting
adapter network, on 2D point-robot task families."""

from .config import AdaptConfig, TrainConfig
from .envs import Env, TaskSpec, Transition, sample_task_set
from .metaloop import (
    MetaTrainResult,
    load_experiment,
    meta_test_adapter,
    meta_test_gradient,
    meta_train,
    save_experiment,
)
from .sac import MultiHeadSac

__version__ = "0.1.0"

__all__ = [
    "AdaptConfig",
    "TrainConfig",
    "Env",
    "TaskSpec",
    "Transition",
    "sample_task_set",
    "MetaTrainResult",
    "MultiHeadSac",
    "meta_train",
    "meta_test_adapter",
    "meta_test_gradient",
    "save_experiment",
    "load_experiment",
    "__version__",
]
