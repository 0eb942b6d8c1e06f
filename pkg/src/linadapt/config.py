"""Experiment configuration: dataclasses, JSON round-trip, key=value overrides."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields

# architecture presets: paper-scale and a desk-scale preset used in tests
ARCH_PRESETS = {
    "paper": {"trunk_widths": [300, 300, 300], "adapter_widths": [600, 600, 600]},
    "desk": {"trunk_widths": [64, 64, 64], "adapter_widths": [128, 128, 128]},
}


@dataclass
class TrainConfig:
    family: str = "goal_nav"
    n_train_tasks: int = 10
    m_test_in: int = 5
    m_test_ood: int = 5
    iterations: int = 50
    updates_per_iteration: int = 1000
    steps_collected_per_task_per_iteration: int = 400
    batch_size: int = 256
    gamma: float = 0.99
    tau: float = 0.005
    lr: float = 3e-4
    adapter_lr: float = 3e-4
    seed: int = 0
    horizon: int = 200
    arch: str = "paper"
    trunk_widths: list[int] = field(default_factory=list)
    adapter_widths: list[int] = field(default_factory=list)
    head_hidden: list[int] = field(default_factory=list)
    adapter_k: int = 1
    adapter_input_mode: str = "sars"
    buffer_capacity: int = 100_000
    sparsity_radius: float = 0.3
    train_adapter: bool = True
    eval_every: int = 0  # 0 disables periodic test-split evaluation
    eval_adaptation_steps: int = 30
    sparse_eval: bool = False  # sparse_nav protocol: train dense, evaluate sparse

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0, 1)")
        for name in (
            "n_train_tasks",
            "m_test_in",
            "m_test_ood",
            "iterations",
            "batch_size",
            "horizon",
            "buffer_capacity",
            "adapter_k",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.updates_per_iteration < 0 or self.steps_collected_per_task_per_iteration < 0:
            raise ValueError("update/collection counts must be non-negative")
        preset = ARCH_PRESETS.get(self.arch)
        if preset is None:
            raise ValueError(f"unknown arch preset {self.arch!r}")
        if not self.trunk_widths:
            self.trunk_widths = list(preset["trunk_widths"])
        if not self.adapter_widths:
            self.adapter_widths = list(preset["adapter_widths"])


@dataclass
class AdaptConfig:
    adaptation_steps: int = 30  # presets 1 / 30 / 60
    eval_episodes: int = 1
    mode: str = "adapter"  # adapter | gradient_baseline
    init_head: str = "first"  # first | random training head
    horizon: int = 200
    sparse: bool = False
    # gradient-baseline budget
    grad_episodes: int = 30
    grad_updates_per_episode: int = 100
    batch_size: int = 256

    def __post_init__(self):
        if self.adaptation_steps < 0:
            raise ValueError("adaptation_steps must be >= 0")
        if self.adaptation_steps > self.horizon:
            raise ValueError("adaptation_steps must not exceed the horizon")
        if self.mode not in ("adapter", "gradient_baseline"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.init_head not in ("first", "random"):
            raise ValueError(f"unknown init_head {self.init_head!r}")


def _coerce(value: str, typ):
    if typ is bool or typ == "bool":
        return value.lower() in ("1", "true", "yes")
    if typ is int or typ == "int":
        return int(value)
    if typ is float or typ == "float":
        return float(value)
    if typ is str or typ == "str":
        return value
    # list fields take JSON, e.g. trunk_widths=[64,64]
    return json.loads(value)


def apply_overrides(config, overrides: list[str]):
    """Apply 'key=value' overrides; returns a new config instance."""
    by_name = {f.name: f for f in fields(config)}
    updates = {}
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        if key not in by_name:
            raise ValueError(f"unknown config field {key!r}")
        updates[key] = _coerce(value, by_name[key].type)
    return dataclasses.replace(config, **updates)


def config_to_json(config) -> str:
    return json.dumps(dataclasses.asdict(config), indent=2)


def train_config_from_json(text: str) -> TrainConfig:
    return TrainConfig(**json.loads(text))


def adapt_config_from_json(text: str) -> AdaptConfig:
    return AdaptConfig(**json.loads(text))
