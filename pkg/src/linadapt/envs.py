"""2D point-robot task families with train / in-distribution / OOD splits.

Three families share the same integrator dynamics (position += dt * action,
actions clipped to [-1, 1]^2) and differ in reward:

  goal_nav    r = -||p' - goal||
  direction   r = <action, goal_direction>
  sparse_nav  dense variant as goal_nav; sparse variant
              r = max(0, 1 - ||p' - goal|| / radius)

Observations are the position only; task parameters are never observed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

FAMILIES = ("goal_nav", "direction", "sparse_nav")
SPLITS = ("train", "test_in_dist", "test_ood")

DT = 0.1
DEFAULT_HORIZON = 200
DEFAULT_SPARSITY_RADIUS = 0.3
OBS_DIM = 2
ACTION_DIM = 2


@dataclass(frozen=True)
class TaskSpec:
    """One MDP in a family: goal (or unit direction), split label, id."""

    family: str
    goal: tuple[float, float]
    split: str
    id: int
    sparsity_radius: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")
        if self.family == "direction":
            norm = float(np.hypot(*self.goal))
            if abs(norm - 1.0) > 1e-9:
                raise ValueError(f"direction vector must be unit norm, got {norm}")
        if self.family == "sparse_nav" and self.sparsity_radius <= 0:
            raise ValueError("sparse_nav requires sparsity_radius > 0")

    @property
    def goal_array(self) -> np.ndarray:
        return np.asarray(self.goal, dtype=np.float64)


@dataclass
class EnvState:
    position: np.ndarray  # (2,)
    step_index: int
    done: bool


@dataclass(frozen=True)
class Transition:
    """One SARS tuple plus terminal flag; the adapter's input unit."""

    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool


def _angles_to_points(angles: np.ndarray) -> list[tuple[float, float]]:
    return [(float(np.cos(a)), float(np.sin(a))) for a in angles]


def sample_task_set(
    family: str,
    n_train: int,
    m_test_in: int,
    m_test_ood: int,
    rng: np.random.Generator,
    sparsity_radius: float = DEFAULT_SPARSITY_RADIUS,
) -> list[TaskSpec]:
    """Sample a task family with disjoint train/in-dist (upper half) and OOD
    (lower half) regions.

    Goals (and directions) are unit vectors: train and in-distribution test
    angles are uniform on [0, pi), OOD angles uniform on [pi, 2*pi).
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    if min(n_train, m_test_in, m_test_ood) < 1:
        raise ValueError("all counts must be >= 1")
    radius = sparsity_radius if family == "sparse_nav" else 0.0
    tasks: list[TaskSpec] = []
    next_id = 0
    for split, count, lo, hi in (
        ("train", n_train, 0.0, np.pi),
        ("test_in_dist", m_test_in, 0.0, np.pi),
        ("test_ood", m_test_ood, np.pi, 2.0 * np.pi),
    ):
        angles = rng.uniform(lo, hi, size=count)
        for goal in _angles_to_points(angles):
            tasks.append(TaskSpec(family, goal, split, next_id, radius))
            next_id += 1
    return tasks


def reset(task: TaskSpec, rng: np.random.Generator | None = None) -> EnvState:
    """Deterministic initial state at the origin."""
    return EnvState(np.zeros(2), 0, False)


def step(
    task: TaskSpec,
    state: EnvState,
    action: np.ndarray,
    horizon: int = DEFAULT_HORIZON,
    sparse: bool = False,
) -> tuple[EnvState, float]:
    """Advance one time-step; returns (next state, reward)."""
    if state.done:
        raise RuntimeError("cannot step a finished episode")
    a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
    pos = state.position + DT * a
    goal = task.goal_array
    if task.family == "direction":
        reward = float(a @ goal)
    else:
        dist = float(np.linalg.norm(pos - goal))
        if task.family == "sparse_nav" and sparse:
            reward = max(0.0, 1.0 - dist / task.sparsity_radius)
        else:
            reward = -dist
    idx = state.step_index + 1
    return EnvState(pos, idx, idx >= horizon), reward


def state_vector(task: TaskSpec, state: EnvState) -> np.ndarray:
    """Observation encoding: position only (task-blind)."""
    return state.position.astype(np.float64).copy()


class Env:
    """Convenience wrapper binding a task to a horizon and reward mode."""

    def __init__(self, task: TaskSpec, horizon: int = DEFAULT_HORIZON, sparse: bool = False):
        if task.family != "sparse_nav" and sparse:
            raise ValueError("sparse rewards only apply to the sparse_nav family")
        self.task = task
        self.horizon = horizon
        self.sparse = sparse
        self.state = reset(task)

    def reset(self) -> np.ndarray:
        self.state = reset(self.task)
        return state_vector(self.task, self.state)

    def step(self, action: np.ndarray) -> Transition:
        obs = state_vector(self.task, self.state)
        nxt, reward = step(self.task, self.state, action, self.horizon, self.sparse)
        self.state = nxt
        return Transition(obs, np.clip(action, -1.0, 1.0), reward, state_vector(self.task, nxt), nxt.done)

    @property
    def done(self) -> bool:
        return self.state.done


def tasks_to_json(tasks: list[TaskSpec], seed: int | None = None) -> str:
    payload = {
        "seed": seed,
        "tasks": [
            {
                "family": t.family,
                "goal": list(t.goal),
                "split": t.split,
                "id": t.id,
                "sparsity_radius": t.sparsity_radius,
            }
            for t in tasks
        ],
    }
    return json.dumps(payload, indent=2)


def tasks_from_json(text: str) -> list[TaskSpec]:
    payload = json.loads(text)
    return [
        TaskSpec(d["family"], tuple(d["goal"]), d["split"], d["id"], d.get("sparsity_radius", 0.0))
        for d in payload["tasks"]
    ]
