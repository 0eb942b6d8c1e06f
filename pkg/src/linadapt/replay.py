"""Per-task replay storage with uniform batch sampling and same-episode
sliding-window extraction for the adapter's sequence-input mode."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs import Transition

DEFAULT_CAPACITY = 100_000


@dataclass
class Batch:
    """Column-stacked transitions sampled from one task's buffer."""

    states: np.ndarray  # (B, obs_dim)
    actions: np.ndarray  # (B, action_dim)
    rewards: np.ndarray  # (B,)
    next_states: np.ndarray  # (B, obs_dim)
    dones: np.ndarray  # (B,)

    def __len__(self) -> int:
        return self.states.shape[0]


@dataclass
class SarsWindow:
    """k temporally consecutive transitions from one episode, most recent last."""

    tuples: list[Transition]

    @property
    def k(self) -> int:
        return len(self.tuples)


class ReplayBuffer:
    """Ring buffer over transitions for a single task."""

    def __init__(self, task_id: int, obs_dim: int, action_dim: int, capacity: int = DEFAULT_CAPACITY):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.task_id = task_id
        self.capacity = capacity
        self.size = 0
        self._head = 0  # next write position
        self._episode_counter = 0
        self._in_episode = False
        self.states = np.zeros((capacity, obs_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, obs_dim))
        self.dones = np.zeros(capacity, dtype=bool)
        # episode bookkeeping for window validity checks
        self.episode_ids = np.full(capacity, -1, dtype=np.int64)
        self.episode_steps = np.zeros(capacity, dtype=np.int64)
        self._episode_step = 0

    def __len__(self) -> int:
        return self.size

    def push(self, t: Transition) -> None:
        i = self._head
        self.states[i] = t.state
        self.actions[i] = t.action
        self.rewards[i] = t.reward
        self.next_states[i] = t.next_state
        self.dones[i] = t.done
        if not self._in_episode:
            self._episode_counter += 1
            self._episode_step = 0
            self._in_episode = True
        self.episode_ids[i] = self._episode_counter
        self.episode_steps[i] = self._episode_step
        self._episode_step += 1
        if t.done:
            self._in_episode = False
        self._head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def end_episode(self) -> None:
        """Mark an episode boundary when the last push was not terminal."""
        self._in_episode = False

    def _gather(self, idx: np.ndarray) -> Batch:
        return Batch(
            self.states[idx].copy(),
            self.actions[idx].copy(),
            self.rewards[idx].copy(),
            self.next_states[idx].copy(),
            self.dones[idx].copy(),
        )

    def sample_batch(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Uniform with replacement."""
        if self.size == 0:
            raise ValueError(f"buffer for task {self.task_id} is empty")
        idx = rng.integers(0, self.size, size=batch_size)
        return self._gather(idx)

    def _window_start_ok(self, end: int, k: int) -> bool:
        # entries end-k+1 .. end must be consecutive same-episode slots that
        # have not been partially overwritten by the ring head
        ep = self.episode_ids[end]
        step = self.episode_steps[end]
        if step < k - 1:
            return False
        for j in range(1, k):
            pos = (end - j) % self.capacity
            if self.size == self.capacity and self._crosses_head(end, j):
                return False
            if self.episode_ids[pos] != ep or self.episode_steps[pos] != step - j:
                return False
        return True

    def _crosses_head(self, end: int, back: int) -> bool:
        # when full, the slot right before _head is the newest; a window may
        # not wrap across the write head into overwritten territory
        pos = (end - back) % self.capacity
        newest = (self._head - 1) % self.capacity
        # distance of slot behind newest, measured backwards
        d_end = (newest - end) % self.capacity
        d_pos = (newest - pos) % self.capacity
        return d_pos < d_end

    def sample_window_indices(self, k: int, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        """End indices of valid k-length windows, sampled uniformly with replacement."""
        if k <= 0:
            raise ValueError("k must be positive")
        if self.size == 0:
            raise ValueError(f"buffer for task {self.task_id} is empty")
        candidates = np.arange(self.size)
        # pushes are sequential, so an episode's transitions occupy consecutive
        # ring slots; a window is valid iff the episode has k entries ending
        # here and the window has not been partially overwritten
        start = (candidates - (k - 1)) % self.capacity
        valid = (self.episode_steps[candidates] >= k - 1) & (
            self.episode_ids[start] == self.episode_ids[candidates]
        )
        if self.size == self.capacity and k > 1:
            newest = (self._head - 1) % self.capacity
            d_end = (newest - candidates) % self.capacity
            valid &= d_end + (k - 1) < self.capacity
        eligible = candidates[valid]
        if eligible.size == 0:
            raise ValueError(f"no episode with >= {k} consecutive transitions")
        return eligible[rng.integers(0, eligible.size, size=batch_size)]

    def window_arrays(self, ends: np.ndarray, k: int) -> list[Batch]:
        """For each window position j (oldest first) the batch of j-th tuples."""
        return [self._gather((ends - (k - 1 - j)) % self.capacity) for j in range(k)]

    def sample_windows(self, k: int, batch_size: int, rng: np.random.Generator) -> list[SarsWindow]:
        ends = self.sample_window_indices(k, batch_size, rng)
        windows = []
        for end in ends:
            tuples = []
            for j in range(k - 1, -1, -1):
                pos = (end - j) % self.capacity
                tuples.append(
                    Transition(
                        self.states[pos].copy(),
                        self.actions[pos].copy(),
                        float(self.rewards[pos]),
                        self.next_states[pos].copy(),
                        bool(self.dones[pos]),
                    )
                )
            windows.append(SarsWindow(tuples))
        return windows

    def all_transitions(self) -> Batch:
        return self._gather(np.arange(self.size))

    def dump(self, path) -> None:
        """Persist current contents for post-hoc analysis."""
        np.savez(
            path,
            task_id=self.task_id,
            states=self.states[: self.size],
            actions=self.actions[: self.size],
            rewards=self.rewards[: self.size],
            next_states=self.next_states[: self.size],
            dones=self.dones[: self.size],
            episode_ids=self.episode_ids[: self.size],
            episode_steps=self.episode_steps[: self.size],
        )
