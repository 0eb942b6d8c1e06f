"""Feed-forward adapter: SARS window(s) -> flattened policy-head parameters.

Trained by MSE against the live training heads (targets move as the heads
train); at meta-test time a prediction installs a new head directly, with no
gradient steps. The adapter never propagates gradients into the policy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nets
from .nets import AdamState, DenseNet, adam_step, flatten_params, unflatten_params
from .replay import Batch, ReplayBuffer, SarsWindow
from .sac import MultiHeadPolicy

INPUT_MODES = ("sars", "sas")


def tuple_width(obs_dim: int, action_dim: int, mode: str) -> int:
    if mode == "sars":
        return 2 * obs_dim + action_dim + 1
    if mode == "sas":
        return 2 * obs_dim + action_dim
    raise ValueError(f"unknown input mode {mode!r}")


@dataclass
class AdapterTarget:
    """Flattened head parameters for one task (matrix row-major, bias after)."""

    flat: np.ndarray
    task_id: int


class AdapterNet:
    """MLP from encoded transition windows to a flat head parameter vector."""

    def __init__(
        self,
        obs_dim: int,
        action_dim: int,
        head_dims: list[int],
        hidden_widths: list[int],
        rng: np.random.Generator,
        k: int = 1,
        input_mode: str = "sars",
        lr: float = 3e-4,
    ):
        if input_mode not in INPUT_MODES:
            raise ValueError(f"unknown input mode {input_mode!r}")
        if k < 1:
            raise ValueError("window length k must be >= 1")
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.k = k
        self.input_mode = input_mode
        self.head_dims = list(head_dims)
        out_dim = sum(din * dout + dout for din, dout in zip(head_dims[:-1], head_dims[1:]))
        in_dim = k * tuple_width(obs_dim, action_dim, input_mode)
        self.net = DenseNet.init(
            [in_dim, *hidden_widths, out_dim], rng, hidden_activation="relu"
        )
        self.adam = AdamState.for_net(self.net, lr)

    @property
    def out_dim(self) -> int:
        return self.net.out_dim


def encode_input(window: SarsWindow, mode: str, k: int | None = None) -> np.ndarray:
    """Concatenate [s, a, r, s'] (sars) or [s, a, s'] (sas) per tuple, oldest first."""
    if mode not in INPUT_MODES:
        raise ValueError(f"unknown input mode {mode!r}")
    if k is not None and window.k != k:
        raise ValueError(f"window length {window.k} != expected {k}")
    parts = []
    for t in window.tuples:
        parts.append(np.asarray(t.state, dtype=np.float64))
        parts.append(np.asarray(t.action, dtype=np.float64))
        if mode == "sars":
            parts.append(np.array([t.reward], dtype=np.float64))
        parts.append(np.asarray(t.next_state, dtype=np.float64))
    return np.concatenate(parts)


def encode_batch(window_cols: list[Batch], mode: str) -> np.ndarray:
    """Vectorized encoding: window_cols[j] holds the j-th tuple of every window."""
    parts = []
    for col in window_cols:
        parts.append(col.states)
        parts.append(col.actions)
        if mode == "sars":
            parts.append(col.rewards[:, None])
        parts.append(col.next_states)
    return np.concatenate(parts, axis=1)


def make_target(policy: MultiHeadPolicy, task_id: int) -> AdapterTarget:
    """Current (not stale) head parameters, flattened in the package layout."""
    head = policy.head(task_id)
    return AdapterTarget(flatten_params(head), task_id)


def head_from_flat(flat: np.ndarray, head_dims: list[int]) -> DenseNet:
    return unflatten_params(flat, head_dims, hidden_activation="relu", output_activation="linear")


def adapter_loss(
    adapter: AdapterNet, inputs: np.ndarray, targets: np.ndarray
) -> tuple[float, nets.GradientBundle]:
    """Mean squared error over all output components and batch entries."""
    if inputs.shape[0] == 0:
        raise ValueError("empty adapter batch")
    if targets.shape != (inputs.shape[0], adapter.out_dim):
        raise nets.ShapeError(f"target shape {targets.shape}")
    pred, cache = nets.forward_batch(adapter.net, inputs)
    diff = pred - targets
    loss = float(np.mean(diff * diff))
    grad_out = 2.0 * diff / diff.size
    grads, _ = nets.backward_batch(adapter.net, cache, grad_out)
    return loss, grads


def adapter_step(adapter: AdapterNet, inputs: np.ndarray, targets: np.ndarray) -> float:
    loss, grads = adapter_loss(adapter, inputs, targets)
    adam_step(adapter.net.params(), grads.arrays(), adapter.adam)
    return loss


def adapter_step_grouped(
    adapter: AdapterNet,
    inputs: np.ndarray,
    targets: np.ndarray,
    slices: list[slice],
) -> float:
    """One Adam step on the sum over tasks of per-task-mean MSE losses."""
    pred, cache = nets.forward_batch(adapter.net, inputs)
    diff = pred - targets
    grad_out = np.empty_like(diff)
    loss = 0.0
    for rows in slices:
        n = (rows.stop - rows.start) * adapter.out_dim
        loss += float(np.sum(diff[rows] * diff[rows]) / n)
        grad_out[rows] = 2.0 * diff[rows] / n
    grads, _ = nets.backward_batch(adapter.net, cache, grad_out)
    adam_step(adapter.net.params(), grads.arrays(), adapter.adam)
    return loss


def predict_head(adapter: AdapterNet, window: SarsWindow) -> DenseNet:
    """Run the adapter on one window and unflatten the output into a head."""
    x = encode_input(window, adapter.input_mode, adapter.k)
    flat = nets.forward(adapter.net, x)
    return head_from_flat(flat, adapter.head_dims)


def training_batch_inputs(
    buffer: ReplayBuffer, adapter: AdapterNet, batch_size: int, rng: np.random.Generator
) -> np.ndarray:
    """Sample window inputs for one task from its replay buffer."""
    if adapter.k == 1:
        b = buffer.sample_batch(batch_size, rng)
        return encode_batch([b], adapter.input_mode)
    ends = buffer.sample_window_indices(adapter.k, batch_size, rng)
    cols = buffer.window_arrays(ends, adapter.k)
    return encode_batch(cols, adapter.input_mode)
