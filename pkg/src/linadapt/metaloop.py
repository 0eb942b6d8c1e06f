"""Orchestration of meta-training, adapter-based meta-testing, the gradient
head-adaptation baseline, and the nonlinear-head ablation variant."""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import adapter as adapter_mod
from . import envs, nets
from .adapter import AdapterNet, encode_batch, predict_head
from .config import AdaptConfig, TrainConfig
from .envs import Env, TaskSpec, Transition
from .metrics import MetricsRecord
from .replay import Batch, ReplayBuffer, SarsWindow
from .sac import DenseNet, MultiHeadSac


class TrainingDiverged(RuntimeError):
    """Raised when a loss goes non-finite; carries the diagnostic record."""

    def __init__(self, message: str, record: dict):
        super().__init__(message)
        self.record = record


@dataclass
class MetaTrainResult:
    sac: MultiHeadSac
    adapter: AdapterNet | None
    metrics: list[MetricsRecord]
    buffers: dict[int, ReplayBuffer]
    tasks: list[TaskSpec]
    config: TrainConfig


@dataclass
class AdapterTestResult:
    head: DenseNet
    trajectory: list[Transition]
    episode_return: float
    adapt_seconds: float


@dataclass
class GradientTestResult:
    head: DenseNet
    curve: list[tuple[int, float]]  # (env steps consumed, deterministic return)
    final_return: float
    adapt_seconds: float
    env_steps: int


def collect_episode(
    sac: MultiHeadSac,
    head: DenseNet,
    env: Env,
    rng: np.random.Generator,
    mode: str = "sample",
    buffer: ReplayBuffer | None = None,
) -> tuple[list[Transition], float]:
    """Roll out one full episode with a fixed head; optionally push to a buffer."""
    obs = env.reset()
    transitions = []
    total = 0.0
    while not env.done:
        action, _ = sac.policy.act(obs, head=head, mode=mode, rng=rng)
        tr = env.step(action)
        transitions.append(tr)
        total += tr.reward
        obs = tr.next_state
        if buffer is not None:
            buffer.push(tr)
    if buffer is not None:
        buffer.end_episode()
    return transitions, total


def random_policy_return(
    task: TaskSpec, rng: np.random.Generator, horizon: int, sparse: bool = False
) -> float:
    """Monte-Carlo baseline: uniform actions in the box."""
    env = Env(task, horizon, sparse)
    env.reset()
    total = 0.0
    while not env.done:
        total += env.step(rng.uniform(-1.0, 1.0, size=envs.ACTION_DIM)).reward
    return total


def build_learner(config: TrainConfig, tasks: list[TaskSpec], rng: np.random.Generator):
    """Fresh SAC learner + adapter + buffers for the given train tasks."""
    sac = MultiHeadSac(
        envs.OBS_DIM,
        envs.ACTION_DIM,
        list(config.trunk_widths),
        rng,
        head_hidden=list(config.head_hidden) or None,
        lr=config.lr,
        gamma=config.gamma,
        tau=config.tau,
    )
    buffers = {}
    for task in tasks:
        sac.add_task(task.id, rng)
        buffers[task.id] = ReplayBuffer(
            task.id, envs.OBS_DIM, envs.ACTION_DIM, config.buffer_capacity
        )
    adapter = None
    if config.train_adapter:
        adapter = AdapterNet(
            envs.OBS_DIM,
            envs.ACTION_DIM,
            sac.policy.net.head_dims,
            list(config.adapter_widths),
            rng,
            k=config.adapter_k,
            input_mode=config.adapter_input_mode,
            lr=config.adapter_lr,
        )
    return sac, adapter, buffers


def meta_train(
    config: TrainConfig,
    tasks: list[TaskSpec],
    rng: np.random.Generator | None = None,
    eval_tasks_in: list[TaskSpec] | None = None,
    eval_tasks_ood: list[TaskSpec] | None = None,
    progress=None,
) -> MetaTrainResult:
    """Multi-task SAC + adapter training loop.

    Per iteration: collect episodes into each task's buffer, then apply
    updates with per-task gradients summed; record one MetricsRecord.
    """
    train_tasks = [t for t in tasks if t.split == "train"]
    if len(train_tasks) != len(tasks):
        raise ValueError("meta_train expects train-split tasks only")
    if not train_tasks:
        raise ValueError("no train tasks")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    sac, adapter, buffers = build_learner(config, train_tasks, rng)

    metrics: list[MetricsRecord] = []
    env_steps_total = 0
    t_start = time.monotonic()
    episodes_per_task = max(
        1, int(np.ceil(config.steps_collected_per_task_per_iteration / config.horizon))
    )
    for iteration in range(config.iterations):
        per_task_returns = []
        for task in train_tasks:
            env = Env(task, config.horizon, sparse=False)
            ep_returns = []
            for _ in range(episodes_per_task):
                _, ret = collect_episode(
                    sac, sac.policy.head(task.id), env, rng, "sample", buffers[task.id]
                )
                ep_returns.append(ret)
                env_steps_total += config.horizon
            per_task_returns.append(float(np.mean(ep_returns)))

        sums = {"actor_loss": 0.0, "critic_loss": 0.0, "entropy_loss": 0.0, "adapter_loss": 0.0}
        for _ in range(config.updates_per_iteration):
            batches = {
                task.id: buffers[task.id].sample_batch(config.batch_size, rng)
                for task in train_tasks
            }
            losses = sac.update(batches, rng)
            if not all(np.isfinite(v) for v in losses.values()):
                raise TrainingDiverged(
                    "non-finite SAC loss",
                    {"iteration": iteration, "losses": losses, "env_steps": env_steps_total},
                )
            sums["actor_loss"] += losses["actor_loss"]
            sums["critic_loss"] += losses["critic_loss"]
            sums["entropy_loss"] += losses["entropy_loss"]
            if adapter is not None:
                a_loss = _adapter_update(adapter, sac, buffers, train_tasks, batches, config, rng)
                if not np.isfinite(a_loss):
                    raise TrainingDiverged(
                        "non-finite adapter loss",
                        {"iteration": iteration, "adapter_loss": a_loss},
                    )
                sums["adapter_loss"] += a_loss
        n_up = max(1, config.updates_per_iteration)

        test_in = test_ood = float("nan")
        if config.eval_every and (iteration + 1) % config.eval_every == 0:
            adapt_cfg = AdaptConfig(
                adaptation_steps=config.eval_adaptation_steps
                if adapter is not None
                else 0,
                horizon=config.horizon,
                sparse=config.sparse_eval,
            )
            if eval_tasks_in:
                test_in = float(
                    np.mean(
                        [
                            meta_test_adapter(sac.policy, adapter, t, adapt_cfg, rng).episode_return
                            for t in eval_tasks_in
                        ]
                    )
                )
            if eval_tasks_ood:
                test_ood = float(
                    np.mean(
                        [
                            meta_test_adapter(sac.policy, adapter, t, adapt_cfg, rng).episode_return
                            for t in eval_tasks_ood
                        ]
                    )
                )

        record = MetricsRecord(
            iteration=iteration,
            env_steps_total=env_steps_total,
            wall_clock_s=time.monotonic() - t_start,
            train_returns=per_task_returns,
            actor_loss=sums["actor_loss"] / n_up,
            critic_loss=sums["critic_loss"] / n_up,
            adapter_loss=sums["adapter_loss"] / n_up,
            entropy_loss=sums["entropy_loss"] / n_up,
            alpha=sac.tuner.alpha,
            test_return_in_dist=test_in,
            test_return_ood=test_ood,
        )
        metrics.append(record)
        if progress is not None:
            progress(record)
    return MetaTrainResult(sac, adapter, metrics, buffers, train_tasks, config)


def _adapter_update(
    adapter: AdapterNet,
    sac: MultiHeadSac,
    buffers: dict[int, ReplayBuffer],
    train_tasks: list[TaskSpec],
    batches: dict[int, Batch],
    config: TrainConfig,
    rng: np.random.Generator,
) -> float:
    """One adapter step on the SAC batches paired with each task's live head."""
    inputs_parts, target_parts, slices = [], [], []
    lo = 0
    for task in train_tasks:
        if adapter.k == 1:
            x = encode_batch([batches[task.id]], adapter.input_mode)
        else:
            x = adapter_mod.training_batch_inputs(
                buffers[task.id], adapter, config.batch_size, rng
            )
        target = adapter_mod.make_target(sac.policy, task.id).flat
        inputs_parts.append(x)
        target_parts.append(np.tile(target, (x.shape[0], 1)))
        slices.append(slice(lo, lo + x.shape[0]))
        lo += x.shape[0]
    inputs = np.concatenate(inputs_parts)
    targets = np.concatenate(target_parts)
    return adapter_mod.adapter_step_grouped(adapter, inputs, targets, slices)


def _initial_head(policy, adapt_config: AdaptConfig, rng: np.random.Generator) -> DenseNet:
    ids = sorted(policy.heads)
    if not ids:
        raise ValueError("policy has no training heads")
    tid = ids[0] if adapt_config.init_head == "first" else int(rng.choice(ids))
    return policy.head(tid).copy()


def meta_test_adapter(
    policy,
    adapter: AdapterNet | None,
    task: TaskSpec,
    adapt_config: AdaptConfig,
    rng: np.random.Generator,
) -> AdapterTestResult:
    """Online adaptation: act, observe, predict a new head, install; after the
    adaptation budget the last head is frozen for the rest of the single episode.

    Consumes exactly one episode of environment interaction. The policy trunk
    and training heads are never mutated. Actions use the policy mean.
    """
    if adapt_config.adaptation_steps > 0 and adapter is None:
        raise ValueError("adapter required when adaptation_steps > 0")
    head = _initial_head(policy, adapt_config, rng)
    env = Env(task, adapt_config.horizon, adapt_config.sparse)
    obs = env.reset()
    trajectory: list[Transition] = []
    total = 0.0
    adapt_seconds = 0.0
    t0 = time.monotonic()
    for t in range(adapt_config.horizon):
        action, _ = policy.act(obs, head=head, mode="mean")
        tr = env.step(action)
        trajectory.append(tr)
        total += tr.reward
        obs = tr.next_state
        if t < adapt_config.adaptation_steps:
            window = _recent_window(trajectory, adapter.k)
            head = predict_head(adapter, window)
        if t + 1 == adapt_config.adaptation_steps:
            adapt_seconds = time.monotonic() - t0
    if adapt_config.adaptation_steps == 0:
        adapt_seconds = 0.0
    return AdapterTestResult(head, trajectory, total, adapt_seconds)


def _recent_window(trajectory: list[Transition], k: int) -> SarsWindow:
    """Last k transitions; before k steps exist, pad by repeating the first."""
    recent = trajectory[-k:]
    while len(recent) < k:
        recent = [trajectory[0]] + recent
    return SarsWindow(list(recent))


def meta_test_gradient(
    policy,
    critic,
    task: TaskSpec,
    adapt_config: AdaptConfig,
    rng: np.random.Generator,
    gamma: float = 0.99,
    tau: float = 0.005,
    alpha_fixed: float | None = None,
) -> GradientTestResult:
    """Head-only SAC optimization baseline: collect episodes into a fresh
    buffer and update only the policy head and critic heads; trunks frozen.

    The returned curve pairs cumulative collection env-steps with a
    deterministic evaluation return (evaluation rollouts are measurement only
    and excluded from the step count and timing).
    """
    learner = _clone_for_adaptation(policy, critic, gamma, tau, rng)
    tid = -1  # the fresh adaptation head's id
    buffer = ReplayBuffer(tid, envs.OBS_DIM, envs.ACTION_DIM)
    if alpha_fixed is not None:
        learner.tuner._log_alpha_arr[...] = np.log(alpha_fixed)

    trunk_before = nets.flatten_params(learner.policy.net.trunk).copy()
    env = Env(task, adapt_config.horizon, adapt_config.sparse)
    curve: list[tuple[int, float]] = []
    env_steps = 0
    adapt_seconds = 0.0
    for _ in range(adapt_config.grad_episodes):
        t0 = time.monotonic()
        collect_episode(learner, learner.policy.head(tid), env, rng, "sample", buffer)
        env_steps += adapt_config.horizon
        for _ in range(adapt_config.grad_updates_per_episode):
            batch = buffer.sample_batch(adapt_config.batch_size, rng)
            learner.update({tid: batch}, rng, heads_only=True)
        adapt_seconds += time.monotonic() - t0
        _, ret = collect_episode(learner, learner.policy.head(tid), env, rng, "mean")
        curve.append((env_steps, ret))
    assert np.array_equal(nets.flatten_params(learner.policy.net.trunk), trunk_before)
    final = curve[-1][1] if curve else float("nan")
    return GradientTestResult(
        learner.policy.head(tid).copy(), curve, final, adapt_seconds, env_steps
    )


def _clone_for_adaptation(policy, critic, gamma, tau, rng) -> MultiHeadSac:
    """Copy trunks and seed a single fresh head (clone of the first training
    head) so the caller's networks are never touched."""
    obs_dim, action_dim = policy.obs_dim, policy.action_dim
    trunk_widths = policy.net.trunk.layer_dims[1:]
    head_hidden = policy.net.head_dims[1:-1] or None
    learner = MultiHeadSac(
        obs_dim, action_dim, list(trunk_widths), rng, head_hidden=head_hidden,
        gamma=gamma, tau=tau,
    )
    learner.policy.net.trunk = policy.net.trunk.copy()
    learner.critic.q1.net.trunk = critic.q1.net.trunk.copy()
    learner.critic.q2.net.trunk = critic.q2.net.trunk.copy()
    first = sorted(policy.heads)[0]
    learner.policy.net.heads = {-1: policy.head(first).copy()}
    learner.policy.net.head_adam = {
        -1: nets.AdamState.for_net(learner.policy.net.heads[-1], learner.policy.net.lr)
    }
    for stack, src in (
        (learner.critic.q1.net, critic.q1.net),
        (learner.critic.q2.net, critic.q2.net),
    ):
        stack.heads = {-1: src.head(first).copy()}
        stack.head_adam = {-1: nets.AdamState.for_net(stack.heads[-1], stack.lr)}
    learner.critic.q1_target = learner.critic.q1.net.copy_frozen()
    learner.critic.q2_target = learner.critic.q2.net.copy_frozen()
    return learner


def nonlinear_head_config(config: TrainConfig, width: int = 50) -> TrainConfig:
    """Two-layer output-head ablation; the adapter predicts both layers."""
    return dataclasses.replace(config, head_hidden=[width])


def _adam_pack(aux: dict, steps: dict, name: str, state: nets.AdamState) -> None:
    aux[f"adam/{name}/m"] = np.concatenate([a.ravel() for a in state.first_moment])
    aux[f"adam/{name}/v"] = np.concatenate([a.ravel() for a in state.second_moment])
    steps[name] = state.step_count


def _adam_unpack(aux: dict, steps: dict, name: str, state: nets.AdamState) -> None:
    for key, moments in (("m", state.first_moment), ("v", state.second_moment)):
        flat = aux[f"adam/{name}/{key}"]
        i = 0
        for arr in moments:
            arr[...] = flat[i : i + arr.size].reshape(arr.shape)
            i += arr.size
    state.step_count = int(steps[name])


def save_experiment(path, result: MetaTrainResult) -> None:
    """Versioned checkpoint of trunks, heads, targets, adapter, entropy and
    Adam states; layouts for the adapter and heads travel together."""
    sac = result.sac
    nets_dict = {"policy/trunk": sac.policy.net.trunk}
    for tid, head in sac.policy.net.heads.items():
        nets_dict[f"policy/head/{tid}"] = head
    for name, stack in (("q1", sac.critic.q1.net), ("q2", sac.critic.q2.net)):
        nets_dict[f"critic/{name}/trunk"] = stack.trunk
        for tid, head in stack.heads.items():
            nets_dict[f"critic/{name}/head/{tid}"] = head
    for name, target in (("q1", sac.critic.q1_target), ("q2", sac.critic.q2_target)):
        nets_dict[f"critic/{name}_target/trunk"] = target.trunk
        for tid, head in target.heads.items():
            nets_dict[f"critic/{name}_target/head/{tid}"] = head
    if result.adapter is not None:
        nets_dict["adapter"] = result.adapter.net
    aux: dict[str, np.ndarray] = {}
    steps: dict[str, int] = {}
    _adam_pack(aux, steps, "policy/trunk", sac.policy.net.trunk_adam)
    for tid, st in sac.policy.net.head_adam.items():
        _adam_pack(aux, steps, f"policy/head/{tid}", st)
    for name, stack in (("q1", sac.critic.q1.net), ("q2", sac.critic.q2.net)):
        _adam_pack(aux, steps, f"critic/{name}/trunk", stack.trunk_adam)
        for tid, st in stack.head_adam.items():
            _adam_pack(aux, steps, f"critic/{name}/head/{tid}", st)
    if result.adapter is not None:
        _adam_pack(aux, steps, "adapter", result.adapter.adam)
    _adam_pack(aux, steps, "log_alpha", sac.tuner.adam)
    extra = {
        "config": dataclasses.asdict(result.config),
        "tasks": json.loads(envs.tasks_to_json(result.tasks, result.config.seed)),
        "log_alpha": sac.tuner.log_alpha_value,
        "adapter_k": result.adapter.k if result.adapter else None,
        "adapter_input_mode": result.adapter.input_mode if result.adapter else None,
        "head_dims": sac.policy.net.head_dims,
        "adam_steps": steps,
    }
    nets.save_checkpoint(path, nets_dict, extra, aux)


def load_experiment(path) -> MetaTrainResult:
    """Rebuild policy, critics, adapter, and entropy state from a checkpoint."""
    nets_dict, extra, aux = nets.load_checkpoint(path)
    config = TrainConfig(**extra["config"])
    tasks = envs.tasks_from_json(json.dumps(extra["tasks"]))
    rng = np.random.default_rng(0)  # placeholder init, overwritten below
    sac = MultiHeadSac(
        envs.OBS_DIM,
        envs.ACTION_DIM,
        list(config.trunk_widths),
        rng,
        head_hidden=list(config.head_hidden) or None,
        lr=config.lr,
        gamma=config.gamma,
        tau=config.tau,
    )
    sac.policy.net.trunk = nets_dict["policy/trunk"]
    head_ids = sorted(
        int(n.rsplit("/", 1)[1]) for n in nets_dict if n.startswith("policy/head/")
    )
    sac.policy.net.heads = {tid: nets_dict[f"policy/head/{tid}"] for tid in head_ids}
    sac.policy.net.head_adam = {
        tid: nets.AdamState.for_net(sac.policy.net.heads[tid], config.lr) for tid in head_ids
    }
    for name, stack in (("q1", sac.critic.q1.net), ("q2", sac.critic.q2.net)):
        stack.trunk = nets_dict[f"critic/{name}/trunk"]
        stack.heads = {tid: nets_dict[f"critic/{name}/head/{tid}"] for tid in head_ids}
        stack.head_adam = {
            tid: nets.AdamState.for_net(stack.heads[tid], config.lr) for tid in head_ids
        }
    for name, target in (("q1", sac.critic.q1_target), ("q2", sac.critic.q2_target)):
        target.trunk = nets_dict[f"critic/{name}_target/trunk"]
        target.heads = {tid: nets_dict[f"critic/{name}_target/head/{tid}"] for tid in head_ids}
    sac.tuner._log_alpha_arr[...] = extra["log_alpha"]
    adapter = None
    if "adapter" in nets_dict:
        adapter = AdapterNet(
            envs.OBS_DIM,
            envs.ACTION_DIM,
            extra["head_dims"],
            list(config.adapter_widths),
            rng,
            k=extra["adapter_k"],
            input_mode=extra["adapter_input_mode"],
            lr=config.adapter_lr,
        )
        adapter.net = nets_dict["adapter"]
        adapter.adam = nets.AdamState.for_net(adapter.net, config.adapter_lr)
    steps = extra.get("adam_steps", {})
    if steps:
        _adam_unpack(aux, steps, "policy/trunk", sac.policy.net.trunk_adam)
        for tid in head_ids:
            _adam_unpack(aux, steps, f"policy/head/{tid}", sac.policy.net.head_adam[tid])
        for name, stack in (("q1", sac.critic.q1.net), ("q2", sac.critic.q2.net)):
            _adam_unpack(aux, steps, f"critic/{name}/trunk", stack.trunk_adam)
            for tid in head_ids:
                _adam_unpack(aux, steps, f"critic/{name}/head/{tid}", stack.head_adam[tid])
        if adapter is not None:
            _adam_unpack(aux, steps, "adapter", adapter.adam)
        _adam_unpack(aux, steps, "log_alpha", sac.tuner.adam)
    buffers = {tid: ReplayBuffer(tid, envs.OBS_DIM, envs.ACTION_DIM) for tid in head_ids}
    return MetaTrainResult(sac, adapter, [], buffers, tasks, config)
