"""Soft actor-critic with a shared trunk and per-task output heads.

The policy and both critics each consist of one shared DenseNet trunk plus a
small per-task head network (a single linear layer by default, optionally a
two-layer head for the nonlinear-output ablation). Twin critics with Polyak-
averaged targets and automatic entropy tuning.

All gradients are computed analytically via the nets module. A gradient step
for a subset of tasks touches only those tasks' heads; every head owns its
own Adam state so untouched heads stay bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import nets
from .nets import AdamState, DenseNet, GradientBundle, adam_step
from .replay import Batch

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass
class TaskHead:
    """Per-task linear output parameters."""

    w: np.ndarray  # (d1, d2)
    b: np.ndarray  # (d2,)
    task_id: int = -1

    def to_net(self) -> DenseNet:
        return DenseNet([self.w.shape[0], self.w.shape[1]], [self.w.copy()], [self.b.copy()])

    @classmethod
    def from_net(cls, net: DenseNet, task_id: int = -1) -> "TaskHead":
        if net.n_layers != 1:
            raise ValueError("TaskHead requires a single-layer head")
        return cls(net.weights[0].copy(), net.biases[0].copy(), task_id)


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


def squash(mean: np.ndarray, log_std: np.ndarray, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """tanh-squashed Gaussian sample; returns (action, log_prob, pre-squash u).

    log_prob includes the tanh change-of-variables correction, computed in the
    numerically stable form log(1 - tanh(u)^2) = 2*(log 2 - u - softplus(-2u)).
    """
    std = np.exp(log_std)
    u = mean + std * xi
    a = np.tanh(u)
    gauss = -0.5 * xi * xi - log_std - _LOG_SQRT_2PI
    corr = 2.0 * (math.log(2.0) - u - _softplus(-2.0 * u))
    log_prob = np.sum(gauss - corr, axis=-1)
    return a, log_prob, u


class HeadedNet:
    """Shared trunk + per-task head networks with per-head Adam states."""

    def __init__(
        self,
        in_dim: int,
        trunk_widths: list[int],
        head_out_dim: int,
        rng: np.random.Generator,
        head_hidden: list[int] | None = None,
        lr: float = 3e-4,
        head_init_scale: float | None = None,
    ):
        # heads are the real output layer, so relu is applied to every trunk
        # layer including the last (the trunk net itself is declared linear-out
        # and the extra relu is handled in features/backward)
        self.trunk = DenseNet.init(
            [in_dim, *trunk_widths], rng, hidden_activation="relu", output_activation="linear"
        )
        self._relu_trunk_out = True
        self.d1 = trunk_widths[-1]
        self.head_dims = [self.d1, *(head_hidden or []), head_out_dim]
        self.head_init_scale = head_init_scale
        self.lr = lr
        self.heads: dict[int, DenseNet] = {}
        self.trunk_adam = AdamState.for_net(self.trunk, lr)
        self.head_adam: dict[int, AdamState] = {}

    def add_head(self, task_id: int, rng: np.random.Generator) -> DenseNet:
        if task_id in self.heads:
            raise ValueError(f"head for task {task_id} already exists")
        head = DenseNet.init(
            self.head_dims,
            rng,
            hidden_activation="relu",
            output_activation="linear",
            final_scale=self.head_init_scale,
        )
        self.heads[task_id] = head
        self.head_adam[task_id] = AdamState.for_net(head, self.lr)
        return head

    def head(self, task_id: int) -> DenseNet:
        if task_id not in self.heads:
            raise KeyError(f"no head for task {task_id}")
        return self.heads[task_id]

    def features(self, X: np.ndarray) -> tuple[np.ndarray, nets.ForwardCache]:
        out, cache = nets.forward_batch(self.trunk, X)
        F = np.maximum(out, 0.0) if self._relu_trunk_out else out
        return F, cache

    def head_forward(self, head: DenseNet, F: np.ndarray) -> tuple[np.ndarray, nets.ForwardCache]:
        return nets.forward_batch(head, F)

    def forward(self, X: np.ndarray, head: DenseNet) -> np.ndarray:
        F, _ = self.features(X)
        return self.head_forward(head, F)[0]

    def backward(
        self,
        trunk_cache: nets.ForwardCache,
        head_caches: list[tuple[DenseNet, nets.ForwardCache, np.ndarray, slice]],
        F: np.ndarray,
        out_grads: list[np.ndarray],
    ) -> tuple[GradientBundle, dict[int, GradientBundle], np.ndarray]:
        """Backprop grouped head output grads through heads then the trunk.

        head_caches entries are (head, cache, F_segment, row_slice); returns
        (trunk grads, per-head grads keyed by position in head_caches, input grad).
        """
        GF = np.zeros_like(F)
        head_grads: dict[int, GradientBundle] = {}
        for i, ((head, cache, _, rows), G) in enumerate(zip(head_caches, out_grads)):
            hg, fg = nets.backward_batch(head, cache, G)
            head_grads[i] = hg
            GF[rows] += fg
        if self._relu_trunk_out:
            GF = GF * (trunk_cache.post[-1] > 0.0)
        trunk_grads, input_grad = nets.backward_batch(self.trunk, trunk_cache, GF)
        return trunk_grads, head_grads, input_grad

    def step_trunk(self, grads: GradientBundle) -> None:
        adam_step(self.trunk.params(), grads.arrays(), self.trunk_adam)

    def step_head(self, task_id: int, grads: GradientBundle) -> None:
        head = self.head(task_id)
        adam_step(head.params(), grads.arrays(), self.head_adam[task_id])

    def param_count(self, heads: bool = True) -> int:
        n = self.trunk.param_count()
        if heads:
            n += sum(h.param_count() for h in self.heads.values())
        return n

    def copy_frozen(self) -> "FrozenHeadedNet":
        return FrozenHeadedNet(self)


class FrozenHeadedNet:
    """Target copy of a HeadedNet: same structure, updated only via Polyak."""

    def __init__(self, source: HeadedNet):
        self.trunk = source.trunk.copy()
        self.heads = {tid: h.copy() for tid, h in source.heads.items()}
        self._relu_trunk_out = source._relu_trunk_out

    def sync_heads(self, source: HeadedNet) -> None:
        for tid in source.heads:
            if tid not in self.heads:
                self.heads[tid] = source.heads[tid].copy()

    def features(self, X: np.ndarray) -> np.ndarray:
        out, _ = nets.forward_batch(self.trunk, X)
        return np.maximum(out, 0.0) if self._relu_trunk_out else out

    def forward(self, X: np.ndarray, task_id: int) -> np.ndarray:
        F = self.features(X)
        return nets.forward_batch(self.heads[task_id], F)[0]


def polyak_update(target: DenseNet, online: DenseNet, tau: float) -> None:
    """target <- (1 - tau) * target + tau * online, elementwise."""
    for pt, po in zip(target.params(), online.params()):
        if pt.shape != po.shape:
            raise nets.ShapeError("polyak shapes differ")
        pt *= 1.0 - tau
        pt += tau * po


def polyak_update_stack(target: FrozenHeadedNet, online: HeadedNet, tau: float) -> None:
    target.sync_heads(online)
    polyak_update(target.trunk, online.trunk, tau)
    for tid, head in online.heads.items():
        polyak_update(target.heads[tid], head, tau)


class MultiHeadPolicy:
    """Policy trunk + per-task heads emitting per-dimension mean and log-std."""

    def __init__(
        self,
        obs_dim: int,
        action_dim: int,
        trunk_widths: list[int],
        rng: np.random.Generator,
        head_hidden: list[int] | None = None,
        lr: float = 3e-4,
    ):
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.net = HeadedNet(
            obs_dim,
            trunk_widths,
            2 * action_dim,
            rng,
            head_hidden=head_hidden,
            lr=lr,
            head_init_scale=1e-3,
        )

    @property
    def d1(self) -> int:
        return self.net.d1

    @property
    def heads(self) -> dict[int, DenseNet]:
        return self.net.heads

    def add_head(self, task_id: int, rng: np.random.Generator) -> DenseNet:
        return self.net.add_head(task_id, rng)

    def head(self, task_id: int) -> DenseNet:
        return self.net.head(task_id)

    def head_flat_dim(self) -> int:
        d = self.net.head_dims
        return sum(din * dout + dout for din, dout in zip(d[:-1], d[1:]))

    def split_head_output(self, H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mean = H[:, : self.action_dim]
        log_std = np.clip(H[:, self.action_dim :], LOG_STD_MIN, LOG_STD_MAX)
        return mean, log_std

    def act(
        self,
        observation: np.ndarray,
        task_id: int | None = None,
        head: DenseNet | None = None,
        mode: str = "sample",
        rng: np.random.Generator | None = None,
    ) -> tuple[np.ndarray, float]:
        """Single-observation action; mode 'sample' or 'mean'."""
        if head is None:
            if task_id is None:
                raise ValueError("need a task_id or an explicit head")
            head = self.head(task_id)
        obs = np.asarray(observation, dtype=np.float64)[None, :]
        F, _ = self.net.features(obs)
        H, _ = self.net.head_forward(head, F)
        mean, log_std = self.split_head_output(H)
        if mode == "mean":
            xi = np.zeros_like(mean)
        elif mode == "sample":
            if rng is None:
                raise ValueError("sampling requires an rng")
            xi = rng.standard_normal(mean.shape)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        a, log_prob, _ = squash(mean, log_std, xi)
        return a[0], float(log_prob[0])


class CriticStack:
    """One Q network: trunk over (obs ++ action) plus scalar per-task heads."""

    def __init__(
        self,
        obs_dim: int,
        action_dim: int,
        trunk_widths: list[int],
        rng: np.random.Generator,
        head_hidden: list[int] | None = None,
        lr: float = 3e-4,
    ):
        self.net = HeadedNet(
            obs_dim + action_dim, trunk_widths, 1, rng, head_hidden=head_hidden, lr=lr
        )

    def q_value(self, X: np.ndarray, task_id: int) -> np.ndarray:
        return self.net.forward(X, self.net.head(task_id))[:, 0]


class MultiHeadCritic:
    """Twin critic stacks plus slow-moving target copies."""

    def __init__(
        self,
        obs_dim: int,
        action_dim: int,
        trunk_widths: list[int],
        rng: np.random.Generator,
        head_hidden: list[int] | None = None,
        lr: float = 3e-4,
    ):
        self.q1 = CriticStack(obs_dim, action_dim, trunk_widths, rng, head_hidden, lr)
        self.q2 = CriticStack(obs_dim, action_dim, trunk_widths, rng, head_hidden, lr)
        self.q1_target = self.q1.net.copy_frozen()
        self.q2_target = self.q2.net.copy_frozen()

    def add_head(self, task_id: int, rng: np.random.Generator) -> None:
        self.q1.net.add_head(task_id, rng)
        self.q2.net.add_head(task_id, rng)
        self.q1_target.sync_heads(self.q1.net)
        self.q2_target.sync_heads(self.q2.net)

    def polyak(self, tau: float) -> None:
        polyak_update_stack(self.q1_target, self.q1.net, tau)
        polyak_update_stack(self.q2_target, self.q2.net, tau)

    def param_count(self, heads: bool = True, targets: bool = False) -> int:
        n = self.q1.net.param_count(heads) + self.q2.net.param_count(heads)
        if targets:
            n *= 2
        return n


@dataclass
class EntropyTuner:
    """Dual variable for automatic temperature tuning."""

    target_entropy: float
    log_alpha: float = 0.0
    adam: AdamState | None = None
    lr: float = 3e-4

    def __post_init__(self):
        if self.adam is None:
            self._log_alpha_arr = np.array(self.log_alpha, dtype=np.float64)
            self.adam = AdamState.for_params([self._log_alpha_arr], self.lr)
        else:
            self._log_alpha_arr = np.array(self.log_alpha, dtype=np.float64)

    @property
    def alpha(self) -> float:
        return float(np.exp(self._log_alpha_arr))

    @property
    def log_alpha_value(self) -> float:
        return float(self._log_alpha_arr)

    def step(self, grad: float) -> None:
        adam_step([self._log_alpha_arr], [np.array(grad)], self.adam)


def entropy_loss(tuner: EntropyTuner, log_probs: np.ndarray) -> tuple[float, float]:
    """Dual loss -log_alpha * mean(log_prob + target_entropy); returns (loss, grad)."""
    excess = float(np.mean(log_probs) + tuner.target_entropy)
    loss = -tuner.log_alpha_value * excess
    return loss, -excess


@dataclass
class ActorGrads:
    trunk: GradientBundle
    heads: dict[int, GradientBundle]
    log_probs: np.ndarray  # stop-grad log-probs for the entropy dual


@dataclass
class CriticGrads:
    q1_trunk: GradientBundle
    q1_heads: dict[int, GradientBundle]
    q2_trunk: GradientBundle
    q2_heads: dict[int, GradientBundle]


def _group(batches: dict[int, Batch]) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, list[tuple[int, slice]]]:
    """Concatenate per-task batches; returns stacked columns and row slices."""
    order = sorted(batches)
    slices = []
    lo = 0
    for tid in order:
        hi = lo + len(batches[tid])
        slices.append((tid, slice(lo, hi)))
        lo = hi
    S = np.concatenate([batches[t].states for t in order])
    A = np.concatenate([batches[t].actions for t in order])
    R = np.concatenate([batches[t].rewards for t in order])
    S2 = np.concatenate([batches[t].next_states for t in order])
    return S, A, R, S2, slices


def critic_loss_multi(
    critic: MultiHeadCritic,
    policy: MultiHeadPolicy,
    batches: dict[int, Batch],
    gamma: float,
    alpha: float,
    rng: np.random.Generator,
) -> tuple[float, CriticGrads]:
    """Summed-over-tasks soft Bellman loss for both critics, with gradients.

    Targets bootstrap through the episode end: the horizon is a time limit,
    not a terminal state, so no done-masking is applied.
    """
    for tid, b in batches.items():
        if len(b) == 0:
            raise ValueError(f"empty batch for task {tid}")
    S, A, R, S2, slices = _group(batches)

    # fresh next actions from the current policy, per task head
    F2, _ = policy.net.features(S2)
    A2 = np.empty_like(A)
    LP2 = np.empty(S2.shape[0])
    for tid, rows in slices:
        H, _ = policy.net.head_forward(policy.head(tid), F2[rows])
        mean, log_std = policy.split_head_output(H)
        xi = rng.standard_normal(mean.shape)
        a2, lp2, _ = squash(mean, log_std, xi)
        A2[rows] = a2
        LP2[rows] = lp2

    X2 = np.concatenate([S2, A2], axis=1)
    F1t = critic.q1_target.features(X2)
    F2t = critic.q2_target.features(X2)
    Qt = np.empty(S2.shape[0])
    for tid, rows in slices:
        q1t = nets.forward_batch(critic.q1_target.heads[tid], F1t[rows])[0][:, 0]
        q2t = nets.forward_batch(critic.q2_target.heads[tid], F2t[rows])[0][:, 0]
        Qt[rows] = np.minimum(q1t, q2t)
    y = R + gamma * (Qt - alpha * LP2)

    X = np.concatenate([S, A], axis=1)
    total_loss = 0.0
    trunk_grads = []
    head_grads_all = []
    for stack in (critic.q1, critic.q2):
        F, tcache = stack.net.features(X)
        head_caches = []
        out_grads = []
        for tid, rows in slices:
            head = stack.net.head(tid)
            Q, hcache = stack.net.head_forward(head, F[rows])
            diff = Q[:, 0] - y[rows]
            n = diff.shape[0]
            total_loss += float(np.mean(diff * diff))
            head_caches.append((head, hcache, F[rows], rows))
            out_grads.append((2.0 * diff / n)[:, None])
        tg, hg, _ = stack.net.backward(tcache, head_caches, F, out_grads)
        trunk_grads.append(tg)
        head_grads_all.append({slices[i][0]: g for i, g in hg.items()})
    grads = CriticGrads(trunk_grads[0], head_grads_all[0], trunk_grads[1], head_grads_all[1])
    return total_loss, grads


def critic_loss(
    critic: MultiHeadCritic,
    policy: MultiHeadPolicy,
    batch: Batch,
    gamma: float,
    alpha: float,
    task_id: int,
    rng: np.random.Generator,
) -> tuple[float, CriticGrads]:
    return critic_loss_multi(critic, policy, {task_id: batch}, gamma, alpha, rng)


def actor_loss_multi(
    policy: MultiHeadPolicy,
    critic: MultiHeadCritic,
    batches: dict[int, Batch],
    alpha: float,
    rng: np.random.Generator,
) -> tuple[float, ActorGrads]:
    """Summed-over-tasks reparameterized actor loss with gradients.

    loss_i = mean(alpha * log pi(a|s) - min(Q1, Q2)(s, a)), a reparameterized.
    Gradients flow into the policy trunk and each task's policy head only.
    """
    for tid, b in batches.items():
        if len(b) == 0:
            raise ValueError(f"empty batch for task {tid}")
    S, _, _, _, slices = _group(batches)
    B_total = S.shape[0]

    F, tcache = policy.net.features(S)
    head_caches = []
    means, log_stds, raws, xis, actions, log_probs = {}, {}, {}, {}, {}, {}
    A = np.empty((B_total, policy.action_dim))
    for tid, rows in slices:
        head = policy.head(tid)
        H, hcache = policy.net.head_forward(head, F[rows])
        raw = H[:, policy.action_dim :]
        mean, log_std = policy.split_head_output(H)
        xi = rng.standard_normal(mean.shape)
        a, lp, _ = squash(mean, log_std, xi)
        head_caches.append((head, hcache, F[rows], rows))
        means[tid], log_stds[tid], raws[tid] = mean, log_std, raw
        xis[tid], actions[tid], log_probs[tid] = xi, a, lp
        A[rows] = a

    # dQmin/da through the online critics (critic parameters held fixed)
    X = np.concatenate([S, A], axis=1)
    q_vals = []
    input_grad_parts = []
    for stack in (critic.q1, critic.q2):
        F_c, c_tcache = stack.net.features(X)
        head_caches_c = []
        Q = np.empty(B_total)
        for tid, rows in slices:
            head = stack.net.head(tid)
            q, hcache = stack.net.head_forward(head, F_c[rows])
            Q[rows] = q[:, 0]
            head_caches_c.append((head, hcache, F_c[rows], rows))
        q_vals.append(Q)
        input_grad_parts.append((stack, c_tcache, head_caches_c, F_c))
    Q1, Q2 = q_vals
    which1 = (Q1 <= Q2).astype(np.float64)
    Qmin = np.minimum(Q1, Q2)

    dQmin_da = np.zeros((B_total, policy.action_dim))
    for (stack, c_tcache, head_caches_c, F_c), mask in zip(
        input_grad_parts, (which1, 1.0 - which1)
    ):
        out_grads_c = [(mask[rows])[:, None] for _, rows in slices]
        _, _, in_grad = stack.net.backward(c_tcache, head_caches_c, F_c, out_grads_c)
        dQmin_da += in_grad[:, policy.obs_dim :]

    total_loss = 0.0
    out_grads = []
    all_lp = np.empty(B_total)
    for tid, rows in slices:
        mean, log_std = means[tid], log_stds[tid]
        xi, a, lp = xis[tid], actions[tid], log_probs[tid]
        n = rows.stop - rows.start
        total_loss += float(np.mean(alpha * lp - Qmin[rows]))
        all_lp[rows] = lp
        std = np.exp(log_std)
        dL_da = -dQmin_da[rows] / n  # dloss/da
        dlp_du = 2.0 * a  # tanh correction; Gaussian part hits log_std directly
        dL_du = (alpha / n) * dlp_du + dL_da * (1.0 - a * a)
        dL_dmean = dL_du
        dL_dlogstd = dL_du * std * xi - alpha / n
        clip_mask = (raws[tid] > LOG_STD_MIN) & (raws[tid] < LOG_STD_MAX)
        dL_dlogstd = dL_dlogstd * clip_mask
        out_grads.append(np.concatenate([dL_dmean, dL_dlogstd], axis=1))
    tg, hg, _ = policy.net.backward(tcache, head_caches, F, out_grads)
    grads = ActorGrads(tg, {slices[i][0]: g for i, g in hg.items()}, all_lp)
    return total_loss, grads


def actor_loss(
    policy: MultiHeadPolicy,
    critic: MultiHeadCritic,
    batch: Batch,
    alpha: float,
    task_id: int,
    rng: np.random.Generator,
) -> tuple[float, ActorGrads]:
    return actor_loss_multi(policy, critic, {task_id: batch}, alpha, rng)


class MultiHeadSac:
    """Bundles policy, twin critics, and entropy tuner with one update rule."""

    def __init__(
        self,
        obs_dim: int,
        action_dim: int,
        trunk_widths: list[int],
        rng: np.random.Generator,
        head_hidden: list[int] | None = None,
        lr: float = 3e-4,
        gamma: float = 0.99,
        tau: float = 0.005,
    ):
        self.gamma = gamma
        self.tau = tau
        self.policy = MultiHeadPolicy(obs_dim, action_dim, trunk_widths, rng, head_hidden, lr)
        self.critic = MultiHeadCritic(obs_dim, action_dim, trunk_widths, rng, head_hidden, lr)
        self.tuner = EntropyTuner(target_entropy=-float(action_dim), lr=lr)

    def add_task(self, task_id: int, rng: np.random.Generator) -> None:
        self.policy.add_head(task_id, rng)
        self.critic.add_head(task_id, rng)

    def update(
        self, batches: dict[int, Batch], rng: np.random.Generator, heads_only: bool = False
    ) -> dict[str, float]:
        """One SAC update over the given per-task batches (gradients summed).

        heads_only freezes both trunks and the entropy temperature; used by
        the gradient-based adaptation baseline.
        """
        alpha = self.tuner.alpha
        c_loss, c_grads = critic_loss_multi(
            self.critic, self.policy, batches, self.gamma, alpha, rng
        )
        if not heads_only:
            self.critic.q1.net.step_trunk(c_grads.q1_trunk)
            self.critic.q2.net.step_trunk(c_grads.q2_trunk)
        for tid in batches:
            self.critic.q1.net.step_head(tid, c_grads.q1_heads[tid])
            self.critic.q2.net.step_head(tid, c_grads.q2_heads[tid])

        a_loss, a_grads = actor_loss_multi(self.policy, self.critic, batches, alpha, rng)
        if not heads_only:
            self.policy.net.step_trunk(a_grads.trunk)
        for tid in batches:
            self.policy.net.step_head(tid, a_grads.heads[tid])

        e_loss, e_grad = entropy_loss(self.tuner, a_grads.log_probs)
        if not heads_only:
            self.tuner.step(e_grad)

        self.critic.polyak(self.tau)
        return {
            "critic_loss": c_loss,
            "actor_loss": a_loss,
            "entropy_loss": e_loss,
            "alpha": self.tuner.alpha,
            "mean_log_prob": float(np.mean(a_grads.log_probs)),
        }
