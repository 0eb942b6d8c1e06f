"""Named ablation experiments: adapter vs gradient adaptation, SAS vs SARS
input, nonlinear output heads, sequence vs single-tuple input, sparse rewards.

Each experiment returns a JSON-serializable summary and writes metrics files
into the given output directory.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from . import adapter as adapter_mod
from . import envs, metaloop, metrics
from .adapter import AdapterNet, encode_batch
from .config import AdaptConfig, TrainConfig
from .metaloop import MetaTrainResult, collect_episode
from .replay import ReplayBuffer


def desk_default_config(family: str = "goal_nav") -> TrainConfig:
    """Small-budget defaults so ablations finish on a laptop core."""
    return TrainConfig(
        family=family,
        n_train_tasks=6,
        m_test_in=4,
        m_test_ood=4,
        iterations=30,
        updates_per_iteration=200,
        steps_collected_per_task_per_iteration=200,
        batch_size=128,
        horizon=100,
        arch="desk",
    )


def run(name: str, cfg: TrainConfig, out_dir) -> dict:
    if name == "no-adapter":
        return ablate_no_adapter(cfg, out_dir)
    if name == "sas-input":
        return ablate_sas_input(cfg, out_dir)
    if name == "nonlinear-head":
        return ablate_nonlinear_head(cfg, out_dir)
    if name == "sequence-input":
        return ablate_sequence_input(cfg, out_dir)
    if name == "sparse":
        return ablate_sparse(cfg, out_dir)
    raise ValueError(f"unknown ablation {name!r}")


def _train(cfg: TrainConfig, out_dir, tag: str) -> tuple[MetaTrainResult, list, list]:
    rng = np.random.default_rng(cfg.seed)
    tasks = envs.sample_task_set(
        cfg.family, cfg.n_train_tasks, cfg.m_test_in, cfg.m_test_ood, rng, cfg.sparsity_radius
    )
    train_tasks = [t for t in tasks if t.split == "train"]
    test_in = [t for t in tasks if t.split == "test_in_dist"]
    test_ood = [t for t in tasks if t.split == "test_ood"]
    result = metaloop.meta_train(cfg, train_tasks, rng)
    if out_dir is not None:
        sub = out_dir / tag
        sub.mkdir(parents=True, exist_ok=True)
        metrics.export_metrics(result.metrics, sub / "metrics.csv", "csv")
    return result, test_in, test_ood


def _adapter_returns(result: MetaTrainResult, tasks, adapt_cfg: AdaptConfig, rng) -> list[float]:
    return [
        metaloop.meta_test_adapter(result.sac.policy, result.adapter, t, adapt_cfg, rng).episode_return
        for t in tasks
    ]


def ablate_no_adapter(cfg: TrainConfig, out_dir=None, adapt_steps: int = 30) -> dict:
    """Adapter prediction vs gradient-based head optimization on test tasks."""
    result, test_in, _ = _train(cfg, out_dir, "meta")
    rng = np.random.default_rng(cfg.seed + 1)
    adapt_cfg = AdaptConfig(
        adaptation_steps=min(adapt_steps, cfg.horizon), horizon=cfg.horizon
    )
    grad_cfg = dataclasses.replace(
        adapt_cfg, adaptation_steps=0, mode="gradient_baseline", batch_size=cfg.batch_size
    )
    adapter_rets, adapter_secs, grad_results = [], [], []
    for task in test_in:
        res = metaloop.meta_test_adapter(result.sac.policy, result.adapter, task, adapt_cfg, rng)
        adapter_rets.append(res.episode_return)
        adapter_secs.append(res.adapt_seconds)
        grad_results.append(
            metaloop.meta_test_gradient(
                result.sac.policy, result.sac.critic, task, grad_cfg, rng, cfg.gamma, cfg.tau
            )
        )
    adapter_band = float(np.mean(adapter_rets))
    steps_to_band = []
    for g in grad_results:
        reached = [steps for steps, ret in g.curve if ret >= adapter_band]
        steps_to_band.append(reached[0] if reached else None)
    return {
        "adapter_mean_return": adapter_band,
        "adapter_env_steps_per_task": cfg.horizon,
        "adapter_mean_seconds": float(np.mean(adapter_secs)),
        "gradient_final_returns": [g.final_return for g in grad_results],
        "gradient_env_steps_per_task": [g.env_steps for g in grad_results],
        "gradient_steps_to_adapter_band": steps_to_band,
        "gradient_mean_seconds": float(np.mean([g.adapt_seconds for g in grad_results])),
    }


def heldout_target_mse(
    result: MetaTrainResult, adapter: AdapterNet, rng: np.random.Generator
) -> float:
    """Target MSE on fresh rollouts from each train task (data the adapter
    never trained on), averaged over tasks."""
    errs = []
    for task in result.tasks:
        env = envs.Env(task, result.config.horizon)
        buf = ReplayBuffer(task.id, envs.OBS_DIM, envs.ACTION_DIM)
        collect_episode(result.sac, result.sac.policy.head(task.id), env, rng, "sample", buf)
        if adapter.k == 1:
            X = encode_batch([buf.all_transitions()], adapter.input_mode)
        else:
            ends = buf.sample_window_indices(adapter.k, 256, rng)
            X = encode_batch(buf.window_arrays(ends, adapter.k), adapter.input_mode)
        target = adapter_mod.make_target(result.sac.policy, task.id).flat
        from . import nets

        pred, _ = nets.forward_batch(adapter.net, X)
        errs.append(float(np.mean((pred - target) ** 2)))
    return float(np.mean(errs))


def ablate_sas_input(cfg: TrainConfig, out_dir=None) -> dict:
    """SARS vs SAS adapter input on a family whose tasks differ only in reward."""
    cfg = dataclasses.replace(cfg, family="direction")
    results = {}
    for mode in ("sars", "sas"):
        mode_cfg = dataclasses.replace(cfg, adapter_input_mode=mode)
        result, _, _ = _train(mode_cfg, out_dir, mode)
        eval_rng = np.random.default_rng(cfg.seed + 77)
        results[mode] = heldout_target_mse(result, result.adapter, eval_rng)
    return {
        "family": "direction",
        "heldout_mse_sars": results["sars"],
        "heldout_mse_sas": results["sas"],
        "sars_better": results["sars"] < results["sas"],
    }


def ablate_nonlinear_head(cfg: TrainConfig, out_dir=None, head_width: int = 50) -> dict:
    """Linear vs two-layer output head, both adapted by their own adapter."""
    summaries = {}
    for tag, run_cfg in (
        ("linear", cfg),
        ("nonlinear", metaloop.nonlinear_head_config(cfg, head_width)),
    ):
        result, test_in, test_ood = _train(run_cfg, out_dir, tag)
        rng = np.random.default_rng(cfg.seed + 1)
        adapt_cfg = AdaptConfig(
            adaptation_steps=min(30, cfg.horizon), horizon=cfg.horizon
        )
        summaries[tag] = {
            "ood_mean_return": float(np.mean(_adapter_returns(result, test_ood, adapt_cfg, rng))),
            "in_dist_mean_return": float(
                np.mean(_adapter_returns(result, test_in, adapt_cfg, rng))
            ),
            "head_param_count": result.sac.policy.head(result.tasks[0].id).param_count(),
            "adapter_out_dim": result.adapter.out_dim,
        }
    return summaries


def ablate_sequence_input(cfg: TrainConfig, out_dir=None, seeds: tuple[int, ...] | None = None) -> dict:
    """k=1 vs k=5 adapter windows on sparse_nav (dense train, sparse test)."""
    cfg = dataclasses.replace(cfg, family="sparse_nav")
    if seeds is None:
        seeds = (cfg.seed, cfg.seed + 1, cfg.seed + 2)
    out = {}
    for k in (1, 5):
        per_seed = []
        for seed in seeds:
            k_cfg = dataclasses.replace(cfg, adapter_k=k, seed=seed)
            result, test_in, _ = _train(k_cfg, out_dir, f"k{k}-seed{seed}")
            rng = np.random.default_rng(seed + 1)
            adapt_cfg = AdaptConfig(
                adaptation_steps=min(30, cfg.horizon), horizon=cfg.horizon, sparse=True
            )
            per_seed.append(float(np.mean(_adapter_returns(result, test_in, adapt_cfg, rng))))
        out[f"k{k}"] = {
            "per_seed_returns": per_seed,
            "mean": float(np.mean(per_seed)),
            "std": float(np.std(per_seed)),
        }
    return out


def ablate_sparse(cfg: TrainConfig, out_dir=None) -> dict:
    """Dense-train / sparse-test protocol on the sparse point robot."""
    cfg = dataclasses.replace(cfg, family="sparse_nav")
    result, test_in, _ = _train(cfg, out_dir, "sparse")
    rng = np.random.default_rng(cfg.seed + 1)
    rets = {}
    for sparse in (False, True):
        adapt_cfg = AdaptConfig(
            adaptation_steps=min(30, cfg.horizon), horizon=cfg.horizon, sparse=sparse
        )
        rets["sparse" if sparse else "dense"] = float(
            np.mean(_adapter_returns(result, test_in, adapt_cfg, rng))
        )
    return {"family": "sparse_nav", "test_returns": rets}
