"""Command line entry points: train, adapt, ablate, report."""

from __future__ import annotations

import dataclasses
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import envs, metaloop, metrics
from .config import AdaptConfig, TrainConfig, apply_overrides, config_to_json, train_config_from_json

OUTPUT_ROOT_ENV = "LINADAPT_OUTPUT_ROOT"


def _out_dir(out: str | None, name: str) -> Path:
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
    path = Path(out) if out else root / name
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_train_config(config_path: str | None, seed: int | None, overrides) -> TrainConfig:
    if config_path:
        cfg = train_config_from_json(Path(config_path).read_text())
    else:
        cfg = TrainConfig()
    if overrides:
        cfg = apply_overrides(cfg, list(overrides))
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    return cfg


@click.group()
def main():
    """Meta-RL trainer with per-task linear heads and a weight-predicting adapter."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), help="JSON config file.")
@click.option("--seed", type=int, default=None, help="Overrides the config seed.")
@click.option("--out", type=click.Path(), default=None, help="Output directory.")
@click.option("--override", "-O", multiple=True, help="Config override key=value.")
def train(config_path, seed, out, override):
    """Meta-train on a sampled task set; writes metrics, tasks, checkpoint."""
    cfg = _load_train_config(config_path, seed, override)
    out_dir = _out_dir(out, f"train-{cfg.family}-seed{cfg.seed}")
    rng = np.random.default_rng(cfg.seed)
    tasks = envs.sample_task_set(
        cfg.family, cfg.n_train_tasks, cfg.m_test_in, cfg.m_test_ood, rng, cfg.sparsity_radius
    )
    train_tasks = [t for t in tasks if t.split == "train"]
    eval_in = [t for t in tasks if t.split == "test_in_dist"]
    eval_ood = [t for t in tasks if t.split == "test_ood"]

    def progress(rec):
        click.echo(
            f"iter {rec.iteration:4d}  steps {rec.env_steps_total:8d}  "
            f"train_ret {rec.train_return_mean:9.2f}  critic {rec.critic_loss:9.4f}  "
            f"adapter {rec.adapter_loss:9.5f}"
        )

    result = metaloop.meta_train(
        cfg, train_tasks, rng, eval_tasks_in=eval_in, eval_tasks_ood=eval_ood, progress=progress
    )
    (out_dir / "config.json").write_text(config_to_json(cfg))
    (out_dir / "tasks.json").write_text(envs.tasks_to_json(tasks, cfg.seed))
    metrics.export_metrics(result.metrics, out_dir / "metrics.csv", "csv")
    metrics.export_metrics(result.metrics, out_dir / "metrics.json", "json")
    metaloop.save_experiment(out_dir / "checkpoint.npz", result)
    click.echo(f"wrote {out_dir}")


@main.command()
@click.argument("checkpoint", type=click.Path(exists=True))
@click.option("--split", type=click.Choice(["test_in_dist", "test_ood"]), default="test_in_dist")
@click.option("--mode", type=click.Choice(["adapter", "gradient_baseline"]), default="adapter")
@click.option("--adapt-steps", type=int, default=30, help="Online adaptation steps T_adapt.")
@click.option("--n-tasks", type=int, default=5)
@click.option("--seed", type=int, default=0)
@click.option("--sparse", is_flag=True, help="Evaluate sparse rewards (sparse_nav only).")
@click.option("--out", type=click.Path(), default=None)
def adapt(checkpoint, split, mode, adapt_steps, n_tasks, seed, sparse, out):
    """Adapt a trained checkpoint to freshly sampled test tasks."""
    result = metaloop.load_experiment(checkpoint)
    cfg = result.config
    out_dir = _out_dir(out, f"adapt-{cfg.family}-{mode}-seed{seed}")
    rng = np.random.default_rng(seed)
    tasks = envs.sample_task_set(
        cfg.family, 1, n_tasks, n_tasks, rng, cfg.sparsity_radius
    )
    test_tasks = [t for t in tasks if t.split == split]
    adapt_cfg = AdaptConfig(
        adaptation_steps=adapt_steps if mode == "adapter" else 0,
        mode=mode,
        horizon=cfg.horizon,
        sparse=sparse,
    )
    rows = []
    seconds = []
    for task in test_tasks:
        if mode == "adapter":
            res = metaloop.meta_test_adapter(
                result.sac.policy, result.adapter, task, adapt_cfg, rng
            )
            rows.append({"task_id": task.id, "return": res.episode_return})
            seconds.append(res.adapt_seconds)
        else:
            res = metaloop.meta_test_gradient(
                result.sac.policy, result.sac.critic, task, adapt_cfg, rng, cfg.gamma, cfg.tau
            )
            rows.append(
                {
                    "task_id": task.id,
                    "return": res.final_return,
                    "env_steps": res.env_steps,
                    "curve": res.curve,
                }
            )
            seconds.append(res.adapt_seconds)
        click.echo(f"task {task.id}: return {rows[-1]['return']:.2f}")
    report = metrics.RuntimeReport(mode, seconds)
    payload = {
        "split": split,
        "mode": mode,
        "adaptation_steps": adapt_cfg.adaptation_steps,
        "mean_return": float(np.mean([r["return"] for r in rows])),
        "tasks": rows,
    }
    (out_dir / "adapt_results.json").write_text(json.dumps(payload, indent=2))
    (out_dir / "runtime.json").write_text(metrics.runtime_report_to_json([report]))
    click.echo(f"mean return: {payload['mean_return']:.2f}  (wrote {out_dir})")


ABLATIONS = ("no-adapter", "sas-input", "nonlinear-head", "sequence-input", "sparse")


@main.command()
@click.argument("name", type=click.Choice(ABLATIONS))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
@click.option("--override", "-O", multiple=True)
def ablate(name, config_path, seed, out, override):
    """Run one named ablation and write a paired comparison summary."""
    from . import ablations

    if config_path is None:
        cfg = ablations.desk_default_config()
        if override:
            cfg = apply_overrides(cfg, list(override))
        if seed is not None:
            cfg = dataclasses.replace(cfg, seed=seed)
    else:
        cfg = _load_train_config(config_path, seed, override)
    out_dir = _out_dir(out, f"ablate-{name}-seed{cfg.seed}")
    summary = ablations.run(name, cfg, out_dir)
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2))
    click.echo(json.dumps(summary, indent=2))
    click.echo(f"wrote {out_dir}")


@main.command()
@click.argument("metrics_dir", type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None)
def report(metrics_dir, out):
    """Summarize metrics CSVs in a directory; renders basic figures."""
    metrics_dir = Path(metrics_dir)
    out_dir = _out_dir(out, "report")
    csvs = sorted(metrics_dir.rglob("metrics.csv"))
    if not csvs:
        raise click.ClickException(f"no metrics.csv under {metrics_dir}")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    lines = ["run,iterations,env_steps,final_train_return,final_adapter_loss"]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for path in csvs:
        rows = metrics.load_metrics_csv(path)
        if not rows:
            continue
        label = path.parent.name
        last = rows[-1]
        lines.append(
            f"{label},{last['iteration'] + 1},{last['env_steps_total']},"
            f"{last['train_return_mean']},{last['adapter_loss']}"
        )
        ax.plot(
            [r["env_steps_total"] for r in rows],
            [r["train_return_mean"] for r in rows],
            label=label,
        )
    ax.set_xlabel("environment steps")
    ax.set_ylabel("mean train return")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out_dir / "train_returns.png", dpi=120)
    plt.close(fig)
    summary = "\n".join(lines) + "\n"
    (out_dir / "summary.csv").write_text(summary)
    click.echo(summary)
    click.echo(f"wrote {out_dir}")


if __name__ == "__main__":
    sys.exit(main())
