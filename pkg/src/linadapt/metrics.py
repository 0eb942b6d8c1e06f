"""Evaluation harness: returns, metrics persistence, timing, parameter counts.

The metrics CSV is the contract with the plotting tool: comment header lines
carry the schema version and column documentation, followed by a plain CSV
table. Wall-clock columns are the only non-deterministic columns.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nets

METRICS_SCHEMA_VERSION = 1

# columns whose values depend on wall time; excluded from determinism checks
WALL_CLOCK_COLUMNS = ("wall_clock_s",)

CSV_COLUMNS = [
    "iteration",
    "env_steps_total",
    "wall_clock_s",
    "train_return_mean",
    "actor_loss",
    "critic_loss",
    "adapter_loss",
    "entropy_loss",
    "alpha",
    "test_return_in_dist",
    "test_return_ood",
]


@dataclass
class MetricsRecord:
    """Per-iteration scalar log."""

    iteration: int
    env_steps_total: int
    wall_clock_s: float
    train_returns: list[float]
    actor_loss: float
    critic_loss: float
    adapter_loss: float
    entropy_loss: float
    alpha: float
    test_return_in_dist: float = math.nan
    test_return_ood: float = math.nan

    @property
    def train_return_mean(self) -> float:
        return float(np.mean(self.train_returns)) if self.train_returns else math.nan


@dataclass
class RuntimeReport:
    """Per-task adaptation wall-clock for one method."""

    method: str
    seconds: list[float]

    def __post_init__(self):
        if any(s < 0 for s in self.seconds):
            raise ValueError("negative duration in runtime report")

    @property
    def mean(self) -> float:
        return float(np.mean(self.seconds)) if self.seconds else math.nan

    @property
    def std(self) -> float:
        return float(np.std(self.seconds)) if self.seconds else math.nan


@dataclass
class MemoryReport:
    policy_params: int
    model_params: int

    @property
    def total(self) -> int:
        return self.policy_params + self.model_params


def discounted_return(rewards, gamma: float) -> float:
    """Sum of gamma^t * r_t."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must be in (0, 1]")
    total = 0.0
    g = 1.0
    for r in rewards:
        total += g * float(r)
        g *= gamma
    return total


def undiscounted_return(rewards) -> float:
    return float(np.sum(rewards)) if len(rewards) else 0.0


def average_test_return(run_episode, tasks, episodes: int = 1) -> float:
    """Mean over tasks of mean episode return; run_episode(task) -> return.

    Each task is adapted independently by the supplied closure.
    """
    if not tasks:
        raise ValueError("no test tasks")
    per_task = []
    for task in tasks:
        per_task.append(float(np.mean([run_episode(task) for _ in range(episodes)])))
    return float(np.mean(per_task))


def time_adaptation(method: str, adapt_one, tasks) -> RuntimeReport:
    """Time adapt_one(task) per task with a monotonic clock.

    adapt_one may return a measured duration itself (seconds); otherwise the
    wrapper's own timing around the call is used.
    """
    seconds = []
    for task in tasks:
        t0 = time.monotonic()
        measured = adapt_one(task)
        elapsed = time.monotonic() - t0
        seconds.append(float(measured) if measured is not None else elapsed)
    return RuntimeReport(method, seconds)


def count_parameters(checkpoint_path) -> MemoryReport:
    """Parameters shipped to adaptation: policy trunk + one head, plus adapter.

    Per-task training heads beyond the first are excluded: only the trunk and
    the adapter are needed at test time.
    """
    nets_dict, _, _ = nets.load_checkpoint(checkpoint_path)
    if "policy/trunk" not in nets_dict or "adapter" not in nets_dict:
        raise ValueError("checkpoint missing policy trunk or adapter")
    policy = nets_dict["policy/trunk"].param_count()
    head_names = sorted(n for n in nets_dict if n.startswith("policy/head/"))
    if head_names:
        policy += nets_dict[head_names[0]].param_count()
    return MemoryReport(policy, nets_dict["adapter"].param_count())


def _format(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def records_to_rows(records: list[MetricsRecord]) -> list[dict]:
    rows = []
    for r in records:
        rows.append(
            {
                "iteration": r.iteration,
                "env_steps_total": r.env_steps_total,
                "wall_clock_s": r.wall_clock_s,
                "train_return_mean": r.train_return_mean,
                "actor_loss": r.actor_loss,
                "critic_loss": r.critic_loss,
                "adapter_loss": r.adapter_loss,
                "entropy_loss": r.entropy_loss,
                "alpha": r.alpha,
                "test_return_in_dist": r.test_return_in_dist,
                "test_return_ood": r.test_return_ood,
            }
        )
    return rows


def export_metrics(records: list[MetricsRecord], path, fmt: str = "csv") -> None:
    """Write metrics; csv gets a commented schema header, json a version field."""
    if fmt == "csv":
        buf = io.StringIO()
        buf.write(f"# linadapt-metrics schema_version={METRICS_SCHEMA_VERSION}\n")
        buf.write("# columns: " + ",".join(CSV_COLUMNS) + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in records_to_rows(records):
            writer.writerow([_format(row[c]) for c in CSV_COLUMNS])
        text = buf.getvalue()
    elif fmt == "json":
        text = json.dumps(
            {
                "schema_version": METRICS_SCHEMA_VERSION,
                "records": records_to_rows(records),
            },
            indent=2,
        )
    else:
        raise ValueError(f"unknown format {fmt!r}")
    with open(path, "w") as f:
        f.write(text)


def load_metrics_csv(path) -> list[dict]:
    """Parse a metrics CSV back into row dicts with numeric values."""
    rows = []
    with open(path) as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    for raw in reader:
        row = {}
        for key, value in raw.items():
            if key in ("iteration", "env_steps_total"):
                row[key] = int(value)
            else:
                row[key] = float(value)
        rows.append(row)
    return rows


def runtime_report_to_json(reports: list[RuntimeReport]) -> str:
    return json.dumps(
        {
            "schema_version": METRICS_SCHEMA_VERSION,
            "reports": [
                {"method": r.method, "seconds": r.seconds, "mean": r.mean, "std": r.std}
                for r in reports
            ],
        },
        indent=2,
    )


def runtime_reports_from_json(text: str) -> list[RuntimeReport]:
    payload = json.loads(text)
    return [RuntimeReport(d["method"], list(d["seconds"])) for d in payload["reports"]]
