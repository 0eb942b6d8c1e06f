"""Figure rendering: seed-band training curves and runtime bar charts.

Each image gets a sidecar JSON (same path with `.json` appended to the stem)
holding the plotted aggregates, so downstream checks can assert numbers
without parsing pixels. Rendering never mutates its inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .io import RuntimeEntry, SchemaError, read_metrics_csv

BANDS = ("minmax", "std")


@dataclass
class PlotSpec:
    """One curve figure: inputs, columns, grouping, smoothing, output."""

    inputs: list
    x_column: str
    y_column: str
    output: str
    group_by: str = "seed"
    smoothing: int = 1
    band: str = "minmax"
    title: str = ""
    x_label: str = ""
    y_label: str = ""
    labels: list = field(default_factory=list)

    def __post_init__(self):
        if not self.inputs:
            raise ValueError("at least one input file is required")
        if self.smoothing < 1:
            raise ValueError("smoothing window must be >= 1")
        if self.band not in BANDS:
            raise ValueError(f"band must be one of {BANDS}")
        if self.labels and len(self.labels) != len(self.inputs):
            raise ValueError("labels must match inputs one-to-one")


def smooth(values: np.ndarray, window: int) -> np.ndarray:
    """Trailing moving average; window 1 returns the values unchanged.

    Early entries average over the shorter prefix so output length matches
    input length.
    """
    if window < 1:
        raise ValueError("smoothing window must be >= 1")
    if window == 1:
        return np.asarray(values, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    csum = np.concatenate([[0.0], np.cumsum(v)])
    out = np.empty_like(v)
    for i in range(len(v)):
        lo = max(0, i + 1 - window)
        out[i] = (csum[i + 1] - csum[lo]) / (i + 1 - lo)
    return out


def load_group(spec: PlotSpec) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Read every input, validate columns, smooth, and stack into (G, N).

    All inputs must share the same x sequence; returns (x, Y, labels).
    """
    xs, ys, labels = [], [], []
    for i, path in enumerate(spec.inputs):
        rows = read_metrics_csv(path)
        if not rows:
            raise SchemaError(f"{path}: no data rows")
        for col in (spec.x_column, spec.y_column):
            if col not in rows[0]:
                raise SchemaError(f"{path}: missing column {col!r}")
        xs.append(np.array([r[spec.x_column] for r in rows], dtype=np.float64))
        ys.append(smooth([r[spec.y_column] for r in rows], spec.smoothing))
        labels.append(spec.labels[i] if spec.labels else Path(path).parent.name)
    for x in xs[1:]:
        if not np.array_equal(x, xs[0]):
            raise ValueError(f"inputs disagree on {spec.x_column!r} values")
    return xs[0], np.stack(ys), labels


def curve_aggregates(spec: PlotSpec) -> dict:
    """The numbers a curve figure plots: per-x mean and band edges."""
    x, Y, labels = load_group(spec)
    mean = Y.mean(axis=0)
    if spec.band == "minmax":
        lo, hi = Y.min(axis=0), Y.max(axis=0)
    else:
        std = Y.std(axis=0)
        lo, hi = mean - std, mean + std
    return {
        "x_column": spec.x_column,
        "y_column": spec.y_column,
        "group_by": spec.group_by,
        "smoothing": spec.smoothing,
        "band": spec.band,
        "groups": labels,
        "x": x.tolist(),
        "mean": mean.tolist(),
        "min": Y.min(axis=0).tolist(),
        "max": Y.max(axis=0).tolist(),
        "band_lo": lo.tolist(),
        "band_hi": hi.tolist(),
    }


def _sidecar_path(output) -> Path:
    output = Path(output)
    return output.with_suffix(output.suffix + ".json")


def render_curves(spec: PlotSpec) -> Path:
    """Mean line with a seed band; writes the image and its sidecar JSON."""
    agg = curve_aggregates(spec)
    x = np.array(agg["x"])
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.fill_between(x, agg["band_lo"], agg["band_hi"], alpha=0.25, linewidth=0)
    ax.plot(x, agg["mean"], linewidth=1.5, label=f"mean of {len(agg['groups'])}")
    ax.set_xlabel(spec.x_label or spec.x_column)
    ax.set_ylabel(spec.y_label or spec.y_column)
    if spec.title:
        ax.set_title(spec.title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    _sidecar_path(out).write_text(json.dumps(agg, indent=2))
    return out


def runtime_aggregates(entries: list[RuntimeEntry]) -> dict:
    if not entries:
        raise ValueError("no runtime entries")
    return {
        "methods": [e.method for e in entries],
        "means": [e.mean for e in entries],
        "stds": [e.std for e in entries],
        "n_tasks": [len(e.seconds) for e in entries],
    }


def render_runtime_bars(entries: list[RuntimeEntry], output, title: str = "") -> Path:
    """One bar per method (input order preserved) with std error bars."""
    agg = runtime_aggregates(entries)
    fig, ax = plt.subplots(figsize=(5, 4))
    pos = np.arange(len(agg["methods"]))
    ax.bar(pos, agg["means"], yerr=agg["stds"], capsize=4)
    ax.set_xticks(pos)
    ax.set_xticklabels(agg["methods"], rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("adaptation wall-clock (s)")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    out = Path(output)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    _sidecar_path(out).write_text(json.dumps(agg, indent=2))
    return out
