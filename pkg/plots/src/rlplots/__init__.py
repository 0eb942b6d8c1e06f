"""Offline figure rendering for training-harness CSV metrics and runtime reports."""

from .io import RuntimeEntry, SchemaError, read_metrics_csv, read_runtime_reports
from .plotting import (
    PlotSpec,
    curve_aggregates,
    render_curves,
    render_runtime_bars,
    runtime_aggregates,
    smooth,
)

__all__ = [
    "PlotSpec",
    "RuntimeEntry",
    "SchemaError",
    "curve_aggregates",
    "read_metrics_csv",
    "read_runtime_reports",
    "render_curves",
    "render_runtime_bars",
    "runtime_aggregates",
    "smooth",
]

__version__ = "0.1.0"
