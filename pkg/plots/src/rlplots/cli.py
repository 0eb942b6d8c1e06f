"""Standalone command line for rendering metrics CSVs and runtime reports."""

from __future__ import annotations

import sys

import click

from .io import read_runtime_reports
from .plotting import BANDS, PlotSpec, render_curves, render_runtime_bars


@click.group()
def main():
    """Render training-harness metrics into figures with sidecar JSON."""


@main.command()
@click.argument("inputs", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--x-column", default="env_steps_total", show_default=True)
@click.option("--y-column", default="train_return_mean", show_default=True)
@click.option("--group-by", default="seed", show_default=True)
@click.option("--smoothing", default=1, show_default=True, help="Moving-average window.")
@click.option("--band", default="minmax", type=click.Choice(BANDS), show_default=True)
@click.option("--output", "-o", required=True, type=click.Path())
@click.option("--title", default="")
@click.option("--x-label", default="")
@click.option("--y-label", default="")
@click.option("--label", "labels", multiple=True, help="Per-input label, in order.")
def curves(inputs, x_column, y_column, group_by, smoothing, band, output, title, x_label, y_label, labels):
    """Mean curve with a seed band from one metrics CSV per seed."""
    spec = PlotSpec(
        inputs=list(inputs),
        x_column=x_column,
        y_column=y_column,
        output=output,
        group_by=group_by,
        smoothing=smoothing,
        band=band,
        title=title,
        x_label=x_label,
        y_label=y_label,
        labels=list(labels),
    )
    out = render_curves(spec)
    click.echo(f"wrote {out} and {out}.json")


@main.command("runtime-bars")
@click.argument("report", type=click.Path(exists=True))
@click.option("--output", "-o", required=True, type=click.Path())
@click.option("--title", default="")
def runtime_bars(report, output, title):
    """Bar chart of per-method adaptation wall-clock from a runtime JSON."""
    entries = read_runtime_reports(report)
    out = render_runtime_bars(entries, output, title)
    click.echo(f"wrote {out} and {out}.json")


if __name__ == "__main__":
    sys.exit(main())
