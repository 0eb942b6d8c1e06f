"""Readers for the training harness's delimited outputs.

The contract is the file format, not the producing code: metrics CSVs carry
`#`-prefixed comment lines (including a schema_version tag) followed by a
header row; runtime reports are JSON with a list of {method, seconds} records.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path


class SchemaError(ValueError):
    """Input file does not match the expected metrics/runtime layout."""


def read_metrics_csv(path) -> list[dict]:
    """Parse one metrics CSV into row dicts with numeric values.

    Comment lines (leading '#') are skipped; every non-comment field is
    coerced to int when possible, else float, else kept as a string.
    """
    path = Path(path)
    with path.open() as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    if not lines:
        raise SchemaError(f"{path}: no header row")
    rows = []
    for raw in csv.DictReader(lines):
        row = {}
        for key, value in raw.items():
            if key is None or value is None:
                raise SchemaError(f"{path}: ragged row {raw}")
            try:
                row[key] = int(value)
            except ValueError:
                try:
                    row[key] = float(value)
                except ValueError:
                    row[key] = value
        rows.append(row)
    return rows


@dataclass
class RuntimeEntry:
    method: str
    seconds: list[float]

    @property
    def mean(self) -> float:
        return sum(self.seconds) / len(self.seconds)

    @property
    def std(self) -> float:
        m = self.mean
        return (sum((s - m) ** 2 for s in self.seconds) / len(self.seconds)) ** 0.5


def read_runtime_reports(path) -> list[RuntimeEntry]:
    """Parse a runtime-report JSON: {"reports": [{"method", "seconds", ...}]}."""
    payload = json.loads(Path(path).read_text())
    reports = payload.get("reports")
    if not reports:
        raise SchemaError(f"{path}: no runtime reports")
    entries = []
    for rec in reports:
        if "method" not in rec or not rec.get("seconds"):
            raise SchemaError(f"{path}: malformed report entry {rec}")
        entries.append(RuntimeEntry(str(rec["method"]), [float(s) for s in rec["seconds"]]))
    return entries
