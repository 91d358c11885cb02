"""Report assembly and emission.

A Report echoes the config it came from, carries one ExperimentResult per
experiment (tables of rows plus a scalar summary), and records the wall
clock.  Emission writes one JSON document for the whole report and one CSV
file per table.

Reproducibility contract: rerunning an identical config bit-reproduces
every CSV byte.  Float cells are rendered with format(value, '.17g'),
which round-trips IEEE doubles exactly; the wall clock lives only in the
JSON document, which is otherwise deterministic too.
"""

import csv
import io
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .errors import InvariantViolation


@dataclass(frozen=True)
class Table:
    """A named grid of homogeneous rows."""

    name: str
    columns: tuple
    rows: tuple

    def __post_init__(self):
        width = len(self.columns)
        for row in self.rows:
            if len(row) != width:
                raise InvariantViolation(
                    f"table {self.name!r}: row width {len(row)} != {width}"
                )


@dataclass(frozen=True)
class ExperimentResult:
    label: str
    kind: str
    sub_seed: int
    tables: tuple
    summary: dict
    warnings: tuple = ()


@dataclass(frozen=True)
class Report:
    version: str
    config: dict
    results: tuple
    wall_clock: float
    warnings: tuple = field(default=())


def format_cell(value) -> str:
    """Render one CSV cell; floats via '.17g' so bytes reproduce exactly."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def table_to_csv(table: Table) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([format_cell(v) for v in row])
    return buf.getvalue()


def _json_cell(value):
    if value is None or isinstance(value, (bool, str)):
        return value
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    return str(value)


def report_to_dict(report: Report) -> dict:
    return {
        "version": report.version,
        "config": report.config,
        "wall_clock": float(report.wall_clock),
        "warnings": list(report.warnings),
        "results": [
            {
                "label": r.label,
                "kind": r.kind,
                "sub_seed": int(r.sub_seed),
                "summary": {k: _json_cell(v) for k, v in r.summary.items()},
                "warnings": list(r.warnings),
                "tables": [
                    {
                        "name": t.name,
                        "columns": list(t.columns),
                        "rows": [[_json_cell(v) for v in row] for row in t.rows],
                    }
                    for t in r.tables
                ],
            }
            for r in report.results
        ],
    }


def report_schema() -> dict:
    text = resources.files("bernlab").joinpath("schemas/report.schema.json").read_text()
    return json.loads(text)


def validate_report_dict(doc: dict) -> None:
    """Raise if a serialized report violates the shipped schema."""
    jsonschema.Draft202012Validator(report_schema()).validate(doc)


def _safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "-", name) or "table"


def emit(report: Report, out_dir, formats=("json", "csv")) -> list:
    """Write the report under out_dir; returns the created paths.

    JSON goes to report.json; each table goes to <label>.<table>.csv.
    Unknown formats raise ValueError; filesystem failures propagate as
    OSError from the writes themselves.
    """
    for fmt in formats:
        if fmt not in ("json", "csv"):
            raise ValueError(f"unknown report format {fmt!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    if "json" in formats:
        doc = report_to_dict(report)
        path = out_dir / "report.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        paths.append(path)
    if "csv" in formats:
        for result in report.results:
            for table in result.tables:
                path = out_dir / f"{_safe_name(result.label)}.{_safe_name(table.name)}.csv"
                path.write_text(table_to_csv(table))
                paths.append(path)
    return paths
