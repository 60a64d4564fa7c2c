"""
Benchmark report aggregation and emission.

This module provides:
- aggregate_rows: avg / median / max / min per scheme
- emit_report / parse_report: CSV or JSON files
- render_report: rich table of the aggregates for the console

CSV layout: the header `scheme,instance,iterations,restarts,residual,wall_us`,
one line per row, then four footer lines per scheme whose instance column
holds the statistic name. Floats are written with repr() so a parsed file
reproduces the rows exactly.
"""

import csv
import io
import json
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from src.core.exceptions import InvalidInputError, ReportIOError
from src.core.logging import get_logger
from src.schemas.bench import REPORT_COLUMNS, AggregateRow, BenchReport, ReportFormat, ReportRow

logger = get_logger(__name__)

STATISTICS = ("avg", "median", "max", "min")

_REDUCERS = {
    "avg": np.mean,
    "median": np.median,
    "max": np.max,
    "min": np.min,
}


def aggregate_rows(rows: Sequence[ReportRow]) -> List[AggregateRow]:
    """
    Per-scheme statistics in order of first appearance.

    The median of an even count is the mean of the two middle values.
    """
    by_scheme: Dict[str, List[ReportRow]] = {}
    for row in rows:
        by_scheme.setdefault(row.scheme, []).append(row)

    out: List[AggregateRow] = []
    for scheme, group in by_scheme.items():
        cols = {
            name: np.array([getattr(r, name) for r in group], dtype=float)
            for name in ("iterations", "restarts", "residual", "wall_us")
        }
        for stat in STATISTICS:
            reduce = _REDUCERS[stat]
            out.append(AggregateRow(scheme=scheme, statistic=stat, **{k: float(reduce(v)) for k, v in cols.items()}))
    return out


def build_report(rows: Sequence[ReportRow], **fields) -> BenchReport:
    """A BenchReport whose aggregates are computed from its rows."""
    rows = list(rows)
    return BenchReport(rows=rows, aggregates=aggregate_rows(rows), **fields)


# =============================================================================
# CSV / JSON
# =============================================================================


def _fmt(v: float) -> str:
    return repr(float(v))


def format_csv(report: BenchReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for r in report.rows:
        writer.writerow([r.scheme, r.instance, r.iterations, r.restarts, _fmt(r.residual), _fmt(r.wall_us)])
    for a in report.aggregates:
        writer.writerow([a.scheme, a.statistic, _fmt(a.iterations), _fmt(a.restarts), _fmt(a.residual), _fmt(a.wall_us)])
    return buf.getvalue()


def emit_report(
    report: Union[BenchReport, Sequence[ReportRow]],
    path,
    fmt: Union[ReportFormat, str] = ReportFormat.CSV,
) -> Path:
    """
    Write a report as CSV or JSON.

    A bare row sequence is aggregated first. JSON carries the same rows and
    aggregates plus the extras and failure notes.

    Raises:
        InvalidInputError: For an unknown format
        ReportIOError: If the file cannot be written
    """
    if not isinstance(report, BenchReport):
        report = build_report(report)
    try:
        fmt = ReportFormat(fmt)
    except ValueError:
        raise InvalidInputError(f"unknown report format {fmt!r}")

    path = Path(path)
    if fmt == ReportFormat.CSV:
        text = format_csv(report)
    else:
        text = report.model_dump_json(indent=2, exclude={"spec"})
    try:
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise ReportIOError(f"cannot write report: {e}", path=str(path))
    logger.info("wrote %d rows (%s) to %s", len(report.rows), fmt.value, path)
    return path


def parse_report(path, fmt: Optional[Union[ReportFormat, str]] = None) -> BenchReport:
    """
    Read a report written by emit_report.

    The format defaults to the file suffix. CSV footer lines are read back
    as aggregates.

    Raises:
        ReportIOError: If the file cannot be read or is malformed
    """
    path = Path(path)
    if fmt is None:
        fmt = ReportFormat.JSON if path.suffix.lower() == ".json" else ReportFormat.CSV
    fmt = ReportFormat(fmt)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ReportIOError(f"cannot read report: {e}", path=str(path))

    try:
        if fmt == ReportFormat.JSON:
            return BenchReport.model_validate(json.loads(text))
        return _parse_csv(text)
    except (ValueError, ValidationError, KeyError) as e:
        raise ReportIOError(f"malformed report: {e}", path=str(path))


def _parse_csv(text: str) -> BenchReport:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != REPORT_COLUMNS:
        raise ValueError(f"unexpected header {header}")
    rows: List[ReportRow] = []
    aggregates: List[AggregateRow] = []
    for line in reader:
        if not line:
            continue
        scheme, instance, iterations, restarts, residual, wall_us = line
        if instance in STATISTICS:
            aggregates.append(
                AggregateRow(
                    scheme=scheme,
                    statistic=instance,
                    iterations=float(iterations),
                    restarts=float(restarts),
                    residual=float(residual),
                    wall_us=float(wall_us),
                )
            )
        else:
            rows.append(
                ReportRow(
                    scheme=scheme,
                    instance=int(instance),
                    iterations=int(iterations),
                    restarts=int(restarts),
                    residual=float(residual),
                    wall_us=float(wall_us),
                )
            )
    return BenchReport(rows=rows, aggregates=aggregates)


# =============================================================================
# Console
# =============================================================================


def render_report(report: BenchReport, console: Optional[Console] = None, title: str = "Iterations") -> Table:
    """Print scheme x statistic iteration table and the extras."""
    console = console or Console()
    table = Table(title=title)
    table.add_column("scheme", style="cyan")
    for stat in STATISTICS:
        table.add_column(stat, justify="right")
    table.add_column("restarts (avg)", justify="right")

    schemes = list(dict.fromkeys(a.scheme for a in report.aggregates))
    for scheme in schemes:
        cells = []
        for stat in STATISTICS:
            try:
                cells.append(f"{report.aggregate(scheme, stat).iterations:.2f}")
            except KeyError:
                cells.append("-")
        cells.append(f"{report.aggregate(scheme, 'avg').restarts:.2f}")
        table.add_row(scheme, *cells)
    console.print(table)

    for key, value in report.extras.items():
        console.print(f"  {key} = {value:.6g}")
    for note in report.failures:
        console.print(f"  [red]failed[/red] {note}")
    return table
