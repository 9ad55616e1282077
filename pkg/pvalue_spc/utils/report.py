"""CSV output for simulation tables, density grids and localisation reports."""
import csv
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterable, Iterator, Optional, TextIO, Union

from pydantic import BaseModel, ConfigDict, ValidationError, computed_field

from pvalue_spc.monitoring.localize import DirectionalPValues, LocalisationReport

Destination = Union[str, Path, TextIO, None]

SIGNIFICANT_DIGITS = 6
RATIO_DECIMALS = 2


class TableRow(BaseModel):
    """One row of a results table; unset fields are written as empty cells."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    scenario: Optional[str] = None
    chart: Optional[str] = None
    alpha: Optional[float] = None
    k: Optional[int] = None
    lam: Optional[float] = None
    r: Optional[float] = None
    beta: Optional[float] = None
    e_beta: Optional[float] = None
    n0: Optional[int] = None
    delta: Optional[float] = None
    rho: Optional[float] = None
    ooc: Optional[str] = None
    ks_mode: Optional[str] = None
    reps: Optional[int] = None
    mean: Optional[float] = None
    std_error: Optional[float] = None
    bound: Optional[float] = None
    censored: Optional[int] = None
    restricted_mean: Optional[float] = None
    mean_ooc: Optional[float] = None
    mean_fwe: Optional[float] = None

    @computed_field
    @property
    def ratio(self) -> Optional[float]:
        if self.mean is None or self.bound is None or self.bound == 0.0:
            return None
        return self.mean / self.bound


# Field name -> column header, in output order
COLUMNS = {
    "scenario": "scenario",
    "chart": "chart",
    "alpha": "alpha",
    "k": "k",
    "lam": "lambda",
    "r": "r",
    "beta": "beta",
    "e_beta": "e_beta",
    "n0": "n0",
    "delta": "delta",
    "rho": "rho",
    "ooc": "ooc",
    "ks_mode": "ks_mode",
    "reps": "reps",
    "mean": "mean",
    "std_error": "std_error",
    "bound": "bound",
    "ratio": "ratio",
    "censored": "censored",
    "restricted_mean": "restricted_mean",
    "mean_ooc": "mean_ooc",
    "mean_fwe": "mean_fwe",
}
HEADERS = {header: field for field, header in COLUMNS.items()}


def format_value(value: object, full_precision: bool = False, decimals: Optional[int] = None) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if full_precision:
            return repr(value)
        if decimals is not None:
            return f"{value:.{decimals}f}"
        return f"{value:.{SIGNIFICANT_DIGITS}g}"
    return str(value)


@contextmanager
def open_destination(destination: Destination) -> Iterator[TextIO]:
    """Yield a text handle for a path, an open handle, or stdout for None and '-'."""
    if destination is None or destination == "-":
        yield sys.stdout
        return
    if hasattr(destination, "write"):
        yield destination
        return
    path = Path(destination)
    try:
        handle = path.open("w", newline="", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    with handle:
        yield handle


def emit_csv(rows: Iterable[TableRow], destination: Destination = None, full_precision: bool = False) -> None:
    """Write rows with a header; only columns set in some row appear, in a fixed order.

    With no rows the header lists every column.
    """
    rows = list(rows)
    dumped = [row.model_dump() for row in rows]
    fields = [name for name in COLUMNS if not dumped or any(d[name] is not None for d in dumped)]
    with open_destination(destination) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow([COLUMNS[name] for name in fields])
        for d in dumped:
            writer.writerow(
                [
                    format_value(
                        d[name],
                        full_precision,
                        RATIO_DECIMALS if name == "ratio" else None,
                    )
                    for name in fields
                ]
            )


def read_csv(source: Union[str, Path, TextIO]) -> list[TableRow]:
    """Parse a table written by ``emit_csv``; the derived ratio column is recomputed."""
    if isinstance(source, (str, Path)):
        with Path(source).open(newline="", encoding="utf-8") as handle:
            return read_csv(handle)
    rows = []
    reader = csv.DictReader(source)
    for line, record in enumerate(reader, start=2):
        values = {}
        for header, cell in record.items():
            if header not in HEADERS:
                raise ValueError(f"line {line}: unknown column {header!r}")
            if header != "ratio" and cell != "":
                values[HEADERS[header]] = cell
        try:
            rows.append(TableRow(**values))
        except ValidationError as exc:
            raise ValueError(f"line {line}: {exc.errors()[0]['msg']}") from exc
    return rows


def emit_density_csv(
    grid: Iterable[tuple[float, float, float]],
    destination: Destination = None,
    plot_data: bool = False,
    full_precision: bool = False,
) -> None:
    """(u, pdf, cdf) rows; ``plot_data`` writes bare space-separated columns."""
    with open_destination(destination) as handle:
        if plot_data:
            for point in grid:
                handle.write(" ".join(format_value(v, full_precision) for v in point) + "\n")
            return
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["u", "pdf", "cdf"])
        for point in grid:
            writer.writerow([format_value(v, full_precision) for v in point])


def read_directional_csv(source: Union[str, Path]) -> list[tuple[int, DirectionalPValues]]:
    """Read one row of one-sided p-values per time step.

    Columns ``p_le_<j>`` and ``p_ge_<j>`` for j = 0..d-1, plus an optional
    ``time`` column (default: the row number starting at 1).
    """
    path = Path(source)
    steps = []
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        headers = reader.fieldnames or []
        d = sum(1 for h in headers if h.startswith("p_le_"))
        expected = {f"p_le_{j}" for j in range(d)} | {f"p_ge_{j}" for j in range(d)}
        unknown = set(headers) - expected - {"time"}
        if d == 0 or unknown or not expected <= set(headers):
            raise ValueError(
                f"{path}: expected columns p_le_0..p_le_<d-1>, p_ge_0..p_ge_<d-1> and optionally time"
            )
        for number, record in enumerate(reader, start=1):
            line = number + 1
            try:
                time = int(record["time"]) if "time" in record else number
                dp = DirectionalPValues(
                    p_le=tuple(float(record[f"p_le_{j}"]) for j in range(d)),
                    p_ge=tuple(float(record[f"p_ge_{j}"]) for j in range(d)),
                )
            except ValidationError as exc:
                raise ValueError(f"{path}:{line}: {exc.errors()[0]['msg']}") from exc
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{line}: {exc}") from exc
            steps.append((time, dp))
    return steps


def emit_localisation_csv(
    reports: Iterable[tuple[int, LocalisationReport]],
    destination: Destination = None,
    full_precision: bool = False,
) -> None:
    """time, aggregate, alarm, rejected coordinates ('0;2') and directions ('0:>=;2:<=')."""
    with open_destination(destination) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["time", "aggregate", "alarm", "rejected", "directions"])
        for time, report in reports:
            writer.writerow(
                [
                    time,
                    format_value(report.aggregate, full_precision),
                    format_value(report.alarm),
                    ";".join(str(j) for j in report.rejected),
                    ";".join(f"{j}:{direction.value}" for j, direction in report.directions),
                ]
            )
