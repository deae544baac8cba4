"""Metrics, trace recording, and report emission shared by all solvers."""

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .constants import (
    BOUND_CSV_HEADER,
    FLAG_DIVERGED,
    PLOT_COLUMNS,
    PLOT_FLOOR,
    TRACE_CSV_HEADER,
)
from .linalg import Vector, norm2
from .utils import atomic_write_bytes, atomic_write_text, format_float, parse_float

logger = logging.getLogger(__name__)


class TraceIOError(OSError):
    """Raised when a trace or report cannot be written or read."""
    pass


class PlotError(ValueError):
    """Raised when a requested plot column has no data."""
    pass


def relative_error(x: Vector, x_star: Vector) -> float:
    """
    ||x - x*||_2 / ||x*||_2.

    Raises:
        ValueError: If x* is the zero vector
    """
    denom = norm2(x_star)
    if denom == 0.0:
        raise ValueError("relative error against a zero ground truth")
    return norm2(x - x_star) / denom


def measured_snr(clean: Vector, noisy: Vector) -> float:
    """
    Signal-to-noise ratio in dB: 20 log10(||clean|| / ||noisy - clean||).

    Raises:
        ValueError: If noisy equals clean
    """
    noise = norm2(noisy - clean)
    if noise == 0.0:
        raise ValueError("measured SNR of noiseless data")
    return 20.0 * math.log10(norm2(clean) / noise)


@dataclass
class TraceRow:
    """One recorded iteration."""

    iter: int
    objective: float
    rel_error: Optional[float] = None
    norm: float = 0.0
    alpha: Optional[float] = None
    beta: Optional[float] = None
    flags: Tuple[str, ...] = ()

    def value(self, column: str) -> Optional[float]:
        return getattr(self, column)


@dataclass
class Trace:
    """
    Per-iteration history of a solver run.

    Rows hold the recorded iterations; the final iterate, iteration count
    and stop reason describe where the run ended even if that iteration
    was not recorded.
    """

    label: str
    rows: List[TraceRow] = field(default_factory=list)
    meta: Dict[str, Any] = field(default_factory=dict)
    final_x: Optional[np.ndarray] = None
    iterations: int = 0
    stop_reason: str = "max_iters"
    iterates: List[np.ndarray] = field(default_factory=list)
    outer_objectives: List[float] = field(default_factory=list)
    final_value: Optional[float] = None

    def append(self, row: TraceRow) -> None:
        if self.rows and row.iter <= self.rows[-1].iter:
            raise ValueError(f"trace iterations must increase ({self.rows[-1].iter} then {row.iter})")
        if not math.isfinite(row.objective) and FLAG_DIVERGED not in row.flags:
            row.flags = tuple(sorted(set(row.flags) | {FLAG_DIVERGED}))
        self.rows.append(row)

    def column(self, name: str) -> Tuple[List[int], List[float]]:
        """Iterations and values of a column, skipping absent entries."""
        iters, values = [], []
        for row in self.rows:
            v = row.value(name)
            if v is not None:
                iters.append(row.iter)
                values.append(v)
        return iters, values

    def has_column(self, name: str) -> bool:
        return any(row.value(name) is not None for row in self.rows)

    @property
    def diverged(self) -> bool:
        return any(FLAG_DIVERGED in row.flags for row in self.rows)

    @property
    def initial_objective(self) -> float:
        return self.rows[0].objective

    @property
    def final_objective(self) -> float:
        """Objective at the final iterate, recorded or not."""
        if self.final_value is not None:
            return self.final_value
        return self.rows[-1].objective

    def first_iter_below(self, column: str, threshold: float) -> Optional[int]:
        """First recorded iteration whose column value is <= threshold."""
        for row in self.rows:
            v = row.value(column)
            if v is not None and v <= threshold:
                return row.iter
        return None

    def has_flag(self, flag: str) -> bool:
        return any(flag in row.flags for row in self.rows)


@dataclass
class BoundRow:
    """One iteration of the FRGD convergence-bound check."""

    l: int
    lhs: float
    k_bound: float
    k_statement: float
    rhs: float
    cg_rhs: float
    holds: bool
    z_rank: int


@dataclass
class BoundReport:
    """Residual norms against the fixed-step FRGD bound, truncated at the first rank-deficient Z."""

    kappa_A: float
    spectral_norm_A: float
    alpha: float
    rho: float = 1.0
    rows: List[BoundRow] = field(default_factory=list)
    truncated_at: Optional[int] = None

    @property
    def all_hold(self) -> bool:
        return bool(self.rows) and all(row.holds for row in self.rows)

    @property
    def violations(self) -> List[int]:
        return [row.l for row in self.rows if not row.holds]


def _csv_text(header: Sequence[str], records: List[List[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(records)
    return buf.getvalue()


def _write(path: Union[str, Path], text: str) -> None:
    try:
        atomic_write_text(path, text)
    except OSError as e:
        raise TraceIOError(f"failed to write {path}: {e}") from e


def write_trace_csv(trace: Trace, path: Union[str, Path]) -> None:
    """
    Write a trace as UTF-8 CSV with the fixed header.

    Floats use shortest round-trip decimals; absent optionals are empty
    fields; flags are joined with ';'.

    Raises:
        TraceIOError: If the file cannot be written
    """
    records = [
        [
            str(row.iter),
            format_float(row.objective),
            format_float(row.rel_error),
            format_float(row.norm),
            format_float(row.alpha),
            format_float(row.beta),
            ";".join(row.flags),
        ]
        for row in trace.rows
    ]
    _write(path, _csv_text(TRACE_CSV_HEADER, records))


def read_trace_csv(path: Union[str, Path], label: Optional[str] = None) -> Trace:
    """
    Read a trace written by write_trace_csv.

    Args:
        path: CSV file
        label: Trace label (defaults to the file stem)

    Raises:
        TraceIOError: If the file is missing, its header does not match or a row is malformed
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header is None or tuple(header) != TRACE_CSV_HEADER:
                raise TraceIOError(f"{path}: not a trace CSV (header {header})")
            trace = Trace(label=label or path.stem)
            for fields in reader:
                try:
                    row = TraceRow(
                        iter=int(fields[0]),
                        objective=float(fields[1]),
                        rel_error=parse_float(fields[2]),
                        norm=float(fields[3]),
                        alpha=parse_float(fields[4]),
                        beta=parse_float(fields[5]),
                        flags=tuple(fields[6].split(";")) if fields[6] else (),
                    )
                except (IndexError, ValueError) as e:
                    raise TraceIOError(f"{path}:{reader.line_num}: malformed row ({e})") from e
                trace.append(row)
    except (OSError, UnicodeDecodeError) as e:
        if isinstance(e, TraceIOError):
            raise
        raise TraceIOError(f"failed to read {path}: {e}") from e
    return trace


def write_bound_csv(report: BoundReport, path: Union[str, Path]) -> None:
    """Write a BoundReport as CSV, one row per verified iteration."""
    records = [
        [
            str(row.l),
            format_float(row.lhs),
            format_float(row.k_bound),
            format_float(row.k_statement),
            format_float(row.rhs),
            format_float(row.cg_rhs),
            "true" if row.holds else "false",
            str(row.z_rank),
        ]
        for row in report.rows
    ]
    _write(path, _csv_text(BOUND_CSV_HEADER, records))


def render_svg_plot(traces: Sequence[Trace], column: str, path: Union[str, Path], log_y: bool = True) -> None:
    """
    Render one line per trace for column as a standalone SVG.

    Values at or below PLOT_FLOOR are clamped on log axes and the title says so.
    Output bytes depend only on the inputs.

    Raises:
        PlotError: If column is unknown or no trace populates it
    """
    import matplotlib
    from matplotlib.figure import Figure

    populated = [t for t in traces if t.has_column(column)] if column in PLOT_COLUMNS else []
    if not populated:
        available = [c for c in PLOT_COLUMNS if any(t.has_column(c) for t in traces)]
        raise PlotError(f"column {column!r} has no data (available: {', '.join(available) or 'none'})")

    fig = Figure(figsize=(6.4, 4.8))
    ax = fig.add_subplot(1, 1, 1)
    clamped = False
    for trace in populated:
        iters, values = trace.column(column)
        values = np.asarray(values, dtype=np.float64)
        if log_y:
            low = ~(values > PLOT_FLOOR)
            if np.any(low):
                clamped = True
                values = np.where(low, PLOT_FLOOR, values)
        ax.plot(iters, values, label=trace.label, linewidth=1.5)
    if log_y:
        ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel(column)
    title = column
    if clamped:
        title += f" (values clamped to {PLOT_FLOOR:g})"
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best")

    buf = io.BytesIO()
    with matplotlib.rc_context({"svg.hashsalt": "ncgmomentum", "svg.fonttype": "none"}):
        fig.savefig(buf, format="svg", metadata={"Date": None})
    try:
        atomic_write_bytes(path, buf.getvalue())
    except OSError as e:
        raise TraceIOError(f"failed to write {path}: {e}") from e
    logger.debug("wrote %s (%d traces, column %s)", path, len(populated), column)
