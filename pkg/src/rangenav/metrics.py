"""Error statistics: per-axis MAE, RMSE, and SAE, plus solve-time stats.

SAE is the *population* standard deviation of the absolute errors (the
1/N form); with that convention ``rmse^2 = mae^2 + sae^2`` and
``rmse >= mae`` holds for every input.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray


@dataclass(frozen=True)
class ErrorSummary:
    """Per-axis error statistics of one run."""

    mae: NDArray[np.float64]
    rmse: NDArray[np.float64]
    sae: NDArray[np.float64]
    count: int
    solve_time_mean: float = float("nan")
    solve_time_p99: float = float("nan")


def summarize(errors: ArrayLike, times: ArrayLike | None = None) -> ErrorSummary:
    """Reduce per-axis signed errors (N, d) to MAE / RMSE / SAE per axis."""
    errors = np.atleast_2d(np.asarray(errors, dtype=float))
    if errors.size == 0:
        raise ValueError("errors must be nonempty")
    ae = np.abs(errors)
    mae = ae.mean(axis=0)
    rmse = np.sqrt((errors**2).mean(axis=0))
    sae = ae.std(axis=0)  # population form
    t_mean = t_p99 = float("nan")
    if times is not None:
        times = np.asarray(times, dtype=float)
        if times.size:
            t_mean = float(times.mean())
            t_p99 = float(np.percentile(times, 99))
    return ErrorSummary(
        mae=mae, rmse=rmse, sae=sae, count=errors.shape[0],
        solve_time_mean=t_mean, solve_time_p99=t_p99,
    )


def sweep_table(results: dict[tuple[int, int], ErrorSummary]) -> list[dict]:
    """Flatten (k_t, k_w)-keyed summaries into sorted table rows."""
    rows = []
    for (k_t, k_w) in sorted(results):
        s = results[(k_t, k_w)]
        row = {"k_t": k_t, "k_w": k_w}
        for name, vec in (("mae", s.mae), ("rmse", s.rmse), ("sae", s.sae)):
            for axis, value in zip("xyz", vec):
                row[f"{name}_{axis}"] = float(value)
        row["solve_time_mean"] = s.solve_time_mean
        rows.append(row)
    return rows


def format_table(rows: list[dict]) -> str:
    """Aligned plain-text rendering of sweep rows."""
    if not rows:
        return "(empty)\n"
    cols = list(rows[0])
    widths = {c: max(len(c), 10) for c in cols}
    out = io.StringIO()
    out.write("  ".join(f"{c:>{widths[c]}}" for c in cols) + "\n")
    for row in rows:
        cells = []
        for c in cols:
            v = row[c]
            cells.append(f"{v:>{widths[c]}}" if isinstance(v, int) else f"{v:>{widths[c]}.4f}")
        out.write("  ".join(cells) + "\n")
    return out.getvalue()


def write_rows_csv(path, rows: list[dict]) -> None:
    """Write table rows as CSV (one header line, 17-digit floats)."""
    import csv

    with open(path, "w", newline="") as handle:
        if not rows:
            handle.write("")
            return
        writer = csv.writer(handle)
        cols = list(rows[0])
        writer.writerow(cols)
        for row in rows:
            writer.writerow(
                [row[c] if isinstance(row[c], int) else format(row[c], ".17g") for c in cols]
            )
