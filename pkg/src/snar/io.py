"""Data ingestion, linear detrending, and file formats.

CSV numbers are written with 17 significant digits so a write/read round
trip reproduces every float exactly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateError, DomainError, MissingColumnError, ParseError
from .model import AuxBubblePath, SimulatedPath


def _fmt(x: float) -> str:
    return f"{x:.17g}"


@dataclass
class ObservedSeries:
    """A univariate series with optional date labels."""

    values: np.ndarray
    dates: Optional[list] = None
    source: str = ""

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class DetrendResult:
    """Least-squares line fit x[t] = b0 + b1*(t+1) and its residuals."""

    b0: float
    b1: float
    y: np.ndarray


def load_series(
    path: str, value_column: str, date_column: Optional[str] = None
) -> ObservedSeries:
    """Read one numeric column (and optional date labels) from a CSV file.

    Raises
    ------
    MissingColumnError
        If a requested column is not in the header.
    ParseError
        If a cell is not a finite number; the message cites the row.
    """
    values = []
    dates = [] if date_column else None
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in filter(None, (value_column, date_column)):
            if col not in header:
                raise MissingColumnError(f"column {col!r} not found in {path} (header: {header})")
        for i, row in enumerate(reader, start=2):
            raw = row.get(value_column)
            try:
                v = float(raw)
            except (TypeError, ValueError):
                raise ParseError(
                    f"{path}: row {i}: cannot parse {value_column}={raw!r} as a number"
                ) from None
            if not math.isfinite(v):
                raise ParseError(f"{path}: row {i}: non-finite value {raw!r}")
            values.append(v)
            if dates is not None:
                dates.append(row.get(date_column, ""))
    return ObservedSeries(values=np.array(values), dates=dates, source=str(path))


def detrend(x: np.ndarray) -> DetrendResult:
    """Ordinary least squares of x on (1, t) with t = 1..n; returns residuals."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n < 3:
        raise DegenerateError(f"detrend needs at least 3 points, got {n}")
    t = np.arange(1, n + 1, dtype=float)
    tbar = t.mean()
    xbar = x.mean()
    b1 = float((t - tbar) @ (x - xbar) / ((t - tbar) @ (t - tbar)))
    b0 = float(xbar - b1 * tbar)
    y = x - b0 - b1 * t
    return DetrendResult(b0=b0, b1=b1, y=y)


def write_path_csv(path: SimulatedPath, out_path: str) -> None:
    """Write a simulated path as ``t,y,s,eps`` (state and innovation blank at t=0)."""
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "y", "s", "eps"])
        w.writerow([0, _fmt(path.y[0]), "", ""])
        for t in range(1, len(path.y)):
            w.writerow([t, _fmt(path.y[t]), int(path.s[t]), _fmt(path.eps[t])])


def write_aux_csv(path: AuxBubblePath, out_path: str) -> None:
    """Write an auxiliary-process path as ``t,z``."""
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "z"])
        for t, z in enumerate(path.z):
            w.writerow([t, _fmt(z)])


def write_tags_csv(
    y: np.ndarray,
    tag_result,
    out_path: str,
    dates: Optional[list] = None,
) -> None:
    """Write per-time tags as ``t,y,r_hat,threshold,s_hat`` (+ date when known).

    Row t covers times 1..n; ``y`` is the full series including index 0.
    """
    y = np.asarray(y, dtype=float)
    n = len(tag_result.s_hat)
    thr = tag_result.thresholds
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        head = ["t", "y", "r_hat", "threshold", "s_hat"]
        if dates is not None:
            head.insert(1, "date")
        w.writerow(head)
        for i in range(n):
            t = i + 1
            r = "" if tag_result.r_hat is None else _fmt(tag_result.r_hat[i])
            if thr is None:
                c = ""
            elif np.ndim(thr) == 0:
                c = _fmt(float(thr))
            else:
                c = _fmt(float(thr[i]))
            row = [t, _fmt(y[t]), r, c, int(tag_result.s_hat[i])]
            if dates is not None:
                row.insert(1, dates[t] if t < len(dates) else "")
            w.writerow(row)


def write_excursions_csv(excs, out_path: str, dates: Optional[list] = None) -> None:
    """Write excursions as ``start,end,duration`` (+ dates when known)."""
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        head = ["start", "end", "duration"]
        if dates is not None:
            head += ["start_date", "end_date"]
        w.writerow(head)
        for e in excs:
            row = [e.start, e.end, e.duration]
            if dates is not None:
                row += [
                    dates[e.start] if e.start < len(dates) else "",
                    dates[e.end] if e.end < len(dates) else "",
                ]
            w.writerow(row)


def write_json(payload: dict, out_path: str) -> None:
    """Write a JSON document with a stable key order and a trailing newline."""
    with open(out_path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def write_estimation_csv(rows, out_path: str) -> None:
    """Estimation study table: one row per (n, parameter)."""
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "param", "bias", "esd", "asd"])
        for r in rows:
            w.writerow([
                r.n,
                r.param,
                _fmt(r.bias),
                "" if r.esd is None else _fmt(r.esd),
                "" if r.asd is None else _fmt(r.asd),
            ])


def write_tagging_csv(rows, out_path: str) -> None:
    """Tagging study table: method and correct-tagging percentages."""
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "P", "P0", "P1", "undefined_P0", "undefined_P1"])
        for r in rows:
            w.writerow([
                r.method,
                _fmt(r.P),
                "" if r.P0 is None else _fmt(r.P0),
                "" if r.P1 is None else _fmt(r.P1),
                r.undefined_P0,
                r.undefined_P1,
            ])


def write_size_csv(result, out_path: str) -> None:
    """Size study table: rejection frequency per nominal level."""
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", "rejection_rate"])
        for a in sorted(result.rejection):
            w.writerow([_fmt(a), _fmt(result.rejection[a])])


def write_normality_csv(result, out_path: str) -> None:
    """Histogram table with the scaled normal overlay."""
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_left", "bin_right", "count", "overlay_density"])
        for i in range(len(result.counts)):
            w.writerow([
                _fmt(result.bin_edges[i]),
                _fmt(result.bin_edges[i + 1]),
                int(result.counts[i]),
                _fmt(result.overlay_density[i]),
            ])
