"""End-to-end pipeline: load, detrend, fit, diagnose, tag, segment, report.

The report bundle is deterministic: rerunning on the same inputs yields
byte-identical files.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import diagnostics, io, tagging
from .errors import DomainError, SnarError
from .qmle import FitConfig, FitResult, ParamSpace, ci_p_delta, fit

DEFAULT_M_LIST = (6, 12, 18, 24)
DEFAULT_TUNINGS = ("q90", "q95")
DEFAULT_METHODS = ("RBT1", "RBT2", "RBT3", "RBT4", "NBT")


@dataclass
class AnalyzeConfig:
    """Pipeline settings; everything has a sensible default."""

    value_column: str = "value"
    date_column: Optional[str] = None
    detrend: bool = True
    joint_trend: bool = False
    space: ParamSpace = field(default_factory=ParamSpace)
    fit_config: FitConfig = field(default_factory=FitConfig)
    m_list: tuple = DEFAULT_M_LIST
    tuning_modes: tuple = DEFAULT_TUNINGS
    methods: tuple = DEFAULT_METHODS
    min_duration: int = 18
    highlight_duration: int = 24
    ci_alpha: float = 0.05


def _joint_trend_fit(x: np.ndarray, config: AnalyzeConfig):
    """Alternate trend and model estimation until the trend stabilizes.

    Starting from the OLS line, each round refits the model on the
    detrended series and then re-estimates the line by weighted least
    squares on the observations minus the fitted conditional mean, with
    weights from the fitted conditional variances. This alternation is a
    pragmatic construction, not a joint likelihood.
    """
    n_all = x.shape[0]
    t = np.arange(1, n_all + 1, dtype=float)
    dt = io.detrend(x)
    b0, b1 = dt.b0, dt.b1
    result = None
    for _ in range(50):
        y = x - b0 - b1 * t
        result = fit(y, config.space, config.fit_config)
        th = result.theta_hat
        al = np.abs(y[:-1])
        mean = th.p * th.phi * al
        q = th.p * (1.0 - th.p) * th.phi**2 * y[:-1] ** 2 + th.sigma2
        # WLS of (x_t - conditional mean) on (1, t) for t = 2..n
        z = x[1:] - mean
        tt = t[1:]
        wgt = 1.0 / q
        W = np.sum(wgt)
        St = np.sum(wgt * tt)
        Stt = np.sum(wgt * tt * tt)
        Sz = np.sum(wgt * z)
        Stz = np.sum(wgt * tt * z)
        det = W * Stt - St * St
        b0_new = (Stt * Sz - St * Stz) / det
        b1_new = (W * Stz - St * Sz) / det
        moved = max(abs(b0_new - b0), abs(b1_new - b1))
        b0, b1 = float(b0_new), float(b1_new)
        if moved < 1e-8:
            break
    y = x - b0 - b1 * t
    return io.DetrendResult(b0=b0, b1=b1, y=y), result


def analyze(
    input_path: str,
    out_dir: str,
    config: Optional[AnalyzeConfig] = None,
) -> dict:
    """Run the full pipeline and write the report bundle into ``out_dir``.

    Writes ``report.json``, ``fit.json``, ``pvalues.csv``, ``series.csv``,
    and per-method ``tags_*.csv`` / ``excursions_*.csv`` files. Returns the
    report dictionary.
    """
    config = config or AnalyzeConfig()
    series = io.load_series(input_path, config.value_column, config.date_column)
    if len(series) < 20:
        raise DomainError(f"need at least 20 observations to fit, got {len(series)}")
    x = series.values

    if config.detrend and config.joint_trend:
        dt, fit_result = _joint_trend_fit(x, config)
        y = dt.y
    elif config.detrend:
        dt = io.detrend(x)
        y = dt.y
        fit_result = fit(y, config.space, config.fit_config)
    else:
        dt = None
        y = x.astype(float)
        fit_result = fit(y, config.space, config.fit_config)

    lam_p = math.sqrt(fit_result.n * fit_result.cov[1, 1])
    ci = ci_p_delta(fit_result.theta_hat.p, lam_p, fit_result.n, config.ci_alpha)

    diag_entries = []
    for mode in config.tuning_modes:
        for M in config.m_list:
            rep = diagnostics.q_statistic(y, fit_result, M, mode)
            entry = rep.to_dict()
            entry["tuning"] = mode
            diag_entries.append(entry)

    dates = series.dates
    tag_entries = []
    exc_entries = []
    os.makedirs(out_dir, exist_ok=True)
    for method in config.methods:
        if method == "NBT":
            k = math.ceil((1.0 - fit_result.theta_hat.p) * fit_result.n)
            ratio = (fit_result.n - k) / fit_result.n
            if 0.0 < ratio < 1.0:
                c = tagging.calibrate_nbt_threshold(y, ratio)
            else:
                c = math.inf if ratio <= 0.0 else -math.inf
            tr = tagging.nbt_tag(y, c)
        else:
            tr = tagging.rbt_tag(y, fit_result, int(method[3:]))
        excs = tagging.excursions(tr.s_hat, config.min_duration)
        highlights = [e for e in excs if e.duration >= config.highlight_duration]

        tagged_null_times = [int(i) + 1 for i in np.flatnonzero(tr.s_hat == 0)]
        tag_entries.append({
            "method": method,
            "tagged_null_times": tagged_null_times,
            "tagged_null_count": len(tagged_null_times),
        })

        def _period(e):
            # excursion indices are offsets into s_hat; time = index + 1
            d = {"start": e.start + 1, "end": e.end + 1, "duration": e.duration}
            if dates is not None:
                d["start_date"] = dates[e.start + 1] if e.start + 1 < len(dates) else ""
                d["end_date"] = dates[e.end + 1] if e.end + 1 < len(dates) else ""
            return d

        exc_entries.append({
            "method": method,
            "min_duration": config.min_duration,
            "periods": [_period(e) for e in excs],
            "highlight_duration": config.highlight_duration,
            "highlighted": [_period(e) for e in highlights],
        })

        tag_dates = None if dates is None else dates
        io.write_tags_csv(y, tr, os.path.join(out_dir, f"tags_{method.lower()}.csv"), tag_dates)
        shifted = [
            tagging.Excursion(start=e.start + 1, end=e.end + 1) for e in excs
        ]
        io.write_excursions_csv(
            shifted, os.path.join(out_dir, f"excursions_{method.lower()}.csv"), dates
        )

    report = {
        "source": series.source,
        "n": fit_result.n,
        "detrend": (
            {"applied": False}
            if dt is None
            else {"applied": True, "b0": dt.b0, "b1": dt.b1, "joint": config.joint_trend}
        ),
        "fit": fit_result.to_dict(),
        "p_ci": {"alpha": config.ci_alpha, "lower": ci[0], "upper": ci[1]},
        "diagnostics": diag_entries,
        "tagging": tag_entries,
        "excursions": exc_entries,
    }

    io.write_json(report, os.path.join(out_dir, "report.json"))
    io.write_json(fit_result.to_dict(), os.path.join(out_dir, "fit.json"))

    with open(os.path.join(out_dir, "pvalues.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tuning"] + [f"M={m}" for m in config.m_list])
        for mode in config.tuning_modes:
            row = [mode]
            for M in config.m_list:
                row += [
                    f"{e['p_value']:.17g}"
                    for e in diag_entries
                    if e["tuning"] == mode and e["M"] == M
                ]
            w.writerow(row)

    with open(os.path.join(out_dir, "series.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        head = ["t", "x", "trend", "y"]
        if dates is not None:
            head.insert(1, "date")
        w.writerow(head)
        for i in range(len(x)):
            trend = "" if dt is None else f"{dt.b0 + dt.b1 * (i + 1):.17g}"
            row = [i, f"{x[i]:.17g}", trend, f"{y[i]:.17g}"]
            if dates is not None:
                row.insert(1, dates[i])
            w.writerow(row)

    return report
