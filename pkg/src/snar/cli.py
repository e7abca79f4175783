"""Command-line interface.

Subcommands: simulate, fit, diagnose, tag, mc-estimate, mc-normality,
mc-size, mc-tagging, analyze. Exit codes: 0 success, 1 usage error,
2 runtime error. ``SNAR_SEED`` and ``SNAR_OUT`` override the seed and
output-directory defaults.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
import time

import numpy as np

from . import analyze as analyze_mod
from . import diagnostics, io, montecarlo, tagging
from .errors import SnarError
from .innovations import KINDS, InnovationFamily
from .model import SnarParams, simulate
from .qmle import FitConfig, ParamSpace, fit

DEFAULT_SEED = 20240601


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); we map usage errors to 1
        raise UsageError(message)


def _env_seed(value):
    if value is not None:
        return value
    return int(os.environ.get("SNAR_SEED", DEFAULT_SEED))


def _env_out(value):
    if value is not None:
        return value
    return os.environ.get("SNAR_OUT", ".")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="master random seed")
    p.add_argument("--out", default=None, help="output file or directory")
    p.add_argument("--config", default=None, help="plain-text config file")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="snar", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("simulate", help="simulate a path and write it as CSV")
    _add_common(p)
    p.add_argument("--phi", type=float, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--family", choices=KINDS, default="normal")
    p.add_argument("--y0", type=float, default=None)
    p.add_argument("--burn-in", type=int, default=None)

    p = sub.add_parser("fit", help="fit the model to a CSV column")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--column", required=True)
    p.add_argument("--date-column", default=None)
    p.add_argument("--detrend", action="store_true", help="remove a linear trend first")

    p = sub.add_parser("diagnose", help="portmanteau p-values for a fitted model")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--column", required=True)
    p.add_argument("--detrend", action="store_true")
    p.add_argument("--m-list", default="6,12,18,24")
    p.add_argument("--tuning", default="q90,q95", help="comma list of q90/q95/auto")

    p = sub.add_parser("tag", help="tag bubble states in a series")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--column", required=True)
    p.add_argument("--date-column", default=None)
    p.add_argument("--detrend", action="store_true")
    p.add_argument("--method", default="RBT1", choices=analyze_mod.DEFAULT_METHODS)
    p.add_argument("--nbt-threshold", type=float, default=None)
    p.add_argument("--min-duration", type=int, default=18)

    for name in ("mc-estimate", "mc-normality", "mc-size", "mc-tagging"):
        p = sub.add_parser(name, help=f"run the {name[3:]} study from a config file")
        _add_common(p)
        p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("analyze", help="full pipeline: fit, diagnose, tag, report")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--column", default=None, help="value column (overrides config)")
    p.add_argument("--date-column", default=None)
    p.add_argument("--no-detrend", action="store_true")
    p.add_argument("--joint", action="store_true", help="alternate trend and model fits")

    return parser


def _load_ini(path):
    cfg = configparser.ConfigParser()
    if path:
        with open(path) as fh:
            cfg.read_file(fh)
    return cfg


def _space_from_ini(cfg) -> ParamSpace:
    defaults = ParamSpace()
    if not cfg.has_section("fit"):
        return defaults
    sec = cfg["fit"]

    def pair(lo_key, hi_key, default):
        return (sec.getfloat(lo_key, fallback=default[0]),
                sec.getfloat(hi_key, fallback=default[1]))

    return ParamSpace(
        phi_bounds=pair("phi_min", "phi_max", defaults.phi_bounds),
        p_bounds=pair("p_min", "p_max", defaults.p_bounds),
        sigma2_bounds=pair("sigma2_min", "sigma2_max", defaults.sigma2_bounds),
    )


def _study_config(args) -> montecarlo.StudyConfig:
    cfg = _load_ini(args.config)
    if not cfg.has_section("study"):
        raise UsageError("the study config file needs a [study] section")
    sec = cfg["study"]
    theta0 = SnarParams(
        sec.getfloat("phi"), sec.getfloat("p"), sec.getfloat("sigma2", fallback=1.0)
    )
    n_list = tuple(int(v) for v in sec.get("n_list", "200,400,800").split(","))
    seed = args.seed if args.seed is not None else sec.getint(
        "master_seed", fallback=int(os.environ.get("SNAR_SEED", DEFAULT_SEED))
    )
    workers = args.workers if args.workers is not None else sec.getint("workers", fallback=1)
    return montecarlo.StudyConfig(
        theta0=theta0,
        family_kind=sec.get("family", "normal"),
        n_list=n_list,
        reps=sec.getint("reps", fallback=1000),
        master_seed=seed,
        space=_space_from_ini(cfg),
        workers=workers,
        burn_in=sec.getint("burn_in", fallback=500),
        M=sec.getint("M", fallback=6),
        tuning_mode=sec.get("tuning_mode", "q95"),
        methods=tuple(sec.get("methods", "RBT1,RBT2,RBT3,RBT4,NBT").split(",")),
        tag_anchor=sec.get("tag_anchor", "true_ratio"),
        compute_asd=sec.getboolean("compute_asd", fallback=True),
        asd_reps=sec.getint("asd_reps", fallback=200),
        asd_length=sec.getint("asd_length", fallback=10000),
        asd_at=sec.get("asd_at", "theta0"),
    )


def _analyze_config(args) -> analyze_mod.AnalyzeConfig:
    cfg = _load_ini(args.config)
    data = cfg["data"] if cfg.has_section("data") else {}
    diag = cfg["diagnostics"] if cfg.has_section("diagnostics") else {}
    tagc = cfg["tagging"] if cfg.has_section("tagging") else {}
    value_column = data.get("value_column", getattr(args, "column", None) or "value")
    date_column = data.get("date_column") or getattr(args, "date_column", None)
    detrend = not getattr(args, "no_detrend", False)
    if isinstance(data, configparser.SectionProxy) and "detrend" in data:
        detrend = data.getboolean("detrend") and detrend
    m_list = tuple(
        int(v) for v in (diag.get("m_list", "6,12,18,24") if diag else "6,12,18,24").split(",")
    )
    tunings = tuple(
        (diag.get("tuning_modes", "q90,q95") if diag else "q90,q95").split(",")
    )
    methods = tuple(
        (tagc.get("methods", ",".join(analyze_mod.DEFAULT_METHODS)) if tagc else ",".join(analyze_mod.DEFAULT_METHODS)).split(",")
    )
    min_dur = int(tagc.get("min_duration", 18)) if tagc else 18
    highlight = int(tagc.get("highlight_duration", 24)) if tagc else 24
    return analyze_mod.AnalyzeConfig(
        value_column=value_column,
        date_column=date_column,
        detrend=detrend,
        joint_trend=getattr(args, "joint", False),
        space=_space_from_ini(cfg),
        m_list=m_list,
        tuning_modes=tunings,
        methods=methods,
        min_duration=min_dur,
        highlight_duration=highlight,
    )


def _load_fit_series(args):
    series = io.load_series(args.input, args.column, getattr(args, "date_column", None))
    if len(series) < 20:
        raise SnarError(f"need at least 20 observations, got {len(series)}")
    if not getattr(args, "detrend", False):
        return series, series.values.astype(float), None
    dt = io.detrend(series.values)
    return series, dt.y, dt


def _cmd_simulate(args) -> int:
    params = SnarParams(args.phi, args.p, args.sigma2)
    family = InnovationFamily.with_variance(args.family, args.sigma2)
    path = simulate(params, args.n, family, _env_seed(args.seed), args.y0, args.burn_in)
    out = args.out or "path.csv"
    io.write_path_csv(path, out)
    print(f"wrote {args.n + 1} points to {out}")
    return 0


def _cmd_fit(args) -> int:
    _, y, _ = _load_fit_series(args)
    result = fit(y)
    payload = json.dumps(result.to_dict(), indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(payload + "\n")
    print(payload)
    return 0


def _cmd_diagnose(args) -> int:
    _, y, _ = _load_fit_series(args)
    result = fit(y)
    m_list = [int(v) for v in args.m_list.split(",")]
    tunings = args.tuning.split(",")
    rows = []
    print("tuning " + " ".join(f"M={m:<4d}" for m in m_list))
    for mode in tunings:
        cells = []
        for M in m_list:
            rep = diagnostics.q_statistic(y, result, M, mode)
            d = rep.to_dict()
            d["tuning"] = mode
            rows.append(d)
            cells.append(f"{rep.p_value:.4f}")
        print(f"{mode:<6s} " + " ".join(f"{c:<6s}" for c in cells))
    if args.out:
        io.write_json({"fit": result.to_dict(), "diagnostics": rows}, args.out)
    return 0


def _cmd_tag(args) -> int:
    series, y, _ = _load_fit_series(args)
    result = fit(y)
    if args.method == "NBT":
        if args.nbt_threshold is not None:
            c = args.nbt_threshold
        else:
            k = math.ceil((1.0 - result.theta_hat.p) * result.n)
            ratio = (result.n - k) / result.n
            c = tagging.calibrate_nbt_threshold(y, ratio) if 0 < ratio < 1 else math.inf
        tr = tagging.nbt_tag(y, c)
    else:
        tr = tagging.rbt_tag(y, result, int(args.method[3:]))
    excs = tagging.excursions(tr.s_hat, args.min_duration)
    out_dir = _env_out(args.out)
    os.makedirs(out_dir, exist_ok=True)
    io.write_tags_csv(y, tr, os.path.join(out_dir, "tags.csv"), series.dates)
    shifted = [tagging.Excursion(e.start + 1, e.end + 1) for e in excs]
    io.write_excursions_csv(shifted, os.path.join(out_dir, "excursions.csv"), series.dates)
    n0 = int(np.sum(tr.s_hat == 0))
    print(f"{args.method}: tagged {n0} of {len(tr.s_hat)} times as null; "
          f"{len(excs)} excursions of duration >= {args.min_duration}")
    return 0


def _write_manifest(config, kind, failures, t0, out_dir) -> None:
    manifest = montecarlo.study_manifest(config, kind, failures, time.time() - t0)
    io.write_json(manifest, os.path.join(out_dir, "manifest.json"))


def _cmd_mc(args, kind: str) -> int:
    config = _study_config(args)
    out_dir = _env_out(args.out)
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.time()
    if kind == "estimate":
        res = montecarlo.run_estimation_study(config)
        io.write_estimation_csv(res.rows, os.path.join(out_dir, "estimation.csv"))
        failures = res.failures
    elif kind == "normality":
        res = montecarlo.run_normality_study(config)
        io.write_normality_csv(res, os.path.join(out_dir, "normality.csv"))
        io.write_json(
            {"n": res.n, "ks_distance": res.ks_distance, "asd": res.asd},
            os.path.join(out_dir, "normality_summary.json"),
        )
        failures = {"fit": res.failures}
    elif kind == "size":
        res = montecarlo.run_size_study(config)
        io.write_size_csv(res, os.path.join(out_dir, "size.csv"))
        failures = {"fit": res.failures}
    else:
        res = montecarlo.run_tagging_study(config)
        io.write_tagging_csv(res.rows, os.path.join(out_dir, "tagging.csv"))
        failures = {"fit": res.failures}
    _write_manifest(config, kind, failures, t0, out_dir)
    print(f"{kind} study finished; tables in {out_dir}")
    return 0


def _cmd_analyze(args) -> int:
    config = _analyze_config(args)
    out_dir = _env_out(args.out)
    report = analyze_mod.analyze(args.input, out_dir, config)
    th = report["fit"]["theta_hat"]
    print(f"fit: phi={th['phi']:.4f} p={th['p']:.4f} sigma2={th['sigma2']:.4f}; "
          f"report in {out_dir}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "fit":
            return _cmd_fit(args)
        if args.command == "diagnose":
            return _cmd_diagnose(args)
        if args.command == "tag":
            return _cmd_tag(args)
        if args.command.startswith("mc-"):
            return _cmd_mc(args, args.command[3:])
        if args.command == "analyze":
            return _cmd_analyze(args)
        parser.print_usage(sys.stderr)
        return 1
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except SnarError as exc:
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
