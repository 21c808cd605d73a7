"""Command-line interface: ``localvar <subcommand> [options]``.

Every subcommand accepts ``--config FILE`` (flat ``key = value``; flags
override file values), ``--seed`` and ``--out``, and prints a JSON summary
on success. Exit codes: 0 success, 2 configuration error, 3 data error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from .adaptive import default_rho_grid
from .calibrate import CalibrationCache, Calibrator
from .config import RunConfig, parse_config_text
from .crisis import crisis_series
from .exceptions import ConfigError, LocalVarError, ParseError
from .fevd import pairwise_spillover
from .pipeline import (
    detect_group,
    groups,
    intervals_table,
    load_panel,
    run_pipeline,
    stage,
    theta_for,
)
from .scenarios import ScenarioSpec, Variant, default_variants, run_study
from .var import VarParams

logger = logging.getLogger("localvar")


def _common(p: argparse.ArgumentParser, data: bool = True) -> None:
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--n-jobs", dest="n_jobs", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    if data:
        p.add_argument("--input", help="CSV with a date column and one column per series")
        p.add_argument("--columns", help="comma separated column selection")
        p.add_argument("--p", type=int, help="lag order (default 1)")
        p.add_argument("--grid", help="'default', 'literature' or comma separated lengths")
        p.add_argument("--r", type=float, help="power of the likelihood ratio (default 0.5)")
        p.add_argument("--rho", help="number in (0, 1] or 'optimal'")
        p.add_argument("--n-calib", dest="n_calib", type=int, help="calibration samples")
        p.add_argument("--calib-cache", dest="calib_cache",
                       help="critical-value cache directory (LOCALVAR_CALIB_CACHE wins)")
        p.add_argument("--theta", help="JSON VAR parameters used as calibration model")
        p.add_argument("--joint", action="store_true", default=None,
                       help="one joint VAR instead of all pairs")
        p.add_argument("--horizon", type=int, help="forecast horizon H (default 12)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="localvar", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="Monte-Carlo critical values")
    _common(p)

    p = sub.add_parser("detect", help="adaptive interval selection per pair")
    _common(p)

    p = sub.add_parser("spillover", help="total spillover on given windows")
    _common(p)
    p.add_argument("--window", type=int, help="fixed rolling window")
    p.add_argument("--intervals", help="intervals.csv from 'detect' (uses m_hat)")

    p = sub.add_parser("crisis", help="crisis indicators from intervals.csv")
    _common(p)
    p.add_argument("--intervals", required=True)

    p = sub.add_parser("rho-select", help="MAPE-optimal rho per pair")
    _common(p)

    p = sub.add_parser("run", help="full pipeline")
    _common(p)

    p = sub.add_parser("simulate", help="replication study of a break scenario")
    _common(p, data=False)
    p.add_argument("--scenario", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--reps", type=int, default=250)
    p.add_argument("--dim", type=int, choices=(2, 4), default=2)
    p.add_argument("--n-calib", dest="n_calib", type=int)
    p.add_argument("--r", type=float)
    p.add_argument("--grid")
    p.add_argument("--rho", action="append",
                   help="extra fixed rho variant (repeatable); defaults always included")
    return parser


_NOT_CONFIG = {"command", "config", "verbose", "window", "intervals", "scenario", "reps", "dim"}


def make_config(args: argparse.Namespace) -> RunConfig:
    values = parse_config_text(Path(args.config).read_text(encoding="utf-8")) if args.config else {}
    for key, val in vars(args).items():
        if key in _NOT_CONFIG or val is None:
            continue
        if key == "rho" and isinstance(val, list):
            continue
        values[key] = val
    return RunConfig(**values)


def _out(config: RunConfig) -> Path:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_calibrate(args, config: RunConfig) -> dict:
    out = _out(config)
    cache = CalibrationCache(config.calib_cache)
    summary = {"pairs": {}}
    rhos = default_rho_grid() if config.rho == "optimal" else [config.rho]
    if config.input:
        panel = load_panel(config)
        parts = groups(panel, config.joint)
        subs = {name: panel.select(cols) for name, cols in parts.items()}
        thetas = {name: theta_for(sub, config) for name, sub in subs.items()}
    elif config.theta:
        thetas = {"theta": VarParams.from_json(config.theta)}
    else:
        raise ConfigError("calibrate needs --theta or --input")
    for name, theta in thetas.items():
        with stage("calibrate", name):
            calib = Calibrator(theta, config.interval_grid, config.n_calib, config.seed,
                               cache, config.n_jobs)
            values = [calib.critical_values(rho, config.r) for rho in rhos]
        path = out / (f"critical_values_{name}.json" if len(thetas) > 1 or config.input
                      else "critical_values.json")
        if len(values) == 1:
            values[0].to_json(path)
        else:
            path.write_text(json.dumps([v.to_dict() for v in values], indent=2))
        summary["pairs"][name] = {
            "file": str(path),
            "fingerprint": values[0].fingerprint,
            "zeta": {str(k): z for k, z in values[0].zeta.items()} if len(values) == 1 else None,
            "n_rho": len(values),
        }
    summary["cache"] = str(cache.directory) if cache.directory else None
    return summary


def _detect_all(config: RunConfig, require: bool):
    panel = load_panel(config)
    parts = groups(panel, config.joint)
    return panel, [detect_group(panel, name, cols, config, require_calibration=require)
                   for name, cols in parts.items()]


def cmd_detect(args, config: RunConfig) -> dict:
    if not config.theta and not (config.calib_cache or CalibrationCache().directory):
        raise ConfigError("no calibration cache and no --theta: run 'localvar calibrate' "
                          "with --calib-cache first, or pass --theta")
    panel, results = _detect_all(config, require=True)
    out = _out(config)
    intervals_table(results).to_csv(out / "intervals.csv", index=False, float_format="%.10g")
    return {
        "file": str(out / "intervals.csv"),
        "pairs": {g.name: {"rho": g.rho, "zeta_final": g.critical_values.final,
                           "n_restricted": sum(r.restricted for r in g.results)}
                  for g in results},
    }


def cmd_rho_select(args, config: RunConfig) -> dict:
    config = config.replace(rho="optimal")
    panel, results = _detect_all(config, require=False)
    out = _out(config)
    summary = {}
    for g in results:
        path = out / f"rho_{g.name}.csv"
        g.rho_table.to_csv(path, index=False, float_format="%.10g")
        summary[g.name] = {"rho": g.rho, "file": str(path)}
    return {"pairs": summary}


def _read_intervals(path) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype={"date": str, "pair": str})
    except (OSError, pd.errors.ParserError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    need = {"date", "pair", "k_hat", "m_hat"}
    if not need <= set(frame.columns):
        raise ConfigError(f"{path}: missing columns {sorted(need - set(frame.columns))}")
    return frame


def cmd_spillover(args, config: RunConfig) -> dict:
    panel = load_panel(config)
    parts = groups(panel, config.joint)
    labels = [panel.label(i) for i in range(panel.n_obs)]
    if args.intervals:
        frame = _read_intervals(args.intervals)
        first = frame[frame["pair"] == frame["pair"].iloc[0]]
        taus = np.array([labels.index(d) for d in first["date"]])
        windows = {name: frame.loc[frame["pair"] == name, "m_hat"].to_numpy() for name in parts}
        if len(parts) == 1:
            windows = next(iter(windows.values()))
    elif args.window:
        windows = args.window
        taus = np.arange(config.interval_grid.first_tau(config.p), panel.n_obs)
    else:
        raise ConfigError("spillover needs --window or --intervals")
    with stage("spillover"):
        series = pairwise_spillover(panel, taus, windows, config.horizon, config.p,
                                    joint=len(parts) == 1, n_jobs=config.n_jobs)
    if len(parts) == 1:
        name = next(iter(parts))
        series.totals.columns = series.flags.columns = [name]
    out = _out(config)
    path = out / "spillover.csv"
    series.to_csv(path)
    return {"file": str(path), "n_flagged": series.n_flagged,
            "mean_total": float(np.nanmean(series.average))}


def cmd_crisis(args, config: RunConfig) -> dict:
    frame = _read_intervals(args.intervals)
    if "fit_failed" in frame:
        frame.loc[frame["fit_failed"] == 1, "k_hat"] = np.nan
    k_hats = {pair: pd.Series(sub["k_hat"].to_numpy(dtype=float), index=sub["date"].to_numpy())
              for pair, sub in frame.groupby("pair", sort=False)}
    with stage("crisis"):
        cs = crisis_series(k_hats, config.interval_grid.K)
    out = _out(config)
    path = out / "crisis.csv"
    cs.to_csv(path)
    g = cs.global_indicator("mean")
    return {"file": str(path), "K_max": cs.K_max, "max_global_mean": float(g.max())}


def cmd_run(args, config: RunConfig) -> dict:
    res = run_pipeline(config)
    m = res.manifest
    return {"out": str(res.out_dir), "files": res.files, "first_tau": m["first_tau"],
            "last_tau": m["last_tau"], "pairs": {k: {"rho": v["rho"]} for k, v in m["pairs"].items()},
            "flagged_spillover_cells": m["flagged_spillover_cells"]}


def cmd_simulate(args, config: RunConfig) -> dict:
    spec = ScenarioSpec.number(args.scenario, d=args.dim, n_replications=args.reps,
                               seed=config.seed)
    variants = default_variants() + [Variant(f"rho_{float(x):g}", float(x))
                                     for x in (args.rho or [])]
    summary = run_study(spec, config.interval_grid, variants, config.r, config.p,
                        n_calib=config.n_calib, n_jobs=config.n_jobs)
    manifest = summary.write(_out(config), prefix=f"scenario{args.scenario}_d{args.dim}")
    return {"out": config.out, "modal_rho": summary.modal_rho,
            "zeta_final": summary.zeta_final, "files": manifest["files"]}


COMMANDS = {
    "calibrate": cmd_calibrate,
    "detect": cmd_detect,
    "spillover": cmd_spillover,
    "crisis": cmd_crisis,
    "rho-select": cmd_rho_select,
    "run": cmd_run,
    "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = make_config(args)
        summary = COMMANDS[args.command](args, config)
    except LocalVarError as exc:
        print(f"localvar {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"localvar {args.command}: error: {exc}", file=sys.stderr)
        return 3
    print(json.dumps({"command": args.command, "status": "ok", **summary}, indent=2,
                     default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
