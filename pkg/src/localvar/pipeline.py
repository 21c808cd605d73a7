"""End-to-end pipeline: calibration, detection, crisis and spillover outputs."""

from __future__ import annotations

import contextlib
import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .adaptive import (
    AdaptiveResult,
    admissible_taus,
    default_rho_grid,
    detect,
    results_frame,
    select_rho,
)
from .calibrate import CalibrationCache, Calibrator
from .config import RunConfig
from .crisis import crisis_series
from .exceptions import ConfigError, LocalVarError
from .fevd import pair_label, pairwise_spillover
from .panel import TimeSeriesPanel, ingest
from .var import Interval, VarParams, fit_var

logger = logging.getLogger(__name__)


@contextlib.contextmanager
def stage(name: str, group: str | None = None):
    """Re-raise package errors with the stage (and pair) they came from."""
    try:
        yield
    except LocalVarError as exc:
        where = f"{name}" + (f", pair {group}" if group else "")
        if str(exc).startswith("["):
            raise
        raise type(exc)(f"[{where}] {exc}") from exc


def load_panel(config: RunConfig) -> TimeSeriesPanel:
    if not config.input:
        raise ConfigError("no input file given")
    with stage("ingest"):
        return ingest(config.input, config.columns)


def groups(panel: TimeSeriesPanel, joint: bool) -> dict[str, list[int]]:
    """Column groups: every unordered pair, or one joint group."""
    if panel.d < 2:
        raise ConfigError("need at least two series")
    if joint or panel.d == 2:
        name = "joint" if panel.d > 2 else pair_label(*panel.names)
        return {name: list(range(panel.d))}
    return {pair_label(panel.names[i], panel.names[j]): [i, j]
            for i, j in itertools.combinations(range(panel.d), 2)}


def theta_for(sub: TimeSeriesPanel, config: RunConfig) -> VarParams:
    """Calibration model: ``--theta`` if given, else the full-sample fit."""
    if config.theta:
        theta = VarParams.from_json(config.theta)
        if theta.d != sub.d or theta.p != config.p:
            raise ConfigError(f"--theta has d={theta.d}, p={theta.p}; need d={sub.d}, p={config.p}")
        return theta
    return fit_var(sub, Interval(sub.n_obs - 1, sub.n_obs - config.p), config.p).params


@dataclass
class GroupResult:
    name: str
    columns: list[str]
    theta_star: VarParams
    rho: float
    critical_values: object
    results: list[AdaptiveResult]
    rho_table: pd.DataFrame | None = None
    n_cache_hits: int = 0


def detect_group(panel: TimeSeriesPanel, name: str, cols: list[int], config: RunConfig,
                 require_calibration: bool = False) -> GroupResult:
    sub = panel.select(cols)
    grid = config.interval_grid
    with stage("calibrate", name):
        theta = theta_for(sub, config)
        calib = Calibrator(theta, grid, config.n_calib, config.seed,
                           CalibrationCache(config.calib_cache), config.n_jobs)
        if require_calibration and not config.theta:
            rhos = default_rho_grid() if config.rho == "optimal" else [config.rho]
            missing = [rho for rho in rhos if calib.lookup(rho, config.r) is None]
            if missing:
                raise ConfigError(
                    f"no calibrated critical values for pair {name} (rho={missing[0]}); "
                    "run 'localvar calibrate' with the same input and cache first, "
                    "or pass --theta"
                )
    table = None
    with stage("rho-select", name):
        if config.rho == "optimal":
            sel = select_rho(sub, grid, default_rho_grid(), config.r, config.p, calib)
            rho, table = sel.rho, sel.table
        else:
            rho = float(config.rho)
        cv = calib.critical_values(rho, config.r)
    with stage("detect", name):
        results = detect(sub, grid, cv, config.r, config.p, restrict=True)
    return GroupResult(name, list(sub.names), theta, rho, cv, results, table, calib.n_cache_hits)


def intervals_table(group_results: list[GroupResult]) -> pd.DataFrame:
    frames = []
    for g in group_results:
        frame = results_frame(g.results)
        frame.insert(1, "pair", g.name)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def crisis_table(group_results: list[GroupResult], K_max: int):
    k_hats = {}
    for g in group_results:
        labels = [res.label for res in g.results]
        k = [np.nan if res.fit_failed else res.k_hat for res in g.results]
        k_hats[g.name] = pd.Series(k, index=labels, dtype=float)
    return crisis_series(k_hats, K_max)


@dataclass
class PipelineResult:
    out_dir: Path
    files: list[str]
    manifest: dict
    groups: list[GroupResult] = field(default_factory=list)


def _write_csv(frame: pd.DataFrame, path: Path) -> None:
    frame.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")


def run_pipeline(config: RunConfig) -> PipelineResult:
    """Calibrate, detect, and write intervals, crisis and spillover tables per pair.

    Flagged cells (failed or unstable local fits) are counted in the
    manifest but never abort the run.
    """
    panel = load_panel(config)
    grid = config.interval_grid
    with stage("setup"):
        grid.check_dimension(2 if not config.joint else panel.d, config.p)
        taus = admissible_taus(panel.n_obs, grid, config.p)
        parts = groups(panel, config.joint)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)

    results = [detect_group(panel, name, cols, config) for name, cols in parts.items()]
    files = []

    _write_csv(intervals_table(results), out / "intervals.csv")
    files.append("intervals.csv")

    with stage("crisis"):
        crisis = crisis_table(results, grid.K)
    _write_csv(crisis.to_frame(), out / "crisis.csv")
    files.append("crisis.csv")

    windows = {g.name: np.array([res.m_hat for res in g.results]) for g in results}
    spill = {}
    with stage("spillover"):
        spill["lhi"] = _spillover(panel, taus, windows, parts, config)
        for w in config.baseline_windows:
            spill[f"rw_{w}"] = _spillover(panel, taus, int(w), parts, config)
    for key, series in spill.items():
        name = f"spillover_{key}.csv"
        _write_csv(series.to_long(), out / name)
        files.append(name)

    manifest = {
        "config": config.to_dict(),
        "n_obs": panel.n_obs,
        "series": list(panel.names),
        "first_tau": panel.label(int(taus[0])),
        "last_tau": panel.label(int(taus[-1])),
        "n_tau": len(taus),
        "discarded_initial_rows": int(taus[0]),
        "K_max": grid.K,
        "pairs": {
            g.name: {
                "columns": g.columns,
                "theta_star": g.theta_star.to_dict(),
                "rho": g.rho,
                "zeta": {str(k): z for k, z in sorted(g.critical_values.zeta.items())},
                "calibration_fingerprint": g.critical_values.fingerprint,
                "calibration_failed_samples": g.critical_values.n_failed,
                "n_restricted": sum(res.restricted for res in g.results),
                "n_fit_failed": sum(res.fit_failed for res in g.results),
            }
            for g in results
        },
        "flagged_spillover_cells": {key: s.n_flagged for key, s in spill.items()},
        "files": files + ["run_manifest.json"],
    }
    (out / "run_manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return PipelineResult(out, manifest["files"], manifest, results)


def _spillover(panel, taus, windows, parts, config):
    if config.joint or panel.d == 2:
        if isinstance(windows, dict):
            windows = next(iter(windows.values()))
        series = pairwise_spillover(panel, taus, windows, config.horizon, config.p, joint=True,
                                    n_jobs=config.n_jobs)
        name = next(iter(parts))
        series.totals.columns = [name]
        series.flags.columns = [name]
        return series
    return pairwise_spillover(panel, taus, windows, config.horizon, config.p,
                              n_jobs=config.n_jobs)
