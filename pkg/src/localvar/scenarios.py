"""Simulated break scenarios and replication studies.

Three templates are provided:

* ``single-break``  84 observations from ``theta_a`` then 62 from ``theta_b``
* ``double-break``  84 / 15 / 47 from ``theta_a`` / ``theta_b`` / ``theta_a``
* ``smooth-break``  96 from ``theta_a``, ``mix_steps`` observations whose
  parameters move linearly (weights ``i / mix_steps``) and the rest from
  ``theta_b``, 200 in total

The lagged state carries over at every regime change. A study runs the
adaptive detection on every replication for several ``rho`` variants and
summarises the selected indices and test statistics per end point.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .adaptive import IntervalGrid, _DetectionCache, _zeta_array, default_rho_grid
from .calibrate import CalibrationBank
from .exceptions import ConfigError, LocalVarError, NumericalError, UnstableParams
from .panel import TimeSeriesPanel
from .var import VarParams, is_stable

logger = logging.getLogger(__name__)

# Pre- and post-break regimes of the simulation design. No innovation
# covariance is given for them, so sd ~7 with correlation 0.3 is used for both.
SIGMA_D2 = np.array([[50.0, 15.0], [15.0, 50.0]])
THETA_1 = VarParams([29.0, 132.0], [[[0.71, 0.08], [0.13, 0.08]]], SIGMA_D2)
THETA_2 = VarParams([31.0, 130.0], [[[0.63, 0.00], [0.12, 0.23]]], SIGMA_D2)

KINDS = ("single-break", "double-break", "smooth-break")
# homogeneous / non-homogeneous split of the relative end points
SPLITS = {"single-break": (38, 84), "double-break": (38, 100), "smooth-break": (70, 100)}
_STREAM = 1 << 20
_MAX_FAILED_FRACTION = 0.02


def block_embed(theta: VarParams, cross: float = 0.05) -> VarParams:
    """Four-dimensional VAR(1) built from two copies of a bivariate one.

    The off-diagonal blocks of ``phi_1`` are ``cross`` everywhere, the
    intercept is stacked and ``Sigma`` is block diagonal.

    Raises
    ------
    UnstableParams
    """
    if theta.p != 1 or theta.d != 2:
        raise ConfigError("block embedding expects a bivariate VAR(1)")
    phi = np.full((4, 4), float(cross))
    phi[:2, :2] = theta.lags[0]
    phi[2:, 2:] = theta.lags[0]
    sigma = np.zeros((4, 4))
    sigma[:2, :2] = theta.sigma
    sigma[2:, 2:] = theta.sigma
    out = VarParams(np.tile(theta.intercept, 2), phi[None], sigma)
    if not is_stable(out):
        raise UnstableParams("embedded four-dimensional VAR is not stable")
    return out


THETA_1_D4 = block_embed(THETA_1)
THETA_2_D4 = block_embed(THETA_2)


def interpolate(theta_a: VarParams, theta_b: VarParams, w: float) -> VarParams:
    """Elementwise ``(1 - w) theta_a + w theta_b`` for intercept, lags and Sigma."""
    if w == 1:
        return theta_b
    return VarParams(
        (1 - w) * theta_a.intercept + w * theta_b.intercept,
        (1 - w) * theta_a.lags + w * theta_b.lags,
        (1 - w) * theta_a.sigma + w * theta_b.sigma,
    )


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str
    theta_a: VarParams = THETA_1
    theta_b: VarParams = THETA_2
    n_replications: int = 250
    seed: int = 0
    mix_steps: int = 16
    burn_in: int = 100

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.theta_a.d != self.theta_b.d or self.theta_a.p != self.theta_b.p:
            raise ConfigError("theta_a and theta_b must share dimension and lag order")
        if self.n_replications < 1:
            raise ConfigError("n_replications must be positive")
        if self.kind == "smooth-break" and not 0 < self.mix_steps < 104:
            raise ConfigError("mix_steps must lie in 1..103")
        for th in self.regimes():
            if not is_stable(th):
                raise UnstableParams(f"{self.kind}: a regime of the scenario is not stable")

    @classmethod
    def number(cls, n: int, d: int = 2, **kwargs) -> "ScenarioSpec":
        """Scenario 1, 2 or 3 with the default parameters for ``d`` in {2, 4}."""
        if n not in (1, 2, 3):
            raise ConfigError(f"scenario must be 1, 2 or 3, got {n}")
        if d not in (2, 4):
            raise ConfigError(f"default scenarios exist for d=2 and d=4, got {d}")
        thetas = (THETA_1, THETA_2) if d == 2 else (THETA_1_D4, THETA_2_D4)
        kwargs.setdefault("theta_a", thetas[0])
        kwargs.setdefault("theta_b", thetas[1])
        return cls(KINDS[n - 1], **kwargs)

    def segments(self) -> list[tuple[int, str]]:
        if self.kind == "single-break":
            return [(84, "a"), (62, "b")]
        if self.kind == "double-break":
            return [(84, "a"), (15, "b"), (47, "a")]
        return [(96, "a"), (self.mix_steps, "mix"), (104 - self.mix_steps, "b")]

    @property
    def n_obs(self) -> int:
        return sum(n for n, _ in self.segments())

    @property
    def breaks(self) -> list[int]:
        """0-based rows where the generating parameters first change."""
        out, pos = [], 0
        for n, _ in self.segments()[:-1]:
            pos += n
            out.append(pos)
        return out

    def regimes(self) -> list[VarParams]:
        """Parameters for each of the ``n_obs`` rows."""
        out = []
        for n, which in self.segments():
            if which == "mix":
                out.extend(interpolate(self.theta_a, self.theta_b, i / self.mix_steps)
                           for i in range(1, n + 1))
            else:
                out.extend([self.theta_a if which == "a" else self.theta_b] * n)
        return out

    def fingerprint(self) -> str:
        doc = {
            "kind": self.kind,
            "theta_a": self.theta_a.to_dict(),
            "theta_b": self.theta_b.to_dict(),
            "n_replications": self.n_replications,
            "seed": self.seed,
            "mix_steps": self.mix_steps,
            "burn_in": self.burn_in,
        }
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def _scenario_rng(seed: int, index: int) -> np.random.Generator:
    # separate spawn key so replications never reuse calibration streams
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(_STREAM, index)))


def _generate_batch(spec: ScenarioSpec, indices: Sequence[int]) -> np.ndarray:
    """``(len(indices), n_obs, d)`` paths; each path depends only on its index."""
    regimes = [spec.theta_a] * spec.burn_in + spec.regimes()
    d, p = spec.theta_a.d, spec.theta_a.p
    total = len(regimes)
    z = np.stack([_scenario_rng(spec.seed, i).standard_normal((total, d)) for i in indices])
    nb = len(indices)
    out = np.empty((nb, total + p, d))
    out[:, :p] = spec.theta_a.unconditional_mean()
    chol = {}
    for t, th in enumerate(regimes):
        key = id(th)
        if key not in chol:
            chol[key] = np.linalg.cholesky(th.sigma)
        L = chol[key]
        acc = np.broadcast_to(th.intercept, (nb, d)).copy()
        for s in range(p):
            prev = out[:, p + t - 1 - s]
            for j in range(d):
                acc += prev[:, j:j + 1] * th.lags[s][:, j]
        for j in range(d):
            acc += z[:, t, j:j + 1] * L[:, j]
        out[:, p + t] = acc
    return out[:, p + spec.burn_in:]


def generate_scenario(spec: ScenarioSpec, replication: int) -> TimeSeriesPanel:
    """One replication of ``spec`` as a panel with integer time labels 1..n."""
    if not 0 <= replication < spec.n_replications:
        raise ConfigError(f"replication must lie in 0..{spec.n_replications - 1}")
    values = _generate_batch(spec, [replication])[0]
    return TimeSeriesPanel.from_array(values, start=1)


# ---------------------------------------------------------------------------
# studies


@dataclass(frozen=True)
class Variant:
    """A detection specification.

    ``rho`` is a number, ``"optimal"`` (MAPE-optimal per replication) or
    ``"modal"`` (the value the optimal rule picks most often).
    """

    name: str
    rho: float | str
    restrict: bool = True


def default_variants() -> list[Variant]:
    return [
        Variant("optimal", "optimal"),
        Variant("modal", "modal"),
        Variant("rho_0.5", 0.5),
        Variant("optimal_unrestricted", "optimal", restrict=False),
    ]


@dataclass
class ReplicationSummary:
    """Per-replication detections of a study and their per-end-point summaries.

    Arrays are indexed ``[replication, end point]``; end points are counted
    from 1 at the first admissible row (``tau_rel``).
    """

    spec: ScenarioSpec
    grid: IntervalGrid
    r: float
    taus: np.ndarray
    k_hat: dict[str, np.ndarray]
    lr_next: dict[str, np.ndarray]
    rho: dict[str, np.ndarray]
    stats: np.ndarray
    zeta_final: dict[str, float]
    modal_rho: float
    n_failed: int = 0
    notes: dict = field(default_factory=dict)

    @property
    def tau_rel(self) -> np.ndarray:
        return np.arange(1, len(self.taus) + 1)

    @property
    def variants(self) -> list[str]:
        return list(self.k_hat)

    def mean_k(self, name: str) -> np.ndarray:
        return self.k_hat[name].mean(axis=0)

    def median_k(self, name: str) -> np.ndarray:
        # lower median keeps values on the index grid for even counts
        return np.quantile(self.k_hat[name], 0.5, axis=0, method="lower")

    def lr_bands(self, name: str, q=(0.05, 0.5, 0.95)) -> np.ndarray:
        """Quantiles of the statistic at step ``k_hat + 1``; shape ``(len(q), n_tau)``."""
        return np.nanquantile(self.lr_next[name], q, axis=0)

    def part(self, which: str) -> np.ndarray:
        """Relative end points of the ``"homogeneous"`` or ``"heterogeneous"`` part."""
        hom, last = SPLITS[self.spec.kind]
        tr = self.tau_rel
        if which == "homogeneous":
            return tr[tr <= hom]
        if which == "heterogeneous":
            return tr[(tr > hom) & (tr <= last)]
        raise ConfigError(f"unknown part {which!r}")

    def step_quantiles(self, which: str, q=(0.05, 0.25, 0.5, 0.75, 0.95)) -> pd.DataFrame:
        """Distribution of each step statistic over replications and end points."""
        cols = self.part(which) - 1
        rows = []
        for k in range(1, self.grid.n_lengths):
            vals = self.stats[:, cols, k].ravel()
            rows.append([k + 1, *np.quantile(vals, q)])
        return pd.DataFrame(rows, columns=["step", *[f"q{int(round(100 * x)):02d}" for x in q]])

    def homogeneous_discipline(self, name: str) -> dict:
        """Share of homogeneous end points whose statistic stays below the final critical value.

        ``median`` compares the per-end-point median over replications of the
        statistic at ``k_hat + 1``; ``cells`` counts every replication and
        end point separately.
        """
        cols = self.part("homogeneous") - 1
        z = self.zeta_final[name]
        lr = self.lr_next[name][:, cols]
        med = np.nanmedian(lr, axis=0)
        finite = lr[np.isfinite(lr)]
        return {
            "zeta_final": z,
            "median": float(np.mean(med <= z)),
            "cells": float(np.mean(finite <= z)) if finite.size else float("nan"),
        }

    def intervals_frame(self) -> pd.DataFrame:
        out = pd.DataFrame({"tau_rel": self.tau_rel})
        for name in self.variants:
            out[f"mean_{name}"] = self.mean_k(name)
            out[f"median_{name}"] = self.median_k(name)
        return out

    def lr_frame(self) -> pd.DataFrame:
        out = pd.DataFrame({"tau_rel": self.tau_rel})
        for name in self.variants:
            q05, q50, q95 = self.lr_bands(name)
            out[f"{name}_q05"], out[f"{name}_q50"], out[f"{name}_q95"] = q05, q50, q95
        return out

    def write(self, directory, prefix: str | None = None) -> dict:
        """Write one CSV per summary table plus a manifest; returns the manifest."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        prefix = prefix or self.spec.kind.replace("-", "_")
        sample = generate_scenario(self.spec, 0).to_frame()
        tables = {
            "series": sample.rename_axis("t").reset_index(),
            "intervals": self.intervals_frame(),
            "lr": self.lr_frame(),
            "a2_homogeneous": self.step_quantiles("homogeneous"),
            "a2_heterogeneous": self.step_quantiles("heterogeneous"),
            "rho": pd.DataFrame({"replication": np.arange(self.spec.n_replications),
                                 **{f"rho_{n}": v for n, v in self.rho.items()}}),
        }
        files = []
        for key, frame in tables.items():
            path = directory / f"{prefix}_{key}.csv"
            frame.to_csv(path, index=False, float_format="%.10g")
            files.append(path.name)
        manifest = {
            "spec_fingerprint": self.spec.fingerprint(),
            "kind": self.spec.kind,
            "n_replications": self.spec.n_replications,
            "seed": self.spec.seed,
            "grid": list(self.grid.lengths),
            "r": self.r,
            "modal_rho": self.modal_rho,
            "zeta_final": self.zeta_final,
            "n_failed": self.n_failed,
            "discarded_initial_rows": int(self.taus[0]),
            "files": files,
        }
        (directory / f"{prefix}_manifest.json").write_text(json.dumps(manifest, indent=2))
        return manifest


def _lr_at_next(stats: np.ndarray, k_hat: np.ndarray, n_tested: np.ndarray) -> np.ndarray:
    idx = np.arange(len(k_hat))
    col = np.minimum(k_hat, stats.shape[1] - 1)
    out = stats[idx, col].copy()
    out[k_hat > n_tested] = np.nan   # step k_hat + 1 never tested
    return out


def _replicate(values, grid, r, p, zetas, rho_grid, fixed):
    """Detections of one replication for the optimal rule and fixed ``zeta`` sets."""
    cache = _DetectionCache(values, grid, r, p)
    out = {"stats": cache.stats}
    if rho_grid:
        errors = []
        for zeta in zetas:
            k, _, failed, _ = cache.select(zeta, True)
            errors.append(cache.mape(k, failed)[0])
        out["optimal_rho"] = rho_grid[int(np.argmin(errors))]
    for key, zeta in fixed.items():
        zeta = zetas[rho_grid.index(out["optimal_rho"])] if zeta is None else zeta
        for restrict in (True, False):
            k, nt, failed, _ = cache.select(zeta, restrict)
            out[(key, restrict)] = (k, _lr_at_next(cache.stats, k, nt), bool(failed.any()))
    return out


def run_study(spec: ScenarioSpec, grid: IntervalGrid | None = None,
              variants: Sequence[Variant] | None = None, r: float = 0.5, p: int = 1,
              bank: CalibrationBank | None = None, n_calib: int = 10_000,
              rho_grid: Sequence[float] | None = None, n_jobs: int = 1) -> ReplicationSummary:
    """Run every variant on every replication of ``spec``.

    Critical values come from ``bank``, or from a fresh calibration bank
    simulated under ``spec.theta_a`` with ``n_calib`` samples.

    Raises
    ------
    NumericalError
        More than 2% of the replications contain failed fits.
    """
    grid = grid or IntervalGrid.default()
    variants = list(variants or default_variants())
    if len({v.name for v in variants}) != len(variants):
        raise ConfigError("variant names must be unique")
    rho_grid = [float(x) for x in (rho_grid or default_rho_grid())]
    if bank is None:
        bank = CalibrationBank.simulate(spec.theta_a, grid, n_calib, seed=spec.seed)
    need_opt = any(v.rho in ("optimal", "modal") for v in variants)
    zetas = [_zeta_array(bank.critical_values(rho, r), grid) for rho in rho_grid] if need_opt else []
    fixed = {"optimal": None} if need_opt else {}
    for v in variants:
        if not isinstance(v.rho, str):
            fixed[float(v.rho)] = _zeta_array(bank.critical_values(float(v.rho), r), grid)
        elif v.rho not in ("optimal", "modal"):
            raise ConfigError(f"variant {v.name}: rho must be a number, 'optimal' or 'modal'")

    chunks = [range(s, min(s + 50, spec.n_replications)) for s in range(0, spec.n_replications, 50)]

    def run_chunk(idx):
        paths = _generate_batch(spec, idx)
        return [_replicate(paths[b], grid, r, p, zetas, rho_grid if need_opt else [], fixed)
                for b in range(len(idx))]

    reps = [res for part in Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(run_chunk)(c) for c in chunks) for res in part]

    modal = float("nan")
    if need_opt:
        chosen = [res["optimal_rho"] for res in reps]
        counts = Counter(chosen)
        modal = min(rho for rho, c in counts.items() if c == max(counts.values()))
        if any(v.rho == "modal" for v in variants) and modal not in fixed:
            zeta = _zeta_array(bank.critical_values(modal, r), grid)
            for res, paths in zip(reps, _iter_paths(spec)):
                cache = _DetectionCache(paths, grid, r, p)
                for restrict in (True, False):
                    k, nt, failed, _ = cache.select(zeta, restrict)
                    res[(modal, restrict)] = (k, _lr_at_next(cache.stats, k, nt), bool(failed.any()))

    k_hat, lr_next, rhos, zfinal = {}, {}, {}, {}
    failed = np.zeros(spec.n_replications, dtype=bool)
    for v in variants:
        key = "optimal" if v.rho == "optimal" else (modal if v.rho == "modal" else float(v.rho))
        k_hat[v.name] = np.array([res[(key, v.restrict)][0] for res in reps])
        lr_next[v.name] = np.array([res[(key, v.restrict)][1] for res in reps])
        failed |= np.array([res[(key, v.restrict)][2] for res in reps])
        if v.rho == "optimal":
            rhos[v.name] = np.array([res["optimal_rho"] for res in reps])
            zfinal[v.name] = bank.critical_values(modal, r).final
        else:
            rhos[v.name] = np.full(spec.n_replications, float(key))
            zfinal[v.name] = bank.critical_values(float(key), r).final
    n_failed = int(failed.sum())
    if n_failed:
        logger.warning("study: %d replications contain failed fits", n_failed)
    if n_failed > _MAX_FAILED_FRACTION * spec.n_replications:
        raise NumericalError(f"{n_failed} of {spec.n_replications} replications failed")
    first = grid.first_tau(p)
    taus = np.arange(first, spec.n_obs)
    stats = np.stack([res["stats"] for res in reps])
    return ReplicationSummary(spec, grid, float(r), taus, k_hat, lr_next, rhos, stats,
                              zfinal, modal, n_failed)


def _iter_paths(spec: ScenarioSpec, chunk: int = 50):
    for s in range(0, spec.n_replications, chunk):
        yield from _generate_batch(spec, range(s, min(s + chunk, spec.n_replications)))
