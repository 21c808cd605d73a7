"""Sequential search for the longest locally homogeneous interval.

For each end point ``tau`` the candidate windows ``m_1 < ... < m_{K+1}``
are extended one at a time. Step ``k`` compares the window-``k`` MLE with
the current adaptive estimator through the powered likelihood ratio and
stops at the first value above ``zeta_k``. The shortest window is always
accepted and the longest one only serves as the final test window, so the
selectable indices are ``1 .. K``.

Grid indices in results (``k_hat``, trace keys, critical-value keys) are
1-based; array helpers prefixed with ``_`` work 0-based.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import pandas as pd

from .exceptions import (
    BadDimension,
    ConfigError,
    InsufficientHistory,
    MissingTrace,
    ZeroObservation,
)
from .panel import TimeSeriesPanel, as_panel
from .var import LikelihoodTable, VarParams, likelihood_table, min_interval_length

logger = logging.getLogger(__name__)

DEFAULT_LENGTHS = (12, 15, 19, 23, 29, 37, 46)
LITERATURE_LENGTHS = (18, 23, 29, 36, 45, 57, 72)


@dataclass(frozen=True)
class IntervalGrid:
    """Strictly increasing candidate window lengths."""

    lengths: tuple[int, ...]
    generator: tuple[int, float] | None = None

    def __post_init__(self):
        lengths = tuple(int(m) for m in self.lengths)
        if len(lengths) < 3:
            raise ConfigError("an interval grid needs at least three lengths")
        if lengths[0] < 1 or any(b <= a for a, b in zip(lengths, lengths[1:])):
            raise ConfigError(f"grid lengths must be strictly increasing positive: {lengths}")
        if self.generator is not None:
            m0, a = self.generator
            if lengths != _geometric(m0, a, len(lengths)):
                raise ConfigError(f"lengths {lengths} do not match generator {self.generator}")
        object.__setattr__(self, "lengths", lengths)

    @classmethod
    def geometric(cls, m0: int = 12, a: float = 1.25, n: int = 7) -> "IntervalGrid":
        """``m_k = round(m0 * a**k)`` for ``k = 0 .. n-1`` (halves round up)."""
        return cls(_geometric(m0, a, n), (m0, a))

    @classmethod
    def default(cls) -> "IntervalGrid":
        return cls.geometric(12, 1.25, 7)

    @classmethod
    def literature(cls) -> "IntervalGrid":
        return cls(LITERATURE_LENGTHS)

    @property
    def n_lengths(self) -> int:
        return len(self.lengths)

    @property
    def K(self) -> int:
        """Largest selectable index."""
        return len(self.lengths) - 1

    @property
    def max_length(self) -> int:
        return self.lengths[-1]

    def first_tau(self, p: int) -> int:
        """0-based index of the first end point with a full history."""
        return self.max_length + p - 1

    def check_dimension(self, d: int, p: int) -> None:
        need = min_interval_length(d, p)
        if self.lengths[0] < need:
            raise ConfigError(
                f"shortest window {self.lengths[0]} < {need} required for d={d}, p={p}"
            )


def _geometric(m0: int, a: float, n: int) -> tuple[int, ...]:
    return tuple(int(math.floor(m0 * a ** k + 0.5)) for k in range(n))


@dataclass
class AdaptiveResult:
    tau: int
    k_hat: int
    m_hat: int
    theta_hat: VarParams | None
    lr_trace: dict[int, float]
    restricted: bool = False
    fit_failed: bool = False
    label: str = ""
    lengths: tuple[int, ...] = ()
    candidates: tuple = field(default=(), repr=False)


# ---------------------------------------------------------------------------
# array layer


def admissible_taus(n_obs: int, grid: IntervalGrid, p: int) -> np.ndarray:
    first = grid.first_tau(p)
    if first >= n_obs:
        raise InsufficientHistory(
            f"{n_obs} observations; at least {first + 1} needed for grid {grid.lengths}"
        )
    return np.arange(first, n_obs)


def _search(stats: np.ndarray, valid: np.ndarray, zeta: np.ndarray):
    """Vectorised search over rows of powered step statistics.

    Returns 1-based ``k_hat``, the number of steps evaluated (trace length)
    and a fit-failure flag per row.
    """
    n, n_k = stats.shape
    accepted = np.zeros(n, dtype=int)
    n_tested = np.zeros(n, dtype=int)
    failed = ~valid[:, 0]
    running = valid[:, 0].copy()
    for k in range(1, n_k):
        ok_fit = valid[:, k]
        failed |= running & ~ok_fit
        test = running & ok_fit
        n_tested[test] += 1
        passed = test & (stats[:, k] <= zeta[k])
        accepted[passed] = k
        running = passed
    k_hat = np.minimum(accepted + 1, n_k - 1)
    return k_hat, n_tested, failed


def _restrict(k_hat: np.ndarray, stats: np.ndarray, n_tested: np.ndarray, K: int,
              failed: np.ndarray | None = None):
    """Sequential anti-jump pass; returns new ``k_hat`` and a changed-flag."""
    out = k_hat.copy()
    flag = np.zeros(len(k_hat), dtype=bool)
    failed = np.zeros(len(k_hat), dtype=bool) if failed is None else failed
    for t in range(1, len(out)):
        if out[t] == out[t - 1] or failed[t] or n_tested[t] == 0:
            continue
        trace = stats[t, 1:1 + n_tested[t]]
        k_max = int(np.argmax(trace)) + 2
        new = min(max(k_max - 1, 1), K)
        flag[t] = new != out[t]
        out[t] = new
    return out, flag


def _powered(table: LikelihoodTable, r: float) -> np.ndarray:
    return np.abs(table.consecutive()) ** r


# ---------------------------------------------------------------------------
# object layer


def _zeta_array(critvals, grid: IntervalGrid) -> np.ndarray:
    if tuple(critvals.grid) != grid.lengths:
        raise ConfigError(f"critical values calibrated for grid {critvals.grid}, not {grid.lengths}")
    return critvals.as_array()


def _results_from_table(panel: TimeSeriesPanel, taus, table: LikelihoodTable, grid,
                        stats, k_hat, n_tested, failed, flags=None):
    results = []
    for b, tau in enumerate(taus):
        cands = tuple(table.params(b, k) if table.valid[b, k] else None
                      for k in range(grid.n_lengths))
        k = int(k_hat[b])
        trace = {kk + 1: float(stats[b, kk]) for kk in range(1, 1 + n_tested[b])}
        results.append(AdaptiveResult(
            tau=int(tau),
            k_hat=k,
            m_hat=grid.lengths[k - 1],
            theta_hat=cands[k - 1],
            lr_trace=trace,
            restricted=bool(flags[b]) if flags is not None else False,
            fit_failed=bool(failed[b]),
            label=panel.label(int(tau)),
            lengths=grid.lengths,
            candidates=cands,
        ))
    return results


def adaptive_search(panel, tau: int, grid: IntervalGrid, critvals, r: float = 0.5,
                    p: int = 1) -> AdaptiveResult:
    """Adaptive interval selection at end point ``tau`` (0-based row).

    Raises
    ------
    InsufficientHistory
        When ``tau`` has fewer than ``max(grid) + p - 1`` rows before it.
    """
    panel = as_panel(panel)
    grid.check_dimension(panel.d, p)
    if tau < grid.first_tau(p) or tau >= panel.n_obs:
        raise InsufficientHistory(
            f"tau={tau} outside admissible range {grid.first_tau(p)}..{panel.n_obs - 1}"
        )
    zeta = _zeta_array(critvals, grid)
    table = likelihood_table(panel.values, np.array([tau]), grid.lengths, p)
    stats = _powered(table, r)
    k_hat, n_tested, failed = _search(stats, table.valid, zeta)
    return _results_from_table(panel, [tau], table, grid, stats, k_hat, n_tested, failed)[0]


def apply_jump_restriction(results: Sequence[AdaptiveResult]) -> list[AdaptiveResult]:
    """Suppress sudden changes in the selected window between neighbouring ends.

    Where the selected length at ``tau`` differs from the (already restricted)
    selection at ``tau - 1``, the index is reset to the last window before the
    step with the largest stored LR statistic (ties: smallest step), capped to
    the selectable range. The first result is never modified.

    Raises
    ------
    MissingTrace
        A result that would need restricting carries no LR trace.
    """
    results = list(results)
    if not results:
        return []
    taus = [res.tau for res in results]
    if any(b - a != 1 for a, b in zip(taus, taus[1:])):
        raise ConfigError("results must be consecutive in tau")
    out = [results[0]]
    for res in results[1:]:
        prev = out[-1]
        if res.m_hat == prev.m_hat or res.fit_failed:
            out.append(res)
            continue
        if not res.lr_trace or not res.lengths:
            raise MissingTrace(f"tau={res.tau} has no LR trace")
        K = len(res.lengths) - 1
        steps = sorted(res.lr_trace)
        k_max = steps[int(np.argmax([res.lr_trace[k] for k in steps]))]
        new_k = min(max(k_max - 1, 1), K)
        if new_k == res.k_hat:
            out.append(res)
            continue
        theta = res.candidates[new_k - 1] if len(res.candidates) >= new_k else None
        out.append(replace(res, k_hat=new_k, m_hat=res.lengths[new_k - 1],
                           theta_hat=theta, restricted=True))
    return out


def detect(panel, grid: IntervalGrid, critvals, r: float = 0.5, p: int = 1,
           restrict: bool = True, taus=None) -> list[AdaptiveResult]:
    """Run :func:`adaptive_search` at every admissible end point."""
    panel = as_panel(panel)
    grid.check_dimension(panel.d, p)
    taus = admissible_taus(panel.n_obs, grid, p) if taus is None else np.asarray(taus)
    zeta = _zeta_array(critvals, grid)
    table = likelihood_table(panel.values, taus, grid.lengths, p)
    stats = _powered(table, r)
    k_hat, n_tested, failed = _search(stats, table.valid, zeta)
    results = _results_from_table(panel, taus, table, grid, stats, k_hat, n_tested, failed)
    if restrict:
        results = apply_jump_restriction(results)
    return results


def results_frame(results: Sequence[AdaptiveResult]) -> pd.DataFrame:
    """Per-``tau`` table: date, k_hat, m_hat, lr_k2.., restricted_flag."""
    if not results:
        return pd.DataFrame(columns=["date", "k_hat", "m_hat", "restricted_flag"])
    n_k = len(results[0].lengths)
    rows = []
    for res in results:
        row = {"date": res.label, "k_hat": res.k_hat, "m_hat": res.m_hat}
        for k in range(2, n_k + 1):
            row[f"lr_k{k}"] = res.lr_trace.get(k, np.nan)
        row["restricted_flag"] = int(res.restricted)
        row["fit_failed"] = int(res.fit_failed)
        rows.append(row)
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# rho selection


def _forecast_errors(values: np.ndarray, taus: np.ndarray, coef: np.ndarray, p: int):
    """One-step forecasts of row ``tau + 1`` from the model selected at ``tau``."""
    usable = taus + 1 < values.shape[0]
    taus = taus[usable]
    coef = coef[usable]
    lagged = [values[taus - s + 1] for s in range(1, p + 1)]
    x = np.concatenate([np.ones((len(taus), 1))] + lagged, axis=1)
    forecast = np.einsum("nq,nqd->nd", x, coef)
    return values[taus + 1], forecast


def mape(actual: np.ndarray, forecast: np.ndarray) -> tuple[float, int]:
    """Mean absolute percentage error over rows and components.

    Zero actual values are excluded; their count is returned.
    """
    zero = actual == 0
    n_zero = int(np.sum(zero))
    if n_zero == actual.size:
        raise ZeroObservation("every observation is zero; MAPE undefined")
    with np.errstate(divide="ignore", invalid="ignore"):
        ape = np.abs((actual - forecast) / actual)
    return float(np.mean(ape[~zero])), n_zero


@dataclass
class RhoSelection:
    rho: float
    table: pd.DataFrame
    n_zero_excluded: int = 0


class _DetectionCache:
    """Per-panel window fits reused across critical-value sets."""

    def __init__(self, values: np.ndarray, grid: IntervalGrid, r: float, p: int, taus=None):
        self.values = values
        self.grid = grid
        self.p = p
        self.taus = admissible_taus(values.shape[0], grid, p) if taus is None else taus
        self.table = likelihood_table(values, self.taus, grid.lengths, p)
        self.stats = _powered(self.table, r)

    def select(self, zeta: np.ndarray, restrict: bool = True):
        k_hat, n_tested, failed = _search(self.stats, self.table.valid, zeta)
        flags = np.zeros(len(k_hat), dtype=bool)
        if restrict:
            k_hat, flags = _restrict(k_hat, self.stats, n_tested, self.grid.K, failed)
        return k_hat, n_tested, failed, flags

    def mape(self, k_hat: np.ndarray, failed: np.ndarray):
        idx = np.arange(len(k_hat))
        coef = self.table.coef[idx, k_hat - 1]
        keep = ~failed & np.all(np.isfinite(coef), axis=(1, 2))
        actual, forecast = _forecast_errors(self.values, self.taus[keep], coef[keep], self.p)
        return mape(actual, forecast)


def default_rho_grid() -> list[float]:
    """0.01 .. 1.00 in steps of 0.01 (0.5 included)."""
    return [round(0.01 * i, 2) for i in range(1, 101)]


def select_rho(panel, grid: IntervalGrid, rho_grid: Sequence[float], r: float, p: int,
               calib, restrict: bool = True) -> RhoSelection:
    """Pick ``rho`` minimising one-step-ahead MAPE of the adaptive model.

    ``calib`` is a :class:`~localvar.calibrate.CalibrationBank` (or anything
    with ``critical_values(rho, r)``). Ties go to the smaller ``rho``.
    """
    rho_grid = sorted(float(x) for x in rho_grid)
    if not rho_grid or rho_grid[0] <= 0 or rho_grid[-1] > 1:
        raise ConfigError("rho grid must be a non-empty subset of (0, 1]")
    panel = as_panel(panel)
    cache = _DetectionCache(panel.values, grid, r, p)
    rows = []
    n_zero = 0
    for rho in rho_grid:
        cv = calib.critical_values(rho, r)
        zeta = _zeta_array(cv, grid)
        k_hat, _, failed, _ = cache.select(zeta, restrict)
        err, n_zero = cache.mape(k_hat, failed)
        row = {"rho": rho}
        row.update({f"zeta_{k}": cv.zeta[k] for k in sorted(cv.zeta)})
        row["mape"] = err
        rows.append(row)
    if n_zero:
        logger.warning("MAPE: %d zero observations excluded", n_zero)
    table = pd.DataFrame(rows)
    best = int(np.argmin(table["mape"].to_numpy()))
    return RhoSelection(float(table["rho"].iloc[best]), table, n_zero)
