"""Generalized forecast-error variance decompositions and spillover indices.

A stable VAR is inverted to its moving-average form ``A_0 = I``,
``A_u = phi_1 A_{u-1} + ... + phi_p A_{u-p}``. The generalized decomposition
attributes the ``H``-step forecast-error variance of series ``i`` to shocks
in series ``j`` without an orthogonalisation order::

    C_ij(H) = s_jj^-1 sum_h (e_i' A_h S e_j)^2 / sum_h e_i' A_h S A_h' e_i

Rows of ``C`` are divided by their sums; the total spillover is the
off-diagonal share of the normalised table in percent.
"""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .exceptions import BadDimension, ConfigError, LocalVarError, UnstableParams, ZeroVarianceRow
from .panel import TimeSeriesPanel, as_panel
from .var import Interval, VarParams, fit_var, is_stable

logger = logging.getLogger(__name__)

SIGMA_MODES = ("variance", "std")


@dataclass(frozen=True)
class VmaCoefficients:
    """Moving-average matrices ``A_0 .. A_{H-1}`` stacked as ``(H, d, d)``."""

    matrices: np.ndarray

    @property
    def horizon(self) -> int:
        return self.matrices.shape[0]

    def __getitem__(self, u: int) -> np.ndarray:
        return self.matrices[u]


def var_to_vma(params: VarParams, horizon: int) -> VmaCoefficients:
    """Invert a stable VAR to its first ``horizon`` moving-average matrices.

    Raises
    ------
    UnstableParams
    """
    if horizon < 1:
        raise ConfigError(f"horizon must be >= 1, got {horizon}")
    if not is_stable(params):
        raise UnstableParams("VMA inversion needs a stable VAR")
    d, p = params.d, params.p
    A = np.zeros((horizon, d, d))
    A[0] = np.eye(d)
    for u in range(1, horizon):
        for l in range(1, min(u, p) + 1):
            A[u] += params.lags[l - 1] @ A[u - l]
    return VmaCoefficients(A)


@dataclass(frozen=True)
class SpilloverTable:
    raw: np.ndarray
    normalized: np.ndarray
    total: float
    horizon: int
    names: tuple[str, ...]

    def to_frame(self) -> pd.DataFrame:
        """Normalised table with a FROM_OTHERS column and a TO_OTHERS row."""
        names = list(self.names)
        frame = pd.DataFrame(self.normalized, index=names, columns=names)
        off = self.normalized - np.diag(np.diag(self.normalized))
        frame["FROM_OTHERS"] = off.sum(axis=1)
        frame.loc["TO_OTHERS"] = list(off.sum(axis=0)) + [self.total]
        return frame

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index_label="")

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "horizon": self.horizon,
            "raw": self.raw.tolist(),
            "normalized": self.normalized.tolist(),
            "total": self.total,
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def total_spillover(normalized: np.ndarray) -> float:
    """Off-diagonal share of a row-normalised table, in percent."""
    normalized = np.asarray(normalized)
    off = normalized.sum() - np.trace(normalized)
    return float(100.0 * off / normalized.sum())


def gfevd(params: VarParams, horizon: int = 12, sigma_mode: str = "variance",
          names: Sequence[str] | None = None) -> SpilloverTable:
    """Generalized FEVD table of ``params`` at forecast horizon ``horizon``.

    ``sigma_mode="variance"`` divides by the innovation variance ``S_jj``
    (the usual generalized decomposition); ``"std"`` divides by its square
    root instead and is kept only for comparison.

    Raises
    ------
    UnstableParams, ZeroVarianceRow
    """
    if sigma_mode not in SIGMA_MODES:
        raise ConfigError(f"sigma_mode must be one of {SIGMA_MODES}")
    A = var_to_vma(params, horizon).matrices
    S = params.sigma
    scale = np.diag(S) if sigma_mode == "variance" else np.sqrt(np.diag(S))
    AS = A @ S                                        # (H, d, d)
    num = np.sum(AS ** 2, axis=0) / scale[None, :]
    den = np.einsum("hij,hij->i", AS, A)              # diag of sum A S A'
    raw = num / den[:, None]
    rows = raw.sum(axis=1)
    if np.any(~(rows > 0)):
        raise ZeroVarianceRow(f"rows {np.flatnonzero(~(rows > 0)).tolist()} have zero variance")
    normalized = raw / rows[:, None]
    if names is None:
        names = [f"y{i + 1}" for i in range(params.d)]
    return SpilloverTable(raw, normalized, total_spillover(normalized), horizon, tuple(names))


# ---------------------------------------------------------------------------
# time-varying spillover


@dataclass
class SpilloverSeries:
    """Total spillover per end point and pair, with flagged gaps.

    ``totals`` has one column per pair (NaN where flagged), ``flags`` holds
    the reason for each gap ('' when the cell is fine) and ``average`` is
    the mean over the available pairs.
    """

    labels: list[str]
    taus: np.ndarray
    totals: pd.DataFrame
    flags: pd.DataFrame
    horizon: int

    @property
    def average(self) -> pd.Series:
        return self.totals.mean(axis=1, skipna=True)

    @property
    def n_flagged(self) -> int:
        return int((self.flags != "").to_numpy().sum())

    def to_long(self) -> pd.DataFrame:
        rows = []
        for t, label in enumerate(self.labels):
            for pair in self.totals.columns:
                rows.append((label, pair, self.totals.iloc[t][pair], self.flags.iloc[t][pair]))
            rows.append((label, "average", self.average.iloc[t], ""))
        return pd.DataFrame(rows, columns=["date", "pair", "total", "flag"])

    def to_csv(self, path) -> None:
        self.to_long().to_csv(path, index=False, float_format="%.10g")


def pair_label(a: str, b: str) -> str:
    return f"{a}-{b}"


def _cell(values: np.ndarray, tau: int, m: int, p: int, horizon: int, sigma_mode: str):
    try:
        fit = fit_var(values, Interval(int(tau), int(m)), p)
        table = gfevd(fit.params, horizon, sigma_mode)
    except UnstableParams:
        return np.nan, "unstable"
    except LocalVarError as exc:
        return np.nan, type(exc).__name__
    return table.total, ""


def _windows_for(windows, pair: str, n: int) -> np.ndarray:
    if isinstance(windows, Mapping):
        if pair not in windows:
            raise ConfigError(f"no window lengths for pair {pair}")
        windows = windows[pair]
    w = np.broadcast_to(np.asarray(windows, dtype=int), (n,))
    return w


def pairwise_spillover(panel, taus, windows, horizon: int = 12, p: int = 1,
                       joint: bool = False, sigma_mode: str = "variance",
                       n_jobs: int = 1) -> SpilloverSeries:
    """Total spillover from bivariate VARs fitted on ``[tau - m + 1, tau]``.

    Parameters
    ----------
    panel : TimeSeriesPanel or array
    taus : sequence of int
        0-based end rows.
    windows : int, sequence aligned with ``taus``, or mapping pair -> sequence
        Window length per end point. A single integer gives the plain
        rolling-window index.
    joint : bool
        Fit one VAR on all columns instead of every pair.

    Failed or unstable fits are recorded as flagged gaps, never filled.
    """
    panel = as_panel(panel)
    if panel.d < 2:
        raise BadDimension("spillover needs at least two series")
    taus = np.asarray(taus, dtype=int)
    if joint:
        groups = {"joint": list(range(panel.d))}
    else:
        groups = {pair_label(panel.names[i], panel.names[j]): [i, j]
                  for i, j in itertools.combinations(range(panel.d), 2)}
    jobs = []
    for name, cols in groups.items():
        w = _windows_for(windows, name, len(taus))
        vals = panel.values[:, cols]
        jobs.extend((name, t, vals, tau, m) for t, (tau, m) in enumerate(zip(taus, w)))
    out = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_cell)(vals, tau, m, p, horizon, sigma_mode) for _, _, vals, tau, m in jobs
    )
    totals = pd.DataFrame(np.nan, index=range(len(taus)), columns=list(groups))
    flags = pd.DataFrame("", index=range(len(taus)), columns=list(groups))
    for (name, t, *_), (total, flag) in zip(jobs, out):
        totals.at[t, name] = total
        flags.at[t, name] = flag
    n_bad = int((flags != "").to_numpy().sum())
    if n_bad:
        logger.warning("spillover: %d flagged (tau, pair) cells", n_bad)
    labels = [panel.label(int(t)) for t in taus]
    return SpilloverSeries(labels, taus, totals, flags, horizon)


def rolling_spillover(panel, taus, window: int, horizon: int = 12, p: int = 1,
                      joint: bool = False, n_jobs: int = 1) -> SpilloverSeries:
    """Fixed-window baseline; same as :func:`pairwise_spillover` with an int."""
    return pairwise_spillover(panel, taus, int(window), horizon, p, joint, n_jobs=n_jobs)
