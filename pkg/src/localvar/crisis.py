"""Crisis indicators from selected interval indices.

A pair whose adaptive search keeps the longest selectable window is calm
(indicator 0); one that falls back to the shortest window is in crisis
(indicator 1). The global indicator aggregates pairs per end point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
import pandas as pd

from .exceptions import ConfigError, EmptyPairSet, IndexOutOfRange

METHODS = ("mean", "median")


def crisis_indicator(k_hat, K_max: int):
    """``1 - (k_hat - 1) / (K_max - 1)``; works elementwise on arrays.

    Raises
    ------
    IndexOutOfRange
        ``k_hat`` outside ``1 .. K_max`` or ``K_max < 2``.
    """
    if K_max < 2:
        raise IndexOutOfRange(f"K_max must be >= 2, got {K_max}")
    k = np.asarray(k_hat, dtype=float)
    finite = k[np.isfinite(k)]
    if np.any(finite < 1) or np.any(finite > K_max) or np.any(finite != np.round(finite)):
        raise IndexOutOfRange(f"k_hat must be an integer in 1..{K_max}")
    ci = 1.0 - (k - 1.0) / (K_max - 1.0)
    return float(ci) if ci.ndim == 0 else ci


def closed_form_global(k_hat_sum, n_series: int, K_max: int):
    """Mean indicator over all ``n_series (n_series - 1) / 2`` pairs from the summed indices."""
    n_pairs = n_series * (n_series - 1) / 2
    return K_max / (K_max - 1) - np.asarray(k_hat_sum, dtype=float) / (n_pairs * (K_max - 1))


@dataclass
class CrisisSeries:
    """Pairwise and global crisis indicators over a common set of dates.

    ``per_pair`` holds one column per pair; NaN marks a missing pair
    (failed fit), which is excluded from the aggregates and reported
    through ``coverage``.
    """

    per_pair: pd.DataFrame
    K_max: int

    def global_indicator(self, method: str = "mean") -> pd.Series:
        return global_crisis(self.per_pair, method)

    @property
    def coverage(self) -> pd.Series:
        return self.per_pair.notna().mean(axis=1)

    def to_frame(self) -> pd.DataFrame:
        out = self.per_pair.rename(columns=lambda c: f"CI_{c}")
        out.insert(0, "date", out.index.astype(str))
        n_ok = self.per_pair.notna().sum(axis=1)
        live = n_ok > 0
        out["global_mean"] = np.nan
        out["global_median"] = np.nan
        if live.any():
            out.loc[live, "global_mean"] = self.per_pair[live].mean(axis=1)
            out.loc[live, "global_median"] = self.per_pair[live].median(axis=1)
        out["coverage"] = self.coverage
        return out.reset_index(drop=True)

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.10g")


def crisis_series(k_hats: Mapping[str, pd.Series], K_max: int) -> CrisisSeries:
    """Build pairwise indicators from per-pair ``k_hat`` series (NaN = missing)."""
    if not k_hats:
        raise EmptyPairSet("no pairs given")
    frame = pd.DataFrame({pair: pd.Series(s, dtype=float) for pair, s in k_hats.items()})
    ci = crisis_indicator(frame.to_numpy(), K_max)
    return CrisisSeries(pd.DataFrame(np.atleast_2d(ci), index=frame.index, columns=frame.columns),
                        K_max)


def global_crisis(per_pair: pd.DataFrame, method: str = "mean") -> pd.Series:
    """Mean or median pairwise indicator per date, skipping missing pairs.

    Raises
    ------
    EmptyPairSet
        No pair columns, or a date with every pair missing.
    """
    if method not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}, got {method!r}")
    per_pair = pd.DataFrame(per_pair)
    if per_pair.shape[1] == 0:
        raise EmptyPairSet("no pairs given")
    empty = per_pair.notna().sum(axis=1) == 0
    if empty.any():
        raise EmptyPairSet(f"no pair available at {list(per_pair.index[empty])[:5]}")
    return per_pair.mean(axis=1) if method == "mean" else per_pair.median(axis=1)
