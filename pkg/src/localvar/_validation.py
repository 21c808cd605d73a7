"""Input checks shared by the estimator and the command line."""

from __future__ import annotations

import numbers

import numpy as np
import pandas as pd
from sklearn.utils.validation import check_array

from .exceptions import BadDimension, ConfigError, DataError
from .panel import TimeSeriesPanel


def check_panel(X, min_obs: int = 1, min_series: int = 1) -> TimeSeriesPanel:
    """Coerce ``X`` to a panel, rejecting NaN, inf and too few rows or columns."""
    if isinstance(X, TimeSeriesPanel):
        panel = X
    else:
        index = X.index if isinstance(X, pd.DataFrame) else None
        names = list(map(str, X.columns)) if isinstance(X, pd.DataFrame) else None
        try:
            values = check_array(X, dtype=np.float64, ensure_min_samples=1)
        except ValueError as exc:
            raise DataError(str(exc)) from exc
        if index is not None:
            panel = TimeSeriesPanel(values, index, tuple(names))
        else:
            panel = TimeSeriesPanel.from_array(values, names)
    if panel.n_obs < min_obs:
        raise DataError(f"need at least {min_obs} observations, got {panel.n_obs}")
    if panel.d < min_series:
        raise BadDimension(f"need at least {min_series} series, got {panel.d}")
    return panel


def check_lengths(lengths) -> tuple[int, ...]:
    lengths = tuple(int(m) for m in lengths)
    if len(lengths) < 2:
        raise ConfigError("an interval grid needs at least two lengths")
    if any(b <= a for a, b in zip(lengths, lengths[1:])):
        raise ConfigError(f"interval lengths must be strictly increasing: {lengths}")
    return lengths


def check_rho(rho) -> float | str:
    if isinstance(rho, str):
        if rho != "optimal":
            raise ConfigError(f"rho must be a number in (0, 1] or 'optimal', got {rho!r}")
        return rho
    if not isinstance(rho, numbers.Real) or not 0 < rho <= 1:
        raise ConfigError(f"rho must lie in (0, 1], got {rho!r}")
    return float(rho)


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)
