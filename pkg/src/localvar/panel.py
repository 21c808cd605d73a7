"""Dated multivariate observation panels and CSV ingestion."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .exceptions import BadDimension, DataError, GapError, NonNumeric, ParseError

_MONTH_RE = re.compile(r"^\s*(\d{4})-(\d{1,2})(?:-(\d{1,2}))?\s*$")
_INT_RE = re.compile(r"^\s*-?\d+\s*$")


@dataclass(frozen=True)
class TimeSeriesPanel:
    """A ``T x d`` observation matrix with time labels and column names.

    ``timestamps`` is either a monthly :class:`pandas.PeriodIndex` or an
    integer :class:`pandas.Index`.
    """

    values: np.ndarray
    timestamps: pd.Index
    names: tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[1] < 1:
            raise BadDimension(f"panel values must be T x d, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DataError("panel contains missing or non-finite values")
        timestamps = self.timestamps
        if not isinstance(timestamps, pd.Index):
            timestamps = pd.Index(timestamps)
        if len(timestamps) != values.shape[0]:
            raise BadDimension(
                f"{len(timestamps)} timestamps for {values.shape[0]} rows"
            )
        if len(timestamps) > 1 and not timestamps.is_monotonic_increasing:
            raise DataError("timestamps must be strictly increasing")
        if not timestamps.is_unique:
            raise DataError("duplicate timestamps")
        names = tuple(str(n) for n in self.names)
        if len(names) != values.shape[1]:
            raise BadDimension(f"{len(names)} names for {values.shape[1]} columns")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "timestamps", timestamps)
        object.__setattr__(self, "names", names)

    @classmethod
    def from_array(cls, values, names=None, start=0) -> "TimeSeriesPanel":
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if names is None:
            names = [f"y{i + 1}" for i in range(values.shape[1])]
        if isinstance(start, (str, pd.Period)):
            timestamps = pd.period_range(start=start, periods=len(values), freq="M")
        else:
            timestamps = pd.RangeIndex(start, start + len(values))
        return cls(values, timestamps, tuple(names))

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "TimeSeriesPanel":
        return cls(frame.to_numpy(dtype=float), frame.index, tuple(frame.columns))

    @property
    def n_obs(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def select(self, columns: Sequence[str | int]) -> "TimeSeriesPanel":
        idx = []
        for c in columns:
            if isinstance(c, (int, np.integer)):
                idx.append(int(c))
            elif c in self.names:
                idx.append(self.names.index(c))
            else:
                raise DataError(f"unknown column {c!r}; available: {list(self.names)}")
        return TimeSeriesPanel(
            self.values[:, idx], self.timestamps, tuple(self.names[i] for i in idx)
        )

    def label(self, index: int) -> str:
        return str(self.timestamps[index])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, index=self.timestamps, columns=list(self.names))


def as_panel(data) -> TimeSeriesPanel:
    """Coerce arrays, DataFrames or panels into a :class:`TimeSeriesPanel`."""
    if isinstance(data, TimeSeriesPanel):
        return data
    if isinstance(data, pd.DataFrame):
        return TimeSeriesPanel.from_frame(data)
    return TimeSeriesPanel.from_array(data)


def _parse_time_labels(raw: Sequence[str]) -> pd.Index:
    raw = [str(v) for v in raw]
    if all(_INT_RE.match(v) for v in raw):
        return pd.Index([int(v) for v in raw], dtype="int64")
    periods = []
    for row, v in enumerate(raw, start=2):
        m = _MONTH_RE.match(v)
        if not m:
            raise ParseError(f"row {row}, column 1: cannot parse date {v!r}")
        year, month = int(m.group(1)), int(m.group(2))
        if not 1 <= month <= 12:
            raise ParseError(f"row {row}, column 1: invalid month in {v!r}")
        periods.append(pd.Period(year=year, month=month, freq="M"))
    return pd.PeriodIndex(periods, freq="M")


def ingest(path: str | Path, columns: Sequence[str] | None = None) -> TimeSeriesPanel:
    """Read a header-row CSV whose first column holds dates or integer labels.

    Dates may be ``YYYY-MM`` or ``YYYY-MM-DD`` and are mapped to monthly
    periods. Rows are sorted by date; duplicate dates and missing months
    are rejected.

    Raises
    ------
    ParseError, GapError, NonNumeric
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    if frame.shape[1] < 2:
        raise ParseError(f"{path}: need a time column and at least one data column")
    time_col = frame.columns[0]
    index = _parse_time_labels(frame[time_col].tolist())
    data_cols = list(frame.columns[1:])
    if columns is not None:
        missing = [c for c in columns if c not in data_cols]
        if missing:
            raise ParseError(f"{path}: columns not found: {missing}")
        data_cols = list(columns)
    values = np.empty((len(frame), len(data_cols)))
    for j, col in enumerate(data_cols):
        for i, cell in enumerate(frame[col].tolist()):
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise NonNumeric(
                    f"row {i + 2}, column {col!r}: non-numeric value {cell!r}"
                ) from None
            if not np.isfinite(values[i, j]):
                raise NonNumeric(f"row {i + 2}, column {col!r}: missing value")
    order = np.argsort(index.to_numpy(), kind="stable")
    index = index[order]
    values = values[order]
    if not index.is_unique:
        dup = index[index.duplicated()][0]
        raise ParseError(f"{path}: duplicate date {dup}")
    if isinstance(index, pd.PeriodIndex) and len(index) > 1:
        ordinals = index.asi8
        steps = np.diff(ordinals)
        if np.any(steps != 1):
            k = int(np.argmax(steps != 1))
            raise GapError(
                f"{path}: missing months between {index[k]} and {index[k + 1]}"
            )
    return TimeSeriesPanel(values, index, tuple(data_cols))
