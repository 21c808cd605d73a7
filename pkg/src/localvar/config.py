"""Run configuration and its flat ``key = value`` file format.

Example::

    # localvar run configuration
    input = epu.csv
    columns = US,DE,UK
    grid = default          # or: literature, or 12,15,19,...
    rho = optimal           # or a number in (0, 1]
    horizon = 12

Lists are comma separated; blank lines and ``#`` comments are ignored.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from . import _validation as v
from .adaptive import DEFAULT_LENGTHS, LITERATURE_LENGTHS, IntervalGrid
from .exceptions import ConfigError

_NAMED_GRIDS = {"default": DEFAULT_LENGTHS, "literature": LITERATURE_LENGTHS}


def parse_grid(value) -> tuple[int, ...]:
    if isinstance(value, str):
        key = value.strip().lower()
        if key in _NAMED_GRIDS:
            return _NAMED_GRIDS[key]
        value = [x for x in key.split(",") if x.strip()]
    try:
        return v.check_lengths(int(x) for x in value)
    except ValueError as exc:
        raise ConfigError(f"cannot parse grid {value!r}: {exc}") from exc


def _parse_list(value) -> tuple[str, ...] | None:
    if value is None:
        return None
    if isinstance(value, str):
        items = [x.strip() for x in value.split(",") if x.strip()]
        return tuple(items) or None
    return tuple(str(x) for x in value) or None


def _parse_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"cannot parse boolean {value!r}")


@dataclass(frozen=True)
class RunConfig:
    input: str | None = None
    columns: tuple[str, ...] | None = None
    p: int = 1
    grid: tuple[int, ...] = DEFAULT_LENGTHS
    r: float = 0.5
    rho: float | str = "optimal"
    horizon: int = 12
    seed: int = 0
    n_calib: int = 10_000
    out: str = "out"
    baselines: tuple[int, ...] | None = None
    joint: bool = False
    calib_cache: str | None = None
    theta: str | None = None
    n_jobs: int = 1

    def __post_init__(self):
        set_ = lambda k, val: object.__setattr__(self, k, val)  # noqa: E731
        set_("columns", _parse_list(self.columns))
        set_("grid", parse_grid(self.grid))
        try:
            set_("r", float(self.r))
            rho = self.rho
            if isinstance(rho, str) and rho.strip().lower() != "optimal":
                rho = float(rho)
            set_("rho", v.check_rho(rho.strip().lower() if isinstance(rho, str) else rho))
            for key in ("p", "horizon", "seed", "n_calib", "n_jobs"):
                val = getattr(self, key)
                set_(key, int(val) if isinstance(val, str) else val)
            if self.baselines is not None:
                set_("baselines", tuple(int(x) for x in _parse_list(self.baselines) or ()) or None)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        set_("joint", _parse_bool(self.joint))
        if not self.r > 0:
            raise ConfigError(f"r must be positive, got {self.r}")
        v.check_positive_int(self.p, "p")
        v.check_positive_int(self.horizon, "horizon")
        v.check_positive_int(self.seed, "seed", 0)
        v.check_positive_int(self.n_calib, "n_calib", 100)
        v.check_positive_int(self.n_jobs, "n_jobs", -1)
        for w in self.baselines or ():
            v.check_positive_int(w, "baseline window")

    @property
    def interval_grid(self) -> IntervalGrid:
        return IntervalGrid(self.grid)

    @property
    def baseline_windows(self) -> tuple[int, ...]:
        """Rolling-window baselines; by default the shortest and second-longest lengths."""
        return self.baselines or (self.grid[0], self.grid[-2])

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return {f.name: (list(val) if isinstance(val := getattr(self, f.name), tuple) else val)
                for f in fields(self)}

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            val = getattr(self, f.name)
            if val is None:
                continue
            if isinstance(val, tuple):
                val = ",".join(map(str, val))
            elif isinstance(val, bool):
                val = "true" if val else "false"
            lines.append(f"{f.name} = {val}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, **overrides) -> "RunConfig":
        return cls(**{**parse_config_text(text), **overrides})

    @classmethod
    def from_file(cls, path, **overrides) -> "RunConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"), **overrides)


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` pairs; keys may use dashes or underscores."""
    known = {f.name for f in fields(RunConfig)}
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        out[key] = val
    return out
