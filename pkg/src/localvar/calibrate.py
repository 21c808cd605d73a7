"""Monte-Carlo risk bounds and sequential critical values.

Calibration simulates ``n_samples`` homogeneous paths from a hypothetical
parameter ``theta_star``, fits every candidate window anchored at the last
observation and stores the nested-window likelihood table of each path in a
:class:`CalibrationBank`. Everything that depends on ``rho`` or ``r`` is a
cheap pass over that table, so one bank serves a whole ``rho`` grid.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from .adaptive import IntervalGrid
from .exceptions import CalibrationFailure, ConfigError, NonConvergence, UnstableParams
from .var import VarParams, is_stable, likelihood_table, simulate_paths

logger = logging.getLogger(__name__)

CACHE_ENV = "LOCALVAR_CALIB_CACHE"
_CHUNK = 500
_MAX_FAILED_FRACTION = 0.01
SCHEMES = ("per-step", "sequential")


@dataclass(frozen=True)
class CalibrationConfig:
    theta_star: VarParams
    grid: IntervalGrid
    r: float = 0.5
    rho: float = 0.5
    n_samples: int = 10_000
    seed: int = 0
    burn_in: int = 100
    scheme: str = "per-step"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.n_samples < 100:
            raise ConfigError(f"n_samples must be >= 100, got {self.n_samples}")
        if not self.r > 0:
            raise ConfigError(f"r must be positive, got {self.r}")
        if not 0 < self.rho <= 1:
            raise ConfigError(f"rho must lie in (0, 1], got {self.rho}")

    @property
    def p(self) -> int:
        return self.theta_star.p

    def bank_key(self) -> dict:
        return {
            "theta_star": self.theta_star.to_dict(),
            "grid": list(self.grid.lengths),
            "n_samples": self.n_samples,
            "seed": self.seed,
            "burn_in": self.burn_in,
        }

    def fingerprint(self) -> str:
        doc = dict(self.bank_key(), r=self.r, rho=self.rho, scheme=self.scheme)
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class CriticalValues:
    """Critical values ``zeta[k]`` for test steps ``k = 2 .. len(grid)``."""

    zeta: dict[int, float]
    risk_bounds: dict[int, float]
    fingerprint: str
    grid: tuple[int, ...]
    r: float
    rho: float
    n_samples: int
    seed: int
    n_failed: int = 0
    scheme: str = "per-step"

    @classmethod
    def constant(cls, grid: IntervalGrid, value: float, r: float = 0.5) -> "CriticalValues":
        steps = range(2, grid.n_lengths + 1)
        return cls({k: float(value) for k in steps}, {k: float("nan") for k in steps},
                   "constant", grid.lengths, r, float("nan"), 0, 0)

    def as_array(self) -> np.ndarray:
        """0-based array aligned with grid indices; entry 0 is NaN."""
        out = np.full(len(self.grid), np.nan)
        for k, v in self.zeta.items():
            out[k - 1] = v
        return out

    @property
    def final(self) -> float:
        return self.zeta[max(self.zeta)]

    def to_dict(self) -> dict:
        return {
            "fingerprint": self.fingerprint,
            "grid": list(self.grid),
            "r": self.r,
            "rho": self.rho,
            "zeta": {str(k): v for k, v in sorted(self.zeta.items())},
            "risk_bounds": {str(k): v for k, v in sorted(self.risk_bounds.items())},
            "n_samples": self.n_samples,
            "seed": self.seed,
            "n_failed": self.n_failed,
            "scheme": self.scheme,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CriticalValues":
        return cls(
            {int(k): float(v) for k, v in doc["zeta"].items()},
            {int(k): float(v) for k, v in doc.get("risk_bounds", {}).items()},
            doc["fingerprint"],
            tuple(int(m) for m in doc["grid"]),
            float(doc["r"]),
            float(doc["rho"]),
            int(doc["n_samples"]),
            int(doc["seed"]),
            int(doc.get("n_failed", 0)),
            doc.get("scheme", "per-step"),
        )

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def from_json(cls, path) -> "CriticalValues":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _bank_chunk(theta: VarParams, lengths, burn_in: int, seed: int, indices):
    n = max(lengths) + theta.p
    paths = simulate_paths(theta, n, burn_in, seed, indices)
    ends = np.full(len(indices), n - 1)
    table = likelihood_table(paths, ends, lengths, theta.p, reference=theta)
    return table.lik, table.extra["lik_ref"], table.valid.all(axis=1)


@dataclass
class CalibrationBank:
    """Nested-window likelihood tables of simulated homogeneous paths.

    ``lik[i, k, j]`` is the log-likelihood on window ``k`` of sample ``i``
    under the MLE of window ``j``; ``lik_ref[i, k]`` uses ``theta_star``.
    Samples with any failed fit are dropped and counted in ``n_failed``.
    """

    theta_star: VarParams
    grid: IntervalGrid
    n_samples: int
    seed: int
    burn_in: int
    lik: np.ndarray
    lik_ref: np.ndarray
    n_failed: int = 0
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def simulate(cls, theta_star: VarParams, grid: IntervalGrid, n_samples: int = 10_000,
                 seed: int = 0, burn_in: int = 100, n_jobs: int = 1) -> "CalibrationBank":
        if not is_stable(theta_star):
            raise UnstableParams("theta_star must be stable for calibration")
        grid.check_dimension(theta_star.d, theta_star.p)
        chunks = [range(s, min(s + _CHUNK, n_samples)) for s in range(0, n_samples, _CHUNK)]
        parts = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_bank_chunk)(theta_star, grid.lengths, burn_in, seed, c) for c in chunks
        )
        lik = np.concatenate([part[0] for part in parts])
        lik_ref = np.concatenate([part[1] for part in parts])
        ok = np.concatenate([part[2] for part in parts])
        n_failed = int(np.sum(~ok))
        if n_failed:
            logger.warning("calibration: %d of %d samples excluded after failed fits",
                           n_failed, n_samples)
        if n_failed >= _MAX_FAILED_FRACTION * n_samples:
            raise CalibrationFailure(
                f"{n_failed} of {n_samples} calibration samples failed to fit"
            )
        return cls(theta_star, grid, n_samples, seed, burn_in, lik[ok], lik_ref[ok], n_failed)

    @classmethod
    def from_config(cls, config: CalibrationConfig, n_jobs: int = 1) -> "CalibrationBank":
        return cls.simulate(config.theta_star, config.grid, config.n_samples,
                            config.seed, config.burn_in, n_jobs)

    def config(self, r: float, rho: float, scheme: str = "per-step") -> CalibrationConfig:
        return CalibrationConfig(self.theta_star, self.grid, r, rho, self.n_samples,
                                 self.seed, self.burn_in, scheme)

    def step_statistics(self, r: float) -> np.ndarray:
        """Powered consecutive LR ``|l_k(k) - l_k(k-1)|^r``; column 0 unused."""
        n_k = self.grid.n_lengths
        out = np.zeros((self.lik.shape[0], n_k))
        for k in range(1, n_k):
            out[:, k] = np.abs(self.lik[:, k, k] - self.lik[:, k, k - 1]) ** r
        return out

    def risk_bounds(self, r: float) -> dict[int, float]:
        n_k = self.grid.n_lengths
        return {
            k + 1: float(np.mean(np.abs(self.lik[:, k, k] - self.lik_ref[:, k]) ** r))
            for k in range(1, n_k)
        }

    def critical_values(self, rho: float, r: float = 0.5,
                        scheme: str = "per-step") -> CriticalValues:
        """Critical values for one ``(rho, r)``; results are memoised."""
        self.config(r, rho, scheme)  # validates the arguments
        key = (float(rho), float(r), scheme)
        if key not in self._cache:
            self._cache[key] = _calibrate(self, rho, r, scheme)
        return self._cache[key]


def _bisect(loss, target: float, hi: float, tol: float = 1e-3, max_iter: int = 100) -> float:
    """Smallest-gap ``zeta`` for a non-increasing ``loss(zeta)``."""
    if loss(hi) >= target:
        return hi
    if loss(0.0) <= target:
        return 0.0
    lo = 0.0
    n_iter = 0
    while hi - lo > tol:
        n_iter += 1
        if n_iter > max_iter:
            raise NonConvergence(f"bisection did not reach tolerance {tol}")
        mid = 0.5 * (lo + hi)
        if loss(mid) > target:
            lo = mid
        else:
            hi = mid
    return lo if abs(loss(lo) - target) < abs(loss(hi) - target) else hi


def _calibrate(bank: CalibrationBank, rho: float, r: float, scheme: str) -> CriticalValues:
    n_k = bank.grid.n_lengths
    lik = bank.lik
    n = lik.shape[0]
    stats = bank.step_statistics(r)
    rb = bank.risk_bounds(r)
    alive = np.ones(n, dtype=bool)
    ref = np.zeros(n, dtype=int)
    zeta = {}
    for k in range(1, n_k):
        step = k + 1
        target = rho * step / n_k * rb[step]
        if scheme == "sequential":
            stopped = ~alive
            const_sum = float(np.sum(
                np.abs(lik[stopped, k, k] - lik[stopped, k, ref[stopped]]) ** r))
            live = np.sort(stats[alive, k])
        else:
            const_sum = 0.0
            live = np.sort(stats[:, k])
        tail = np.concatenate([np.cumsum(live[::-1])[::-1], [0.0]])

        def loss(z, live=live, tail=tail, const_sum=const_sum):
            # mean over samples; live statistics above z are rejections
            return (const_sum + tail[np.searchsorted(live, z, side="right")]) / n

        hi = float(np.max(stats[:, k]))
        if target == 0 and loss(0.0) == 0:
            logger.warning("calibration step %d: degenerate target, using zeta_hi", step)
            z = hi
        else:
            z = _bisect(loss, target, hi)
        zeta[step] = float(z)
        rejected = alive & (stats[:, k] > z)
        ref[rejected] = k - 1
        alive &= ~rejected
    config = bank.config(r, rho, scheme)
    return CriticalValues(zeta, rb, config.fingerprint(), bank.grid.lengths, float(r),
                          float(rho), bank.n_samples, bank.seed, bank.n_failed, scheme)


def estimate_risk_bounds(config: CalibrationConfig, n_jobs: int = 1) -> dict[int, float]:
    """Monte-Carlo ``E |l(I_k, MLE_k) - l(I_k, theta_star)|^r`` per step ``k >= 2``."""
    return CalibrationBank.from_config(config, n_jobs).risk_bounds(config.r)


def calibrate_critical_values(config: CalibrationConfig, bank: CalibrationBank | None = None,
                              n_jobs: int = 1) -> CriticalValues:
    """Critical values for ``config``.

    ``zeta_k`` is bisected so that the mean powered LR between the window-``k``
    MLE and the adaptive estimator ``theta_hat(zeta)`` matches
    ``rho * k / K * RB_k``, ``K`` being the number of grid lengths.

    With the default ``"per-step"`` scheme ``theta_hat(zeta)`` is the
    window-``k`` MLE when the step-``k`` test passes and the window-``k-1``
    MLE otherwise. The ``"sequential"`` scheme instead runs the full search
    with ``zeta_2 .. zeta_{k-1}`` frozen, so samples stopped at an earlier
    step keep their earlier estimator.
    """
    if bank is None:
        bank = CalibrationBank.from_config(config, n_jobs)
    return bank.critical_values(config.rho, config.r, config.scheme)


class CalibrationCache:
    """Directory of ``CriticalValues`` JSON files keyed by config fingerprint."""

    def __init__(self, directory=None):
        # the environment variable wins over a configured directory
        directory = os.environ.get(CACHE_ENV) or directory
        self.directory = Path(directory) if directory else None

    def path(self, fingerprint: str) -> Path | None:
        if self.directory is None:
            return None
        return self.directory / f"critvals_{fingerprint}.json"

    def load(self, config: CalibrationConfig) -> CriticalValues | None:
        path = self.path(config.fingerprint())
        if path is None or not path.exists():
            return None
        return CriticalValues.from_json(path)

    def save(self, values: CriticalValues) -> None:
        path = self.path(values.fingerprint)
        if path is None:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        values.to_json(path)

    def get(self, config: CalibrationConfig, bank: CalibrationBank | None = None,
            n_jobs: int = 1) -> CriticalValues:
        cached = self.load(config)
        if cached is not None:
            return cached
        values = calibrate_critical_values(config, bank, n_jobs)
        self.save(values)
        return values


class Calibrator:
    """Critical values for one ``theta_star`` across many ``rho``.

    Cached values are used when present; the Monte-Carlo bank is only
    simulated on the first cache miss.
    """

    def __init__(self, theta_star: VarParams, grid: IntervalGrid, n_samples: int = 10_000,
                 seed: int = 0, cache: CalibrationCache | None = None, n_jobs: int = 1,
                 burn_in: int = 100):
        self.theta_star = theta_star
        self.grid = grid
        self.n_samples = n_samples
        self.seed = seed
        self.burn_in = burn_in
        self.cache = cache or CalibrationCache(None)
        self.n_jobs = n_jobs
        self.bank: CalibrationBank | None = None
        self.n_cache_hits = 0

    def config(self, rho: float, r: float = 0.5) -> CalibrationConfig:
        return CalibrationConfig(self.theta_star, self.grid, r, rho, self.n_samples,
                                 self.seed, self.burn_in)

    def lookup(self, rho: float, r: float = 0.5) -> CriticalValues | None:
        return self.cache.load(self.config(rho, r))

    def critical_values(self, rho: float, r: float = 0.5) -> CriticalValues:
        config = self.config(rho, r)
        cached = self.cache.load(config)
        if cached is not None:
            self.n_cache_hits += 1
            return cached
        if self.bank is None:
            self.bank = CalibrationBank.from_config(config, self.n_jobs)
        values = self.bank.critical_values(rho, r)
        self.cache.save(values)
        return values
