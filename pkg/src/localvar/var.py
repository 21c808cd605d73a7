"""Gaussian VAR(p) models on sub-intervals of a panel.

Estimation is equation-wise least squares for the intercept and lag
matrices followed by ``Sigma = E'E / m``; together these are the Gaussian
maximum-likelihood estimator on the interval. Every fitted interval
indexes *fitted* points: ``Interval(end, m)`` uses rows
``end - m + 1 .. end`` as responses and the ``p`` rows before them as
pre-sample lags.

The array kernels (``_design``, ``_ols``, ``_loglik``) carry a leading batch
axis so that thousands of windows can be fitted at once; the scalar public
functions call the same kernels with a batch of one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import (
    BadDimension,
    DegenerateCovariance,
    IntervalTooShort,
    InsufficientHistory,
    NonPositiveDefiniteSigma,
    SingularDesign,
    UnstableParams,
)
from .panel import TimeSeriesPanel, as_panel

LOG_2PI = np.log(2.0 * np.pi)
STABILITY_MARGIN = 1e-10
_SYM_TOL = 1e-10
_RCOND = 1e-12


@dataclass(frozen=True, eq=False)
class VarParams:
    """Parameters ``(phi_0, phi_1..phi_p, Sigma)`` of a VAR(p).

    Parameters
    ----------
    intercept : array of shape (d,)
    lags : array of shape (p, d, d)
        ``lags[s - 1]`` multiplies ``y[t - s]``.
    sigma : array of shape (d, d)
        Innovation covariance, symmetric positive definite.
    """

    intercept: np.ndarray
    lags: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        intercept = np.array(self.intercept, dtype=float).reshape(-1)
        lags = np.array(self.lags, dtype=float)
        if lags.ndim == 2:
            lags = lags[None]
        sigma = np.array(self.sigma, dtype=float)
        d = intercept.shape[0]
        if d < 1 or lags.ndim != 3 or lags.shape[0] < 1 or lags.shape[1:] != (d, d):
            raise BadDimension(
                f"lags must have shape (p, {d}, {d}), got {lags.shape}"
            )
        if sigma.shape != (d, d):
            raise BadDimension(f"sigma must have shape ({d}, {d}), got {sigma.shape}")
        if not (np.all(np.isfinite(intercept)) and np.all(np.isfinite(lags))
                and np.all(np.isfinite(sigma))):
            raise BadDimension("parameters must be finite")
        if np.max(np.abs(sigma - sigma.T)) > _SYM_TOL * max(1.0, np.max(np.abs(sigma))):
            raise NonPositiveDefiniteSigma("sigma is not symmetric")
        sigma = 0.5 * (sigma + sigma.T)
        if np.min(np.linalg.eigvalsh(sigma)) <= 0:
            raise NonPositiveDefiniteSigma("sigma is not positive definite")
        for a in (intercept, lags, sigma):
            a.setflags(write=False)
        object.__setattr__(self, "intercept", intercept)
        object.__setattr__(self, "lags", lags)
        object.__setattr__(self, "sigma", sigma)

    @property
    def d(self) -> int:
        return self.intercept.shape[0]

    @property
    def p(self) -> int:
        return self.lags.shape[0]

    @property
    def coef(self) -> np.ndarray:
        """Stacked ``(1 + d p) x d`` regression matrix ``[phi_0'; phi_1'; ...]``."""
        return np.vstack([self.intercept[None, :]] + [a.T for a in self.lags])

    @classmethod
    def from_coef(cls, coef, sigma) -> "VarParams":
        coef = np.asarray(coef, dtype=float)
        d = coef.shape[1]
        p = (coef.shape[0] - 1) // d
        lags = np.stack([coef[1 + s * d:1 + (s + 1) * d].T for s in range(p)])
        return cls(coef[0], lags, sigma)

    def unconditional_mean(self) -> np.ndarray:
        a = np.eye(self.d) - self.lags.sum(axis=0)
        return np.linalg.solve(a, self.intercept)

    def companion(self) -> np.ndarray:
        d, p = self.d, self.p
        comp = np.zeros((d * p, d * p))
        comp[:d, :] = np.hstack(list(self.lags))
        if p > 1:
            comp[d:, :-d] = np.eye(d * (p - 1))
        return comp

    def permute(self, order) -> "VarParams":
        """Relabel the series by ``order``."""
        order = np.asarray(order)
        return VarParams(
            self.intercept[order],
            self.lags[:, order][:, :, order],
            self.sigma[np.ix_(order, order)],
        )

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "p": self.p,
            "intercept": self.intercept.tolist(),
            "lags": [a.tolist() for a in self.lags],
            "sigma": self.sigma.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "VarParams":
        try:
            params = cls(doc["intercept"], doc["lags"], doc["sigma"])
        except KeyError as exc:
            raise BadDimension(f"parameter document lacks {exc}") from None
        if "d" in doc and int(doc["d"]) != params.d:
            raise BadDimension(f"declared d={doc['d']} but matrices have d={params.d}")
        if "p" in doc and int(doc["p"]) != params.p:
            raise BadDimension(f"declared p={doc['p']} but {params.p} lag matrices")
        return params

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def from_json(cls, path: str | Path) -> "VarParams":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def __eq__(self, other):
        if not isinstance(other, VarParams):
            return NotImplemented
        return (
            self.lags.shape == other.lags.shape
            and np.array_equal(self.intercept, other.intercept)
            and np.array_equal(self.lags, other.lags)
            and np.array_equal(self.sigma, other.sigma)
        )

    __hash__ = None


@dataclass(frozen=True)
class Interval:
    """Fitted rows ``end - length + 1 .. end`` (0-based, inclusive)."""

    end: int
    length: int

    @property
    def start(self) -> int:
        return self.end - self.length + 1

    def check(self, n_obs: int, p: int) -> None:
        if self.length < 1:
            raise IntervalTooShort(f"interval length must be positive, got {self.length}")
        if self.end >= n_obs or self.end < 0:
            raise InsufficientHistory(f"interval end {self.end} outside 0..{n_obs - 1}")
        if self.start - p < 0:
            raise InsufficientHistory(
                f"interval [{self.start}, {self.end}] needs {p} pre-sample lags"
            )


@dataclass(frozen=True)
class VarFit:
    params: VarParams
    residuals: np.ndarray
    loglik: float
    interval: Interval


def min_interval_length(d: int, p: int) -> int:
    """Shortest interval on which the regression and ``Sigma`` are identifiable."""
    return d * p + d + p + 2


def is_stable(params: VarParams) -> bool:
    """True when every companion eigenvalue has modulus below ``1 - 1e-10``."""
    eig = np.linalg.eigvals(params.companion())
    return bool(np.max(np.abs(eig)) < 1.0 - STABILITY_MARGIN)


# ---------------------------------------------------------------------------
# batched kernels


def _design(values: np.ndarray, ends: np.ndarray, length: int, p: int):
    """Responses ``(B, m, d)`` and regressors ``(B, m, 1 + d p)``.

    ``values`` is ``(T, d)`` (one panel, many ``ends``) or ``(B, T, d)``
    (one end per batch element).
    """
    ends = np.asarray(ends)
    rows = ends[..., None] - length + 1 + np.arange(length)
    if values.ndim == 2:
        y = values[rows]
        lagged = [values[rows - s] for s in range(1, p + 1)]
    else:
        b = np.arange(values.shape[0])[:, None]
        y = values[b, rows]
        lagged = [values[b, rows - s] for s in range(1, p + 1)]
    ones = np.ones(y.shape[:-1] + (1,))
    x = np.concatenate([ones] + lagged, axis=-1)
    return y, x


def _ols(y: np.ndarray, x: np.ndarray):
    """Least-squares coefficients, MLE covariance and a per-batch ok flag."""
    xt = np.swapaxes(x, -1, -2)
    xtx = xt @ x
    xty = xt @ y
    s = np.linalg.svd(xtx, compute_uv=False)
    ok = s[..., -1] > _RCOND * s[..., 0]
    safe = np.where(ok[..., None, None], xtx, np.eye(xtx.shape[-1]))
    coef = np.linalg.solve(safe, xty)
    resid = y - x @ coef
    m = y.shape[-2]
    sigma = np.swapaxes(resid, -1, -2) @ resid / m
    sigma = 0.5 * (sigma + np.swapaxes(sigma, -1, -2))
    ev = np.linalg.eigvalsh(sigma)
    scale = np.maximum(np.abs(y).max(axis=(-2, -1)), 1.0) ** 2
    cov_ok = ev[..., 0] > 1e-12 * scale
    return coef, sigma, resid, ok, cov_ok


def _loglik(y: np.ndarray, x: np.ndarray, coef: np.ndarray, sigma: np.ndarray):
    """Gaussian log-likelihood summed over the interval, per batch element."""
    m, d = y.shape[-2], y.shape[-1]
    resid = y - x @ coef
    chol = np.linalg.cholesky(sigma)
    # solve L z = e' for all residual rows at once
    z = np.linalg.solve(chol, np.swapaxes(resid, -1, -2))
    quad = np.sum(z * z, axis=(-2, -1))
    logdet = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1)), axis=-1)
    return -0.5 * m * d * LOG_2PI - 0.5 * m * logdet - 0.5 * quad


# ---------------------------------------------------------------------------
# public scalar API


def _values_and_check(panel, interval: Interval, p: int) -> np.ndarray:
    values = as_panel(panel).values
    if p < 1:
        raise BadDimension(f"lag order must be >= 1, got {p}")
    interval.check(values.shape[0], p)
    return values


def fit_var(panel: TimeSeriesPanel | np.ndarray, interval: Interval, p: int = 1) -> VarFit:
    """Maximum-likelihood VAR(p) fit on one interval.

    Raises
    ------
    IntervalTooShort
        ``interval.length`` below :func:`min_interval_length`.
    DegenerateCovariance
        A series is constant on the window or ``Sigma`` is not positive definite.
    SingularDesign
        The regressor cross-product cannot be inverted.
    """
    values = _values_and_check(panel, interval, p)
    d = values.shape[1]
    need = min_interval_length(d, p)
    if interval.length < need:
        raise IntervalTooShort(
            f"interval length {interval.length} < {need} required for d={d}, p={p}"
        )
    window = values[interval.start - p:interval.end + 1]
    if np.any(np.ptp(window, axis=0) == 0):
        raise DegenerateCovariance("a series is constant on the interval")
    y, x = _design(values, np.array([interval.end]), interval.length, p)
    coef, sigma, resid, ok, cov_ok = _ols(y, x)
    if not ok[0]:
        raise SingularDesign("regressor cross-product is not invertible")
    if not cov_ok[0]:
        raise DegenerateCovariance("residual covariance is not positive definite")
    params = VarParams.from_coef(coef[0], sigma[0])
    loglik = log_likelihood(values, interval, params)
    return VarFit(params, resid[0], loglik, interval)


def log_likelihood(panel, interval: Interval, params: VarParams) -> float:
    """Gaussian log-likelihood of ``params`` on ``interval``.

    Uses the full multivariate constant ``-(m d / 2) log 2 pi``.
    """
    values = _values_and_check(panel, interval, params.p)
    if values.shape[1] != params.d:
        raise BadDimension(f"panel has d={values.shape[1]}, params have d={params.d}")
    y, x = _design(values, np.array([interval.end]), interval.length, params.p)
    try:
        return float(_loglik(y, x, params.coef[None], params.sigma[None])[0])
    except np.linalg.LinAlgError as exc:
        raise NonPositiveDefiniteSigma(str(exc)) from None


def lr_statistic(panel, interval: Interval, theta_local: VarParams,
                 theta_ref: VarParams, r: float = 0.5) -> float:
    """``|l(I, theta_local) - l(I, theta_ref)| ** r``."""
    if not r > 0:
        raise BadDimension(f"power r must be positive, got {r}")
    if theta_local.d != theta_ref.d:
        raise BadDimension("parameter sets differ in dimension")
    diff = log_likelihood(panel, interval, theta_local) - log_likelihood(
        panel, interval, theta_ref
    )
    return float(abs(diff) ** r)


# ---------------------------------------------------------------------------
# simulation


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for replication ``index`` under master ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def _start_state(params: VarParams) -> np.ndarray:
    try:
        return params.unconditional_mean()
    except np.linalg.LinAlgError:
        return np.zeros(params.d)


def _recurse(params: VarParams, shocks: np.ndarray, start: np.ndarray) -> np.ndarray:
    """Run the VAR recursion for a batch of innovation paths.

    ``shocks`` is ``(B, n, d)`` already scaled by the covariance root. The
    products are written as explicit column sums so every path is computed
    identically regardless of batch size.
    """
    nb, n, d = shocks.shape
    p = params.p
    out = np.empty((nb, n + p, d))
    out[:, :p] = start
    for t in range(n):
        acc = np.broadcast_to(params.intercept, (nb, d)).copy()
        for s in range(p):
            phi = params.lags[s]
            prev = out[:, p + t - 1 - s]
            for j in range(d):
                acc += prev[:, j:j + 1] * phi[:, j]
        out[:, p + t] = acc + shocks[:, t]
    return out[:, p:]


def _shocks(params: VarParams, z: np.ndarray) -> np.ndarray:
    chol = np.linalg.cholesky(params.sigma)
    out = np.zeros_like(z)
    for j in range(params.d):
        out += z[..., j:j + 1] * chol[:, j]
    return out


def simulate_paths(params: VarParams, n: int, burn_in: int, seed: int,
                   indices) -> np.ndarray:
    """``(len(indices), n, d)`` paths, path ``i`` drawn from ``sample_rng(seed, i)``."""
    indices = list(indices)
    total = burn_in + n
    z = np.stack([sample_rng(seed, i).standard_normal((total, params.d)) for i in indices])
    start = _start_state(params)
    return _recurse(params, _shocks(params, z), start)[:, burn_in:]


def simulate_var(params: VarParams, n: int, burn_in: int = 100, seed=None,
                 check_stability: bool = True, start=None) -> TimeSeriesPanel:
    """Simulate ``n`` observations after discarding ``burn_in``.

    The recursion starts at the unconditional mean and innovations are
    ``L z`` with ``L`` the lower Cholesky factor of ``Sigma``.

    Raises
    ------
    UnstableParams
        Unless ``check_stability`` is False.
    """
    if n < 1 or burn_in < 0:
        raise BadDimension(f"need n >= 1 and burn_in >= 0, got n={n}, burn_in={burn_in}")
    if check_stability and not is_stable(params):
        raise UnstableParams("VAR parameters are not stable")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((burn_in + n, params.d))[None]
    start = _start_state(params) if start is None else np.asarray(start, dtype=float)
    path = _recurse(params, _shocks(params, z), start)[0, burn_in:]
    return TimeSeriesPanel.from_array(path)


# ---------------------------------------------------------------------------
# nested-window likelihood tables


@dataclass
class LikelihoodTable:
    """Fits on nested windows sharing an end point, for a batch of ends.

    ``lik[b, k, j]`` is the log-likelihood on window ``k`` of the MLE from
    window ``j`` (``j <= k``; NaN otherwise or when a fit failed).
    ``valid[b, k]`` flags successful fits. Window indices are 0-based here.
    """

    lengths: tuple[int, ...]
    p: int
    coef: np.ndarray
    sigma: np.ndarray
    valid: np.ndarray
    lik: np.ndarray
    extra: dict = field(default_factory=dict)

    def params(self, b: int, k: int) -> VarParams:
        return VarParams.from_coef(self.coef[b, k], self.sigma[b, k])

    def consecutive(self) -> np.ndarray:
        """``lik[k, k] - lik[k, k-1]`` for ``k >= 1``; column 0 is zero."""
        n_k = len(self.lengths)
        out = np.zeros(self.lik.shape[:2])
        for k in range(1, n_k):
            out[:, k] = self.lik[:, k, k] - self.lik[:, k, k - 1]
        return out


def likelihood_table(values: np.ndarray, ends, lengths, p: int,
                     reference: VarParams | None = None) -> LikelihoodTable:
    """Fit every window in ``lengths`` ending at each of ``ends``.

    With ``reference`` given, ``extra['lik_ref'][b, k]`` holds the
    log-likelihood of the reference parameters on window ``k``.
    """
    values = np.asarray(values, dtype=float)
    ends = np.asarray(ends)
    nb = ends.shape[0] if values.ndim == 2 else values.shape[0]
    d = values.shape[-1]
    q = 1 + d * p
    n_k = len(lengths)
    coef = np.full((nb, n_k, q, d), np.nan)
    sigma = np.full((nb, n_k, d, d), np.nan)
    valid = np.zeros((nb, n_k), dtype=bool)
    lik = np.full((nb, n_k, n_k), np.nan)
    designs = []
    for k, m in enumerate(lengths):
        y, x = _design(values, ends, m, p)
        designs.append((y, x))
        c, s, _, ok, cov_ok = _ols(y, x)
        good = ok & cov_ok
        valid[:, k] = good
        coef[good, k] = c[good]
        sigma[good, k] = s[good]
    eye = np.eye(d)
    for k, (y, x) in enumerate(designs):
        for j in range(k + 1):
            good = valid[:, k] & valid[:, j]
            if not np.any(good):
                continue
            c = np.where(good[:, None, None], coef[:, j], 0.0)
            s = np.where(good[:, None, None], sigma[:, j], eye)
            ll = _loglik(y, x, c, s)
            lik[:, k, j] = np.where(good, ll, np.nan)
    extra = {}
    if reference is not None:
        ref = np.full((nb, n_k), np.nan)
        for k, (y, x) in enumerate(designs):
            ref[:, k] = _loglik(y, x, reference.coef[None], reference.sigma[None])
        extra["lik_ref"] = ref
    return LikelihoodTable(tuple(int(m) for m in lengths), p, coef, sigma, valid, lik, extra)
