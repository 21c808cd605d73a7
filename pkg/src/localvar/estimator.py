"""Scikit-learn style wrapper around calibration and adaptive detection."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import _validation as v
from .adaptive import IntervalGrid, _forecast_errors, detect, mape, select_rho
from .calibrate import CalibrationBank
from .crisis import crisis_indicator
from .fevd import pairwise_spillover
from .var import Interval, VarParams, fit_var


class LocalVAR(BaseEstimator):
    """Locally homogeneous VAR with data-driven window selection.

    ``fit`` calibrates critical values under ``theta_star`` (by default the
    full-sample fit of the training panel) and runs the adaptive search at
    every admissible end point. The fitted panel's results are kept in
    ``results_``; ``transform`` and ``predict`` re-run the search on new
    data with the fitted critical values.

    Parameters
    ----------
    lengths : sequence of int
        Candidate window lengths, increasing.
    p : int
        Lag order.
    r : float
        Power applied to the likelihood ratio.
    rho : float or "optimal"
        Risk-bound scale, or pick it by one-step MAPE on the training panel.
    n_calib : int
        Monte-Carlo sample count for calibration.
    restrict : bool
        Apply the jump restriction.
    theta_star : VarParams, optional
        Hypothetical homogeneous model for calibration.
    """

    def __init__(self, lengths=(12, 15, 19, 23, 29, 37, 46), p=1, r=0.5, rho=0.5,
                 n_calib=10_000, seed=0, restrict=True, theta_star=None, n_jobs=1):
        self.lengths = lengths
        self.p = p
        self.r = r
        self.rho = rho
        self.n_calib = n_calib
        self.seed = seed
        self.restrict = restrict
        self.theta_star = theta_star
        self.n_jobs = n_jobs

    def _check_params(self):
        lengths = v.check_lengths(self.lengths)
        v.check_positive_int(self.p, "p")
        v.check_positive_int(self.n_calib, "n_calib", 100)
        v.check_rho(self.rho)
        return IntervalGrid(lengths)

    def fit(self, X, y=None):
        grid = self._check_params()
        panel = v.check_panel(X, grid.first_tau(self.p) + 1)
        grid.check_dimension(panel.d, self.p)
        theta = self.theta_star
        if theta is None:
            theta = fit_var(panel, Interval(panel.n_obs - 1, panel.n_obs - self.p), self.p).params
        elif not isinstance(theta, VarParams):
            theta = VarParams.from_dict(theta)
        bank = CalibrationBank.simulate(theta, grid, self.n_calib, self.seed, n_jobs=self.n_jobs)
        if self.rho == "optimal":
            self.rho_selection_ = select_rho(panel, grid, np.arange(1, 101) / 100, self.r,
                                             self.p, bank, self.restrict)
            rho = self.rho_selection_.rho
        else:
            rho = float(self.rho)
        self.grid_ = grid
        self.theta_star_ = theta
        self.rho_ = rho
        self.critical_values_ = bank.critical_values(rho, self.r)
        self.n_features_in_ = panel.d
        self.results_ = self._detect(panel)
        return self

    def _detect(self, X):
        check_is_fitted(self, "critical_values_")
        panel = v.check_panel(X, self.grid_.first_tau(self.p) + 1)
        if panel.d != self.n_features_in_:
            raise v.BadDimension(f"fitted on {self.n_features_in_} series, got {panel.d}")
        return detect(panel, self.grid_, self.critical_values_, self.r, self.p, self.restrict)

    def transform(self, X):
        """Selected window length ``m_hat`` per admissible end point."""
        return np.array([res.m_hat for res in self._detect(X)])

    def crisis_index(self, X=None):
        """Crisis indicator per admissible end point (training panel by default)."""
        results = self.results_ if X is None else self._detect(X)
        return crisis_indicator([res.k_hat for res in results], self.grid_.K)

    def predict(self, X):
        """One-step forecasts of rows ``tau + 1`` from the adaptive model at ``tau``.

        Returns an array of shape ``(n_tau - 1, d)`` for every admissible
        ``tau`` except the last.
        """
        results = self._detect(X)[:-1]
        panel = v.check_panel(X)
        taus = np.array([res.tau for res in results])
        coef = np.stack([res.theta_hat.coef if res.theta_hat is not None
                         else np.full((self.p * panel.d + 1, panel.d), np.nan) for res in results])
        actual, forecast = _forecast_errors(panel.values, taus, coef, self.p)
        return forecast

    def score(self, X, y=None):
        """Negative one-step mean absolute percentage error."""
        results = self._detect(X)[:-1]
        panel = v.check_panel(X)
        keep = [res for res in results if res.theta_hat is not None]
        taus = np.array([res.tau for res in keep])
        coef = np.stack([res.theta_hat.coef for res in keep])
        actual, forecast = _forecast_errors(panel.values, taus, coef, self.p)
        return -mape(actual, forecast)[0]

    def spillover(self, X, horizon: int = 12):
        """Total spillover of the joint model fitted on each selected window."""
        results = self._detect(X)
        return pairwise_spillover(X, [res.tau for res in results], [res.m_hat for res in results],
                                  horizon, self.p, joint=True)
