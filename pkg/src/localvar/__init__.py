"""Locally homogeneous VAR models for time-varying spillover measurement.

Windows of local homogeneity are chosen per end point by a sequence of
likelihood-ratio tests whose critical values are calibrated by Monte-Carlo
simulation. Selected windows feed crisis indicators and generalized-FEVD
spillover indices.
"""

from .adaptive import (
    AdaptiveResult,
    IntervalGrid,
    adaptive_search,
    apply_jump_restriction,
    detect,
    select_rho,
)
from .calibrate import (
    CalibrationBank,
    CalibrationCache,
    CalibrationConfig,
    CriticalValues,
    calibrate_critical_values,
    estimate_risk_bounds,
)
from .crisis import CrisisSeries, crisis_indicator, crisis_series, global_crisis
from .estimator import LocalVAR
from .exceptions import ConfigError, DataError, LocalVarError, NumericalError
from .fevd import SpilloverTable, VmaCoefficients, gfevd, pairwise_spillover, var_to_vma
from .panel import TimeSeriesPanel, ingest
from .scenarios import ScenarioSpec, generate_scenario, run_study
from .var import Interval, VarFit, VarParams, fit_var, log_likelihood, lr_statistic, simulate_var

__version__ = "0.1.0"

__all__ = [
    "AdaptiveResult", "CalibrationBank", "CalibrationCache", "CalibrationConfig",
    "ConfigError", "CrisisSeries", "CriticalValues", "DataError", "Interval", "IntervalGrid",
    "LocalVAR", "LocalVarError", "NumericalError", "ScenarioSpec", "SpilloverTable",
    "TimeSeriesPanel", "VarFit", "VarParams", "VmaCoefficients", "adaptive_search",
    "apply_jump_restriction", "calibrate_critical_values", "crisis_indicator", "crisis_series",
    "detect", "estimate_risk_bounds", "fit_var", "generate_scenario", "gfevd", "global_crisis",
    "ingest", "log_likelihood", "lr_statistic", "pairwise_spillover", "run_study", "select_rho",
    "simulate_var", "var_to_vma",
]
