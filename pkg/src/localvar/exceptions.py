"""Exception hierarchy.

Every error raised by the package derives from :class:`LocalVarError` and
carries an ``exit_code`` used by the command-line front end.
"""

from __future__ import annotations


class LocalVarError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(LocalVarError, ValueError):
    exit_code = 2


class DataError(LocalVarError, ValueError):
    exit_code = 3


class ParseError(DataError):
    pass


class GapError(DataError):
    pass


class NonNumeric(DataError):
    pass


class ZeroObservation(DataError):
    pass


class NumericalError(LocalVarError, ArithmeticError):
    exit_code = 4


class SingularDesign(NumericalError):
    pass


class IntervalTooShort(DataError):
    pass


class InsufficientHistory(DataError):
    pass


class DegenerateCovariance(NumericalError):
    pass


class NonPositiveDefiniteSigma(NumericalError):
    pass


class UnstableParams(NumericalError):
    pass


class BadDimension(ConfigError):
    pass


class ZeroVarianceRow(NumericalError):
    pass


class NonConvergence(NumericalError):
    pass


class DegenerateTarget(NumericalError):
    pass


class MissingTrace(ConfigError):
    pass


class IndexOutOfRange(ConfigError):
    pass


class EmptyPairSet(DataError):
    pass


class CalibrationFailure(NumericalError):
    pass
