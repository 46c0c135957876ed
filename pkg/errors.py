"""
Errors
Exception hierarchy shared by the link adaptation library and the CLI.
"""


class SaladError(Exception):
    """Base class for every error raised on purpose by this package."""


class ConfigError(SaladError):
    """Invalid scenario, problem, table or parameter configuration."""


class TableLookupError(SaladError, LookupError):
    """MCS index or (MCS, CBS) pair not present in a table."""


class FitError(SaladError):
    """A curve or teacher fit could not be computed from the given data."""


class NotReadyError(SaladError):
    """Not enough feedback history for the requested statistic."""


class SplineSpanError(SaladError, ValueError):
    """Spline evaluated outside the span covered by its knots."""
