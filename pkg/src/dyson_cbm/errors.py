"""Exception hierarchy.

``ConfigurationError`` covers bad user input; ``NumericalBreakdown`` covers
failures of a numerical scheme that the CLI maps to exit status 3.
"""


class DysonError(Exception):
    """Base class for all package errors."""


class ConfigurationError(DysonError, ValueError):
    pass


class DuplicatePoint(ConfigurationError):
    pass


class EmptyRestriction(ConfigurationError):
    pass


class InvalidAlpha(ConfigurationError):
    pass


class NotInSupport(ConfigurationError):
    pass


class DimensionMismatch(DysonError, ValueError):
    pass


class GridMismatch(DysonError, ValueError):
    pass


class DivisionGuard(DysonError, ZeroDivisionError):
    pass


class ConfigError(ConfigurationError):
    """Invalid run configuration; ``path`` names the offending field."""

    def __init__(self, path, reason):
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")


class NumericalBreakdown(DysonError, ArithmeticError):
    pass


class CollisionBreakdown(NumericalBreakdown):
    pass


class QuadratureOrderTooLow(NumericalBreakdown):
    pass


class ContourTooClose(NumericalBreakdown):
    pass


class EigensolverNoConvergence(NumericalBreakdown):
    pass


class ImaginaryResidual(NumericalBreakdown):
    """A quantity that is real by construction came out with a sizeable imaginary part."""


class WeightBlowup(NumericalBreakdown):
    """Importance-weighted estimate too noisy to be conclusive."""


class InsufficientCounts(NumericalBreakdown):
    pass


class InsufficientPaths(NumericalBreakdown):
    pass
