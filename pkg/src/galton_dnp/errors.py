"""Exception and warning classes.

Two families: :class:`ValidationError` for bad inputs (the CLI exits with
status 1) and :class:`NumericalError` for failures inside a computation
(exit status 2).
"""


class GaltonError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(GaltonError, ValueError):
    pass


class NumericalError(GaltonError, ArithmeticError):
    pass


# -- spin model
class GridEmpty(ValidationError):
    pass


class DimensionTooLarge(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class NegativeGap(ValidationError):
    pass


class BoardOrderError(ValidationError):
    """Crossing table is not monotone along rows and columns."""


class CrossingNotFound(NumericalError):
    pass


class MinimizationDiverged(NumericalError):
    pass


# -- engine
class NonpositiveRate(ValidationError):
    pass


class InvalidEndpoints(ValidationError):
    pass


class PathExplosion(ValidationError):
    pass


class ProbabilityOutOfRange(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class BoardUninitialized(ValidationError):
    pass


# -- sweep simulation
class UnnormalizedTable(ValidationError):
    pass


class BadSeed(ValidationError):
    pass


class EmptyRange(ValidationError):
    pass


# -- analysis
class InsufficientData(ValidationError):
    pass


class NoConvergence(NumericalError):
    pass


# -- plotting
class EmptySeries(ValidationError):
    pass


class DegeneracyWarning(UserWarning):
    """Several anti-crossings share a frequency; ties were broken by (k, l)."""


class NegativeHyperfineWarning(UserWarning):
    """Hyperpolarization requested for a negative secular hyperfine coupling."""
