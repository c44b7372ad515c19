"""Exception hierarchy.

Two branches matter for the CLI exit code: ``ValidationError`` (bad input,
exit 1) and ``NumericalError`` (a fit or resampling step failed, exit 2).
"""


class OutcomeWideError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(OutcomeWideError):
    """Invalid configuration, schema, or argument domain."""


class IngestionError(ValidationError):
    """A delimited file could not be parsed against its declared schema."""


class NumericalError(OutcomeWideError):
    """A numerical procedure failed on otherwise valid input."""


class RankDeficiencyError(NumericalError):
    """Design matrix is rank deficient."""

    def __init__(self, message, collinear=()):
        super().__init__(message)
        self.collinear = tuple(collinear)


class DegenerateColumnError(NumericalError):
    """A column transform is undefined (zero spread, too few distinct values)."""


class ConvergenceError(NumericalError):
    """Iteratively reweighted least squares did not converge."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SeparationError(ConvergenceError):
    """Complete or quasi-complete separation detected during a logistic fit."""
