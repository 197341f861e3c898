"""Exception types shared across the package.

The CLI maps these onto exit codes: usage errors (1), data errors (2)
and compute errors (3).
"""


class AlertLabError(Exception):
    """Base class for all package errors."""


class ParseError(AlertLabError):
    """A record in an input file could not be parsed.

    Carries the (1-based) line number of the offending row when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(AlertLabError):
    """A value violates a documented invariant."""


class ConfigError(AlertLabError):
    """A configuration is inconsistent or a requested target is infeasible."""


class TargetUnreachableError(ConfigError):
    """A control-generator target cannot be met without breaking a contract."""


class TrainingDivergedError(AlertLabError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, message=None):
        super().__init__(message or f"training diverged at epoch {epoch} (non-finite loss)")
        self.epoch = epoch


class UnseenEventError(AlertLabError):
    """A sequence contains an event type absent from the training data."""


class SingularFitError(AlertLabError):
    """A regression system is singular and cannot be solved."""
