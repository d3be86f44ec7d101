"""Exception types shared across the package."""


class PdeflowError(Exception):
    """Base class for all package errors."""


class ConfigError(PdeflowError):
    """Invalid configuration, spec, or argument combination."""


class NumericalError(PdeflowError):
    """Fatal numerical failure (non-finite values, solver breakdown,
    step-size collapse).  Carries enough context to locate the stage."""

    def __init__(self, message, **context):
        super().__init__(message)
        self.context = dict(context)


class DomainError(PdeflowError):
    """Evaluation outside the valid region of a coefficient field
    (e.g. a metric queried at or inside its singular radius)."""
