"""Exception hierarchy shared by the solvers and the command line."""


class StringsError(Exception):
    """Base class for all library errors."""


class DomainError(StringsError, ValueError):
    """An argument lies outside the domain of a model function."""


class RegimeError(StringsError):
    """The requested coupling regime is not covered by the solver."""


class ConvergenceError(StringsError):
    """An iteration failed to reach its tolerance."""

    def __init__(self, message, history=None, stage=None):
        super().__init__(message)
        self.history = list(history or [])
        self.stage = stage


class BracketError(StringsError):
    """A monotone iterate left the sub/supersolution bracket."""


class CalibrationError(StringsError):
    """The coupling g0 is inconsistent with the first-integral calibration."""


class ConfigError(StringsError):
    """Malformed or inconsistent job configuration."""
