"""Exception hierarchy shared across the package."""


class NLZError(Exception):
    """Base class for all package errors."""


class ConfigError(NLZError):
    """Invalid run configuration (CLI exit code 2)."""


class NumericError(NLZError):
    """A numeric contract was violated (CLI exit code 3)."""


class IntegrationError(NumericError):
    """ODE integration failed; carries the last good state if available."""

    def __init__(self, message, s=None, state=None):
        super().__init__(message)
        self.s = s
        self.state = state


class ExtractionError(NumericError):
    """Asymptotic-state extraction did not converge."""


class ConvergenceError(NumericError):
    """A limit/tail fit failed to converge at the requested scale."""
