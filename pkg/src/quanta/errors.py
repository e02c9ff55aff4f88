"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigurationError(ValueError):
    """Invalid configuration, detected before any sampling starts."""


class NumericalError(RuntimeError):
    """A numerical routine failed to converge or produced non-finite output."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
