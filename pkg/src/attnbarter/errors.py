"""Exception types shared across the package.

The CLI maps each of these to a distinct exit code.
"""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigError(ValueError):
    """A configuration document is missing keys, has unknown keys, or bad values."""


class DataError(ValueError):
    """Input data files are unreadable or malformed."""


class ConvergenceError(RuntimeError):
    """An iterative solver exhausted its iteration budget."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
