"""Exceptions shared across the pipeline.

The CLI maps these onto exit codes: configuration problems exit with 2,
file I/O problems with 3, and numeric failures with 4.
"""


class ConfigError(ValueError):
    """A configuration value or file is invalid."""


class NumericError(ArithmeticError):
    """A numeric stage failed (degenerate eigenproblem, stalled solver)."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
