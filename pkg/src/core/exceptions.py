"""
Exception hierarchy for the solver suite.

This module provides:
- SuiteError as the common base for every failure raised by the package
- Input, configuration, factorization and evaluation errors
- MaxIterationsError, which carries the best iterate found before the cap
- ReportIOError for report emission failures with the offending path
"""

from typing import Any, Optional


class SuiteError(Exception):
    """Base error for all solver-suite failures."""

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def __str__(self) -> str:
        if not self.details:
            return self.message
        extra = ", ".join(f"{key}={value}" for key, value in self.details.items())
        return f"{self.message} ({extra})"


class InvalidInputError(SuiteError, ValueError):
    """Dimension mismatch, non-finite data or out-of-range parameters."""


class ConfigurationError(SuiteError, ValueError):
    """A modelling assumption or a scheme configuration does not hold."""


class MaxIterationsError(SuiteError):
    """
    Iteration cap reached before the exit condition held.

    The best-so-far iterate is attached so callers can still use it
    (closed-loop simulation applies it and flags the sample).
    """

    def __init__(
        self,
        message: str,
        best_iterate: Any = None,
        iterations: int = 0,
        residual: float = float("nan"),
    ):
        super().__init__(message, iterations=iterations, residual=residual)
        self.best_iterate = best_iterate
        self.iterations = iterations
        self.residual = residual


class FactorizationError(SuiteError):
    """Block Cholesky factorization met a non positive-definite pivot."""

    def __init__(self, message: str, block_index: int):
        super().__init__(message, block_index=block_index)
        self.block_index = block_index


class EvaluationError(SuiteError, ArithmeticError):
    """A model or stencil evaluation produced an invalid value."""


class ReportIOError(SuiteError, OSError):
    """Reading or writing a report or ingredient file failed."""

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(message, path=path)
        self.path = path
