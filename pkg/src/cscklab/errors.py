"""Exception types shared across the package.

Three failure families map onto the CLI exit codes: configuration problems
(bad parameters, inconsistent grids), numerical failures (loss of positivity,
ill-conditioned solves, non-convergence), and insufficient data for a
requested fit.
"""

from __future__ import annotations


class CscklabError(Exception):
    """Base class for package errors."""


class ConfigurationError(CscklabError):
    """Invalid or inconsistent parameters, grids, or file contents."""


class NumericalError(CscklabError):
    """A computation failed: positivity loss, bad conditioning, divergence.

    Parameters
    ----------
    message : str
    diagnostics : dict, optional
        Named scalars useful for post-mortems (condition estimates,
        first offending grid location, residual history tail).
    """

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class PositivityError(NumericalError):
    """A potential stopped being strictly plurisubharmonic on the grid."""


class InsufficientDataError(CscklabError):
    """Not enough samples/decades to perform a requested fit."""
