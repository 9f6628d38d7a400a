"""Exception hierarchy shared by all modules.

The CLI maps :class:`ValidationError` to exit code 2 and
:class:`ConvergenceError` to exit code 3.
"""

from __future__ import annotations


class VmcoalError(Exception):
    """Base class for library errors."""


class ValidationError(VmcoalError, ValueError):
    """Malformed input: wrong shape, negative entries, reducible matrix, ..."""


class PreconditionError(ValidationError):
    """Input is well formed but outside the operation's domain."""


class DomainError(PreconditionError):
    """Requested time or parameter lies outside the region where a formula is finite."""


class ConvergenceError(VmcoalError, ArithmeticError):
    """An iterative method failed to reach its tolerance.

    ``last_iterate`` carries whatever the method had when it gave up.
    """

    def __init__(self, message: str, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class InternalConsistencyError(VmcoalError, AssertionError):
    """A computed result contradicts a guaranteed property (e.g. lands outside the closed region)."""
