"""Exception hierarchy shared across the package.

Errors are grouped by how callers should react: UsageError for bad
configuration or arguments, DataError for malformed input data, and
NumericalError for failures arising during computation. The CLI maps
these families onto exit codes 1, 2 and 3.
"""


class StgpError(Exception):
    """Base class for all package errors."""


class UsageError(StgpError):
    """Invalid configuration, arguments or request."""


class UnsupportedKernelError(UsageError):
    """Kernel family not in the supported set."""


class DataError(StgpError):
    """Malformed or inconsistent input data."""


class NumericalError(StgpError):
    """Numerical failure during computation.

    diagnostics: optional dict with context (iteration, parameter
    values, trace tail) attached at the failure site.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DefinitenessError(NumericalError):
    """A matrix required to be positive definite is not.

    name:  which matrix failed (parameter name at the call site)
    pivot: 0-based index of the first non-positive pivot, if known
    """

    def __init__(self, name, pivot=None, diagnostics=None):
        at = f" (pivot {pivot})" if pivot is not None else ""
        super().__init__(f"matrix '{name}' is not positive definite{at}",
                         diagnostics)
        self.name = name
        self.pivot = pivot


class CapacityError(StgpError):
    """An operation would exceed a configured size cap."""


class DomainError(UsageError):
    """Scalar argument outside its valid domain (e.g. variance <= 0)."""
