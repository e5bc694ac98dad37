"""Exception hierarchy shared by all modules.

The CLI maps :class:`ValidationError` to exit status 1 and
:class:`NumericalError` to exit status 2.
"""


class KernelDistError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(KernelDistError, ValueError):
    """Bad arguments or parameters (wrong dimension, empty input, ...)."""


class SingularityError(ValidationError):
    """A kernel or density was evaluated at its singular point."""


class UnsupportedKernelError(ValidationError):
    """The estimator cannot be used with the requested kernel."""


class NumericalError(KernelDistError, ArithmeticError):
    """A numerical procedure failed (e.g. Cholesky after jitter escalation)."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics
