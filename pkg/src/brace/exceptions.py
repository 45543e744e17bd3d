"""Exception types raised by the package."""


class BraceError(Exception):
    """Base class for all package errors."""


class InvalidInputError(BraceError, ValueError):
    """Raised when user-supplied data or configuration is malformed."""


class NumericalError(BraceError, ArithmeticError):
    """Raised when a numerical routine fails (non-finite value, failed factorization).

    Parameters
    ----------
    message : str
        Human readable description.
    state : dict, optional
        JSON-serializable snapshot of the sampler state at the time of failure.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state
