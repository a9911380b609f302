"""Shared exception types."""


class GrushinLabError(Exception):
    """Base class for all library errors."""


class ConfigurationError(GrushinLabError, ValueError):
    """Invalid parameters: bad grid, missing Taylor data, bad tolerances."""


class AccuracyError(GrushinLabError, ArithmeticError):
    """Grid refinement did not converge; carries both estimates."""

    def __init__(self, message, coarse, fine):
        super().__init__(message)
        self.coarse = coarse
        self.fine = fine


class DegenerateKernelError(GrushinLabError, ArithmeticError):
    """Bordered system is singular: the smallest singular value is not simple."""


class PreconditionError(GrushinLabError, ValueError):
    """Operation invoked outside its mathematical precondition."""


class UnsupportedCaseError(GrushinLabError, ValueError):
    """Case deliberately out of scope; the message names the supported route."""


class SymbolDomainError(GrushinLabError, ValueError):
    """Symbol evaluation outside its domain (eta = 0 under abs_eta, c <= 0)."""
