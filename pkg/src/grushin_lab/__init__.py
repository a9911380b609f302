"""Spectral reduction and hypoellipticity classifiers for Grushin-type operators."""

from .errors import (
    AccuracyError,
    ConfigurationError,
    DegenerateKernelError,
    GrushinLabError,
    PreconditionError,
    SymbolDomainError,
    UnsupportedCaseError,
)

__version__ = "0.1.0"

__all__ = [
    "AccuracyError",
    "ConfigurationError",
    "DegenerateKernelError",
    "GrushinLabError",
    "PreconditionError",
    "SymbolDomainError",
    "UnsupportedCaseError",
    "__version__",
]
