"""Numerical and exact tooling for sigma_k concavity forms."""

from .errors import (
    ContextInvalidError,
    DegenerateInputError,
    DomainError,
    ExhaustionError,
    InvalidIndexError,
    InvalidInputError,
    ModeRangeError,
    SamplingError,
    SigmaKError,
)
from .scalar import FLOAT64, RATIONAL, ScalarMode
from .symfunc import KappaVector, Minors, elem_sym, elem_sym_excl, sigma_partial

__version__ = "0.1.0"

__all__ = [
    "ContextInvalidError", "DegenerateInputError", "DomainError", "ExhaustionError", "InvalidIndexError",
    "InvalidInputError", "ModeRangeError", "SamplingError", "SigmaKError", "FLOAT64", "RATIONAL", "ScalarMode",
    "KappaVector", "Minors", "elem_sym", "elem_sym_excl", "sigma_partial",
]
