"""Numerical laboratory for the stable Muskat interface equation on a periodic domain."""

from .modulus import (
    DomainError,
    FlatteningClock,
    LipschitzBudget,
    Modulus,
    j_of,
    nu_of,
    omega_of,
    omega_slope,
    tstar_of,
)

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "FlatteningClock",
    "LipschitzBudget",
    "Modulus",
    "j_of",
    "nu_of",
    "omega_of",
    "omega_slope",
    "tstar_of",
]
