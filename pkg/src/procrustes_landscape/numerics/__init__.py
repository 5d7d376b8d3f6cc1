"""Special functions, quadrature and 1-D solvers used across the package."""

from .quadrature import integrate
from .solvers import RootInfo, find_root, minimize_unimodal
from .special import (
    airy_ai,
    airy_ai_prime,
    airy_ai_scaled,
    airy_tail,
    log_bessel_k_scaled,
    log_gamma,
)
from .tolerance import DEFAULT_TOL, Tolerance

__all__ = [
    "DEFAULT_TOL",
    "RootInfo",
    "Tolerance",
    "airy_ai",
    "airy_ai_prime",
    "airy_ai_scaled",
    "airy_tail",
    "find_root",
    "integrate",
    "log_bessel_k_scaled",
    "log_gamma",
    "minimize_unimodal",
]
