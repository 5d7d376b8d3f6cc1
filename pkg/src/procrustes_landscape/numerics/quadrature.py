from __future__ import annotations

import math
import warnings

from scipy import integrate as _integrate

from ..errors import AccuracyError, DivergenceError
from .tolerance import DEFAULT_TOL, Tolerance

__all__ = ["integrate"]


def integrate(f, a, b, tol: Tolerance = DEFAULT_TOL, points=None, full_output=False):
    """Adaptive Gauss-Kronrod quadrature of a scalar function on ``[a, b]``.

    Thin contract layer over QUADPACK (``scipy.integrate.quad``): 21-point
    Gauss-Kronrod with bisection of the worst subinterval and epsilon
    extrapolation, which copes with ``(x - a)^{-1/2}`` endpoint
    singularities.  Infinite limits are mapped onto ``(0, 1]`` by QUADPACK's
    ``x = a + (1 - t)/t``.  ``max_iter`` caps the number of subintervals.

    Raises :class:`AccuracyError` (carrying the best estimate) when the error
    estimate exceeds ``max(abs_tol, rel_tol * |result|)``.
    """
    if a == b:
        return (0.0, 0.0) if full_output else 0.0
    if points is not None and (math.isinf(a) or math.isinf(b)):
        raise ValueError("breakpoints require finite limits")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", _integrate.IntegrationWarning)
        out = _integrate.quad(
            f,
            a,
            b,
            epsabs=tol.abs_tol,
            epsrel=tol.rel_tol,
            limit=int(tol.max_iter),
            points=points,
            full_output=1,
        )
    value, err, info = out[0], out[1], out[2]
    ier = out[3] if len(out) > 3 and isinstance(out[3], int) else 0
    if ier == 5:
        raise DivergenceError("integral appears divergent")
    if not math.isfinite(value) or err > max(tol.abs_tol, tol.rel_tol * abs(value)):
        raise AccuracyError(
            f"integrate: error estimate {err:.3g} above tolerance", best_estimate=value, error_estimate=err
        )
    return (value, err) if full_output else value
