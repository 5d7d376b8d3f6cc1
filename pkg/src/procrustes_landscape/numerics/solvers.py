"""Bracketed root finding and unimodal minimisation, vectorised over brackets.

Both routines accept scalar or array brackets; ``f`` must be elementwise
(``f(x)[i]`` depends on ``x[i]`` only), which lets the secular solver treat
every eigenvalue interval of an instance, or the lowest interval of a whole
batch of instances, in a single call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import elementwise

from ..errors import AccuracyError, BracketError
from .tolerance import DEFAULT_TOL, Tolerance

__all__ = ["RootInfo", "find_root", "minimize_unimodal"]

_INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class RootInfo:
    residual: np.ndarray | float
    bracket_width: np.ndarray | float
    iterations: np.ndarray | int


def _shape_out(x, scalar):
    return float(np.ravel(x)[0]) if scalar else np.asarray(x)


def find_root(f, lo, hi, tol: Tolerance = DEFAULT_TOL, args=(), full_output=False):
    """Root of ``f`` on ``[lo, hi]`` where ``f(lo)`` and ``f(hi)`` differ in sign.

    Chandrupatla's method (inverse quadratic interpolation with a bisection
    fallback) from ``scipy.optimize.elementwise``; convergence is guaranteed
    for continuous ``f``.  Iteration stops once the bracket is narrower than
    about ``abs_tol + rel_tol * |x|``.
    """
    scalar = np.ndim(lo) == 0 and np.ndim(hi) == 0
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    lo, hi = np.broadcast_arrays(lo, hi)
    args = tuple(np.asarray(a) for a in args)
    flo = np.asarray(f(lo, *args), dtype=float)
    fhi = np.asarray(f(hi, *args), dtype=float)
    bad = ~(np.sign(flo) * np.sign(fhi) <= 0)
    if np.any(bad):
        raise BracketError(f"no sign change on {int(bad.sum())} of {bad.size} brackets")

    res = elementwise.find_root(
        f,
        (lo, hi),
        args=args,
        tolerances=dict(xatol=tol.abs_tol, xrtol=tol.rel_tol),
        maxiter=tol.max_iter,
    )
    x = np.asarray(res.x, dtype=float)
    if np.any(res.status == -2):
        raise AccuracyError("find_root: iteration limit reached", best_estimate=x)
    if np.any(res.status < 0):
        raise AccuracyError(f"find_root failed (status {np.unique(res.status)})", best_estimate=x)
    if not full_output:
        return _shape_out(x, scalar)
    width = np.abs(np.asarray(res.bracket[1]) - np.asarray(res.bracket[0]))
    info = RootInfo(
        residual=_shape_out(np.abs(res.f_x), scalar),
        bracket_width=_shape_out(width, scalar),
        iterations=int(np.ravel(res.nit)[0]) if scalar else np.asarray(res.nit),
    )
    return _shape_out(x, scalar), info


def minimize_unimodal(f, lo, hi, tol: Tolerance = DEFAULT_TOL, args=()):
    """Golden-section search on the open interval ``(lo, hi)``.

    ``f`` is never evaluated at the endpoints, so it may be infinite there.
    A bracket is converged when its width drops below
    ``max(abs_tol, rel_tol * d)``, ``d`` being the distance of the current
    estimate to the nearer original endpoint.  Returns ``(x_min, f_min)``.
    """
    scalar = np.ndim(lo) == 0 and np.ndim(hi) == 0
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    lo, hi = (np.array(v) for v in np.broadcast_arrays(lo, hi))
    args = tuple(np.asarray(a) for a in args)
    a, b = lo.copy(), hi.copy()
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc = np.asarray(f(c, *args), dtype=float)
    fd = np.asarray(f(d, *args), dtype=float)

    for _ in range(tol.max_iter):
        x = np.where(fc < fd, c, d)
        near = np.minimum(x - lo, hi - x)
        if np.all(b - a <= np.maximum(tol.abs_tol, tol.rel_tol * near)):
            break
        left = fc < fd
        # left: minimum in [a, d]; otherwise in [c, b]
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = np.where(left, b - _INV_PHI * (b - a), d)
        new_d = np.where(left, c, a + _INV_PHI * (b - a))
        probe = np.where(left, new_c, new_d)
        fp = np.asarray(f(probe, *args), dtype=float)
        fc, fd = np.where(left, fp, fd), np.where(left, fc, fp)
        c, d = new_c, new_d
    else:
        x = np.where(fc < fd, c, d)
        raise AccuracyError("minimize_unimodal: iteration limit reached", best_estimate=x)

    left = fc < fd
    x = np.where(left, c, d)
    fx = np.where(left, fc, fd)
    return _shape_out(x, scalar), _shape_out(fx, scalar)
