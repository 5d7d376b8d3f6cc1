"""Special functions: log-gamma, log-scaled Bessel K, Airy functions.

Ai and Ai' come from :mod:`scipy.special`; what is built here is the
log-space plumbing around them (Bessel K for large orders at small
arguments, exponentially scaled Airy values) and the Airy tail integral
``int_x^inf Ai``, which scipy does not provide to double precision.
"""

from __future__ import annotations

import functools

import numpy as np
from scipy import special as sp

from ..errors import DomainError

__all__ = [
    "log_gamma",
    "log_bessel_k_scaled",
    "airy_ai",
    "airy_ai_prime",
    "airy_ai_scaled",
    "airy_tail",
]


def _out(value):
    value = np.asarray(value, dtype=float)
    return float(value) if value.ndim == 0 else value


def log_gamma(x):
    """Natural log of the gamma function for positive ``x``."""
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("log_gamma requires x > 0")
    return _out(sp.gammaln(x))


def log_bessel_k_scaled(nu, z):
    """Return ``ln(exp(z) * K_nu(z))`` for ``nu >= 0`` and ``z > 0``.

    ``scipy.special.kve`` is used where it is finite.  For large orders at
    small arguments ``K_nu`` overflows; there the value is rebuilt from the
    two lowest orders of the same fractional part by the upward ratio
    recurrence ``K_{m+1}/K_m = K_{m-1}/K_m + 2m/z``, which is stable in the
    direction of growth and never leaves log space.  Above ``z = 1e8``
    (where scipy eventually returns nan) the Hankel expansion is summed.
    """
    nu = float(nu)
    z = np.asarray(z, dtype=float)
    if nu < 0:
        raise DomainError("log_bessel_k_scaled requires nu >= 0")
    if np.any(~(z > 0)):
        raise DomainError("log_bessel_k_scaled requires z > 0")
    zz = np.atleast_1d(z)
    big = zz > _HANKEL_FROM
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        out = np.log(sp.kve(nu, np.where(big, 1.0, zz)))
    if np.any(big):
        out[big] = _log_kve_hankel(nu, zz[big])
    bad = ~np.isfinite(out)
    if np.any(bad):
        out[bad] = _log_kve_by_recurrence(nu, zz[bad])
    return _out(out.reshape(z.shape))


_HANKEL_FROM = 1e8


def _log_kve_hankel(nu: float, z: np.ndarray) -> np.ndarray:
    """``e^z K_nu(z) = sqrt(pi/2z) sum_k a_k / z^k`` with a_k = prod_{j<=k} (4nu^2 - (2j-1)^2) / (k! 8^k)."""
    four_nu2 = 4.0 * nu * nu
    total = np.ones_like(z)
    term = np.ones_like(z)
    for k in range(1, 60):
        term = term * (four_nu2 - (2 * k - 1) ** 2) / (k * 8.0 * z)
        total = total + term
        if np.all(np.abs(term) < 1e-17 * np.abs(total)):
            break
    return 0.5 * np.log(np.pi / (2.0 * z)) + np.log(total)


def _log_kve_by_recurrence(nu: float, z: np.ndarray) -> np.ndarray:
    base = nu - np.floor(nu)
    with np.errstate(over="ignore", divide="ignore"):
        log_k = np.log(sp.kve(base, z))
        log_k1 = np.log(sp.kve(base + 1.0, z))
    if not np.all(np.isfinite(log_k)) or not np.all(np.isfinite(log_k1)):
        raise DomainError("Bessel K argument too small to represent")
    order = base + 1.0
    if order > nu:
        return log_k
    log_ratio = log_k1 - log_k
    acc = log_k + log_ratio
    # ratio_m = 1/ratio_{m-1} + 2m/z, accumulated as logs
    while order + 0.5 < nu:
        log_ratio = np.logaddexp(-log_ratio, np.log(2.0 * order / z))
        acc = acc + log_ratio
        order += 1.0
    return acc


def airy_ai(x):
    """Airy function Ai."""
    return _out(sp.airy(np.asarray(x, dtype=float))[0])


def airy_ai_prime(x):
    """Derivative Ai'."""
    return _out(sp.airy(np.asarray(x, dtype=float))[1])


def airy_ai_scaled(x):
    """Return ``(Ai(x) e^{s}, Ai'(x) e^{s}, s)`` with ``s = (2/3) x^{3/2}`` for x > 0, else 0.

    Lets callers form products with large exponentials without underflow.
    """
    x = np.asarray(x, dtype=float)
    pos = x > 0
    ai, aip = sp.airy(np.where(pos, 0.0, x))[:2]
    eai, eaip = sp.airye(np.where(pos, x, 0.0))[:2]
    pos_x = np.where(pos, x, 0.0)
    s = np.where(pos, 2.0 / 3.0 * pos_x * np.sqrt(pos_x), 0.0)
    return _out(np.where(pos, eai, ai)), _out(np.where(pos, eaip, aip)), _out(s)


# Airy tail table: cumulative Gauss-Legendre panels on [-12, 12], anchored at
# tail(0) = 1/3; beyond the table the integration-by-parts series is used.
_TABLE_LO = -12.0
_TABLE_HI = 12.0
_PANEL = 0.5
_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


@functools.lru_cache(maxsize=1)
def _tail_table():
    edges = np.arange(_TABLE_LO, _TABLE_HI + 0.5 * _PANEL, _PANEL)
    half = 0.5 * _PANEL
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = mid[:, None] + half * _GL_X
    panels = half * (sp.airy(nodes)[0] @ _GL_W)
    cum = np.concatenate([[0.0], np.cumsum(panels)])
    zero = int(round(-_TABLE_LO / _PANEL))
    tails = 1.0 / 3.0 + (cum[zero] - cum)
    tails.setflags(write=False)
    edges.setflags(write=False)
    return edges, tails


def _parts_series(x: np.ndarray) -> np.ndarray:
    """Sum of c_k [Ai' x^{-3k-1} + (3k+1) Ai x^{-3k-2}], c_{k+1} = c_k (3k+1)(3k+2).

    Equals int_{-inf}^x Ai for x << 0 and -int_x^inf Ai for x >> 0 (repeated
    integration by parts using Ai = Ai''/t).  Summed up to the smallest term.
    """
    ai, aip = sp.airy(x)[:2]
    total = np.zeros_like(x)
    coef = np.ones_like(x)
    inv3 = 1.0 / x**3
    power = np.ones_like(x)
    last = np.full_like(x, np.inf)
    active = np.ones(x.shape, dtype=bool)
    for k in range(200):
        term = coef * power * (aip / x + (3 * k + 1) * ai / x**2)
        mag = np.abs(term)
        active &= mag < last
        if not np.any(active):
            break
        total = np.where(active, total + term, total)
        last = mag
        coef = coef * (3 * k + 1) * (3 * k + 2)
        power = power * inv3
        active &= mag > 1e-18 * np.abs(total)
    return total


def airy_tail(x):
    """Return ``int_x^inf Ai(t) dt``.

    Table of Gauss-Legendre panels anchored at ``tail(0) = 1/3`` on
    [-12, 12] plus a partial panel; asymptotic integration-by-parts series
    outside the table.  Absolute error is below 1e-11 everywhere.
    """
    x = np.asarray(x, dtype=float)
    flat = np.array(x, ndmin=1, dtype=float).ravel()
    out = np.empty_like(flat)
    edges, tails = _tail_table()

    low = flat < _TABLE_LO
    high = flat > _TABLE_HI
    mid = ~(low | high)
    if np.any(low):
        out[low] = 1.0 - _parts_series(flat[low])
    if np.any(high):
        out[high] = -_parts_series(flat[high])
    if np.any(mid):
        xm = flat[mid]
        k = np.clip(np.floor((xm - _TABLE_LO) / _PANEL).astype(int), 0, len(edges) - 2)
        left = edges[k]
        half = 0.5 * (xm - left)
        nodes = (left + half)[:, None] + half[:, None] * _GL_X
        partial = half * (sp.airy(nodes)[0] @ _GL_W)
        out[mid] = tails[k] - partial
    return _out(out.reshape(x.shape))
