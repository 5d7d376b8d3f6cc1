"""Large-N closed forms: bulk and edge counting regimes, and the rate function of lambda_min.

Each regime is parametrised by a single scaled noise level:

* bulk, ``gamma = d N / 4``: the count is extensive,
  ``E N / N -> int 2 p_MP(lam) exp(-(gamma/lam)(lam - s-)(s+ - lam)) dlam``;
* edge, ``omega = N^{1/3} d (s+ - s-)/4``: the count stays finite and
  decreases to 2 as ``omega`` grows;
* fixed ``sigma^2``: ``P(lambda_min ~ lam) ~ exp(-(N/2) Phi(lam))`` for ``lam < s-``.

Here ``d = ln(1 + sigma^2)/2`` and ``s+- = (sqrt(mu) +- 1)^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ensemble import DensityCurve, mp_density
from .errors import ConsistencyError, DivergenceError, DomainError
from .numerics import Tolerance, airy_ai_scaled, airy_tail, integrate

__all__ = [
    "BulkParams",
    "EdgeParams",
    "LdpParams",
    "bulk_density",
    "bulk_mean_count",
    "bulk_large_gamma",
    "edge_density",
    "edge_mean_count",
    "ldp_rate",
    "lambda_star",
    "typical_min_loss",
    "tabulate",
]

ASYM_TOL = Tolerance(abs_tol=1e-13, rel_tol=1e-11, max_iter=500)


def _edges(mu: float):
    r = math.sqrt(mu)
    return (r - 1.0) ** 2, (r + 1.0) ** 2


@dataclass(frozen=True)
class BulkParams:
    mu: float
    gamma: float

    def __post_init__(self):
        if not self.mu > 1:
            raise DomainError("mu must exceed 1")
        if not self.gamma >= 0:
            raise DomainError("gamma must be nonnegative")


@dataclass(frozen=True)
class EdgeParams:
    mu: float
    omega: float

    def __post_init__(self):
        if not self.mu > 1:
            raise DomainError("mu must exceed 1")
        if not self.omega >= 0:
            raise DomainError("omega must be nonnegative")


@dataclass(frozen=True)
class LdpParams:
    mu: float
    sigma2: float

    def __post_init__(self):
        if not self.mu > 1:
            raise DomainError("mu must exceed 1")
        if not self.sigma2 > 0:
            raise DomainError("sigma2 must be positive")

    @property
    def kappa(self) -> float:
        return (self.mu - 1.0) * self.sigma2 / (2.0 * math.sqrt(1.0 + self.sigma2))

    @property
    def s_minus(self) -> float:
        return _edges(self.mu)[0]

    @property
    def s_plus(self) -> float:
        return _edges(self.mu)[1]


def tabulate(f, grid, normalization: float = 1.0, **meta) -> DensityCurve:
    """Evaluate a density ``f`` on ``grid`` and wrap it for CSV export."""
    grid = np.asarray(grid, dtype=float)
    return DensityCurve(grid, np.asarray(f(grid), dtype=float), normalization, meta=dict(meta))


# ---------------------------------------------------------------------------
# bulk


def bulk_density(lam, bp: BulkParams):
    """``2 p_MP(lam) exp(-(gamma/lam)(lam - s-)(s+ - lam))``, zero off the support."""
    lam = np.asarray(lam, dtype=float)
    sm, spl = _edges(bp.mu)
    inside = (lam > sm) & (lam < spl)
    safe = np.where(inside, lam, 0.5 * (sm + spl))
    damp = np.exp(-bp.gamma * (safe - sm) * (spl - safe) / safe)
    out = np.where(inside, 2.0 * np.asarray(mp_density(safe, bp.mu)) * damp, 0.0)
    return float(out) if out.ndim == 0 else out


def bulk_mean_count(bp: BulkParams, tol: Tolerance = ASYM_TOL) -> float:
    """Limit of ``E N / N``: integral of :func:`bulk_density` over ``[s-, s+]``.

    With ``lam = mu + 1 - 2 sqrt(mu) cos(theta)`` the square-root edge zeros
    disappear and the integrand becomes
    ``(4 mu / pi) sin^2(theta) exp(-4 gamma mu sin^2(theta) / lam) / lam``.
    """
    mu, g = bp.mu, bp.gamma
    r = 2.0 * math.sqrt(mu)

    def f(theta):
        s = math.sin(theta)
        lam = mu + 1.0 - r * math.cos(theta)
        return r * r * s * s * math.exp(-g * r * r * s * s / lam) / (math.pi * lam)

    # the integrand concentrates near both ends as gamma grows
    if g > 1:
        w = min(0.5, 3.0 / math.sqrt(g))
        pts = [w, math.pi - w]
        return integrate(f, 0.0, math.pi, tol, points=pts)
    return integrate(f, 0.0, math.pi, tol)


def bulk_large_gamma(gamma: float) -> float:
    """Large-gamma asymptote ``gamma^{-3/2} / (4 sqrt(pi))``."""
    return gamma ** -1.5 / (4.0 * math.sqrt(math.pi))


# ---------------------------------------------------------------------------
# edge


def _edge_parts(zeta):
    """Return ``(a, b, S)`` with ``rho_edge = a e^{-2S} + b e^{-S}``.

    ``a = Ai'^2 - zeta Ai^2`` and ``b = Ai (1 - tail)/2``, both with the
    Airy decay ``e^{-S}``, ``S = (2/3) zeta^{3/2}`` for zeta > 0, factored out.
    """
    zeta = np.asarray(zeta, dtype=float)
    ai, aip, s = airy_ai_scaled(zeta)
    a = aip * aip - zeta * ai * ai
    b = 0.5 * ai * (1.0 - np.asarray(airy_tail(zeta)))
    return a, b, np.asarray(s)


def edge_density(zeta):
    """``Ai'(z)^2 - z Ai(z)^2 + Ai(z)(1 - int_z^inf Ai)/2``."""
    a, b, s = _edge_parts(zeta)
    with np.errstate(under="ignore"):
        out = a * np.exp(-2.0 * s) + b * np.exp(-s)
    out = np.maximum(out, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def _edge_weighted(zeta, rate: float):
    """``exp(rate zeta - rate^3/3) rho_edge(zeta)`` without intermediate overflow."""
    a, b, s = _edge_parts(zeta)
    e = rate * np.asarray(zeta) - rate**3 / 3.0
    with np.errstate(under="ignore"):
        out = a * np.exp(e - 2.0 * s) + b * np.exp(e - s)
    return np.maximum(out, 0.0)


def _edge_integral(rate: float, tol: Tolerance, tail_rtol: float = 1e-14) -> float:
    """``int exp(rate zeta - rate^3/3) rho_edge(zeta) dzeta`` over the real line.

    The integrand peaks near ``zeta = rate^2`` with width ``~rate^{-1/2}``;
    panels of width ``w`` march outwards from that peak in both directions
    until a panel adds less than ``tail_rtol`` of the running total.
    """
    f = lambda z: float(_edge_weighted(z, rate))
    centre = rate * rate
    width = max(1.0, 2.0 / math.sqrt(rate), 0.5 * (1.0 / rate))
    total = integrate(f, centre - width, centre + width, tol)
    # rightwards: super-exponential Airy decay
    hi = centre + width
    while True:
        part = integrate(f, hi, hi + width, tol)
        total += part
        hi += width
        if part <= tail_rtol * total:
            break
    # leftwards: oscillatory, damped by exp(rate zeta); panels widen geometrically
    lo = centre - width
    step = width
    quiet = 0
    while quiet < 2:
        a = lo - step
        # breakpoints keep quad from straddling many Airy oscillations at once
        n_br = int(min(200, max(0, (lo - a) * math.sqrt(max(abs(a), 1.0)) / 3.0)))
        pts = list(np.linspace(a, lo, n_br + 2)[1:-1]) if n_br else None
        part = integrate(f, a, lo, tol, points=pts)
        total += part
        lo = a
        step = min(2.0 * step, 20.0)
        quiet = quiet + 1 if abs(part) <= tail_rtol * total else 0
        if lo < -1e5:
            raise DivergenceError("edge integral did not converge on the left")
    return total


def edge_mean_count(ep: EdgeParams, tol: Tolerance = ASYM_TOL) -> float:
    """Limit of the mean count at fixed ``omega``.

    ``2 sum_{s in {s-, s+}} int exp(-omega^3/(3s) + omega zeta / s^{1/3}) rho_edge(zeta) dzeta``.
    At ``omega = 0`` the integral diverges (rho_edge grows like sqrt|zeta|);
    small noise belongs to the bulk regime, see :func:`bulk_mean_count`.
    """
    if ep.omega == 0:
        raise DivergenceError("edge count diverges at omega = 0; use the bulk regime")
    total = 0.0
    for s in _edges(ep.mu):
        total += _edge_integral(ep.omega / s ** (1.0 / 3.0), tol)
    return 2.0 * total


# ---------------------------------------------------------------------------
# large deviations of the smallest multiplier


def _root_product(lam, sm, spl):
    # sqrt((lam - s-)(lam - s+)) for lam < s-, factored to avoid cancellation
    return np.sqrt(sm - lam) * np.sqrt(spl - lam)


def _log_checked(x, name):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError(f"non-positive argument in {name}")
    return np.log(x)


def ldp_rate(lam, lp: LdpParams):
    """Rate ``Phi = L1 + L2 + ((mu + 1)/2) ln(1 + sigma^2)`` for ``lam < s-``."""
    lam = np.asarray(lam, dtype=float)
    mu, k = lp.mu, lp.kappa
    sm, spl = lp.s_minus, lp.s_plus
    if np.any(~(lam < sm)):
        raise DomainError("ldp_rate is defined for lambda < s_minus only")
    hyp = np.hypot(lam, k)
    l1 = (mu - 1.0) * (
        hyp / k
        - _log_checked(k + hyp, "L1 logarithm")
        - lam * math.sqrt((mu - 1.0) ** 2 + k * k) / ((mu - 1.0) * k)
    )
    R = _root_product(lam, sm, spl)
    two_rmu = 2.0 * math.sqrt(mu)
    first = (mu + 1.0 - lam + R) / two_rmu
    # lam + R = (R^2 - lam^2)/(R - lam), and R^2 - lam^2 = (mu-1)^2 - 2(mu+1) lam
    lam_plus_r = ((mu - 1.0) ** 2 - 2.0 * (mu + 1.0) * lam) / (R - lam)
    second = (mu - 1.0 + lam_plus_r) / two_rmu
    l2 = -R - 2.0 * _log_checked(first, "L2 first logarithm") + 2.0 * (mu - 1.0) * _log_checked(
        second, "L2 second logarithm"
    )
    out = l1 + l2 + 0.5 * (mu + 1.0) * math.log1p(lp.sigma2)
    return float(out) if out.ndim == 0 else out


def lambda_star(lp: LdpParams, verify: bool = True) -> float:
    """Most probable smallest multiplier ``(sqrt(mu) - sqrt(1+s2))(sqrt(mu) - 1/sqrt(1+s2))``.

    With ``verify`` the rate's central difference at ``lambda*`` is checked
    to vanish (relative to the rate's curvature scale) when ``lambda* < s-``.
    """
    r = math.sqrt(1.0 + lp.sigma2)
    val = (math.sqrt(lp.mu) - r) * (math.sqrt(lp.mu) - 1.0 / r)
    if verify and val < lp.s_minus:
        h = 1e-5 * max(1.0, abs(val), lp.s_minus - val)
        h = min(h, 0.25 * (lp.s_minus - val))
        fp, fm, f0 = ldp_rate(val + h, lp), ldp_rate(val - h, lp), ldp_rate(val, lp)
        slope = (fp - fm) / (2 * h)
        curv = (fp - 2 * f0 + fm) / (h * h)
        if abs(slope) > 1e-4 * max(abs(curv), 1.0):
            raise ConsistencyError(f"rate slope {slope:.3g} at lambda* is not zero")
    return val


def typical_min_loss(lp: LdpParams) -> float:
    """Limit of ``E_min / N``: ``((sqrt(mu (1 + sigma^2)) - 1)^2)/2``."""
    return 0.5 * (math.sqrt(lp.mu * (1.0 + lp.sigma2)) - 1.0) ** 2
