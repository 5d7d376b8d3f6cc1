"""Stationary points of ``H(x) = |A x - sigma xi|^2 / 2`` on the sphere ``|x|^2 = N``.

A stationary point solves ``(A^T A - lam) x = sigma A^T xi`` with the
multiplier ``lam`` fixed by the norm constraint, which in the eigenbasis
becomes the secular equation

    g(lam) = sum_i s_i t_i / (lam - s_i)^2 = N / sigma^2 .

``g`` is convex between consecutive poles, so each gap holds 0 or 2 roots
(1 at tangency), and there is always one root below ``s_1`` and one above
``s_N``.

All root finding happens in pole-offset coordinates ``lam = pole + u`` with
the differences ``pole - s_j`` precomputed, so roots that sit within
``1e-10`` of a pole keep full relative precision.  On each bracket the
solver works with ``1/sqrt(g) - sqrt(sigma^2/N)``, which is finite at the
poles and nearly linear next to them.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .ensemble import Instance, Spectrum, spectrum as compute_spectrum
from .errors import (
    ConsistencyError,
    DegenerateInstanceError,
    DomainError,
    PoleError,
    SingularityError,
)
from .numerics import Tolerance, find_root, minimize_unimodal

__all__ = [
    "ROOT_TOL",
    "MIN_TOL",
    "TANGENCY_RTOL",
    "StationaryProfile",
    "SecularSystem",
    "secular_lhs",
    "solve_secular",
    "count_roots",
    "stationary_vector",
    "loss_at",
    "profile",
    "staircase",
    "smallest_multipliers",
]

# root brackets are in pole-offset units, so abs_tol resolves offsets near 0
ROOT_TOL = Tolerance(abs_tol=1e-15, rel_tol=1e-13, max_iter=200)
# golden-section stop: bracket below 1e-10 of the distance to the nearer pole
MIN_TOL = Tolerance(abs_tol=1e-300, rel_tol=1e-10, max_iter=200)
TANGENCY_RTOL = 1e-9
MERGE_RTOL = 1e-13


def secular_lhs(lam: float, spec: Spectrum) -> float:
    """``g(lam) = sum_i s_i t_i / (lam - s_i)^2`` summed from the smallest term up."""
    lam = float(lam)
    d = lam - spec.s
    active = spec.t > 0
    if np.any(d[active] == 0):
        raise PoleError(f"lambda={lam} is a pole of the secular function")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(active, spec.s * spec.t / d**2, 0.0)
    return math.fsum(np.sort(terms))


class SecularSystem:
    """Pole structure of one spectrum, reusable across noise levels.

    Poles closer than ``1e-13 s_N`` are merged (summed weight); interior
    minima of ``g`` on every gap are computed once on construction since
    they do not depend on ``sigma``.
    """

    def __init__(self, spec: Spectrum, min_tol: Tolerance = MIN_TOL):
        s, t = spec.s, spec.t
        zero = np.flatnonzero(t == 0)
        if zero.size:
            raise DegenerateInstanceError(f"zero weight at indices {zero.tolist()}", indices=zero.tolist())
        w = s * t
        poles, weights = [s[0]], [w[0]]
        gap = MERGE_RTOL * max(abs(s[-1]), 1e-300)
        for si, wi in zip(s[1:], w[1:]):
            if si - poles[-1] < gap:
                weights[-1] += wi
            else:
                poles.append(si)
                weights.append(wi)
        self.spec = spec
        self.poles = np.asarray(poles)
        self.weights = np.asarray(weights)
        self.merged = len(s) - len(poles)
        self.D = self.poles[:, None] - self.poles[None, :]
        self.total_weight = float(self.weights.sum())
        self.width = np.diff(self.poles)
        self._min_tol = min_tol
        self._minima = None

    @property
    def n_poles(self) -> int:
        return self.poles.size

    def g_offset(self, u, rows):
        """g at ``poles[rows] + u`` (elementwise in ``u`` and ``rows``)."""
        rows = np.asarray(rows, dtype=np.intp)
        d = np.asarray(u, dtype=float)[..., None] + self.D[rows]
        with np.errstate(divide="ignore"):
            return np.sum(self.weights / (d * d), axis=-1)

    def minima(self):
        """``(u_min, g_min)`` on each gap, ``u`` measured from the left pole."""
        if self._minima is None:
            k = self.n_poles - 1
            if k == 0:
                self._minima = (np.empty(0), np.empty(0))
            else:
                rows = np.arange(k)
                u, gmin = minimize_unimodal(
                    self.g_offset, np.zeros(k), self.width, self._min_tol, args=(rows,)
                )
                self._minima = (np.atleast_1d(u), np.atleast_1d(gmin))
        return self._minima

    def count(self, sigma2) -> np.ndarray | int:
        """Number of roots at each noise level (tangencies counted once)."""
        s2 = np.atleast_1d(np.asarray(sigma2, dtype=float))
        _, gmin = self.minima()
        out = np.empty(s2.shape, dtype=int)
        for i, v in enumerate(s2):
            if v == 0:
                out[i] = 2 * self.n_poles
                continue
            c = self.spec.N / v
            tangent = np.abs(gmin - c) <= TANGENCY_RTOL * c
            out[i] = 2 + 2 * int(np.sum((gmin < c) & ~tangent)) + int(np.sum(tangent))
        return int(out[0]) if np.ndim(sigma2) == 0 else out

    def solve(self, sigma2: float, tol: Tolerance = ROOT_TOL):
        """Roots of ``g = N/sigma^2``: ``(lambdas, tangent_mask, residuals)``."""
        if not sigma2 > 0:
            raise DomainError("sigma2 must be positive")
        c = self.spec.N / sigma2
        inv_sqrt_c = 1.0 / math.sqrt(c)
        u_min, gmin = self.minima()
        tangent = np.abs(gmin - c) <= TANGENCY_RTOL * c
        two = (gmin < c) & ~tangent
        gaps = np.flatnonzero(two)
        last = self.n_poles - 1
        # g(pole -+ reach) <= c, with equality for a single pole; the margin absorbs rounding there
        reach = math.sqrt(self.total_weight / c) * (1.0 + 1e-6)

        # bracket table in the coordinates of the pole listed in `rows`
        rows = np.concatenate([[0], gaps, gaps + 1, [last]])
        lo = np.concatenate([[-reach], np.zeros(gaps.size), u_min[gaps] - self.width[gaps], [0.0]])
        hi = np.concatenate([[0.0], u_min[gaps], np.zeros(gaps.size), [reach]])

        def h(u, r):
            with np.errstate(divide="ignore"):
                return 1.0 / np.sqrt(self.g_offset(u, r)) - inv_sqrt_c

        u = np.atleast_1d(find_root(h, lo, hi, tol, args=(rows,)))
        lambdas = self.poles[rows] + u
        tan_idx = np.flatnonzero(tangent)
        lambdas = np.concatenate([lambdas, self.poles[tan_idx] + u_min[tan_idx]])
        flags = np.concatenate([np.zeros(u.size, dtype=bool), np.ones(tan_idx.size, dtype=bool)])
        g_all = np.concatenate(
            [self.g_offset(u, rows), self.g_offset(u_min[tan_idx], tan_idx)]
        )
        order = np.argsort(lambdas, kind="stable")
        lambdas, flags, g_all = lambdas[order], flags[order], g_all[order]
        if (lambdas.size - flags.sum()) % 2:
            raise ConsistencyError("odd number of non-tangent roots")
        if np.any(np.diff(lambdas) <= 0):
            raise ConsistencyError("roots are not strictly increasing")
        return lambdas, flags, np.abs(g_all - c) / c


@dataclass(frozen=True, eq=False)
class StationaryProfile:
    lambdas: np.ndarray
    losses: np.ndarray | None = None
    residuals: np.ndarray | None = None
    tangent: np.ndarray | None = None
    sigma2: float | None = None

    @property
    def count(self) -> int:
        return int(self.lambdas.size)

    @property
    def lambda_min(self) -> float:
        return float(self.lambdas[0])

    @property
    def e_min(self) -> float | None:
        return None if self.losses is None else float(self.losses[0])

    def summary(self) -> dict:
        return {"count": self.count, "lambda_min": self.lambda_min, "e_min": self.e_min}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["lambda", "loss", "residual"])
            losses = self.losses if self.losses is not None else np.full(self.count, np.nan)
            res = self.residuals if self.residuals is not None else np.full(self.count, np.nan)
            for row in zip(self.lambdas, losses, res):
                writer.writerow([f"{v:.15g}" for v in row])

    def summary_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _as_spectrum(obj) -> Spectrum:
    return obj if isinstance(obj, Spectrum) else compute_spectrum(obj)


def solve_secular(spec: Spectrum, sigma2: float, tol: Tolerance = ROOT_TOL) -> StationaryProfile:
    lambdas, tangent, residuals = SecularSystem(spec).solve(sigma2, tol)
    return StationaryProfile(lambdas, None, residuals, tangent, float(sigma2))


def count_roots(spec: Spectrum, sigma2) -> np.ndarray | int:
    """Root count per noise level without locating the roots; ``sigma2 = 0`` gives ``2N``."""
    return SecularSystem(spec).count(sigma2)


def stationary_vector(inst, sigma2: float, lam: float, spec: Spectrum | None = None) -> np.ndarray:
    """``x = sum_i u_i sigma sqrt(s_i) (xi . v_i) / (s_i - lam)`` for right singular vectors ``u_i``."""
    spec = spec if spec is not None else _as_spectrum(inst)
    if spec.basis is None or spec.proj is None:
        raise DomainError("spectrum lacks singular vectors")
    d = spec.s - lam
    if np.any(d == 0):
        raise SingularityError(f"lambda={lam} is an eigenvalue of A^T A")
    coef = math.sqrt(sigma2) * np.sqrt(spec.s) * spec.proj / d
    return spec.basis @ coef


def loss_at(spec: Spectrum, sigma2: float, lam) -> np.ndarray:
    """Loss of the stationary point with multiplier ``lam``, from eigen-data only.

    ``A x - sigma xi`` has components ``sigma lam (xi . v_i)/(s_i - lam)`` on
    the range of ``A`` and ``-sigma xi_perp`` off it, so
    ``H = sigma^2/2 [lam^2 sum_i t_i/(s_i - lam)^2 + |xi|^2 - sum_i t_i]``.
    """
    if spec.xi_norm2 is None:
        raise DomainError("spectrum lacks |xi|^2")
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    perp = max(spec.xi_norm2 - math.fsum(spec.t), 0.0)
    d = spec.s[None, :] - lam[:, None]
    inner = lam**2 * np.sum(spec.t / d**2, axis=1)
    return 0.5 * sigma2 * (inner + perp)


def profile(inst: Instance, sigma2: float, tol: Tolerance = ROOT_TOL, spec: Spectrum | None = None,
            order_rtol: float = 1e-9) -> StationaryProfile:
    """All stationary points of one instance with their losses, ascending in ``lam``.

    Raises :class:`ConsistencyError` if the losses fail to increase with
    ``lam`` by more than ``order_rtol`` (relative).
    """
    spec = spec if spec is not None else _as_spectrum(inst)
    lambdas, tangent, residuals = SecularSystem(spec).solve(sigma2, tol)
    losses = loss_at(spec, sigma2, lambdas)
    drop = losses[:-1] - losses[1:]
    scale = np.maximum(np.abs(losses[:-1]), np.abs(losses[1:]))
    if np.any(drop > order_rtol * scale):
        raise ConsistencyError("loss does not increase with the multiplier")
    return StationaryProfile(lambdas, losses, residuals, tangent, float(sigma2))


def staircase(inst, sigma_grid, tol: Tolerance = MIN_TOL) -> np.ndarray:
    """Root count for each noise amplitude ``sigma`` in ``sigma_grid``."""
    sigma = np.asarray(sigma_grid, dtype=float)
    if sigma.size == 0:
        raise DomainError("empty sigma grid")
    system = SecularSystem(_as_spectrum(inst), tol)
    return system.count(sigma**2)


def smallest_multipliers(specs, sigma2: float, tol: Tolerance = ROOT_TOL):
    """Smallest root and its loss for a batch of spectra, solved in one vectorised pass.

    Returns ``(lambda_min, e_min)`` arrays.  Below ``s_1`` the secular
    function increases, and ``g(s_1 - r) <= c`` at ``r = sqrt(sum w / c)``,
    so every bracket is closed analytically.
    """
    specs = list(specs)
    if not specs:
        return np.empty(0), np.empty(0)
    if not sigma2 > 0:
        raise DomainError("sigma2 must be positive")
    for sp_ in specs:
        zero = np.flatnonzero(sp_.t == 0)
        if zero.size:
            raise DegenerateInstanceError(f"zero weight at indices {zero.tolist()}", indices=zero.tolist())
    S = np.stack([sp_.s for sp_ in specs])
    W = S * np.stack([sp_.t for sp_ in specs])
    D = S[:, :1] - S
    N = S.shape[1]
    c = N / sigma2
    inv_sqrt_c = 1.0 / math.sqrt(c)
    reach = np.sqrt(W.sum(axis=1) / c) * (1.0 + 1e-6)
    rows = np.arange(len(specs))

    def h(u, r):
        d = u[..., None] + D[r]
        with np.errstate(divide="ignore"):
            return 1.0 / np.sqrt(np.sum(W[r] / (d * d), axis=-1)) - inv_sqrt_c

    u = np.atleast_1d(find_root(h, -reach, np.zeros(len(specs)), tol, args=(rows,)))
    lam = S[:, 0] + u
    e_min = np.array([loss_at(sp_, sigma2, l)[0] for sp_, l in zip(specs, lam)])
    return lam, e_min
