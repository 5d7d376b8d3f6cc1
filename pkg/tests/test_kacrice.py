import math

import mpmath
import numpy as np
import pytest

from procrustes_landscape.ensemble import DensityCurve, ModelParams, mp_density, sample_instance, spectrum
from procrustes_landscape.errors import DegenerateParameterError, DomainError
from procrustes_landscape.kacrice import (
    KacRiceContext,
    build_context,
    density,
    density_neg,
    density_pos,
    expected_count,
    expected_counts_binned,
    limits_at_zero,
    zero_noise_density,
)
from procrustes_landscape.stationary import SecularSystem

mpmath.mp.dps = 50


@pytest.fixture(scope="module")
def ctx20():
    return build_context(ModelParams(20, 30, 0.25), samples=600, seed=1, max_sigma2=0.7)


def _synthetic_context(N, M, sigma2):
    """Context with a tabulated Marchenko-Pastur curve standing in for rho_N."""
    p = ModelParams(N, M, sigma2)
    grid = np.linspace(p.s_minus, p.s_plus, 2001)
    raw = DensityCurve(grid, N * mp_density(grid, p.mu), float(N))
    return KacRiceContext(p, raw.scaled(N / raw.integral()))


def _pos_oracle(lam, p, rho):
    """Positive-side density written literally with coth, in 50-digit arithmetic."""
    N, M, d = p.N, p.M, mpmath.mpf(p.delta)
    lam = mpmath.mpf(lam)
    z = N * lam / (2 * mpmath.sinh(d))
    return (2 * mpmath.sqrt(N / mpmath.pi) * mpmath.exp(-(M + N - 1) * d / 2) / mpmath.sqrt(mpmath.sinh(d))
            * mpmath.besselk((M - N) / mpmath.mpf(2), z) * mpmath.exp(N * lam / 2 * mpmath.coth(d))
            * rho * mpmath.sqrt(lam))


def _neg_oracle(lam, p):
    N, M, d = p.N, p.M, mpmath.mpf(p.delta)
    a = -mpmath.mpf(lam)
    pref = (mpmath.factorial(N) * mpmath.mpf(N) ** ((M - N) / mpmath.mpf(2)) * mpmath.mpf(2) ** (-(M + N - 3) / mpmath.mpf(2))
            / (mpmath.gamma(N / mpmath.mpf(2)) * mpmath.gamma(M / mpmath.mpf(2))))
    series = mpmath.fsum(mpmath.binomial(M - 1, N - 1 - j) * (N * a) ** j / mpmath.factorial(j) for j in range(N))
    return (pref * mpmath.exp(-(M + N - 1) * d / 2) / mpmath.sqrt(mpmath.sinh(d))
            * mpmath.exp(-N * a * (mpmath.coth(d) - 1) / 2) * a ** ((M - N) / mpmath.mpf(2)) * series
            * mpmath.besselk((M - N) / mpmath.mpf(2), N * a / (2 * mpmath.sinh(d))))


@pytest.mark.parametrize("sigma2", [0.005, 0.25, 0.7, 5.0])
def test_positive_density_against_literal_formula(ctx20, sigma2):
    ctx = ctx20.with_sigma2(sigma2) if sigma2 <= 0.7 else _synthetic_context(20, 30, sigma2)
    for lam in (0.05, 0.4, 1.3, 3.0, 4.2):
        rho = float(ctx.rho_N(lam))
        if rho == 0:
            continue
        assert density_pos(lam, ctx) == pytest.approx(float(_pos_oracle(lam, ctx.params, rho)), rel=1e-10)


@pytest.mark.parametrize("N,M,sigma2", [(20, 30, 0.25), (20, 30, 0.005), (7, 19, 2.0), (60, 90, 0.7)])
def test_negative_density_against_literal_formula(N, M, sigma2):
    ctx = _synthetic_context(N, M, sigma2)
    for lam in (-1e-4, -0.01, -0.3, -2.0, -9.0):
        ref = float(_neg_oracle(lam, ctx.params))
        assert density_neg(lam, ctx) == pytest.approx(ref, rel=1e-10, abs=1e-300)


def test_zero_noise_limit_pointwise(ctx20):
    ctx = ctx20.with_sigma2(1e-8)
    p = ctx.params
    grid = np.linspace(p.s_minus / 2, 2 * p.s_plus, 400)
    rho = np.asarray(ctx.rho_N(grid))
    keep = rho > 1e-6 * rho.max()
    ratio = np.asarray(density_pos(grid[keep], ctx)) / (2 * rho[keep])
    assert np.max(np.abs(ratio - 1)) <= 1e-3
    np.testing.assert_allclose(zero_noise_density(grid, ctx), 2 * rho)


def test_zero_noise_total_count(ctx20):
    total = expected_count(-math.inf, math.inf, ctx20.with_sigma2(1e-8))
    assert total == pytest.approx(40.0, rel=1e-2)
    exact = expected_count(-math.inf, math.inf, ctx20.with_sigma2(0.0))
    assert exact == pytest.approx(40.0, rel=1e-9)


def test_zero_noise_degenerate_branches(ctx20):
    ctx = ctx20.with_sigma2(0.0)
    with pytest.raises(DegenerateParameterError):
        density_pos(1.0, ctx)
    with pytest.raises(DegenerateParameterError):
        density_neg(-1.0, ctx)
    assert density(np.array([-1.0, 1.0]), ctx)[0] == 0.0


def test_domain_errors(ctx20):
    with pytest.raises(DomainError):
        density_pos(0.0, ctx20)
    with pytest.raises(DomainError):
        density_neg(0.5, ctx20)
    with pytest.raises(DomainError):
        expected_count(1.0, 1.0, ctx20)
    with pytest.raises(DomainError):
        expected_counts_binned([0.0, 1.0, 0.5], ctx20)


def test_context_validation(ctx20):
    bad = DensityCurve(np.linspace(0.1, 5, 50), np.ones(50), 20.0)
    with pytest.raises(DomainError):
        KacRiceContext(ModelParams(20, 30, 0.25), bad)
    # the tabulated tail was sized for sigma2 <= 0.7
    with pytest.raises(DomainError):
        ctx20.with_sigma2(50.0)


def test_negative_density_positive_and_decaying(ctx20):
    from procrustes_landscape.kacrice import _log_density_neg

    # positive wherever representable; the log stays finite even past underflow
    lam = -np.geomspace(1e-6, 50, 300)
    assert np.all(np.isfinite(_log_density_neg(lam, ctx20)))
    assert np.all(np.diff(_log_density_neg(lam[lam < -0.1], ctx20)) < 0)
    vals = density_neg(lam[lam > -1.0], ctx20)
    assert np.all(vals > 0) and np.all(np.isfinite(vals))
    far = density_neg(np.array([-50.0, -100.0, -1000.0]), ctx20)
    assert far[0] < 1e-20 and np.all(np.diff(far) <= 0)


def test_far_window_is_empty(ctx20):
    ctx = ctx20.with_sigma2(0.005)
    assert expected_count(2 * ctx.params.s_plus, 10 * ctx.params.s_plus, ctx) <= 1e-6


@pytest.mark.parametrize("a,m,b", [(-3.0, -0.4, -0.01), (-1.0, 0.0, 2.5), (0.2, 1.1, 4.0), (-math.inf, 0.3, math.inf)])
def test_expected_count_additive(ctx20, a, m, b):
    whole = expected_count(a, b, ctx20)
    assert whole == pytest.approx(expected_count(a, m, ctx20) + expected_count(m, b, ctx20), rel=1e-8, abs=1e-10)


def test_binned_counts_sum(ctx20):
    edges = np.linspace(-2, 8, 41)
    bins = expected_counts_binned(edges, ctx20)
    assert np.all(bins >= 0)
    assert bins.sum() == pytest.approx(expected_count(-2, 8, ctx20), rel=1e-8)


def test_limits_at_zero_are_reported(ctx20):
    left, right = limits_at_zero(ctx20)
    assert left > 0 and right > 0
    assert abs(left / right - 1) < 0.1


@pytest.mark.parametrize("N,M", [(500, 1000), (500, 501), (2, 3), (100, 1000)])
@pytest.mark.parametrize("sigma2", [1e-8, 1e-3, 1.0, 1e2])
def test_overflow_safety(N, M, sigma2):
    ctx = _synthetic_context(N, M, sigma2)
    p = ctx.params
    pos = np.linspace(1e-6, 2 * p.s_plus, 200)
    neg = np.linspace(-10, -1e-6, 200)
    assert np.all(np.isfinite(density_pos(pos, ctx)))
    assert np.all(np.isfinite(density_neg(neg, ctx)))
    assert np.all(np.isfinite(ctx.log_multiplier_pos(pos)))


def test_monte_carlo_ground_truth_small_system():
    # N=3 is cheap enough to pin the finite-N density against a large sample
    p = ModelParams(3, 5, 0.3)
    ctx = build_context(p, samples=5_000, seed=2)
    edges = np.array([-math.inf, -1.0, -0.3, 0.0, 0.3, 0.8, 1.5, 2.5, 4.0, math.inf])
    roots = []
    n = 5_000
    for k in range(n):
        sp = spectrum(sample_instance(p, 10_000 + k))
        roots.append(SecularSystem(sp).solve(p.sigma2)[0])
    per = np.stack([np.histogram(r, edges)[0] for r in roots])
    mean = per.mean(axis=0)
    se = per.std(axis=0) / math.sqrt(n)
    expect = expected_counts_binned(edges, ctx)
    z = (mean - expect) / np.hypot(se, 2e-3 * expect + 1.0 / n)
    assert np.max(np.abs(z)) < 4
    total = expected_count(-math.inf, math.inf, ctx)
    counts = per.sum(axis=1)
    assert abs(counts.mean() - total) < 4 * counts.std() / math.sqrt(n)


def test_edge_limit_of_positive_weight():
    # near s+- the exact weight p / (2 rho_N) tends to exp(-w^3/(3s) + w zeta / s^{1/3})
    # with w = omega mu^{-1/6}, omega = N^{1/3} delta (s+ - s-) / 4
    N, mu, omega = 300_000, 2.25, 1.0
    p = ModelParams.from_omega(N, int(mu * N), omega)
    ctx = _synthetic_context(p.N, p.M, p.sigma2)
    w = omega * mu ** (-1.0 / 6.0)
    zeta = np.array([-2.0, 0.0, 2.0])
    for s, outward in ((p.s_minus, -1.0), (p.s_plus, 1.0)):
        lam = s + outward * N ** (-2.0 / 3.0) * (4 * s * s / (p.s_plus - p.s_minus)) ** (1.0 / 3.0) * zeta
        exact = ctx.log_multiplier_pos(lam) - math.log(2.0)
        limit = -(w**3) / (3 * s) + w * zeta / s ** (1.0 / 3.0)
        np.testing.assert_allclose(exact, limit, atol=1e-2)
    # the same form evaluated at omega itself misses by O(1) at the lower edge
    s = p.s_minus
    lam = s - N ** (-2.0 / 3.0) * (4 * s * s / (p.s_plus - p.s_minus)) ** (1.0 / 3.0) * zeta
    unscaled = -(omega**3) / (3 * s) + omega * zeta / s ** (1.0 / 3.0)
    assert np.max(np.abs(ctx.log_multiplier_pos(lam) - math.log(2.0) - unscaled)) > 0.4


def test_estimator_selection():
    small = build_context(ModelParams(6, 9, 0.2), samples=20, seed=0)
    assert small.rho_N.meta["estimator"] == "conditional"
    big = build_context(ModelParams(120, 200, 0.01), samples=5, seed=0)
    assert big.rho_N.meta["estimator"] == "histogram"
    hist = build_context(ModelParams(6, 9, 0.2), samples=200, seed=0, estimator="histogram", bins=30)
    assert hist.rho_N.integral() == pytest.approx(6.0, rel=1e-12)
    # piecewise integration over the bin edges reproduces the bin sum at zero noise
    total = expected_count(0.0, math.inf, hist.with_sigma2(0.0))
    assert total == pytest.approx(12.0, rel=1e-9)
    with pytest.raises(DomainError):
        build_context(ModelParams(6, 9, 0.2), samples=5, estimator="kernel")
