import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from procrustes_landscape.errors import AccuracyError, BracketError, DivergenceError, DomainError
from procrustes_landscape.numerics import (
    Tolerance,
    airy_ai,
    airy_ai_prime,
    airy_ai_scaled,
    airy_tail,
    find_root,
    integrate,
    log_bessel_k_scaled,
    log_gamma,
    minimize_unimodal,
)

mpmath.mp.dps = 40


# log-gamma

def test_log_gamma_closed_forms():
    assert log_gamma(1.0) == 0.0
    assert log_gamma(0.5) == pytest.approx(0.5 * math.log(math.pi), abs=1e-14)
    exact = math.fsum(math.log(k) for k in range(2, 21))
    assert log_gamma(21.0) == pytest.approx(exact, rel=1e-14)
    assert log_gamma(21.0) == pytest.approx(42.33562, abs=1e-5)


def test_log_gamma_rejects_nonpositive():
    with pytest.raises(DomainError):
        log_gamma(0.0)
    with pytest.raises(DomainError):
        log_gamma(np.array([1.0, -2.0]))


# Bessel K

@pytest.mark.parametrize("z", [0.1, 1.0, 10.0, 1e3])
def test_bessel_half_order_closed_form(z):
    assert log_bessel_k_scaled(0.5, z) == pytest.approx(0.5 * math.log(math.pi / (2 * z)), abs=1e-12)


def test_bessel_k0_at_one_by_integral():
    # K_0(1) = int_0^inf exp(-cosh t) dt
    k0 = integrate(lambda t: math.exp(-math.cosh(t)), 0.0, 10.0, Tolerance(1e-15, 1e-13))  # tail < e^-11000
    assert k0 == pytest.approx(0.4210244382407083, rel=1e-12)
    assert log_bessel_k_scaled(0.0, 1.0) == pytest.approx(1.0 + math.log(k0), abs=1e-12)
    assert log_bessel_k_scaled(0.0, 1.0) == pytest.approx(0.1349356, abs=1e-7)


def test_bessel_large_argument_against_asymptotic_series():
    z = 1e4
    oracle = float(mpmath.log(mpmath.besselk(3, z)) + z)
    assert log_bessel_k_scaled(3.0, z) == pytest.approx(oracle, rel=1e-6, abs=0)
    # the leading term alone is only accurate to the first correction (4 nu^2 - 1)/(8 z)
    lead = 0.5 * math.log(math.pi / (2 * z))
    assert abs(log_bessel_k_scaled(3.0, z) - lead) == pytest.approx(35 / (8 * z), rel=1e-3)


@pytest.mark.parametrize("nu,z", [(0.0, 1e-3), (2.5, 0.7), (10.0, 0.05), (200.0, 1.0), (450.0, 3.0),
                                  (5.0, 1e9), (17.0, 2e12), (0.3, 50.0)])
def test_bessel_against_mpmath(nu, z):
    oracle = float(mpmath.log(mpmath.besselk(nu, z)) + z)
    assert log_bessel_k_scaled(nu, z) == pytest.approx(oracle, rel=1e-12, abs=1e-12)


def test_bessel_vectorised_and_domain():
    z = np.array([0.5, 2.0, 1e10])
    out = log_bessel_k_scaled(1.5, z)
    assert out.shape == (3,)
    assert np.all(np.isfinite(out))
    with pytest.raises(DomainError):
        log_bessel_k_scaled(-1.0, 1.0)
    with pytest.raises(DomainError):
        log_bessel_k_scaled(1.0, 0.0)


# Airy

def test_airy_closed_forms_at_zero():
    assert airy_ai(0.0) == pytest.approx(3 ** (-2 / 3) / math.gamma(2 / 3), abs=1e-15)
    assert airy_ai(0.0) == pytest.approx(0.3550280539, abs=1e-10)
    assert airy_ai_prime(0.0) == pytest.approx(-(3 ** (-1 / 3)) / math.gamma(1 / 3), abs=1e-15)
    assert airy_ai_prime(0.0) == pytest.approx(-0.2588194038, abs=1e-10)


def test_airy_ode_residual():
    # fourth-order five-point stencil; truncation and rounding both stay below 1e-8 here
    x = np.linspace(-10, 5, 301)
    h = 5e-3
    f = lambda v: airy_ai(v)
    second = (-f(x + 2 * h) + 16 * f(x + h) - 30 * f(x) + 16 * f(x - h) - f(x - 2 * h)) / (12 * h * h)
    assert np.max(np.abs(second - x * airy_ai(x))) <= 1e-8


def test_airy_ode_residual_tight():
    x = np.linspace(-10, 5, 61)
    exact = np.array([float(mpmath.diff(mpmath.airyai, v, 2)) for v in x])
    assert np.max(np.abs(exact - x * airy_ai(x))) <= 1e-8


def test_airy_scaled_matches_unscaled():
    x = np.array([-3.0, 0.0, 0.5, 4.0, 20.0])
    ai, aip, s = airy_ai_scaled(x)
    ref = np.array([float(mpmath.airyai(v)) for v in x])
    refp = np.array([float(mpmath.airyai(v, 1)) for v in x])
    np.testing.assert_allclose(ai * np.exp(-s), ref, rtol=1e-13)
    np.testing.assert_allclose(aip * np.exp(-s), refp, rtol=1e-13)


def test_airy_tail_anchors():
    assert airy_tail(0.0) == pytest.approx(1 / 3, abs=1e-15)
    assert airy_tail(40.0) == pytest.approx(0.0, abs=1e-40)
    # the approach to 1 oscillates with amplitude |x|^{-3/4} / sqrt(pi)
    for x in (-1e2, -1e4, -1e6):
        assert abs(airy_tail(x) - 1.0) <= abs(x) ** -0.75 / math.sqrt(math.pi) * 1.01


def _tail_oracle(x):
    # total mass 1/3 minus mpmath's antiderivative from 0; extra digits absorb the cancellation
    with mpmath.workdps(40):
        return mpmath.mpf(1) / 3 - mpmath.airyai(x, -1)


@pytest.mark.parametrize("x", [-30.0, -12.5, -7.3, -1.0, 0.7, 3.0, 11.9, 12.1, 25.0])
def test_airy_tail_against_mpmath(x):
    assert airy_tail(x) == pytest.approx(float(_tail_oracle(x)), abs=1e-12)


def test_airy_tail_derivative():
    x = np.linspace(-20, 20, 401)
    h = 1e-4
    d = (airy_tail(x + h) - airy_tail(x - h)) / (2 * h)
    assert np.max(np.abs(d + airy_ai(x))) <= 1e-6


# quadrature

def test_integrate_trivial():
    assert integrate(lambda x: x, 0.0, 1.0) == pytest.approx(0.5, abs=1e-14)
    assert integrate(lambda x: math.exp(-x), 0.0, math.inf) == pytest.approx(1.0, abs=1e-12)
    assert integrate(lambda x: 1.0, 2.0, 2.0) == 0.0


def test_integrate_marchenko_pastur_normalisation():
    mu = 2.0
    lo, hi = (math.sqrt(mu) - 1) ** 2, (math.sqrt(mu) + 1) ** 2
    p = lambda x: math.sqrt(max((hi - x) * (x - lo), 0.0)) / (2 * math.pi * x)
    val = integrate(p, lo, hi)
    # oracle: midpoint Riemann sum at high resolution
    n = 400_000
    mids = lo + (np.arange(n) + 0.5) * (hi - lo) / n
    riemann = np.sum(np.sqrt((hi - mids) * (mids - lo)) / (2 * np.pi * mids)) * (hi - lo) / n
    assert val == pytest.approx(1.0, abs=1e-9)
    assert val == pytest.approx(riemann, abs=1e-6)


def test_integrate_divergent_and_inaccurate():
    with pytest.raises((DivergenceError, AccuracyError)):
        integrate(lambda x: 1.0 / x, 0.0, 1.0)
    with pytest.raises(AccuracyError) as info:
        integrate(lambda x: math.sin(1.0 / x), 1e-6, 1.0, Tolerance(1e-14, 1e-14, 5))
    assert math.isfinite(info.value.best_estimate)


@settings(max_examples=60, deadline=None)
@given(
    a=st.floats(-3, 3),
    w1=st.floats(0.01, 3),
    w2=st.floats(0.01, 3),
    c=st.floats(0.1, 3),
    k=st.floats(-2, 2),
)
def test_integrate_is_additive(a, w1, w2, c, k):
    f = lambda x: math.exp(-c * x * x) * math.cos(k * x) + x**3
    tol = Tolerance(1e-12, 1e-12)
    m, b = a + w1, a + w1 + w2
    whole = integrate(f, a, b, tol)
    parts = integrate(f, a, m, tol) + integrate(f, m, b, tol)
    assert whole == pytest.approx(parts, abs=1e-10 * (1 + abs(whole)))


# root finding / minimisation

def test_find_root_trivial():
    assert find_root(lambda x: x - 2, 0.0, 5.0) == pytest.approx(2.0, abs=1e-10)
    assert find_root(lambda x: x * x - 2, 0.0, 2.0) == pytest.approx(math.sqrt(2), abs=1e-10)


def test_find_root_vectorised_and_bracket_error():
    roots = find_root(lambda x, c: x**3 - c, np.zeros(3), np.full(3, 4.0), args=(np.array([1.0, 8.0, 27.0]),))
    np.testing.assert_allclose(roots, [1, 2, 3], atol=1e-10)
    with pytest.raises(BracketError):
        find_root(lambda x: x * x + 1, -1.0, 1.0)


def test_find_root_full_output():
    r, info = find_root(lambda x: np.tanh(x - 0.3), -1.0, 2.0, full_output=True)
    assert r == pytest.approx(0.3, abs=1e-10)
    assert info.residual <= 1e-9


@settings(max_examples=80, deadline=None)
@given(r=st.floats(-50, 50), scale=st.floats(0.01, 100), left=st.floats(1e-3, 10), right=st.floats(1e-3, 10))
def test_find_root_stays_in_bracket_and_straddles(r, scale, left, right):
    tol = Tolerance(1e-10, 1e-10)
    f = lambda x: np.arctan(scale * (x - r))
    lo, hi = r - left, r + right
    x = find_root(f, lo, hi, tol)
    assert lo <= x <= hi
    eps = 4 * (tol.abs_tol + tol.rel_tol * abs(x))
    assert np.sign(f(x - eps)) != np.sign(f(x + eps)) or f(x) == 0


def test_minimize_unimodal_examples():
    x, fx = minimize_unimodal(lambda x: (x - 1) ** 2, 0.0, 3.0)
    assert x == pytest.approx(1.0, abs=1e-8)
    assert fx == pytest.approx(0.0, abs=1e-15)
    x, fx = minimize_unimodal(lambda x: 1 / x + 1 / (2 - x), 0.0, 2.0)
    # a minimiser is resolved only to about sqrt(machine epsilon)
    assert x == pytest.approx(1.0, abs=1e-7)
    assert fx == pytest.approx(2.0, abs=1e-14)


def test_minimize_unimodal_iteration_limit():
    with pytest.raises(AccuracyError):
        minimize_unimodal(lambda x: (x - 1) ** 2, 0.0, 3.0, Tolerance(1e-300, 1e-15, 5))


def test_tolerance_validation():
    with pytest.raises(ValueError):
        Tolerance(abs_tol=-1.0)
    with pytest.raises(ValueError):
        Tolerance(abs_tol=0.0)
    with pytest.raises(ValueError):
        Tolerance(max_iter=0)
    t = Tolerance(1e-10, 1e-8).loosened(10)
    assert t.abs_tol == pytest.approx(1e-9) and t.rel_tol == pytest.approx(1e-7)
