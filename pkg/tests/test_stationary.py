import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import dense_gap_minimum, sign_scan_roots
from procrustes_landscape.ensemble import Instance, ModelParams, Spectrum, derive_seed, sample_instance, spectrum
from procrustes_landscape.errors import ConsistencyError, DegenerateInstanceError, DomainError, PoleError, SingularityError
from procrustes_landscape.stationary import (
    SecularSystem,
    StationaryProfile,
    count_roots,
    loss_at,
    profile,
    secular_lhs,
    smallest_multipliers,
    solve_secular,
    staircase,
    stationary_vector,
)


def _inst(N, M, seed):
    return sample_instance(ModelParams(N, M, 1.0), seed)


def test_secular_lhs_examples():
    spec = Spectrum(np.array([4.0]), np.array([1.0]))
    assert secular_lhs(0.0, spec) == 0.25
    one = Spectrum(np.array([1.0]), np.array([1.0]))
    for d in (2.0**-10, 0.5, 7.0):  # exactly representable offsets
        assert secular_lhs(1 + d, one) == secular_lhs(1 - d, one)
    with pytest.raises(PoleError):
        secular_lhs(1.0, one)


def test_secular_lhs_decays_outside_spectrum():
    spec = spectrum(_inst(5, 8, 1))
    left = np.array([secular_lhs(x, spec) for x in spec.s[0] - np.geomspace(1e-3, 1e4, 50)])
    right = np.array([secular_lhs(x, spec) for x in spec.s[-1] + np.geomspace(1e-3, 1e4, 50)])
    assert np.all(np.diff(left) < 0) and np.all(np.diff(right) < 0)
    assert left[-1] < 1e-6 and right[-1] < 1e-6


@pytest.mark.parametrize("s,t,sigma2", [(4.0, 1.0, 0.5), (0.3, 2.0, 3.0), (9.0, 1e-6, 1e-4), (3.62081174, 0.0246633, 0.0505424)])
def test_single_pole_closed_form(s, t, sigma2):
    prof = solve_secular(Spectrum(np.array([s]), np.array([t])), sigma2)
    r = math.sqrt(sigma2 * s * t)
    np.testing.assert_allclose(prof.lambdas, [s - r, s + r], rtol=1e-13)


def test_solver_matches_sign_scan_oracle():
    rng = np.random.default_rng(2024)
    for k in range(30):
        N = int(rng.integers(1, 7))
        M = N + int(rng.integers(1, 7))
        sigma2 = float(10 ** rng.uniform(-2, 1))
        spec = spectrum(_inst(N, M, derive_seed(5, 0, k)))
        got = solve_secular(spec, sigma2).lambdas
        ref = sign_scan_roots(spec.s, spec.t, sigma2, points=10**5)
        assert got.size == ref.size
        np.testing.assert_allclose(got, ref, atol=1e-6, rtol=0)


def test_residuals_and_parity():
    for k in range(40):
        spec = spectrum(_inst(10, 15, k))
        for sigma2 in (1e-6, 0.01, 0.25, 1.0, 10.0):
            prof = solve_secular(spec, sigma2)
            c = spec.N / sigma2
            g = np.array([secular_lhs(x, spec) for x in prof.lambdas])
            assert np.max(np.abs(g - c)) <= 1e-8 * c
            assert prof.count % 2 == 0
            assert np.all(np.diff(prof.lambdas) > 0)
            assert np.sum(prof.lambdas < spec.s[0]) == 1 and np.sum(prof.lambdas > spec.s[-1]) == 1
            inner = prof.lambdas[1:-1]
            gaps = np.searchsorted(spec.s, inner)
            assert np.all(np.bincount(gaps, minlength=spec.N + 1) % 2 == 0)


def test_noise_limits():
    spec = spectrum(_inst(5, 8, 3))
    small = solve_secular(spec, 1e-10)
    assert small.count == 10
    # pairs straddle each eigenvalue
    np.testing.assert_allclose(small.lambdas.reshape(5, 2).mean(axis=1), spec.s, rtol=1e-6)
    assert solve_secular(spec, 1e3).count == 2
    assert count_roots(spec, 0.0) == 10
    assert count_roots(spec, 1e3) == 2


def test_count_agrees_with_solve():
    for k in range(20):
        system = SecularSystem(spectrum(_inst(8, 12, 100 + k)))
        for sigma2 in np.geomspace(1e-4, 1e2, 15):
            assert system.count(sigma2) == system.solve(sigma2)[0].size


def test_degenerate_instance_is_reported():
    spec = Spectrum(np.array([1.0, 2.0, 3.0]), np.array([1.0, 0.0, 1.0]))
    with pytest.raises(DegenerateInstanceError) as info:
        solve_secular(spec, 0.1)
    assert list(info.value.indices) == [1]
    with pytest.raises(DomainError):
        solve_secular(Spectrum(np.array([1.0]), np.array([1.0])), 0.0)


def test_close_poles_are_merged():
    spec = Spectrum(np.array([1.0, 1.0 + 1e-15, 3.0]), np.array([1.0, 1.0, 1.0]))
    system = SecularSystem(spec)
    assert system.merged == 1
    assert system.solve(0.1)[0].size % 2 == 0


def test_stationary_vector_defines_stationary_point():
    inst = _inst(10, 16, 7)
    spec = spectrum(inst)
    sigma2 = 0.3
    sig = math.sqrt(sigma2)
    rhs = inst.A.T @ (sig * inst.xi)
    for lam in solve_secular(spec, sigma2).lambdas:
        x = stationary_vector(inst, sigma2, lam, spec)
        resid = inst.A.T @ (inst.A @ x - sig * inst.xi) - lam * x
        assert np.linalg.norm(resid) <= 1e-8 * np.linalg.norm(rhs)
        assert x @ x == pytest.approx(10.0, abs=1e-6)
    with pytest.raises(SingularityError):
        stationary_vector(inst, sigma2, spec.s[2], spec)


def test_stationary_vector_single_pole():
    inst = Instance(np.array([[1.3], [0.4]]), np.array([0.7, -1.1]))
    spec = spectrum(inst)
    for lam in solve_secular(spec, 0.5).lambdas:
        x = stationary_vector(inst, 0.5, lam, spec)
        assert x[0] ** 2 == pytest.approx(1.0, rel=1e-12)


def test_loss_formula_matches_direct_evaluation():
    inst = _inst(9, 14, 8)
    spec = spectrum(inst)
    sigma2 = 0.7
    lams = solve_secular(spec, sigma2).lambdas
    fast = loss_at(spec, sigma2, lams)
    for lam, h in zip(lams, fast):
        x = stationary_vector(inst, sigma2, lam, spec)
        r = inst.A @ x - math.sqrt(sigma2) * inst.xi
        assert h == pytest.approx(0.5 * r @ r, rel=1e-10)


def test_losses_increase_with_multiplier():
    for k in range(100):
        prof = profile(_inst(10, 15, 1000 + k), 0.25)
        assert np.all(np.diff(prof.losses) > 0)
        assert prof.e_min == prof.losses[0] and prof.lambda_min == prof.lambdas[0]


def test_profile_ordering_violation_raises(monkeypatch):
    import procrustes_landscape.stationary as st_mod

    monkeypatch.setattr(st_mod, "loss_at", lambda spec, s2, lam: -np.asarray(lam))
    with pytest.raises(ConsistencyError):
        st_mod.profile(_inst(4, 6, 0), 0.2)


def test_minimal_loss_zero_noise_limit():
    # without noise the loss is |A x|^2 / 2, minimised on the sphere at N s_1 / 2
    inst = _inst(6, 9, 4)
    spec = spectrum(inst)
    prof = profile(inst, 1e-12)
    assert prof.e_min == pytest.approx(0.5 * spec.N * spec.s[0], rel=1e-5)


def test_staircase_limits_and_monotone():
    grid = np.geomspace(1e-4, 1e2, 60)
    for k in range(50):
        counts = staircase(_inst(8, 12, 500 + k), grid)
        assert np.all(np.diff(counts) <= 0)
        assert np.all(counts % 2 == 0)
    first = staircase(_inst(5, 8, 0), grid)
    assert first[0] == 10 and first[-1] == 2


def test_staircase_drops_at_gap_minima():
    inst = _inst(5, 8, 9)
    spec = spectrum(inst)
    w = spec.s * spec.t
    for a, b in zip(spec.s[:-1], spec.s[1:]):
        gmin = dense_gap_minimum(a, b, spec.s, w)
        sigma_c = math.sqrt(spec.N / gmin)
        below, above = staircase(inst, [sigma_c * (1 - 1e-6), sigma_c * (1 + 1e-6)])
        assert below - above == 2


def test_smallest_multipliers_batch_matches_single():
    specs = [spectrum(_inst(12, 20, k)) for k in range(15)]
    lam, emin = smallest_multipliers(specs, 0.8)
    for sp_, l, e in zip(specs, lam, emin):
        prof = profile(None, 0.8, spec=sp_)
        assert l == pytest.approx(prof.lambda_min, rel=1e-12, abs=1e-13)
        assert e == pytest.approx(prof.e_min, rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(N=st.integers(1, 7), extra=st.integers(1, 6), seed=st.integers(0, 10**6),
       log_s2=st.floats(-6, 3))
def test_root_structure_property(N, extra, seed, log_s2):
    spec = spectrum(_inst(N, N + extra, seed))
    prof = solve_secular(spec, 10**log_s2)
    assert prof.count % 2 == 0 and 2 <= prof.count <= 2 * N
    assert np.all(prof.residuals <= 1e-8)


def test_profile_serialisation(tmp_path):
    prof = profile(_inst(3, 5, 1), 0.1)
    prof.to_csv(tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "lambda,loss,residual" and len(lines) == prof.count + 1
    prof.summary_json(tmp_path / "p.json")
    import json
    assert set(json.loads((tmp_path / "p.json").read_text())) == {"count", "lambda_min", "e_min"}
    assert isinstance(prof, StationaryProfile)
