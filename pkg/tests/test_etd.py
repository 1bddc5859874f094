import math
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from etdms.coefficients import lagrange_window
from etdms.etd import (
    MAX_PHI_ORDER,
    ModeDecay,
    SchemeState,
    SchemeStateError,
    etd1_step,
    etdms_step,
    exact_step,
    interval_seminorms,
    phi,
    phi_direct,
    phi_series,
)
from etdms.nss import NssParams
from etdms.oracle import OdeProblem, scheme_step_problem, solve_reference
from etdms.spectral import PeriodicGrid, SpectralField, dealias, to_spectral


def smooth_field(grid, seed, amp=0.5):
    rng = np.random.default_rng(seed)
    x, y = grid.coordinates
    v = np.zeros_like(x)
    for _ in range(4):
        a, b = rng.integers(-2, 3, size=2)
        v += amp * rng.standard_normal() * np.cos(a * x * 2 * np.pi / grid.length + b * y * 2 * np.pi / grid.length
                                                 + rng.uniform(0, 2 * np.pi))
    return dealias(to_spectral(v, grid))


def rel_l2(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


# ---------------------------------------------------------------- phi


def test_phi_known_values():
    assert phi(1, 0.0) == 1.0
    assert phi(1, -1.0) == pytest.approx(0.6321205588285577, abs=1e-15)
    assert phi(2, -1.0) == pytest.approx(0.36787944117144233, abs=1e-15)
    assert phi(0, -2.0) == pytest.approx(math.exp(-2.0), rel=1e-15)
    for j in range(1, 7):
        assert phi(j, 0.0) == pytest.approx(1 / math.factorial(j), rel=1e-15)


def test_phi_branch_continuity():
    # 100 points straddling the switch at |z| = 0.5, both signs.
    side = np.linspace(0.49, 0.51, 50)
    z = np.concatenate([-side, side])
    for j in range(7):
        assert np.abs(phi_direct(j, z) - phi_series(j, z)).max() <= 1e-13


def test_phi_recurrence_and_mpmath():
    import mpmath

    mpmath.mp.dps = 120
    for z in (-1e-8, -0.3, -0.5000001, -2.0, -50.0, -800.0, 1.5):
        for j in range(1, 6):
            zz = mpmath.mpf(z)
            ref = (mpmath.exp(zz) - sum(zz**i / mpmath.factorial(i) for i in range(j))) / zz**j
            assert phi(j, z) == pytest.approx(float(ref), rel=1e-12, abs=1e-300)


def test_phi_large_negative_no_overflow():
    z = np.array([-1e3, -1e6, -1e12])
    with np.errstate(all="raise"):
        out = phi(3, z)
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, 1 / (2 * -z), rtol=1e-2)


def test_phi_order_range():
    with pytest.raises(ValueError):
        phi(MAX_PHI_ORDER + 1, 0.1)
    with pytest.raises(ValueError):
        phi(-1, 0.1)


@settings(max_examples=50, deadline=None)
@given(st.floats(-40, 0.49), st.integers(1, 6))
def test_phi_recurrence_property(z, j):
    lhs = phi(j, z) * z + 1 / math.factorial(j - 1)
    assert lhs == pytest.approx(phi(j - 1, z), rel=1e-11, abs=1e-13)


# ------------------------------------------------------------ one step


def test_pure_decay_without_source():
    g = PeriodicGrid(8)
    u0 = smooth_field(g, 1).coeffs
    decay = ModeDecay.build(g.k_fourth, 0.1)
    out = exact_step(u0, np.zeros((1,) + u0.shape), decay, 0.3, g).u_new.coeffs
    np.testing.assert_allclose(out, np.exp(-0.1 * g.k_fourth * 0.3) * u0, rtol=1e-14, atol=1e-14)
    f0 = SpectralField.zeros(g)
    np.testing.assert_allclose(etd1_step(SpectralField(u0, g), f0, 0.3, 0.1).coeffs, out, atol=1e-14)


def test_constant_source_variation_of_constants():
    g = PeriodicGrid(8)
    u0 = smooth_field(g, 2).coeffs
    F = smooth_field(g, 3).coeffs
    decay = ModeDecay.build(g.k_fourth, 0.05, a_stab=0.6, tau_reg=0.1, k=1, p_k=0.5)
    tau = 0.07
    got = exact_step(u0, F[None], decay, tau, g).u_new.coeffs
    mu, m = decay.mu, decay.multiplier
    want = np.exp(-mu * tau) * u0 + tau * phi(1, -mu * tau) * F / m
    np.testing.assert_allclose(got, want, rtol=1e-13, atol=1e-13)
    ref = solve_reference(OdeProblem(lambda t, y: (F - 0.05 * g.k_fourth * y) / m, u0.astype(complex),
                                     (0, tau), rtol=1e-12, atol=1e-12))
    assert rel_l2(got, ref.y) < 1e-10


def test_fixed_point_is_preserved():
    g = PeriodicGrid(8)
    u = smooth_field(g, 4).coeffs
    eps = 0.2
    F = eps * g.k_fourth * u
    decay = ModeDecay.build(g.k_fourth, eps, a_stab=0.6, tau_reg=0.05, k=2, p_k=1.0)
    out = exact_step(u, np.stack([F, 0 * F]), decay, 0.05, g).u_new.coeffs
    np.testing.assert_allclose(out, u, rtol=1e-12, atol=1e-12)


def test_small_tau_taylor_limit():
    g = PeriodicGrid(8)
    u = smooth_field(g, 5).coeffs
    F = smooth_field(g, 6).coeffs
    eps, tau = 0.3, 1e-6
    decay = ModeDecay.build(g.k_fourth, eps)
    out = exact_step(u, F[None], decay, tau, g).u_new.coeffs
    euler = u + tau * (F - eps * g.k_fourth * u)
    assert np.abs(out - euler).max() <= 1e-9 * np.abs(u).max()


def test_dense_output_endpoints_and_derivative():
    g = PeriodicGrid(8)
    u0 = smooth_field(g, 7).coeffs
    src = np.stack([smooth_field(g, 8).coeffs, smooth_field(g, 9).coeffs])
    decay = ModeDecay.build(g.k_fourth, 0.1, 0.6, 0.02, 2, 1.0)
    res = exact_step(u0, src, decay, 0.02, g)
    d = res.dense
    np.testing.assert_allclose(d.value(0.0), u0, rtol=1e-12)
    np.testing.assert_allclose(d.value(0.02), res.u_new.coeffs, rtol=1e-12)
    h = 1e-6
    fd = (d.value(0.01 + h) - d.value(0.01 - h)) / (2 * h)
    np.testing.assert_allclose(d.derivative(0.01), fd, rtol=1e-6, atol=1e-6 * np.abs(fd).max())


def _nss_state(g, seed, steps):
    params = NssParams(0.05, g)
    rng = np.random.default_rng(seed)
    us = [smooth_field(g, int(rng.integers(1 << 30)), amp=0.3) for _ in range(len(steps) + 1)]
    sources = deque(params.nonlinear_term(u) for u in us)
    return params, SchemeState(us[0], 0.0, sources, deque(steps))


def test_k2_step_matches_oracle_equal_steps():
    g = PeriodicGrid(8)
    params, state = _nss_state(g, 10, [0.01])
    a, tau = 0.62, 0.01
    decay = ModeDecay.build(g.k_fourth, params.epsilon, a, tau, 2, 1.0)
    got = etdms_step(state, lagrange_window(2, [0.01]), decay, tau).u_new.coeffs
    prob = scheme_step_problem(state.u.coeffs, [s.coeffs for s in state.sources], [0.01], tau, g,
                               params.epsilon, a, tau, 2, 1.0)
    assert rel_l2(got, solve_reference(prob).y) <= 1e-8


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_orders_match_oracle_unequal_steps(k):
    g = PeriodicGrid(8)
    steps = [0.013, 0.021, 0.008][: k - 1]
    params, state = _nss_state(g, 11 + k, steps)
    a, tau, tau_reg = 0.8, 0.017, 0.021
    decay = ModeDecay.build(g.k_fourth, params.epsilon, a, tau_reg, k, k / 2)
    got = etdms_step(state, lagrange_window(k, steps), decay, tau).u_new.coeffs
    prob = scheme_step_problem(state.u.coeffs, [s.coeffs for s in state.sources], steps, tau, g,
                               params.epsilon, a, tau_reg, k, k / 2)
    assert rel_l2(got, solve_reference(prob).y) <= 1e-8


def test_step_errors():
    g = PeriodicGrid(8)
    _, state = _nss_state(g, 20, [])
    decay = ModeDecay.build(g.k_fourth, 0.1)
    with pytest.raises(SchemeStateError):
        etdms_step(state, lagrange_window(2, [0.1]), decay, 0.1)
    bad = state.sources[0].coeffs.copy()
    bad[1, 1] = np.nan
    state.sources[0] = SpectralField(bad, g)
    with pytest.raises(FloatingPointError):
        etdms_step(state, lagrange_window(1, []), decay, 0.1)
    with pytest.raises(ValueError):
        etdms_step(state, lagrange_window(1, []), decay, 0.0)


def test_forcing_is_added_to_sources():
    g = PeriodicGrid(8)
    params, state = _nss_state(g, 21, [0.02])
    f = [smooth_field(g, 30), smooth_field(g, 31)]
    decay = ModeDecay.build(g.k_fourth, params.epsilon)
    w = lagrange_window(2, [0.02])
    a = etdms_step(state, w, decay, 0.02, forcing=f).u_new.coeffs
    state.sources = deque(s + fi for s, fi in zip(state.sources, f))
    b = etdms_step(state, w, decay, 0.02).u_new.coeffs
    np.testing.assert_allclose(a, b, rtol=1e-14, atol=1e-14)


def test_state_push_keeps_window():
    g = PeriodicGrid(8)
    s = SchemeState(SpectralField.zeros(g))
    for i in range(5):
        s.push(SpectralField.zeros(g), 0.1 * (i + 1), SpectralField.zeros(g), 3)
    assert len(s.sources) == 3 and list(s.steps) == [0.5, 0.4]
    assert s.t == pytest.approx(1.5)


# ---------------------------------------------------------- seminorms


def test_seminorms_frozen_field():
    g = PeriodicGrid(8)
    u = smooth_field(g, 40).coeffs
    eps = 0.1
    decay = ModeDecay.build(g.k_fourth, eps)
    res = exact_step(u, (eps * g.k_fourth * u)[None], decay, 0.1, g)
    sh, sp = interval_seminorms(res)
    assert abs(sh) < 1e-20 and abs(sp) < 1e-20


def test_seminorms_single_mode_decay():
    g = PeriodicGrid(8, 2 * np.pi)
    x, _ = g.coordinates
    u = to_spectral(np.sin(x), g).coeffs  # |k|^4 = 1
    mu = 1.0
    decay = ModeDecay.build(g.k_fourth, mu)
    res = exact_step(u, np.zeros((1,) + u.shape), decay, 1.0, g)
    sh, sp = interval_seminorms(res)
    norm0 = np.pi**2 * 2  # ||sin x||^2 on [0, 2pi]^2
    want = norm0 * mu * (1 - np.exp(-2.0)) / 2
    assert sh == pytest.approx(want, rel=1e-10)
    assert sp == pytest.approx(want, rel=1e-10)
    with pytest.raises(ValueError):
        interval_seminorms(res, quad_order=1)


def test_seminorms_quadrature_self_convergence():
    g = PeriodicGrid(8)
    params, state = _nss_state(g, 41, [0.05])
    decay = ModeDecay.build(g.k_fourth, params.epsilon, 0.62, 0.05, 2, 1.0)
    res = etdms_step(state, lagrange_window(2, [0.05]), decay, 0.05)
    a, b = interval_seminorms(res, 8), interval_seminorms(res, 16)
    assert a[0] == pytest.approx(b[0], rel=1e-9)
    assert a[1] == pytest.approx(b[1], rel=1e-9)
