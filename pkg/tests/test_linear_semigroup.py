import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm
from scipy.special import gamma as gamma_fn
from scipy.special import gammainc

from besovlab.field_ops import Grid, l2_norm, random_field, zeros
from besovlab.linear_semigroup import (ModeSymbol, RadialProfile, decay_curve, eigen,
                                       energy_form_bounds, heat_decay_curve, mode_energy,
                                       propagate, propagator, radial_l2, rk4_propagate,
                                       saturating_profile, shell_norm, shell_norms, sphere_area)
from besovlab.lp_frame import dyadic_block

from fieldgen import plane_wave


def _zero(r):
    return np.zeros_like(np.asarray(r, float))


# ---- symbol and eigenvalues ----------------------------------------------------
@pytest.mark.parametrize("r", [0.0, 0.3, 2.0, 7.5])
def test_symbol_trace_and_determinant(r):
    sym = ModeSymbol(r)
    assert np.trace(sym.m) == pytest.approx(-r * r)
    assert np.linalg.det(sym.m) == pytest.approx(r * r, abs=1e-12)
    assert ModeSymbol(r, mu=0.4).heat_rate == pytest.approx(0.4 * r * r)


def test_symbol_rejects_negative_frequency():
    with pytest.raises(ValueError):
        ModeSymbol(-1.0)


def test_eigen_examples():
    e = eigen(ModeSymbol(2.0))
    assert e.lambda_plus == e.lambda_minus == -2.0
    e = eigen(ModeSymbol(1.0))
    assert e.lambda_plus == pytest.approx(complex(-0.5, np.sqrt(3) / 2), abs=1e-15)
    assert e.lambda_minus == pytest.approx(complex(-0.5, -np.sqrt(3) / 2), abs=1e-15)
    e = eigen(ModeSymbol(4.0))
    assert e.lambda_plus == pytest.approx(-8 + 4 * np.sqrt(3), rel=1e-14)
    assert e.lambda_minus == pytest.approx(-8 - 4 * np.sqrt(3), rel=1e-14)


def test_spectral_dichotomy_on_log_grid():
    for r in np.geomspace(1e-3, 1e3, 10_000):
        e = eigen(ModeSymbol(r))
        lp, lm = e.lambda_plus, e.lambda_minus
        # both are roots of l^2 + r^2 l + r^2
        for lam in (lp, lm):
            assert abs(lam * lam + r * r * lam + r * r) <= 1e-10 * max(1.0, r**4)
        if r < 2:
            assert abs(lp.real + r * r / 2) <= 1e-10 and abs(lm.real + r * r / 2) <= 1e-10
            assert lp.imag > 0 and lp == pytest.approx(np.conj(lm), abs=1e-10)
        elif r > 2:
            assert lp.imag == 0 and lm.imag == 0
            assert -2 < lp.real <= -1 and lm.real < -2


def test_slow_root_tends_to_minus_one():
    lp = eigen(ModeSymbol(1e3)).lambda_plus.real
    assert -1.0001 < lp < -1
    # lambda_+ = -1 - 1/r^2 + O(r^-4)
    assert lp == pytest.approx(-1 - 1e-6, abs=1e-11)


def test_slow_root_is_decreasing_toward_minus_one():
    r = np.geomspace(2.001, 1e3, 500)
    lp = np.array([eigen(ModeSymbol(x)).lambda_plus.real for x in r])
    assert np.all(np.diff(lp) > 0)


# ---- propagation --------------------------------------------------------------
def test_propagate_at_zero_time_is_identity():
    for r in (0.0, 0.5, 2.0, 30.0):
        assert propagate(ModeSymbol(r), 0.0, (1.5 - 2j, 0.25j)) == (1.5 - 2j, 0.25j)


def test_propagate_rejects_negative_time():
    with pytest.raises(ValueError):
        propagate(ModeSymbol(1.0), -0.1, (1.0, 0.0))


@pytest.mark.parametrize("t", [3.0, 10.0])
def test_propagate_matches_rk4(t):
    sym = ModeSymbol(1.0)
    state = (1.0 + 0.5j, -0.3 + 0.2j)
    exact = np.array(propagate(sym, t, state))
    ref = np.array(rk4_propagate(sym, t, state, dt=1e-4))
    assert np.linalg.norm(exact - ref) / np.linalg.norm(ref) < 1e-8


@given(r=st.one_of(st.floats(0, 50), st.floats(2 - 3e-6, 2 + 3e-6)), t=st.floats(0, 20))
@settings(max_examples=200, deadline=None)
def test_propagator_matches_expm(r, t):
    ref = expm(t * ModeSymbol(r).m)
    got = np.array(propagator(r, t)).reshape(2, 2)
    assert np.abs(got - ref).max() <= 1e-12 * max(1.0, np.abs(ref).max())


def test_jordan_formula_at_double_root():
    # M + 2I is nilpotent at r = 2, so exp(tM) = e^{-2t} (I + t (M + 2I))
    t = 1.7
    n = ModeSymbol(2.0).m + 2 * np.eye(2)
    ref = np.exp(-2 * t) * (np.eye(2) + t * n)
    assert np.allclose(np.array(propagator(2.0, t)).reshape(2, 2), ref, rtol=1e-14, atol=0)


def test_propagator_is_continuous_across_jordan_window():
    t = 4.0
    for r in (2 - 1.01e-6, 2 - 0.99e-6, 2 + 0.99e-6, 2 + 1.01e-6):
        assert np.allclose(np.array(propagator(r, t)).reshape(2, 2), expm(t * ModeSymbol(r).m),
                           rtol=1e-12, atol=1e-15)


def test_high_frequency_density_decays_like_exp_minus_t():
    a, _ = propagate(ModeSymbol(100.0), 5.0, (1.0, 0.0))
    assert abs(a) / np.exp(-5.0) == pytest.approx(1.0, rel=1e-2)


def test_propagator_broadcasts():
    r = np.array([0.5, 2.0, 9.0])
    t = np.array([[0.0], [1.0]])
    e11, e12, e21, e22 = propagator(r, t)
    assert e11.shape == (2, 3)
    assert np.array_equal(e11[0], np.ones(3)) and np.array_equal(e12[0], np.zeros(3))


# ---- radial quadrature -------------------------------------------------------------
def test_sphere_area():
    assert sphere_area(2) == pytest.approx(2 * np.pi)
    assert sphere_area(3) == pytest.approx(4 * np.pi)


def test_indicator_shell_l2():
    def ind(r):
        return np.where((r >= 1) & (r <= 2), 1.0, 0.0)
    assert radial_l2(ind, 3, (1.0, 2.0)) == pytest.approx(np.sqrt(28 * np.pi / 3), rel=1e-12)
    # at most two shells overlap and sum phi = 1, so 1/2 <= sum phi^2 <= 1
    b = shell_norm(ind, 3, 0.0, 2, (1.0, 2.0))
    assert np.sqrt(14 * np.pi / 3) <= b <= np.sqrt(28 * np.pi / 3)


def test_zero_profile_has_zero_norm():
    assert radial_l2(_zero, 2, (0.1, 5.0)) == 0.0
    assert shell_norm(_zero, 3, 1.0, np.inf, (0.1, 5.0)) == 0.0


def test_support_and_divergence_errors():
    with pytest.raises(ValueError):
        radial_l2(_zero, 2, (0.0, 1.0))
    with pytest.raises(ValueError):
        radial_l2(_zero, 2, (1.0, np.inf))
    with pytest.raises(ValueError, match="not finite"):
        radial_l2(lambda r: np.full_like(r, np.inf), 2, (0.5, 1.0))
    with pytest.raises(ValueError):
        RadialProfile(_zero, _zero, (2.0, 1.0))


@pytest.mark.parametrize("d, sigma1", [(2, 1.0), (2, 0.5), (3, 1.5), (3, -0.4)])
def test_saturating_profile_sits_on_the_ball_boundary(d, sigma1):
    prof = saturating_profile(d, sigma1)
    shells = shell_norms(prof.density, d, prof.support)
    lo, hi = prof.support
    interior = [j for j in shells if 2.0**j * 0.75 >= lo and 2.0**j * 8 / 3 <= hi]
    assert len(interior) >= 15
    w = np.array([2.0 ** (-j * sigma1) * shells[j] for j in interior])
    # exact dyadic scaling on full shells
    assert w.max() / w.min() - 1 < 1e-6


def test_quadrature_refinement():
    prof = saturating_profile(3, 1.5)
    coarse = shell_norm(prof.density, 3, 0.0, 2, prof.support, rtol=1e-9)
    fine = shell_norm(prof.density, 3, 0.0, 2, prof.support, rtol=1e-11)
    assert abs(coarse - fine) / fine < 1e-8


# ---- decay curves ------------------------------------------------------------------
def test_decay_curve_starts_at_the_data_and_is_nonincreasing():
    prof = saturating_profile(2, 1.0)
    times = np.array([0.0, 1.0, 10.0, 100.0, 1000.0])
    curve = decay_curve(prof, 2, 1.0, times)
    assert curve.l2[0] == pytest.approx(radial_l2(prof.density, 2, prof.support), rel=1e-8)
    # d/dt (|a|^2 + |v|^2) = -2 r^2 |v|^2 per mode
    assert np.all(np.diff(curve.l2) < 0)
    assert np.all(curve.l2_a <= curve.l2 * (1 + 1e-9))
    assert curve.initial_negative_norm > 0
    assert set(curve.besov) == {(0.0, np.inf), (0.0, 2.0)}
    b = curve.besov[(0.0, 2.0)]
    assert np.all((b >= curve.l2 / np.sqrt(2) * (1 - 1e-9)) & (b <= curve.l2 * (1 + 1e-9)))


@pytest.mark.parametrize("d, sigma1", [(2, 1.0), (3, 1.5), (2, 0.5)])
def test_heat_path_matches_incomplete_gamma(d, sigma1):
    # ||e^{mu t Delta} a||^2 = c_d int e^{-2 mu t r^2} r^{2 sigma1 - 1} dr on the support
    mu = 0.25
    prof = saturating_profile(d, sigma1)
    lo, hi = prof.support
    times = np.array([1e2, 1e3, 1e4])
    got = heat_decay_curve(prof, d, times, mu)
    s = 2 * mu * times
    exact = np.sqrt(sphere_area(d) / 2 * s**-sigma1 * gamma_fn(sigma1)
                    * (gammainc(sigma1, s * hi**2) - gammainc(sigma1, s * lo**2)))
    assert np.allclose(got, exact, rtol=1e-7)
    slope = np.polyfit(np.log(times), np.log(got), 1)[0]
    assert slope == pytest.approx(-sigma1 / 2, rel=1e-3)


# ---- mode energy --------------------------------------------------------------------
def test_mode_energy_single_mode_at_one_half():
    g = Grid(2, 32, 4 * np.pi)  # lattice spacing 1/2
    a = plane_wave(g, (1, 0))
    e = mode_energy(a, zeros(g))
    assert e.value == pytest.approx(2.25 * l2_norm(a) ** 2, rel=1e-14)
    assert e.pair == pytest.approx(l2_norm(a) ** 2, rel=1e-14)


def test_mode_energy_without_density():
    g = Grid(2, 32, 8 * np.pi)
    v = dyadic_block(random_field(g, np.random.default_rng(3)), -1)
    e = mode_energy(zeros(g), v)
    assert e.value == pytest.approx(2 * l2_norm(v) ** 2, rel=1e-14)


def test_energy_form_bounds_closed_form():
    lo, hi = energy_form_bounds(np.array([0.0, 8 / 3]))
    assert lo[0] == pytest.approx(2) and hi[0] == pytest.approx(2)
    # at r = 8/3 the form has trace 100/9 and determinant 100/9, roots 10/9 and 10
    assert lo[1] == pytest.approx(10 / 9, rel=1e-14) and hi[1] == pytest.approx(10, rel=1e-14)


def test_energy_form_bounds_match_brute_force():
    rng = np.random.default_rng(11)
    for r in np.linspace(0, 8 / 3, 60):
        q = np.array([[2 + r * r, -r], [-r, 2]])
        x = rng.standard_normal((2, 5000))
        vals = np.einsum("in,ij,jn->n", x, q, x) / np.sum(x * x, axis=0)
        lo, hi = energy_form_bounds(r)
        assert lo - 1e-12 <= vals.min() and vals.max() <= hi + 1e-12
        assert vals.min() < lo + 1e-2 * hi and vals.max() > hi - 1e-2 * hi


@pytest.mark.parametrize("j", [-3, -2, -1, 0])
def test_mode_energy_is_equivalent_to_the_pair_norm(j):
    g = Grid(2, 64, 2 * np.pi * 8)
    rng = np.random.default_rng(5 + j)
    for _ in range(20):
        a = dyadic_block(random_field(g, rng), j)
        v = dyadic_block(random_field(g, rng), j)
        e = mode_energy(a, v)
        assert e.lower * e.pair * (1 - 1e-12) <= e.value <= e.upper * e.pair * (1 + 1e-12)
        # the low-frequency form never drops below half the pair norm
        assert e.lower >= 0.5


def test_mode_energy_warns_outside_low_frequencies():
    g = Grid(2, 32)
    a = plane_wave(g, (3, 0))
    with pytest.warns(UserWarning, match="8/3"):
        mode_energy(a, zeros(g))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        mode_energy(plane_wave(g, (2, 0)), zeros(g))
    with pytest.raises(ValueError):
        mode_energy(a, zeros(Grid(2, 16)))


def _evolve_block(a, v, t):
    k = a.grid.kabs
    e11, e12, e21, e22 = propagator(k, t)
    return a.apply(e11) + v.apply(e12), a.apply(e21) + v.apply(e22)


@pytest.mark.parametrize("j", [-3, -2, -1, 0])
def test_mode_energy_decays_at_a_uniform_parabolic_rate(j):
    # d/dt L_k <= -c 2^{2k} L_k; per mode the exact rate is at most -r^2/10 for r <= 8/3,
    # and r >= (3/4) 2^k on the block, so c = 9/160 works for every low block
    g = Grid(2, 64, 2 * np.pi * 8)
    rng = np.random.default_rng(100 + j)
    h = 1e-6
    for _ in range(10):
        a = dyadic_block(random_field(g, rng), j)
        v = dyadic_block(random_field(g, rng), j)
        for t in (0.0, 0.5, 3.0):
            a0, v0 = _evolve_block(a, v, t)
            a1, v1 = _evolve_block(a, v, t + h)
            l0 = np.sqrt(mode_energy(a0, v0).value)
            l1 = np.sqrt(mode_energy(a1, v1).value)
            rate = (l1 - l0) / h / (4.0**j * l0)
            assert rate <= -9 / 160


def test_mode_decay_rate_closed_form():
    # the generalized eigenvalue problem for d/dt x^T Q x gives the rate exactly
    from scipy.linalg import eigh
    rates = []
    for r in np.geomspace(1e-3, 8 / 3, 400):
        m = ModeSymbol(r).m
        q = np.array([[2 + r * r, -r], [-r, 2]])
        rates.append(eigh(m.T @ q + q @ m, q, eigvals_only=True).max() / (2 * r * r))
    rates = np.array(rates)
    assert rates.max() == pytest.approx(-0.1, rel=1e-9)
    assert rates[0] == pytest.approx(-0.5, rel=1e-3)
