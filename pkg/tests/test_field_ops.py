import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from besovlab.field_ops import (Grid, MeanError, SpectralField, curl, deformation, div,
                                effective_velocity, from_physical, grad, hodge, inv_neg_laplacian,
                                l2_norm, lambda_pow, laplacian, load_snapshot, lp_norm, multiply,
                                random_field, resample, save_snapshot, zeros)

from fieldgen import plane_wave


def rel(x, y):
    return l2_norm(x - y) / max(l2_norm(y), 1e-300)


# ---- grid and field plumbing ----------------------------------------------------
@pytest.mark.parametrize("d, n", [(1, 16), (4, 16), (2, 12), (2, 4)])
def test_grid_rejects_bad_shapes(d, n):
    with pytest.raises(ValueError):
        Grid(d, n)


def test_grid_lattice_basics(grid64):
    g = grid64
    assert g.spectral_shape == (64, 33)
    assert g.k0 == pytest.approx(1.0)
    assert not g.resolved[32, 0] and not g.resolved[0, 32]
    assert g.kabs[(0, 0)] == 0.0
    # a box of side pi doubles every wavenumber
    assert np.allclose(Grid(2, 64, np.pi).kabs, 2 * g.kabs)


def test_field_rejects_nonfinite(grid64):
    c = np.zeros(grid64.spectral_shape, complex)
    c[1, 1] = np.nan
    with pytest.raises(ValueError):
        SpectralField(grid64, c)


def test_from_coefficients_checks_hermitian_symmetry(grid64):
    c = np.zeros(grid64.spectral_shape, complex)
    c[3, 0] = 1.0  # mirror (-3, 0) missing
    with pytest.raises(ValueError):
        SpectralField.from_coefficients(grid64, c)
    c[-3, 0] = 1.0
    f = SpectralField.from_coefficients(grid64, c)
    assert np.allclose(f.physical(), 2 * np.cos(3 * grid64.points()[0]))


def test_plancherel(grid64, rng):
    for shape in [(), (2,)]:
        f = random_field(grid64, rng, (0, 20), shape) * 3.7
        assert lp_norm(f.physical(), grid64, 2) == pytest.approx(l2_norm(f), rel=1e-12)
    assert l2_norm(random_field(grid64, rng, (0, 20))) == pytest.approx(1.0, rel=1e-12)


def test_random_field_empty_band_is_zero(grid64, rng):
    f = random_field(grid64, rng, (0.2, 0.5))
    assert l2_norm(f) == 0.0


def test_arithmetic_and_grid_mismatch(grid64, rng):
    f = random_field(grid64, rng)
    assert rel(f + f - f * 2.0 + f, f) < 1e-15
    with pytest.raises(ValueError):
        f + random_field(Grid(2, 32), rng)


def test_outputs_are_real_after_operators(grid64, rng):
    u = random_field(grid64, rng, (0, 25), (2,))
    for out in (div(u), curl(u), hodge(u).p_part, deformation(u), lambda_pow(div(u), 0.5)):
        x = np.fft.ifftn(_full(out), axes=(-2, -1), norm="forward")
        assert np.abs(x.imag).max() <= 1e-12 * np.abs(x.real).max()


def _full(f):
    # rebuild the full complex spectrum from the real samples, then compare
    return np.fft.fftn(f.physical(), axes=(-2, -1), norm="forward")


# ---- Lambda^s -------------------------------------------------------------------
def test_lambda_zero_is_identity(grid64, rng):
    f = random_field(grid64, rng)
    assert rel(lambda_pow(f, 0), f) < 1e-15


@given(s=st.floats(-3, 3, allow_nan=False))
@settings(max_examples=25, deadline=None)
def test_lambda_inverse(s):
    g = Grid(2, 32)
    f = random_field(g, np.random.default_rng(0))
    assert rel(lambda_pow(lambda_pow(f, s), -s), f) < 1e-12


def test_lambda_single_mode_doubles(grid64):
    f = plane_wave(grid64, (2, 0))
    assert rel(lambda_pow(f, 1), f * 2.0) < 1e-13


def test_lambda_negative_needs_mean_zero(grid64, rng):
    f = random_field(grid64, rng) + from_physical(grid64, np.ones(grid64.shape))
    with pytest.raises(MeanError):
        lambda_pow(f, -1)
    assert rel(lambda_pow(f, 1), lambda_pow(f.zero_mean(), 1)) < 1e-15


def test_multipliers_commute(grid64, rng):
    f = random_field(grid64, rng)
    ops = [lambda h: lambda_pow(h, 0.7), laplacian, inv_neg_laplacian, lambda h: lambda_pow(h, -1.3)]
    for a in ops:
        for b in ops:
            assert rel(a(b(f)), b(a(f))) < 1e-12


# ---- Hodge split ---------------------------------------------------------------
def test_hodge_gradient_field(grid64, rng):
    psi = random_field(grid64, rng, (0, 20))
    u = grad(psi)
    dec = hodge(u)
    assert l2_norm(dec.p_part) / l2_norm(u) < 1e-12
    # div grad psi = -Lambda^2 psi, so v = Lambda^{-1} div u = -Lambda psi
    assert rel(dec.v, -lambda_pow(psi, 1)) < 1e-12


def test_hodge_divergence_free_field(grid64, rng):
    psi = random_field(grid64, rng, (0, 20))
    gp = grad(psi).coeffs
    u = SpectralField(grid64, np.stack([gp[1], -gp[0]]))  # perpendicular gradient
    dec = hodge(u)
    assert l2_norm(dec.q_part) <= 1e-12 * l2_norm(u)
    assert l2_norm(dec.v) <= 1e-12 * l2_norm(u)


@pytest.mark.parametrize("d, n", [(2, 64), (3, 16)])
def test_hodge_invariants(d, n, rng):
    g = Grid(d, n)
    u = random_field(g, rng, (0, n / 3), (d,))
    dec = hodge(u)
    assert rel(dec.p_part + dec.q_part, u) < 1e-12
    assert l2_norm(div(dec.p_part)) <= 1e-12 * l2_norm(grad(u))
    assert l2_norm(dec.v) == pytest.approx(l2_norm(dec.q_part), rel=1e-12)
    assert l2_norm(dec.omega) == pytest.approx(l2_norm(dec.p_part), rel=1e-12)


def test_hodge_requires_mean_zero(grid64):
    u = SpectralField(grid64, np.zeros((2,) + grid64.spectral_shape))
    c = u.coeffs.copy()
    c[0, 0, 0] = 1.0
    with pytest.raises(MeanError):
        hodge(SpectralField(grid64, c))


# ---- effective velocity ----------------------------------------------------------
def test_effective_velocity_vanishes_when_a_is_div_u(grid64, rng):
    u = random_field(grid64, rng, (0, 20), (2,))
    assert l2_norm(effective_velocity(div(u), u)) <= 1e-13 * l2_norm(u)


@pytest.mark.parametrize("d, n", [(2, 128), (3, 16)])
def test_effective_velocity_identities(d, n, rng):
    g = Grid(d, n)
    a = random_field(g, rng, (0, n / 3))
    u = random_field(g, rng, (0, n / 3), (d,))
    w = effective_velocity(a, u)
    assert l2_norm(div(w) + a - div(u)) / l2_norm(a) < 1e-12
    recon = w - grad(inv_neg_laplacian(a)) + hodge(u).p_part
    assert rel(recon, u) < 1e-12


def test_effective_velocity_requires_mean_zero(grid64, rng):
    a = random_field(grid64, rng) + from_physical(grid64, np.full(grid64.shape, 0.1))
    with pytest.raises(MeanError):
        effective_velocity(a, zeros(grid64, (2,)))


# ---- deformation ----------------------------------------------------------------
def test_deformation_of_constant_is_zero(grid64):
    u = from_physical(grid64, np.ones((2,) + grid64.shape))
    assert l2_norm(deformation(u)) == 0.0


def test_deformation_closed_form(grid64):
    # u = (-sin y, sin x) has D12 = (cos x - cos y)/2 and a vanishing diagonal
    x, y = grid64.points()
    u = from_physical(grid64, np.stack([-np.sin(y), np.sin(x)]))
    sym = deformation(u).physical()
    assert np.allclose(sym[0, 0], 0, atol=1e-14) and np.allclose(sym[1, 1], 0, atol=1e-14)
    assert np.allclose(sym[0, 1], 0.5 * (np.cos(x) - np.cos(y)), atol=1e-13)
    assert np.array_equal(sym[0, 1], sym[1, 0])


def test_deformation_kills_the_antisymmetric_gradient(grid64, rng):
    u = random_field(grid64, rng, (0, 20), (2,))
    j = grad(u).coeffs
    skew = 0.5 * (j - np.swapaxes(j, 0, 1))
    assert np.allclose(deformation(u).coeffs + skew, j, atol=1e-15)


def test_deformation_trace_is_divergence(grid64, rng):
    u = random_field(grid64, rng, (0, 20), (2,))
    dmat = deformation(u)
    tr = dmat[0][0] + dmat[1][1]
    assert rel(tr, div(u)) < 1e-12


# ---- products and resampling -------------------------------------------------------
def test_multiply_matches_pointwise_product(grid64, rng):
    f, h = random_field(grid64, rng, (0, 10)), random_field(grid64, rng, (0, 10))
    prod = multiply(f, h)
    assert np.allclose(prod.physical(), f.physical() * h.physical(), atol=1e-14)
    u = random_field(grid64, rng, (0, 10), (2,))
    assert np.allclose(multiply(u, u).physical(), np.sum(u.physical() ** 2, axis=0), atol=1e-14)


def test_dealiased_product_drops_high_modes(grid64):
    f = plane_wave(grid64, (20, 0))
    out = multiply(f, f, dealiased=True)
    # cos^2 = (1 + cos 40x)/2; |40| > 64/3 is removed
    assert np.allclose(out.physical(), 0.5, atol=1e-14)


@given(m=st.sampled_from([16, 64, 128]))
@settings(max_examples=6, deadline=None)
def test_resample_round_trip(m):
    g = Grid(2, 32)
    f = random_field(g, np.random.default_rng(m), (0, 10))
    back = resample(resample(f, m), 32)
    if m >= 32:
        assert rel(back, f) < 1e-15
    up = resample(f, 64)
    assert l2_norm(up) == pytest.approx(l2_norm(f), rel=1e-13)
    assert np.allclose(up.physical()[::2, ::2], f.physical(), atol=1e-14)


# ---- snapshots -------------------------------------------------------------------
@pytest.mark.parametrize("shape", [(), (2,)])
def test_snapshot_round_trip(tmp_path, grid64, rng, shape):
    f = random_field(grid64, rng, (0, 20), shape)
    path = tmp_path / "snap.bin"
    save_snapshot(path, f, time=1.25)
    g, t = load_snapshot(path)
    assert t == 1.25
    assert g.grid == grid64
    assert np.allclose(g.physical(), f.physical(), rtol=0, atol=1e-15)
    with open(path, "rb") as fh:
        header = fh.readline()
        body = fh.read()
    assert b'"endianness": "little"' in header
    assert len(body) == 8 * f.components * grid64.n**2
    assert np.array_equal(np.frombuffer(body, "<f8").reshape(f.physical().shape), f.physical())
