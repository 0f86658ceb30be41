"""Exact Fourier-side theory of the linearised barotropic system.

Per radial frequency r the compressible pair (a, v) with v = Lambda^{-1} div u
evolves by

    d/dt (a, v) = M(r) (a, v),    M(r) = [[0, -r], [r, -r^2]],

and the incompressible part by the heat factor exp(-mu r^2 t).  Radial data on
the whole space are handled by shell quadrature in the radial variable.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as gamma_fn

from .field_ops import l2_norm
from .lp_frame import phi

__all__ = [
    "ModeSymbol",
    "EigenPair",
    "RadialProfile",
    "ModeEnergy",
    "DecayCurve",
    "eigen",
    "propagator",
    "propagate",
    "rk4_propagate",
    "sphere_area",
    "shell_norms",
    "shell_norm",
    "radial_l2",
    "saturating_profile",
    "gaussian_profile",
    "decay_curve",
    "heat_decay_curve",
    "mode_energy",
    "energy_form_bounds",
]

JORDAN_WINDOW = 1e-6


@dataclass(frozen=True)
class ModeSymbol:
    r: float
    mu: float = 0.25

    def __post_init__(self):
        if not self.r >= 0:
            raise ValueError(f"radial frequency must be nonnegative, got {self.r}")

    @property
    def m(self):
        r = self.r
        return np.array([[0.0, -r], [r, -r * r]])

    @property
    def heat_rate(self):
        return self.mu * self.r**2

    @property
    def trace(self):
        return -self.r**2

    @property
    def det(self):
        return self.r**2


@dataclass(frozen=True)
class EigenPair:
    lambda_plus: complex
    lambda_minus: complex


def _roots(r):
    """Roots of l^2 + r^2 l + r^2 = 0, computed without cancellation."""
    r = np.asarray(r, dtype=float)
    disc = r * r * (r * r - 4.0)
    lp = np.empty(r.shape, dtype=complex)
    lm = np.empty(r.shape, dtype=complex)
    osc = disc < 0
    half = -0.5 * r * r
    w = 0.5 * np.sqrt(np.where(osc, -disc, 0.0))
    lp[osc] = half[osc] + 1j * w[osc]
    lm[osc] = half[osc] - 1j * w[osc]
    real = ~osc
    big = -0.5 * (r * r + np.sqrt(np.where(real, disc, 0.0)))
    lm[real] = big[real]
    # product of the roots is r^2
    safe = np.where(big != 0, big, 1.0)
    lp[real] = np.where(big[real] != 0, (r * r)[real] / safe[real], 0.0)
    return lp, lm


def eigen(sym):
    lp, lm = _roots(np.array(sym.r))
    return EigenPair(complex(lp), complex(lm))


def propagator(r, t):
    """Entries (e11, e12, e21, e22) of exp(t M(r)), broadcast over r and t.

    Written as exp(alpha t) [C I + S (M - alpha I)] with alpha = -r^2/2 and
    z = r^2 (r^2 - 4)/4: C = cosh(t sqrt z), S = sinh(t sqrt z)/sqrt z.  Near
    the double root r = 2 the Taylor series in z is used (leading term is the
    Jordan-block formula).
    """
    r, t = np.broadcast_arrays(np.asarray(r, float), np.asarray(t, float))
    alpha = -0.5 * r * r
    z = 0.25 * r * r * (r * r - 4.0)
    c = np.empty(r.shape)
    s = np.empty(r.shape)

    near = np.abs(r - 2.0) < JORDAN_WINDOW
    osc = (z < 0) & ~near
    real = (z >= 0) & ~near

    if np.any(near):
        zn, tn = z[near], t[near]
        e = np.exp(alpha[near] * tn)
        x = zn * tn * tn
        c[near] = e * (1 + x / 2 + x * x / 24 + x**3 / 720)
        s[near] = e * tn * (1 + x / 6 + x * x / 120 + x**3 / 5040)
    if np.any(osc):
        g = np.sqrt(-z[osc])
        to = t[osc]
        e = np.exp(alpha[osc] * to)
        c[osc] = e * np.cos(g * to)
        s[osc] = e * to * np.sinc(g * to / np.pi)
    if np.any(real):
        q = np.sqrt(z[real])
        tr = t[real]
        lp, lm = _roots(r[real])
        ep, em = np.exp(lp.real * tr), np.exp(lm.real * tr)
        c[real] = 0.5 * (ep + em)
        gap = 2 * q * tr
        ratio = np.where(gap > 0, -np.expm1(-gap) / np.where(q > 0, 2 * q, 1.0), tr)
        s[real] = ep * ratio

    # M - alpha I = [[r^2/2, -r], [r, -r^2/2]]
    e11 = c + s * (0.5 * r * r)
    e12 = -s * r
    e21 = s * r
    e22 = c - s * (0.5 * r * r)
    return e11, e12, e21, e22


def propagate(sym, t, state0):
    """Exact linear evolution of one mode pair (a_hat, v_hat) over time t."""
    if t < 0:
        raise ValueError("propagation backwards in time is not supported")
    a0, v0 = state0
    e11, e12, e21, e22 = propagator(sym.r, t)
    return (complex(e11 * a0 + e12 * v0), complex(e21 * a0 + e22 * v0))


def rk4_propagate(sym, t, state0, dt=1e-4):
    """Classical RK4 reference integrator for the 2x2 mode system."""
    m = sym.m.astype(complex)
    y = np.array(state0, dtype=complex)
    steps = int(round(t / dt))
    h = t / steps if steps else 0.0
    for _ in range(steps):
        k1 = m @ y
        k2 = m @ (y + 0.5 * h * k1)
        k3 = m @ (y + 0.5 * h * k2)
        k4 = m @ (y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return complex(y[0]), complex(y[1])


# ---- radial quadrature ---------------------------------------------------
def sphere_area(d):
    """Surface area of the unit sphere in R^d."""
    return 2 * np.pi ** (d / 2) / gamma_fn(d / 2)


_PHI_BREAKS = (0.75, 4.0 / 3.0, 1.5, 8.0 / 3.0)


def _gauss(n):
    return np.polynomial.legendre.leggauss(n)


_GAUSS_CACHE = {}


def _nodes(n):
    if n not in _GAUSS_CACHE:
        _GAUSS_CACHE[n] = _gauss(n)
    return _GAUSS_CACHE[n]


def _integrate(func, lo, hi, rtol, atol, n0=16, nmax=2**14):
    """Gauss-Legendre on [lo, hi], doubling nodes until the change is below tolerance.

    ``func`` maps an array of radii to an array of shape (..., len(radii)); the
    result has the leading shape.
    """
    prev = None
    n = n0
    while n <= nmax:
        x, w = _nodes(n)
        r = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
        val = 0.5 * (hi - lo) * np.sum(func(r) * w, axis=-1)
        if not np.all(np.isfinite(val)):
            raise ValueError("radial integrand is not finite (divergent integral)")
        if prev is not None:
            scale = rtol * np.abs(val) + atol
            if np.all(np.abs(val - prev) <= scale):
                return val
        prev = val
        n *= 2
    raise ValueError(f"quadrature on [{lo:.3g}, {hi:.3g}] did not converge")


def _shell_range(support):
    lo, hi = support
    j_lo = int(np.floor(np.log2(lo / (8.0 / 3.0))))
    j_hi = int(np.ceil(np.log2(hi / 0.75)))
    return range(j_lo, j_hi + 1)


def _pieces(points, support):
    lo, hi = support
    pts = sorted({min(max(p, lo), hi) for p in points})
    return [(a, b) for a, b in zip(pts[:-1], pts[1:]) if b > a]


def _check_support(support):
    lo, hi = support
    if not (lo > 0 and np.isfinite(hi) and hi > lo):
        raise ValueError(f"radial support must be 0 < r_lo < r_hi < inf, got {support}")


def shell_norms(density, d, support, rtol=1e-9, scale=None):
    """Per-shell L^2 norms (c_d int phi(2^-j r)^2 density(r) r^{d-1} dr)^{1/2}.

    ``density(r)`` returns |u_hat(r)|^2, possibly with leading axes (for
    example one per time sample).  ``scale`` is an absolute floor for the
    convergence test; by default the integral over the whole support.
    """
    _check_support(support)
    cd = sphere_area(d)
    if scale is None:
        scale = _radial_integral(density, d, support, rtol, 0.0)
    atol = rtol * np.asarray(scale)
    out = {}
    for j in _shell_range(support):
        breaks = [2.0**j * b for b in _PHI_BREAKS]
        pieces = _pieces(breaks, support)
        if not pieces:
            continue
        total = 0.0
        for a, b in pieces:
            def integrand(r, j=j):
                return phi(2.0**-j * r) ** 2 * density(r) * r ** (d - 1)
            total = total + _integrate(integrand, a, b, rtol, atol)
        out[j] = np.sqrt(cd * np.maximum(total, 0.0))
    return out


def _radial_integral(density, d, support, rtol, atol):
    # split at dyadic points so the oscillatory or peaked parts are resolved
    lo, hi = support
    pts = [lo, hi] + [2.0**j for j in range(int(np.floor(np.log2(lo))), int(np.ceil(np.log2(hi))) + 1)]
    total = 0.0
    for a, b in _pieces(pts, support):
        total = total + _integrate(lambda r: density(r) * r ** (d - 1), a, b, rtol, atol)
    return total


def radial_l2(density, d, support, rtol=1e-9):
    """(c_d int density(r) r^{d-1} dr)^{1/2}: the L^2 norm by Plancherel."""
    _check_support(support)
    total = _radial_integral(density, d, support, rtol, 0.0)
    total = _radial_integral(density, d, support, rtol, rtol * np.abs(total))
    return np.sqrt(sphere_area(d) * np.maximum(total, 0.0))


def shell_norm(density, d, s, q, support, rtol=1e-9):
    """Homogeneous Besov norm B^s_{2,q} of radial data, shell by shell."""
    norms = shell_norms(density, d, support, rtol)
    js = sorted(norms)
    w = np.array([2.0 ** (j * s) * norms[j] for j in js])
    if q == np.inf:
        return w.max(axis=0)
    return np.sum(w**q, axis=0) ** (1.0 / q)


@dataclass(frozen=True)
class RadialProfile:
    """Radial initial data a_hat(r), v_hat(r) on ``support``; zero elsewhere."""

    a_hat: object
    v_hat: object
    support: tuple

    def __post_init__(self):
        _check_support(self.support)

    def density(self, r):
        return np.abs(self.a_hat(r)) ** 2 + np.abs(self.v_hat(r)) ** 2


def saturating_profile(d, sigma1, r_lo=2.0**-20, r_hi=1.0):
    """a_hat = r^{sigma1 - d/2}, v_hat = 0: block L^2 norms scale like 2^{j sigma1},
    which puts the data exactly on the boundary of the B^{-sigma1}_{2,inf} ball."""
    expo = sigma1 - d / 2.0
    return RadialProfile(lambda r: np.asarray(r, float) ** expo,
                         lambda r: np.zeros_like(np.asarray(r, float)), (r_lo, r_hi))


def gaussian_profile(d, sigma1, r_lo=2.0**-20, r_hi=12.0):
    """r^{sigma1 - d/2} exp(-r^2): same low-frequency class, smooth at high r."""
    expo = sigma1 - d / 2.0
    return RadialProfile(lambda r: np.asarray(r, float) ** expo * np.exp(-np.asarray(r, float) ** 2),
                         lambda r: np.zeros_like(np.asarray(r, float)), (r_lo, r_hi))


@dataclass
class DecayCurve:
    t: np.ndarray
    l2: np.ndarray
    l2_a: np.ndarray
    besov: dict = field(default_factory=dict)
    initial_negative_norm: float = np.nan


def _evolved(profile, times):
    times = np.asarray(times, float)

    def parts(r):
        r = np.asarray(r, float)
        a0, v0 = profile.a_hat(r), profile.v_hat(r)
        e11, e12, e21, e22 = propagator(r[None, :], times[:, None])
        return e11 * a0 + e12 * v0, e21 * a0 + e22 * v0
    return parts


def decay_curve(profile, d, sigma1, times, besov=((0.0, np.inf), (0.0, 2.0)), rtol=1e-9):
    """Norms of the linear (a, v) evolution of radial data at the given times.

    ``l2`` is the Euclidean pair norm (||a||^2 + ||v||^2)^{1/2}; ``besov`` maps
    (s, q) to the B^s_{2,q} pair norm built from the same shells.
    """
    times = np.asarray(times, float)
    parts = _evolved(profile, times)

    def pair(r):
        a, v = parts(r)
        return np.abs(a) ** 2 + np.abs(v) ** 2

    def only_a(r):
        return np.abs(parts(r)[0]) ** 2

    support = profile.support
    l2 = radial_l2(pair, d, support, rtol)
    l2a = radial_l2(only_a, d, support, rtol)
    shells = shell_norms(pair, d, support, rtol, scale=(l2**2) / sphere_area(d))
    js = sorted(shells)
    out = {}
    for s, q in besov:
        w = np.array([2.0 ** (j * s) * shells[j] for j in js])
        out[(s, q)] = w.max(axis=0) if q == np.inf else np.sum(w**q, axis=0) ** (1.0 / q)
    init = shell_norms(profile.density, d, support, rtol)
    neg = max(2.0 ** (-j * sigma1) * float(init[j]) for j in init)
    return DecayCurve(times, l2, l2a, out, neg)


def heat_decay_curve(profile, d, times, mu=0.25, rtol=1e-9):
    """L^2 norm of exp(mu t Delta) applied to radial data a_hat (the omega channel)."""
    times = np.asarray(times, float)

    def dens(r):
        r = np.asarray(r, float)
        return np.exp(-2 * mu * times[:, None] * r[None, :] ** 2) * np.abs(profile.a_hat(r)) ** 2
    return radial_l2(dens, d, profile.support, rtol)


# ---- mode energy ---------------------------------------------------------
@dataclass(frozen=True)
class ModeEnergy:
    value: float  # L_k^2
    pair: float  # ||a_k||^2 + ||v_k||^2
    lower: float  # smallest eigenvalue of the quadratic form over the block support
    upper: float


def energy_form_bounds(r):
    """Extreme eigenvalues of [[2 + r^2, -r], [-r, 2]], the per-mode form of L_k^2."""
    r = np.asarray(r, float)
    tr = 4 + r * r
    root = np.sqrt(tr * tr - 4 * tr)
    return 0.5 * (tr - root), 0.5 * (tr + root)


def mode_energy(a_k, v_k):
    """L_k^2 = 2(||a||^2 + ||v||^2) + ||Lambda a||^2 - 2 (v | Lambda a) for one block."""
    g = a_k.grid
    if v_k.grid != g:
        raise ValueError("grid mismatch")
    k = g.kabs
    wgt = g.hermitian_weight * g.volume
    la = k * a_k.coeffs
    cross = float(np.sum(wgt * np.real(np.conj(v_k.coeffs) * la)))
    na, nv, nla = l2_norm(a_k) ** 2, l2_norm(v_k) ** 2, l2_norm(a_k.apply(k)) ** 2
    value = 2 * (na + nv) + nla - 2 * cross
    live = (np.abs(a_k.coeffs) + np.abs(v_k.coeffs)) > 0
    if np.any(live):
        radii = k[live]
        if radii.max() > 8.0 / 3.0:
            warnings.warn("block extends beyond |xi| = 8/3: outside the low-frequency regime",
                          stacklevel=2)
        lo, hi = energy_form_bounds(radii)
        lower, upper = float(lo.min()), float(hi.max())
    else:
        lower = upper = np.nan
    return ModeEnergy(value, na + nv, lower, upper)
