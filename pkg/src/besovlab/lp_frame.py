"""Littlewood-Paley blocks, homogeneous Besov norms and Bony's paraproduct split."""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import trapezoid

from .field_ops import Grid, SpectralField, from_physical, lp_norm

__all__ = [
    "chi",
    "phi",
    "DyadicProfile",
    "FilterBank",
    "BesovSpec",
    "build_profile",
    "filter_bank",
    "dyadic_block",
    "low_cut",
    "block_norms",
    "aggregate",
    "besov_norm",
    "bony",
    "chemin_lerner_norm",
    "dilate",
]


def _bump(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def chi(r):
    """Smooth radial cut-off: 1 below 3/4, 0 above 4/3."""
    r = np.asarray(r, dtype=float)
    left, right = _bump(4.0 / 3.0 - r), _bump(r - 0.75)
    den = left + right
    mid = np.divide(left, den, out=np.zeros_like(r), where=den > 0)
    return np.where(r <= 0.75, 1.0, np.where(r >= 4.0 / 3.0, 0.0, mid))


def phi(r):
    """Annular profile chi(r/2) - chi(r), supported in [3/4, 8/3]."""
    r = np.asarray(r, dtype=float)
    return chi(r / 2.0) - chi(r)


@dataclass(frozen=True)
class DyadicProfile:
    chi: object = chi
    phi: object = phi

    # breakpoints of phi in units of 2^j; phi is analytic between them
    breakpoints = (0.75, 4.0 / 3.0, 1.5, 8.0 / 3.0)


def build_profile():
    return DyadicProfile()


class FilterBank:
    """Sampled multipliers phi(2^-j |k|) for every block touching the lattice."""

    def __init__(self, grid, profile=None):
        self.grid = grid
        self.profile = profile or build_profile()
        k = grid.kabs[grid.kabs > 0]
        kmin, kmax = k.min(), k.max()
        # lowest block: chi(2^-j kmin) = 0; highest: chi(2^-(j+1) kmax) = 1
        self.j_min = int(np.floor(np.log2(0.75 * kmin)))
        self.j_max = int(np.ceil(np.log2(kmax / 0.75))) - 1
        while self.profile.chi(2.0**-self.j_min * kmin) > 0:
            self.j_min -= 1
        while self.profile.chi(2.0 ** -(self.j_max + 1) * kmax) < 1:
            self.j_max += 1
        self.multipliers = {j: self.profile.phi(2.0**-j * grid.kabs) for j in self.js}

    @property
    def js(self):
        return range(self.j_min, self.j_max + 1)

    @property
    def boundary_blocks(self):
        """Blocks whose annulus sticks out of the lattice; scaling identities fail there."""
        return (self.j_min, self.j_max)

    def chi_multiplier(self, j):
        return self.profile.chi(2.0**-j * self.grid.kabs)

    def check(self, field, j=None):
        if field.grid != self.grid:
            raise ValueError("field and filter bank live on different grids")
        if j is not None and not (self.j_min <= j <= self.j_max):
            raise IndexError(f"block {j} outside [{self.j_min}, {self.j_max}]")


@lru_cache(maxsize=32)
def filter_bank(grid):
    return FilterBank(grid)


@dataclass(frozen=True)
class BesovSpec:
    """Exponents of a homogeneous Besov norm, optionally restricted to low/high blocks."""

    s: float
    p: float
    r: float
    restriction: str = "all"
    j0: int = 0

    def __post_init__(self):
        if not self.p >= 1 or not self.r >= 1:
            raise ValueError(f"need p, r >= 1, got p={self.p}, r={self.r}")
        if self.restriction not in ("all", "low", "high"):
            raise ValueError(f"unknown restriction {self.restriction!r}")

    def blocks(self, bank):
        if self.restriction != "all" and not (bank.j_min <= self.j0 <= bank.j_max):
            raise ValueError(f"cutoff j0={self.j0} outside [{bank.j_min}, {bank.j_max}]")
        if self.restriction == "low":
            return [j for j in bank.js if j <= self.j0]
        if self.restriction == "high":
            return [j for j in bank.js if j >= self.j0 - 1]
        return list(bank.js)


def dyadic_block(field, j, bank=None):
    bank = bank or filter_bank(field.grid)
    bank.check(field, j)
    return field.apply(bank.multipliers[j])


def low_cut(field, j, bank=None):
    """S_j = chi(2^-j D); keeps the mean."""
    bank = bank or filter_bank(field.grid)
    bank.check(field, j)
    return field.apply(bank.chi_multiplier(j))


def block_norms(field, p, bank=None, js=None):
    """Map j -> ||Delta_j u||_{L^p}."""
    bank = bank or filter_bank(field.grid)
    bank.check(field)
    js = bank.js if js is None else js
    if p == 2:
        # Plancherel: same value as the rectangle rule, without the transforms
        g = field.grid
        power = np.abs(field.coeffs) ** 2
        power = power.reshape((-1,) + g.spectral_shape).sum(axis=0) * g.hermitian_weight
        out = {}
        for j in js:
            bank.check(field, j)
            out[j] = float(np.sqrt(g.volume * np.sum(bank.multipliers[j] ** 2 * power)))
        return out
    return {j: lp_norm(dyadic_block(field, j, bank).physical(), field.grid, p) for j in js}


def aggregate(norms, s, r):
    """l^r sum over blocks of 2^{js} * norms[j], in increasing j."""
    js = sorted(norms)
    if not js:
        return 0.0
    w = np.array([2.0 ** (j * s) * norms[j] for j in js])
    if r == np.inf:
        return float(w.max())
    return float(np.sum(w**r) ** (1.0 / r))


def besov_norm(field, spec, bank=None):
    bank = bank or filter_bank(field.grid)
    if not field.has_zero_mean():
        raise ValueError("homogeneous Besov norm needs a mean-zero field; subtract the mean first")
    return aggregate(block_norms(field, spec.p, bank, spec.blocks(bank)), spec.s, spec.r)


def bony(f, g, bank=None):
    """Return (T_f g, T_g f, R(f, g)) with raw (aliased) grid products.

    T_f g = sum_j S_{j-1} f * Delta_j g and R = sum_{|j-k|<=1} Delta_j f * Delta_k g.
    The three pieces add up to the grid product f*g up to roundoff.
    """
    bank = bank or filter_bank(f.grid)
    bank.check(f)
    bank.check(g)
    f.require_zero_mean("f")
    g.require_zero_mean("g")
    js = list(bank.js)
    fb = {j: dyadic_block(f, j, bank).physical() for j in js}
    gb = {j: dyadic_block(g, j, bank).physical() for j in js}
    fl = {j: f.apply(bank.chi_multiplier(j - 1)).physical() for j in js}
    gl = {j: g.apply(bank.chi_multiplier(j - 1)).physical() for j in js}
    tfg = sum(_prod(fl[j], gb[j]) for j in js)
    tgf = sum(_prod(gl[j], fb[j]) for j in js)
    rem = 0.0
    for j in js:
        near = sum(gb[k] for k in (j - 1, j, j + 1) if k in gb)
        rem = rem + _prod(fb[j], near)
    grid = f.grid
    return from_physical(grid, tfg), from_physical(grid, tgf), from_physical(grid, rem)


def _prod(x, y):
    if x.ndim == y.ndim:
        return x * y
    if x.ndim < y.ndim:
        return x[None] * y
    return x * y[None]


def chemin_lerner_norm(trajectory, spec, theta, T, bank=None):
    """Blockwise L^theta(0, T; L^p) norms (trapezoid in time), then the weighted l^r sum."""
    traj = list(trajectory)
    if not traj:
        raise ValueError("empty trajectory")
    times = np.array([t for t, _ in traj], dtype=float)
    if np.any(np.diff(times) <= 0):
        raise ValueError("trajectory times must increase")
    if T > times[-1] + 1e-12 * max(1.0, abs(times[-1])):
        raise ValueError(f"horizon T={T} beyond last snapshot t={times[-1]}")
    if times[0] > 0 and T > 0:
        raise ValueError("trajectory must start at t = 0")
    bank = bank or filter_bank(traj[0][1].grid)
    js = spec.blocks(bank)
    per_time = []
    for _, u in traj:
        if not u.has_zero_mean():
            raise ValueError("Chemin-Lerner norm needs mean-zero snapshots")
        nb = block_norms(u, spec.p, bank, js)
        per_time.append([nb[j] for j in js])
    per_time = np.array(per_time)  # (time, block)
    norms = {}
    for col, j in enumerate(js):
        norms[j] = _time_norm(times, per_time[:, col], theta, T)
    return aggregate(norms, spec.s, spec.r)


def _time_norm(times, values, theta, T):
    # restrict to [0, T], interpolating linearly at T
    keep = times <= T
    t = times[keep]
    v = values[keep]
    if t[-1] < T:
        t = np.append(t, T)
        v = np.append(v, np.interp(T, times, values))
    if theta == np.inf:
        return float(v.max())
    if len(t) < 2:
        return 0.0
    return float(trapezoid(v**theta, t) ** (1.0 / theta))


def dilate(field):
    """Same samples on a box of half the side: u'(x) = u(2x) for x in [0, L/2)^d.

    Frequencies double, so block j of u' is block j-1 of u and L^p norms pick
    up the Jacobian factor 2^{-d/p}.
    """
    g = field.grid
    return SpectralField(Grid(g.d, g.n, g.box_length / 2.0), field.coeffs)
