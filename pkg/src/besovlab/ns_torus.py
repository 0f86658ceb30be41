"""Pseudospectral solver for the perturbed barotropic system on the periodic box.

Unknowns are a = rho - 1 and u.  The linear part

    a_t + div u = f,    u_t - (mu Delta + (lam + mu) grad div) u + grad a = g

is integrated exactly per Fourier mode: the divergence-free part decays with
the heat factor and the compressible pair (a, v), v = Lambda^{-1} div u, uses
the 2x2 propagator.  The nonlinear terms f, g are advanced with an
integrating-factor Adams-Bashforth scheme of order two, bootstrapped by an
exponential midpoint step.
"""
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.optimize import nnls

from .field_ops import (SpectralField, div, effective_velocity, from_physical, l2_norm,
                        zeros, hermitian_part)
from .linear_semigroup import propagator
from .lp_frame import BesovSpec, besov_norm, block_norms, filter_bank

__all__ = [
    "SolverParams",
    "SolverState",
    "Trajectory",
    "VacuumError",
    "CFLError",
    "nonlinear_terms",
    "g_components",
    "step",
    "run",
    "make_initial",
    "initial_report",
    "residual_damped_transport",
    "linear_operator",
]

CFL_LIMIT = 0.5


class VacuumError(RuntimeError):
    pass


class CFLError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverParams:
    grid: object
    gamma: float = 1.4
    mu: float = 0.25
    lam: float = 0.5
    visc_exponent: float = 0.0
    dt: float = 0.02
    t_end: float = 1.0
    dealias: bool = True
    seed: int = 0

    def __post_init__(self):
        if not self.gamma > 1:
            raise ValueError(f"gamma must exceed 1, got {self.gamma}")
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not self.lam + 2 * self.mu > 0:
            raise ValueError("lam + 2 mu must be positive")
        if abs(self.lam + 2 * self.mu - 1.0) > 1e-12:
            raise ValueError(f"normalisation lam + 2 mu = 1 violated ({self.lam + 2 * self.mu})")
        if not self.visc_exponent >= 0:
            raise ValueError("visc_exponent must be nonnegative")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    @property
    def kmax(self):
        g = self.grid
        band = g.kabs[g.dealias_mask] if self.dealias else g.kabs
        return float(band.max())


@dataclass(frozen=True)
class SolverState:
    a: SpectralField
    u: SpectralField
    t: float = 0.0
    history: tuple = None  # nonlinear term at the previous step, for AB2
    info: dict = field(default=None, compare=False)


@dataclass
class Trajectory:
    times: list
    states: list
    diagnostics: list
    failure: str = None

    def pairs(self, name="a"):
        return [(t, getattr(s, name)) for t, s in zip(self.times, self.states)]


# ---- linear part ---------------------------------------------------------
@lru_cache(maxsize=16)
def _linear_ops(grid, mu, tau):
    r = grid.kabs
    e11, e12, e21, e22 = propagator(r, tau)
    heat = np.exp(-mu * r * r * tau)
    return e11, e12, e21, e22, heat


def _evolve(params, tau, a, u):
    """exp(tau L) applied to coefficient arrays (a, u)."""
    g = params.grid
    e11, e12, e21, e22, heat = _linear_ops(g, params.mu, float(tau))
    kh = g.khat
    along = np.sum(kh * u, axis=0)
    v = 1j * along
    p = u - kh * along
    a2 = e11 * a + e12 * v
    v2 = e21 * a + e22 * v
    return a2, heat * p - 1j * kh * v2


def linear_operator(params, k):
    """Full (1+d)x(1+d) linear symbol at wavevector k acting on (a_hat, u_hat)."""
    k = np.asarray(k, float)
    d = k.size
    m = np.zeros((d + 1, d + 1), complex)
    m[0, 1:] = -1j * k
    m[1:, 0] = -1j * k
    m[1:, 1:] = -params.mu * (k @ k) * np.eye(d) - (params.lam + params.mu) * np.outer(k, k)
    return m


# ---- nonlinear part --------------------------------------------------------
def _phys(grid, c):
    return np.fft.irfftn(c, s=grid.shape, axes=grid.axes, norm="forward")


def _spec(grid, x):
    return np.fft.rfftn(x, axes=grid.axes, norm="forward") * grid.resolved


class _Kernel:
    """Physical-space ingredients shared by the nonlinear terms."""

    def __init__(self, state, params):
        g = params.grid
        self.g = g
        self.params = params
        mask = g.dealias_mask if params.dealias else g.resolved
        self.mask = mask
        ac, uc = state.a.coeffs, state.u.coeffs
        k = g.wavevector
        self.A = _phys(g, ac)
        amin = 1.0 + self.A.min()
        if not amin > 0:
            raise VacuumError(f"vacuum reached at t={state.t}: min(1 + a) = {amin}")
        self.U = _phys(g, uc)
        self.grad_a = _phys(g, 1j * k * ac)
        self.J = _phys(g, 1j * k[None, :] * uc[:, None])  # J[i, j] = d_j u_i
        self.div_u = np.trace(self.J, axis1=0, axis2=1)
        ksq = g.kabs**2
        along = np.sum(k * uc, axis=0)
        lap_u = -ksq * uc
        graddiv_u = -k * along
        self.Au = _phys(g, params.mu * lap_u + (params.lam + params.mu) * graddiv_u)
        self.div_D = _phys(g, 0.5 * (lap_u + graddiv_u))
        self.graddiv = _phys(g, graddiv_u)

    def trunc(self, x):
        """Transform, truncate to the dealiasing band, return to physical space."""
        if not self.params.dealias:
            return x
        return _phys(self.g, _spec(self.g, x) * self.mask)

    def compositions(self):
        p, A = self.params, self.A
        rho = 1.0 + A
        out = {
            "I": self.trunc(A / rho),
            "k": self.trunc(rho ** (p.gamma - 2.0) - 1.0),
            "inv_rho": self.trunc(1.0 / rho),
        }
        al = p.visc_exponent
        if al != 0:
            grow = rho**al - 1.0
            slope = al * rho ** (al - 1.0)
            out["mu_t"] = self.trunc(p.mu * grow)
            out["lam_t"] = self.trunc(p.lam * grow)
            out["mu_t_prime"] = self.trunc(p.mu * slope)
            out["lam_t_prime"] = self.trunc(p.lam * slope)
        return out


def g_components(state, params):
    """The four pieces of g in physical space: convection, pressure, g3 and g4."""
    ker = _Kernel(state, params)
    c = ker.compositions()
    U, J = ker.U, ker.J
    conv = -np.einsum("j...,ij...->i...", U, J)
    pres = -c["k"][None] * ker.grad_a
    g3 = -c["I"][None] * ker.Au
    g4 = np.zeros_like(U)
    if "mu_t" in c:
        sym = 0.5 * (J + np.swapaxes(J, 0, 1))
        g3 = g3 + c["inv_rho"][None] * (2 * c["mu_t"][None] * ker.div_D
                                        + c["lam_t"][None] * ker.graddiv)
        d_grad = np.einsum("ij...,j...->i...", sym, ker.grad_a)
        g4 = c["inv_rho"][None] * (2 * c["mu_t_prime"][None] * d_grad
                                   + c["lam_t_prime"][None] * ker.div_u[None] * ker.grad_a)
    return {"convection": conv, "pressure": pres, "g3": g3, "g4": g4}, ker


def _rhs(state, params):
    parts, ker = g_components(state, params)
    g = params.grid
    k = g.wavevector
    au = _spec(g, ker.A[None] * ker.U) * ker.mask
    f_hat = -np.sum(1j * k * au, axis=0)
    g_hat = _spec(g, sum(parts.values())) * ker.mask
    return f_hat * ker.mask, g_hat, ker


def nonlinear_terms(state, params):
    """Return (f, g) as spectral fields."""
    f_hat, g_hat, _ = _rhs(state, params)
    g = params.grid
    return SpectralField(g, f_hat), SpectralField(g, g_hat)


# ---- time stepping -------------------------------------------------------
def _cfl_number(params, ker):
    speed = np.sqrt(np.sum(ker.U**2, axis=0)).max()
    return params.dt * params.kmax * speed


def _zero_mean(c, d):
    c = c.copy()
    c[(0,) * d] = 0.0
    return c


def step(state, params):
    g = params.grid
    dt = params.dt
    f0, g0, ker = _rhs(state, params)
    cfl = _cfl_number(params, ker)
    if cfl > CFL_LIMIT:
        raise CFLError(f"CFL number {cfl:.3g} exceeds {CFL_LIMIT} at t={state.t}")
    a, u = state.a.coeffs, state.u.coeffs
    if state.history is None:
        ah, uh = _evolve(params, dt / 2, a + 0.5 * dt * f0, u + 0.5 * dt * g0)
        mid = SolverState(SpectralField(g, ah), SpectralField(g, uh), state.t + dt / 2)
        fh, gh, _ = _rhs(mid, params)
        a1, u1 = _evolve(params, dt, a, u)
        na, nu = _evolve(params, dt / 2, fh, gh)
        a1, u1 = a1 + dt * na, u1 + dt * nu
    else:
        fp, gp = state.history
        a1, u1 = _evolve(params, dt, a + 1.5 * dt * f0, u + 1.5 * dt * g0)
        pa, pu = _evolve(params, 2 * dt, fp, gp)
        a1, u1 = a1 - 0.5 * dt * pa, u1 - 0.5 * dt * pu
    a1 = _zero_mean(a1, g.d)
    if not (np.all(np.isfinite(a1)) and np.all(np.isfinite(u1))):
        raise FloatingPointError(f"non-finite state after step at t={state.t}")
    return SolverState(SpectralField(g, a1), SpectralField(g, u1), state.t + dt, (f0, g0))


def _diagnostics(state, params):
    A = state.a.physical()
    U = state.u.physical()
    speed = np.sqrt(np.sum(U**2, axis=0)).max()
    return {
        "t": state.t,
        "min_density": float(1.0 + A.min()),
        "cfl": float(params.dt * params.kmax * speed),
        "energy": 0.5 * (l2_norm(state.a) ** 2 + l2_norm(state.u) ** 2),
        "mass_mean": float(abs(state.a.mean())),
    }


def run(params, init, schedule):
    """Advance ``init`` and record states at the schedule times (multiples of dt)."""
    sched = sorted(set(float(s) for s in schedule))
    if not sched:
        raise ValueError("empty schedule")
    horizon = min(params.t_end, sched[-1]) if params.t_end >= init.t else init.t
    targets = []
    for s in sched:
        if s < init.t - 1e-12 or s > horizon + 1e-12:
            continue
        n = (s - init.t) / params.dt
        if abs(n - round(n)) > 1e-6:
            raise ValueError(f"snapshot time {s} is not a multiple of dt={params.dt}")
        targets.append(int(round(n)))
    traj = Trajectory([], [], [])
    state = init
    count = 0
    for n in targets:
        try:
            while count < n:
                state = step(state, params)
                count += 1
        except (VacuumError, CFLError, FloatingPointError) as exc:
            traj.failure = f"{type(exc).__name__}: {exc}"
            break
        snap = replace(state, t=init.t + count * params.dt)
        traj.times.append(snap.t)
        traj.states.append(snap)
        traj.diagnostics.append(_diagnostics(snap, params))
    return traj


# ---- initial data ----------------------------------------------------------
def _target(j, eps, sigma1, d, p):
    if j <= 0:
        return eps * 2.0 ** (j * sigma1) / (1.0 + j * j)
    return eps * 2.0 ** (-j * (d / p + 1.0))


def _shape_blocks(grid, coeffs, targets, support):
    """Rescale mode groups so every block L^2 norm hits its target (least squares, >= 0)."""
    bank = filter_bank(grid)
    js = list(bank.js)
    phis = np.array([bank.multipliers[j] for j in js])
    owner = np.argmax(phis, axis=0)
    power = np.abs(coeffs) ** 2
    if power.ndim > grid.d:
        power = power.sum(axis=0)
    power = power * grid.hermitian_weight * grid.volume * support
    m = np.array([[np.sum(phis[a] ** 2 * power * (owner == b)) for b in range(len(js))]
                  for a in range(len(js))])
    want = np.array([targets.get(j, 0.0) ** 2 for j in js])
    live = np.array([np.any(power[owner == b] > 0) for b in range(len(js))])
    x = np.zeros(len(js))
    if np.any(live):
        rows = [a for a in range(len(js)) if np.any(m[a, live] > 0)]
        x_live, _ = nnls(m[np.ix_(rows, np.flatnonzero(live))], want[rows])
        x[live] = x_live
    scale = np.sqrt(x)[owner] * support
    return coeffs * scale


def make_initial(d, grid, eps, sigma1, p, seed, dealias=True):
    """Random-phase data with prescribed dyadic block amplitudes.

    ||Delta_j a_0||_{L^2} = ||Delta_j u_0||_{L^2} = target_j / sqrt 2 with
    target_j = eps 2^{j sigma1}/(1 + j^2) for j <= 0 and eps 2^{-j(d/p + 1)}
    for j > 0, so the Euclidean pair norm of block j equals target_j.
    """
    if d != grid.d:
        raise ValueError("dimension does not match the grid")
    sigma0 = 2 * d / p - d / 2
    if not (1 - d / 2 < sigma1 <= sigma0):
        raise ValueError(f"sigma1-window: need {1 - d / 2} < sigma1 <= {sigma0}, got {sigma1}")
    if eps == 0:
        return SolverState(zeros(grid), zeros(grid, (d,)), 0.0,
                           info=initial_report(zeros(grid), zeros(grid, (d,)), sigma1, p))
    rng = np.random.default_rng(seed)
    support = (grid.kabs > 0) & grid.resolved
    if dealias:
        support &= grid.dealias_mask
    bank = filter_bank(grid)
    targets = {j: _target(j, eps, sigma1, d, p) / np.sqrt(2) for j in bank.js}
    shape = grid.spectral_shape

    def draw(lead):
        c = rng.standard_normal(lead + shape) + 1j * rng.standard_normal(lead + shape)
        return hermitian_part(c * support, d)
    ac = _shape_blocks(grid, draw(()), targets, support)
    uc = _shape_blocks(grid, draw((d,)), targets, support)
    a0, u0 = SpectralField(grid, ac), SpectralField(grid, uc)
    return SolverState(a0, u0, 0.0, info=initial_report(a0, u0, sigma1, p))


def initial_report(a, u, sigma1, p, j0=2):
    """Realised data norms: X_{p,0} pieces and the low-frequency negative norm."""
    d = a.grid.d
    bank = filter_bank(a.grid)
    j0 = min(max(j0, bank.j_min), bank.j_max)
    low = [j for j in bank.js if j <= j0]
    la, lu = block_norms(a, 2, bank, low), block_norms(u, 2, bank, low)
    pair = {j: np.hypot(la[j], lu[j]) for j in low}
    x_low = sum(2.0 ** (j * (d / 2 - 1)) * pair[j] for j in low)
    x_ha = besov_norm(a, BesovSpec(d / p, p, 1, "high", j0), bank)
    x_hu = besov_norm(u.zero_mean(), BesovSpec(d / p - 1, p, 1, "high", j0), bank)
    neg = max(2.0 ** (-j * sigma1) * pair[j] for j in low)
    neg_a = max(2.0 ** (-j * sigma1) * la[j] for j in low)
    return {"X_low": x_low, "X_high_a": x_ha, "X_high_u": x_hu,
            "X_p0": x_low + x_ha + x_hu, "neg_norm": neg, "neg_norm_a": neg_a,
            "block_a": la, "block_u": lu}


# ---- damped transport residual ---------------------------------------------
def residual_damped_transport(s0, s1, params):
    """L^2 norm of (a1 - a0)/dt + mean over the two ends of [div(a u) + a + div w]."""
    dt = s1.t - s0.t
    if not dt > 0:
        raise ValueError("snapshots must be time ordered")
    g = params.grid

    def rhs(s):
        au = from_physical(g, s.a.physical()[None] * s.u.physical())
        if params.dealias:
            au = au.apply(g.dealias_mask)
        w = effective_velocity(s.a, s.u)
        return div(au) + s.a + div(w)
    res = (s1.a - s0.a) / dt + 0.5 * (rhs(s0) + rhs(s1))
    return l2_norm(res)
