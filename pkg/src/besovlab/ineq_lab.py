"""Empirical constants for the harmonic-analysis inequalities behind the decay argument.

Every checker draws random band-limited fields, evaluates both sides of one
inequality on the lattice and collects the ratios in an ensemble.  A constant
"exists" in the desk-scale sense when the largest ratio is finite and does not
drift as the grid is refined.

Amplitude law: complex Gaussian coefficients on a random dyadic band
[3/4 2^j1, 8/3 2^j2], multiplied by |k|^-beta with beta uniform on [0, 2],
Hermitian-symmetrised and normalised to unit L^2.  Fields entering products
are capped at |k| < n/4, so every grid product is alias free.
"""
import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .decay_harness import check_framework
from .field_ops import (Grid, from_physical, grad, l2_norm, lambda_pow, lp_norm, multiply,
                        random_field, resample)
from .lp_frame import BesovSpec, besov_norm, bony, dyadic_block, filter_bank, low_cut

__all__ = [
    "MIN_TRIALS",
    "RatioReport",
    "TrialEnsemble",
    "band_field",
    "COMPOSITIONS",
    "bernstein_sides",
    "lower_bernstein_sides",
    "product_sides",
    "interpolation_sides",
    "commutator_sides",
    "composition_sides",
    "measure_n0",
    "check_bernstein",
    "check_lower_bernstein",
    "check_products",
    "check_interpolation",
    "check_commutator",
    "check_composition",
]

MIN_TRIALS = 30
INF = math.inf


# ---- reports -------------------------------------------------------------
@dataclass(frozen=True)
class RatioReport:
    """One trial: both sides of an inequality written as lhs <= C rhs."""

    lhs: float
    rhs: float
    seed: int
    n: int
    params: dict = field(default_factory=dict)
    atol: float = 0.0

    def __post_init__(self):
        for side in (self.lhs, self.rhs):
            if not side >= 0:
                raise ValueError(f"sides must be nonnegative, got lhs={self.lhs}, rhs={self.rhs}")

    @property
    def vacuous(self):
        return self.lhs <= self.atol and self.rhs <= self.atol

    @property
    def ratio(self):
        if self.vacuous:
            return float("nan")
        if self.rhs <= 0:
            return INF
        return self.lhs / self.rhs

    @property
    def flagged(self):
        return not self.vacuous and not math.isfinite(self.ratio)

    def row(self):
        return (self.seed, self.n, self.lhs, self.rhs, self.ratio)


@dataclass
class TrialEnsemble:
    checker: str
    generator: dict
    reports: list = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    def resolutions(self):
        return sorted({r.n for r in self.reports})

    def _select(self, n):
        return [r for r in self.reports if n is None or r.n == n]

    def ratios(self, n=None):
        out = [r.ratio for r in self._select(n) if not r.vacuous]
        return np.array([x for x in out if math.isfinite(x)], float)

    def max_ratio(self, n=None):
        sel = [r for r in self._select(n) if not r.vacuous]
        if any(r.flagged for r in sel):
            return INF
        vals = self.ratios(n)
        return float(vals.max()) if len(vals) else float("nan")

    def median_ratio(self, n=None):
        vals = self.ratios(n)
        return float(np.median(vals)) if len(vals) else float("nan")

    def count(self, n=None):
        return len(self._select(n))

    @property
    def complete(self):
        ns = self.resolutions()
        return bool(ns) and all(self.count(n) >= MIN_TRIALS for n in ns)

    def stability(self):
        """Largest over smallest per-resolution max ratio (nan with fewer than two resolutions)."""
        maxes = [self.max_ratio(n) for n in self.resolutions()]
        if len(maxes) < 2:
            return float("nan")
        return float(max(maxes) / min(maxes))

    def aggregate(self):
        out = {}
        for n in self.resolutions():
            sel = self._select(n)
            out[str(n)] = {
                "trials": len(sel),
                "max": self.max_ratio(n),
                "median": self.median_ratio(n),
                "vacuous": sum(r.vacuous for r in sel),
                "flagged": sum(r.flagged for r in sel),
            }
        return out

    def to_dict(self):
        return {
            "checker": self.checker,
            "generator": self.generator,
            "resolutions": self.aggregate(),
            "stability": self.stability(),
            "complete": self.complete,
            "notes": self.notes,
        }

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["seed", "n", "lhs", "rhs", "ratio"])
            for r in self.reports:
                w.writerow([r.seed, r.n, repr(r.lhs), repr(r.rhs), repr(r.ratio)])

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(_jsonable(self.to_dict()), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


# ---- random fields -------------------------------------------------------
def band_field(grid, rng, lo, hi, rank_shape=(), slope=0.0):
    """Unit-L^2 Gaussian field on lo <= |k| <= hi with coefficient amplitudes |k|^-slope."""
    f = random_field(grid, rng, (lo, hi), rank_shape)
    if slope:
        k = grid.kabs
        f = f.apply(np.where(k > 0, np.where(k > 0, k, 1.0) ** -slope, 0.0))
        nrm = l2_norm(f)
        f = f / nrm if nrm > 0 else f
    return f


def _top_block(grid, cap):
    bank = filter_bank(grid)
    top = bank.j_min
    while top + 1 <= bank.j_max and 8.0 / 3.0 * 2.0 ** (top + 1) <= cap:
        top += 1
    return top


def _random_band(grid, rng, cap, rank_shape=(), j_floor=None):
    bank = filter_bank(grid)
    top = _top_block(grid, cap)
    lo_j = bank.j_min if j_floor is None else min(max(j_floor, bank.j_min), top)
    j1 = int(rng.integers(lo_j, top + 1))
    j2 = int(rng.integers(j1, top + 1))
    slope = float(rng.uniform(0.0, 2.0))
    f = band_field(grid, rng, 0.75 * 2.0**j1, min(8.0 / 3.0 * 2.0**j2, cap), rank_shape, slope)
    return f, {"j1": j1, "j2": j2, "beta": slope}


def _product_cap(grid):
    return (grid.n // 4 - 1) * grid.k0


def _resolved_cap(grid):
    return (grid.n // 2 - 1) * grid.k0


def _trials(seed, n, trials):
    for child in np.random.SeedSequence([int(seed), int(n)]).spawn(trials):
        s = int(child.generate_state(1)[0])
        yield s, np.random.default_rng(s)


def _need_trials(trials):
    if trials < MIN_TRIALS:
        raise ValueError(f"an ensemble needs at least {MIN_TRIALS} trials, got {trials}")


def _besov(f, s, p, r, bank=None, restriction="all", j0=0):
    return besov_norm(f, BesovSpec(s, p, r, restriction, j0), bank)


def _inv(p):
    return 0.0 if p == INF else 1.0 / p


# ---- Bernstein ----------------------------------------------------------
def bernstein_sides(u, j, k, a, b):
    """(||D^k u||_{L^b}, 2^{j(k + d(1/a - 1/b))} ||u||_{L^a})."""
    d = u.grid.d
    du = u
    for _ in range(k):
        du = grad(du)
    lhs = lp_norm(du.physical(), u.grid, b)
    rhs = 2.0 ** (j * (k + d * (_inv(a) - _inv(b)))) * lp_norm(u.physical(), u.grid, a)
    return lhs, rhs


def check_bernstein(j=None, k=1, a=2, b=2, trials=MIN_TRIALS, ns=(128,), d=2, seed=0, scale=1.0):
    """Upper Bernstein on the ball |k| <= (4/3) 2^j (fields S_j u); j=None draws j per trial."""
    if not 1 <= a <= b <= INF:
        raise ValueError(f"need 1 <= a <= b <= inf, got a={a}, b={b}")
    if k not in (0, 1, 2):
        raise ValueError("k must be 0, 1 or 2")
    _need_trials(trials)
    ens = TrialEnsemble("bernstein", {"support": "ball (4/3) 2^j", "j": j, "k": k, "a": a, "b": b, "d": d})
    for n in ns:
        grid = Grid(d, n)
        bank = filter_bank(grid)
        top = _top_block(grid, _resolved_cap(grid) / 2)
        for s, rng in _trials(seed, n, trials):
            jj = int(rng.integers(max(bank.j_min, 0), top + 1)) if j is None else j
            u = low_cut(random_field(grid, rng, (0, 4.0 / 3.0 * 2.0**jj)), jj, bank) * scale
            lhs, rhs = bernstein_sides(u, jj, k, a, b)
            ens.reports.append(RatioReport(lhs, rhs, s, n, {"j": jj}))
    return ens


def lower_bernstein_sides(f, j, p):
    """(2^{2j} (p-1)/p int |f|^p, -int Lap f |f|^{p-2} f) and the gradient form of the second."""
    g = f.grid
    x = f.physical()
    lap = (-(g.kabs**2) * f.coeffs)
    lap_x = np.fft.irfftn(lap, s=g.shape, axes=g.axes, norm="forward")
    ax = np.abs(x)
    lhs = 2.0 ** (2 * j) * (p - 1) / p * g.cell_volume * np.sum(ax**p)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(ax > 0, ax ** (p - 2), 0.0)
    rhs = -g.cell_volume * np.sum(lap_x * w * x)
    gx = grad(f).physical()
    alt = (p - 1) * g.cell_volume * np.sum(np.sum(gx**2, axis=0) * w)
    return float(lhs), float(rhs), float(alt)


def check_lower_bernstein(j=None, p=4, trials=MIN_TRIALS, ns=(128,), d=2, seed=0, scale=1.0):
    """Ratio lhs/rhs of the lower Bernstein bound; the empirical c is 1 / max ratio.

    j is capped so that products of ceil(p) block fields integrate exactly.
    """
    if not 1 < p < INF:
        raise ValueError(f"need 1 < p < inf, got {p}")
    _need_trials(trials)
    ens = TrialEnsemble("lower_bernstein", {"support": "annulus [3/4, 8/3] 2^j", "j": j, "p": p, "d": d})
    m = max(2, math.ceil(p))
    for n in ns:
        grid = Grid(d, n)
        bank = filter_bank(grid)
        top = _top_block(grid, (grid.n - 1) * grid.k0 / m)
        for s, rng in _trials(seed, n, trials):
            jj = int(rng.integers(max(bank.j_min, 0), top + 1)) if j is None else j
            f = dyadic_block(random_field(grid, rng, (0.75 * 2.0**jj, 8.0 / 3.0 * 2.0**jj)), jj, bank)
            lhs, rhs, alt = lower_bernstein_sides(f * scale, jj, p)
            ens.reports.append(RatioReport(lhs, max(rhs, 0.0), s, n,
                                           {"j": jj, "gradient_form_gap": abs(rhs - alt)}))
    mx = ens.max_ratio()
    ens.notes["c"] = 1.0 / mx if mx > 0 else float("nan")
    return ens


# ---- products -------------------------------------------------------------
PRODUCT_KINDS = ("alg", "nonstd", "neg_index", "neg_index_shifted", "mixed")

_PRODUCT_DEFAULTS = {
    "alg": {"s": 1.0, "p": 2, "r": 1},
    "nonstd": {"s1": 1.0, "s2": -0.5, "p1": 2, "p2": 2},
    "neg_index": {"sigma1": None, "p": 2},
    "neg_index_shifted": {"sigma1": None, "p": 2},
    "mixed": {"p": 2, "sigma": 0.5, "k0": 2, "N0": None},
}


def _product_params(kind, params, d):
    if kind not in PRODUCT_KINDS:
        raise ValueError(f"unknown product kind {kind!r}")
    out = dict(_PRODUCT_DEFAULTS[kind])
    out.update(params or {})
    unknown = set(out) - set(_PRODUCT_DEFAULTS[kind])
    if unknown:
        raise ValueError(f"unknown parameters for {kind}: {sorted(unknown)}")
    if kind in ("neg_index", "neg_index_shifted"):
        if out["sigma1"] is None:
            out["sigma1"] = d / 2 - 1 + 0.1
        check_framework(d, out["p"], out["sigma1"])
        p, s1 = out["p"], out["sigma1"]
        if kind == "neg_index":
            ns = {"s1": d / p, "s2": -s1, "p1": p, "p2": 2}
        else:
            ns = {"s1": d / p - 1, "s2": d / p - d / 2 - s1 + 1, "p1": p, "p2": 2}
        _nonstd_conditions(ns, d)
        out["nonstd"] = ns
    elif kind == "nonstd":
        _nonstd_conditions(out, d)
    elif kind == "alg":
        if not out["s"] > 0:
            raise ValueError("product exponents rejected: s > 0 violated")
        if not (out["p"] >= 1 and out["r"] >= 1):
            raise ValueError("product exponents rejected: p, r >= 1 violated")
    else:
        if not 2 <= out["p"] <= 4:
            raise ValueError("product exponents rejected: 2 <= p <= 4 violated")
        if not out["sigma"] > 0:
            raise ValueError("product exponents rejected: sigma > 0 violated")
    return out


def _nonstd_conditions(q, d):
    s1, s2, p1, p2 = q["s1"], q["s2"], q["p1"], q["p2"]
    conds = [
        ("s1 + s2 >= 0", s1 + s2 >= -1e-12),
        ("s1 <= d/p1", s1 <= d / p1 + 1e-12),
        ("s2 < min(d/p1, d/p2)", s2 < min(d / p1, d / p2) - 1e-12),
        ("1/p1 + 1/p2 <= 1", _inv(p1) + _inv(p2) <= 1 + 1e-12),
    ]
    bad = [name for name, ok in conds if not ok]
    if bad:
        raise ValueError("product exponents rejected: " + ", ".join(bad) + " violated")


def _low_cut_any(f, m, bank):
    """S_m for any integer m (identity on the lattice once m > j_max)."""
    if m > bank.j_max:
        return f
    return f.apply(bank.chi_multiplier(m))


def product_sides(kind, f, g, params=None, bank=None):
    """Both sides of one product estimate for mean-zero f, g (raw grid products)."""
    d = f.grid.d
    q = _product_params(kind, params, d)
    bank = bank or filter_bank(f.grid)
    if kind == "alg":
        s, p, r = q["s"], q["p"], q["r"]
        fg = multiply(f, g).zero_mean()
        lhs = _besov(fg, s, p, r, bank)
        rhs = (lp_norm(f.physical(), f.grid, INF) * _besov(g, s, p, r, bank)
               + lp_norm(g.physical(), g.grid, INF) * _besov(f, s, p, r, bank))
        return lhs, rhs
    if kind == "mixed":
        p, sigma, k0 = q["p"], q["sigma"], q["k0"]
        n0 = q["N0"] if q["N0"] is not None else measure_n0(f.grid, k0)
        sigma0 = 2 * d / p - d / 2
        pstar = INF if p == 2 else 1.0 / (0.5 - 1.0 / p)
        gh = g - low_cut(g, k0, bank)
        fgh = multiply(f, gh).zero_mean()
        lhs = _besov(fgh, -sigma0, 2, INF, bank, "low", k0)
        low_f = lp_norm(_low_cut_any(f, k0 + n0, bank).physical(), f.grid, pstar)
        rhs = (_besov(f, sigma, p, 1, bank) + low_f) * _besov(gh, -sigma, p, INF, bank)
        return lhs, rhs
    ns = q["nonstd"] if kind in ("neg_index", "neg_index_shifted") else q
    s1, s2, p1, p2 = ns["s1"], ns["s2"], ns["p1"], ns["p2"]
    fg = multiply(f, g).zero_mean()
    lhs = _besov(fg, s1 + s2 - d / p1, p2, INF, bank)
    rhs = _besov(f, s1, p1, 1, bank) * _besov(g, s2, p2, INF, bank)
    return lhs, rhs


def measure_n0(grid, k0, trials=4, seed=0, rtol=1e-11):
    """Smallest N with Delta_k T_f g^h = Delta_k T_{S_{k0+N} f} g^h for every k <= k0.

    g^h = g - S_{k0} g.  The search stops at the lattice bound N = j_max + 1 - k0,
    where S_{k0+N} is already the identity.
    """
    bank = filter_bank(grid)
    if not bank.j_min <= k0 <= bank.j_max:
        raise ValueError(f"k0={k0} outside [{bank.j_min}, {bank.j_max}]")
    rng = np.random.default_rng([seed, grid.n, 7])
    cap = _resolved_cap(grid) / 2
    pairs = []
    for _ in range(trials):
        f = band_field(grid, rng, 0, cap)
        g = band_field(grid, rng, 0.75 * 2.0**k0, cap)
        gh = g - low_cut(g, k0, bank)
        full = bony(f, gh, bank)[0]
        pairs.append((f, gh, full))
    low = [j for j in bank.js if j <= k0]
    bound = bank.j_max + 1 - k0
    for n0 in range(0, bound + 1):
        ok = True
        for f, gh, full in pairs:
            part = bony(_low_cut_any(f, k0 + n0, bank), gh, bank)[0]
            diff = full - part
            for j in low:
                ref = l2_norm(dyadic_block(full, j, bank))
                if l2_norm(dyadic_block(diff, j, bank)) > rtol * max(ref, l2_norm(full)):
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return n0
    return bound


def check_products(kind, params=None, trials=MIN_TRIALS, ns=(128,), d=2, seed=0, scale=1.0,
                   generator=None):
    """Ensemble of product-estimate ratios.  ``generator(grid, rng) -> (f, g)`` overrides the draw."""
    _need_trials(trials)
    q = _product_params(kind, params, d)
    ens = TrialEnsemble(f"products:{kind}", {"kind": kind, "d": d,
                                             "params": {k: v for k, v in q.items() if k != "nonstd"},
                                             "law": "random dyadic band, |k| < n/4"})
    for n in ns:
        grid = Grid(d, n)
        bank = filter_bank(grid)
        cap = _product_cap(grid)
        local = dict(q)
        local.pop("nonstd", None)
        if kind == "mixed" and local["N0"] is None:
            local["N0"] = measure_n0(grid, local["k0"])
            ens.notes[f"N0[n={n}]"] = local["N0"]
            ens.notes[f"N0_lattice_bound[n={n}]"] = bank.j_max + 1 - local["k0"]
        for s, rng in _trials(seed, n, trials):
            if generator is not None:
                f, g = generator(grid, rng)
                meta = {}
            else:
                f, mf = _random_band(grid, rng, cap)
                floor = local["k0"] if kind == "mixed" else None
                g, mg = _random_band(grid, rng, cap, j_floor=floor)
                meta = {"f": mf, "g": mg}
            lhs, rhs = product_sides(kind, f * scale, g, local, bank)
            ens.reports.append(RatioReport(lhs, rhs, s, n, meta))
    if kind in ("alg", "nonstd", "neg_index", "neg_index_shifted", "mixed"):
        ens.notes["truncation"] = "blocks j < j_min (below the lattice gap) are absent from every sup"
    return ens


# ---- interpolation ----------------------------------------------------------
INTERPOLATION_KINDS = ("complex", "real", "gn")

_INTERP_DEFAULTS = {
    "complex": {"s": 0.0, "s_tilde": 1.0, "theta": 0.5, "p": 2, "r1": 1, "r2": INF},
    "real": {"s": 0.0, "s_tilde": 1.0, "theta": 0.5, "p": 2},
    "gn": {"ell": 0.0, "m": 0.0, "k": 2.0, "q": 2, "r": INF, "theta": None},
}


def _interp_params(kind, params, d):
    if kind not in INTERPOLATION_KINDS:
        raise ValueError(f"unknown interpolation kind {kind!r}")
    out = dict(_INTERP_DEFAULTS[kind])
    out.update(params or {})
    unknown = set(out) - set(_INTERP_DEFAULTS[kind])
    if unknown:
        raise ValueError(f"unknown parameters for {kind}: {sorted(unknown)}")
    if kind == "gn":
        ell, m, k, q, r = out["ell"], out["m"], out["k"], out["q"], out["r"]
        if not 1 <= q <= r <= INF:
            raise ValueError("exponent relation rejected: 1 <= q <= r <= inf violated")
        target = ell + d * (_inv(q) - _inv(r))
        if out["theta"] is None:
            if k == m:
                raise ValueError("exponent relation rejected: k = m leaves theta undetermined")
            out["theta"] = (target - m) / (k - m)
        th = out["theta"]
        if not 0 <= th <= 1:
            raise ValueError(f"exponent relation rejected: theta = {th} outside [0, 1]")
        if abs(target - (m * (1 - th) + k * th)) > 1e-12:
            raise ValueError("exponent relation rejected: ell + d(1/q - 1/r) != m(1 - theta) + k theta")
        return out
    th = out["theta"]
    if not 0 < th < 1:
        raise ValueError(f"exponent relation rejected: theta = {th} outside (0, 1)")
    if kind == "complex":
        if out["s"] == out["s_tilde"]:
            raise ValueError("exponent relation rejected: s != s_tilde violated")
        out["r"] = 1.0 / (th * _inv(out["r1"]) + (1 - th) * _inv(out["r2"]))
    else:
        if not out["s"] < out["s_tilde"]:
            raise ValueError("exponent relation rejected: s < s_tilde violated")
        delta = out["s_tilde"] - out["s"]
        out["C_formula"] = (1 / (1 - 2.0 ** (-(1 - th) * delta)) + 1 / (1 - 2.0 ** (-th * delta)))
        out["simple_bound"] = 1 / (th * (1 - th) * delta)
    return out


def interpolation_sides(kind, u, params=None, bank=None):
    d = u.grid.d
    q = _interp_params(kind, params, d)
    bank = bank or filter_bank(u.grid)
    if kind == "gn":
        th = q["theta"]
        lhs = lp_norm(lambda_pow(u, q["ell"]).physical(), u.grid, q["r"])
        lo = lp_norm(lambda_pow(u, q["m"]).physical(), u.grid, q["q"])
        hi = lp_norm(lambda_pow(u, q["k"]).physical(), u.grid, q["q"])
        return lhs, lo ** (1 - th) * hi**th
    th, s, st, p = q["theta"], q["s"], q["s_tilde"], q["p"]
    mid = th * s + (1 - th) * st
    if kind == "complex":
        lhs = _besov(u, mid, p, q["r"], bank)
        rhs = _besov(u, s, p, q["r1"], bank) ** th * _besov(u, st, p, q["r2"], bank) ** (1 - th)
    else:
        lhs = _besov(u, mid, p, 1, bank)
        rhs = _besov(u, s, p, INF, bank) ** th * _besov(u, st, p, INF, bank) ** (1 - th)
    return lhs, rhs


def check_interpolation(kind, params=None, trials=MIN_TRIALS, ns=(128,), d=2, seed=0, scale=1.0,
                        generator=None):
    _need_trials(trials)
    q = _interp_params(kind, params, d)
    ens = TrialEnsemble(f"interpolation:{kind}", {"kind": kind, "d": d, "params": q,
                                                  "law": "random dyadic band"})
    if kind == "real":
        ens.notes["C_formula"] = q["C_formula"]
        ens.notes["simple_bound"] = q["simple_bound"]
    for n in ns:
        grid = Grid(d, n)
        bank = filter_bank(grid)
        cap = _resolved_cap(grid)
        for s, rng in _trials(seed, n, trials):
            if generator is not None:
                u, meta = generator(grid, rng), {}
            else:
                u, meta = _random_band(grid, rng, cap)
            lhs, rhs = interpolation_sides(kind, u * scale, params, bank)
            ens.reports.append(RatioReport(lhs, rhs, s, n, meta))
    return ens


# ---- commutator -------------------------------------------------------------
def _commutator_window(s, p, p1, d):
    pc = INF if p == 1 else (1.0 if p == INF else p / (p - 1))
    lo = -min(d * _inv(p1), d * _inv(pc))
    hi = 1 + min(d * _inv(p), d * _inv(p1))
    if not lo < s <= hi:
        raise ValueError(f"exponent window rejected: need {lo} < s <= {hi}, got s = {s}")


def commutator_sides(v, a, s=1.0, p=2, p1=2, ell=0, bank=None):
    """(sum_j 2^{j(s-1)} ||R_j||_{L^p}, ||grad v||_{B^{d/p1}_{p1,1}} ||grad a||_{B^{s-1}_{p,1}}, atol).

    R_j = v.grad(d_ell Delta_j a) - d_ell Delta_j (v.grad a), all products on the grid.
    """
    g = v.grid
    d = g.d
    _commutator_window(s, p, p1, d)
    bank = bank or filter_bank(g)
    vx = v.physical()
    k = g.wavevector
    vga = from_physical(g, np.sum(vx * grad(a).physical(), axis=0))
    lhs, scale = 0.0, 0.0
    for j in bank.js:
        block = dyadic_block(a, j, bank)
        da = block.apply(1j * k[ell])
        first = np.sum(vx * grad(da).physical(), axis=0)
        second = dyadic_block(vga, j, bank).apply(1j * k[ell]).physical()
        w = 2.0 ** (j * (s - 1))
        lhs += w * lp_norm(first - second, g, p)
        scale += w * (lp_norm(first, g, p) + lp_norm(second, g, p))
    rhs = _besov(grad(v), d / p1, p1, 1, bank) * _besov(grad(a), s - 1, p, 1, bank)
    return lhs, rhs, 1e-12 * scale


def check_commutator(s=1.0, p=2, p1=2, ell=0, trials=MIN_TRIALS, ns=(128,), d=2, seed=0,
                     scale=1.0, generator=None):
    _commutator_window(s, p, p1, d)
    _need_trials(trials)
    ens = TrialEnsemble("commutator", {"s": s, "p": p, "p1": p1, "ell": ell, "d": d,
                                       "law": "random dyadic bands, |k| < n/4"})
    for n in ns:
        grid = Grid(d, n)
        bank = filter_bank(grid)
        cap = _product_cap(grid)
        for sd, rng in _trials(seed, n, trials):
            if generator is not None:
                v, a = generator(grid, rng)
                meta = {}
            else:
                v, mv = _random_band(grid, rng, cap, rank_shape=(d,))
                a, ma = _random_band(grid, rng, cap)
                meta = {"v": mv, "a": ma}
            lhs, rhs, atol = commutator_sides(v * scale, a, s, p, p1, ell, bank)
            ens.reports.append(RatioReport(lhs, rhs, sd, n, meta, atol))
    return ens


# ---- composition -------------------------------------------------------------
def _F_I(**_):
    return lambda a: a / (1.0 + a)


def _F_k(gamma=1.4, **_):
    return lambda a: (1.0 + a) ** (gamma - 2.0) - 1.0


def _F_mu(alpha=1.0, mu=0.25, **_):
    return lambda a: mu * ((1.0 + a) ** alpha - 1.0)


COMPOSITIONS = {"I": _F_I, "k": _F_k, "mu_tilde": _F_mu}

AMPLITUDE_CAP = 0.5


def composition_sides(F, u, s, p, r, oversample=4, bank=None):
    """(||F(u)||_{B^s_{p,r}}, ||u||_{B^s_{p,r}}) with F evaluated on a finer grid, then truncated."""
    g = u.grid
    fine = resample(u, g.n * oversample)
    Fu = resample(from_physical(fine.grid, F(fine.physical())), g.n).zero_mean()
    bank = bank or filter_bank(g)
    return _besov(Fu, s, p, r, bank), _besov(u, s, p, r, bank)


def check_composition(F_id="I", s=1.0, p=2, r=1, trials=MIN_TRIALS, ns=(128,), d=2, seed=0,
                      amplitude=None, gamma=1.4, alpha=1.0, mu=0.25, oversample=4, generator=None):
    """Ratio ||F(u)|| / ||u|| for sup|u| = amplitude (uniform on [0.05, 1/2] when None)."""
    if F_id not in COMPOSITIONS:
        raise ValueError(f"unknown composition {F_id!r}; choose from {sorted(COMPOSITIONS)}")
    if not s > 0:
        raise ValueError(f"composition estimate needs s > 0, got {s}")
    if amplitude is not None and not 0 <= amplitude <= AMPLITUDE_CAP:
        raise ValueError(f"amplitude precondition violated: sup|u| = {amplitude} > {AMPLITUDE_CAP}")
    _need_trials(trials)
    F = COMPOSITIONS[F_id](gamma=gamma, alpha=alpha, mu=mu)
    ens = TrialEnsemble(f"composition:{F_id}", {"F": F_id, "s": s, "p": p, "r": r, "d": d,
                                                "amplitude": amplitude, "gamma": gamma,
                                                "alpha": alpha, "mu": mu})
    for n in ns:
        grid = Grid(d, n)
        bank = filter_bank(grid)
        cap = _product_cap(grid)
        for sd, rng in _trials(seed, n, trials):
            if generator is not None:
                u, meta = generator(grid, rng), {}
            else:
                u, meta = _random_band(grid, rng, cap)
            amp = float(rng.uniform(0.05, AMPLITUDE_CAP)) if amplitude is None else amplitude
            peak = lp_norm(u.physical(), grid, INF)
            if peak > 0:
                u = u * (amp / peak)
            lhs, rhs = composition_sides(F, u, s, p, r, oversample, bank)
            ens.reports.append(RatioReport(lhs, rhs, sd, n, dict(meta, amplitude=amp),
                                           atol=1e-300))
    return ens
