"""Decay-rate prediction, power-law fitting and Lyapunov diagnostics along trajectories.

Rate claims are made only for the exact linear flow on the whole space
(radial quadrature).  On the periodic box the spectral gap forces eventual
exponential decay, so nonlinear runs are checked for the structure of the
energy argument instead: monotone E, nondecreasing G = E^{-2/(d/2-1+sigma1)},
a bounded low-frequency negative norm and mass conservation.
"""
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats
from scipy.integrate import trapezoid

from .field_ops import Grid, SpectralField, grad
from .linear_semigroup import decay_curve, saturating_profile
from .lp_frame import block_norms, filter_bank
from .ns_torus import SolverParams, Trajectory, make_initial, run

__all__ = [
    "GateError",
    "RatePredictor",
    "check_framework",
    "predict_exponent",
    "DecayReport",
    "fit_decay",
    "DiagSeries",
    "lyapunov_series",
    "diagnostics",
    "run_semigroup_experiment",
    "run_torus_experiment",
    "torus_verdicts",
    "TorusReport",
    "Verdict",
    "SEMIGROUP_DEFAULTS",
    "TORUS_DEFAULTS",
]

INF = math.inf


class GateError(ValueError):
    """Parameter tuple outside the admissible window; ``gates`` names every violated gate."""

    def __init__(self, violations):
        self.violations = list(violations)
        self.gates = [name for name, _ in self.violations]
        super().__init__("; ".join(f"{name}: {msg}" for name, msg in self.violations))


def _exact(x):
    """Exact rational for finite inputs (floats through their shortest repr), inf kept."""
    if x is None:
        return None
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, str):
        if x.strip().lower() in ("inf", "infinity"):
            return INF
        return Fraction(x.strip())
    x = float(x)
    if math.isinf(x):
        if x < 0:
            raise ValueError("negative infinity is not an admissible exponent")
        return INF
    if math.isnan(x):
        raise ValueError("NaN exponent")
    return Fraction(repr(x))


def _inv(x):
    return Fraction(0) if x == INF else 1 / x


def _fmt(x):
    return "inf" if x == INF else str(x)


@dataclass(frozen=True)
class RatePredictor:
    """Exponents (d, p, sigma1) plus sigma for the optimal-rate path or (r, ell) for the L^r path.

    All gate arithmetic is exact: floats are read through ``Fraction(repr(x))``
    so boundary values such as sigma1 = sigma0 are decided without roundoff.
    """

    d: int
    p: object
    sigma1: object
    sigma: object = None
    r: object = None
    ell: object = None

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.d}")
        for name in ("p", "sigma1", "sigma", "r", "ell"):
            object.__setattr__(self, name, _exact(getattr(self, name)))
        if self.p == INF or self.sigma1 == INF:
            raise GateError([("p-window", "p and sigma1 must be finite")])
        if (self.r is None) != (self.ell is None):
            raise ValueError("the L^r path needs both r and ell")
        if self.sigma is None and self.r is None:
            raise ValueError("give sigma, or r together with ell")
        bad = self.violations()
        if bad:
            raise GateError(bad)

    # ---- derived quantities
    @property
    def sigma0(self):
        return Fraction(2 * self.d) / self.p - Fraction(self.d, 2)

    @property
    def sigma1_tilde(self):
        return self.sigma1 + self.d * (Fraction(1, 2) - 1 / self.p)

    @property
    def d_star(self):
        return INF if self.d == 2 else Fraction(2 * self.d, self.d - 2)

    @property
    def p_star(self):
        """1/p* = 1/2 - 1/p."""
        inv = Fraction(1, 2) - 1 / self.p
        return INF if inv == 0 else 1 / inv

    @property
    def theta0(self):
        return 2 / (Fraction(self.d, 2) + 1 + self.sigma1)

    @property
    def theta1(self):
        if self.sigma is None:
            return None
        return (Fraction(self.d) / self.p - 1 - self.sigma) / (Fraction(self.d, 2) - 1 + self.sigma1)

    @property
    def theta2(self):
        """Weight of the negative norm when the high-frequency velocity is interpolated."""
        return (self.sigma1 + Fraction(self.d, 2) - Fraction(self.d) / self.p) / (
            self.sigma1 + Fraction(self.d, 2) - 1)

    @property
    def theta2_lr(self):
        """Interpolation weight of the L^r path, in the limit k -> -sigma1_tilde."""
        if self.r is None:
            return None
        m = Fraction(self.d) / self.p - 1
        target = self.ell + self.d * (1 / self.p - _inv(self.r))
        return (m - target) / (m + self.sigma1_tilde)

    # ---- gates
    def violations(self):
        d, p, s1 = self.d, self.p, self.sigma1
        out = []
        hi = min(Fraction(4), self.d_star)
        if not (2 <= p <= hi) or (d == 2 and p == 4):
            out.append(("p-window", f"need 2 <= p <= min(4, d*) = {_fmt(hi)}"
                        + (" and p != 4 for d = 2" if d == 2 else "") + f", got p = {p}"))
        if not (1 - Fraction(d, 2) < s1 <= self.sigma0):
            out.append(("sigma1-window", f"need 1 - d/2 < sigma1 <= sigma0, i.e. "
                        f"{1 - Fraction(d, 2)} < sigma1 <= {self.sigma0}, got {s1}"))
        top = Fraction(d) / p - 1
        if self.sigma is not None and not (-self.sigma1_tilde < self.sigma <= top):
            out.append(("sigma-window", f"need -sigma1_tilde < sigma <= d/p - 1, i.e. "
                        f"{-self.sigma1_tilde} < sigma <= {top}, got {self.sigma}"))
        if self.r is not None:
            if not (self.r == INF or self.r >= p):
                out.append(("r-window", f"need p <= r <= inf, got r = {_fmt(self.r)}"))
            else:
                val = self.ell + d * (1 / p - _inv(self.r))
                if not (-self.sigma1_tilde < val <= top):
                    out.append(("ell-window", "need -sigma1_tilde < ell + d(1/p - 1/r) <= d/p - 1, "
                                f"i.e. {-self.sigma1_tilde} < {val} <= {top}"))
        return out

    # ---- exponents
    @property
    def exponent_exact(self):
        """Decay exponent of the sigma path (or of the L^r path when sigma is absent)."""
        if self.sigma is not None:
            return Fraction(self.d, 2) * (Fraction(1, 2) - 1 / self.p) + (self.sigma + self.sigma1) / 2
        return self.lr_exponent_exact

    @property
    def lr_exponent_exact(self):
        if self.r is None:
            return None
        return (Fraction(self.d, 2) * (Fraction(1, 2) - _inv(self.r))
                + (self.ell + self.sigma1) / 2)


def check_framework(d, p, sigma1):
    """Raise GateError unless p and sigma1 pass the p-window and sigma1-window."""
    try:
        RatePredictor(d, p, sigma1, sigma=Fraction(d) / _exact(p) - 1)
    except GateError as exc:
        bad = [v for v in exc.violations if v[0] != "sigma-window"]
        if bad:
            raise GateError(bad) from None


def predict_exponent(pred, path=None):
    """Predicted decay exponent (norm ~ t^{-exponent}); ``path`` is 'sigma' or 'lr'."""
    if path is None:
        path = "sigma" if pred.sigma is not None else "lr"
    if path == "sigma":
        if pred.sigma is None:
            raise ValueError("predictor has no sigma")
        return float(pred.exponent_exact)
    if path == "lr":
        if pred.r is None:
            raise ValueError("predictor has no (r, ell)")
        return float(pred.lr_exponent_exact)
    raise ValueError(f"unknown path {path!r}")


# ---- power-law fits ----------------------------------------------------------
@dataclass
class DecayReport:
    t: np.ndarray
    norm: np.ndarray
    window: tuple
    slope: float
    intercept: float
    halfwidth: float
    residual: float
    predicted: float = None
    tolerance: float = None
    label: str = ""

    @property
    def expected_slope(self):
        return None if self.predicted is None else -self.predicted

    @property
    def verdict(self):
        """Relative test |slope - expected| <= tolerance * |expected|; None when nothing was predicted."""
        if self.predicted is None or self.tolerance is None:
            return None
        return bool(abs(self.slope - self.expected_slope) <= self.tolerance * abs(self.expected_slope))

    def as_dict(self):
        return {
            "label": self.label,
            "window": list(self.window),
            "slope": self.slope,
            "intercept": self.intercept,
            "halfwidth": self.halfwidth,
            "residual": self.residual,
            "predicted_exponent": self.predicted,
            "expected_slope": self.expected_slope,
            "tolerance": self.tolerance,
            "verdict": self.verdict,
        }


def fit_decay(series, window=(1e2, 1e4), predicted=None, tolerance=None, label="", level=0.95):
    """Least-squares line through (log t, log norm) restricted to the window.

    ``halfwidth`` is the two-sided Student-t confidence half-width of the slope.
    """
    t, y = (np.asarray(c, dtype=float) for c in _columns(series))
    lo, hi = window
    if not lo < hi:
        raise ValueError("empty fit window")
    keep = (t >= lo) & (t <= hi)
    if keep.sum() < 8:
        raise ValueError(f"need at least 8 samples in the window {window}, got {int(keep.sum())}")
    tw, yw = t[keep], y[keep]
    if np.any(~(yw > 0)):
        raise ValueError("nonpositive norm inside the fit window")
    x, z = np.log(tw), np.log(yw)
    a = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(a, z, rcond=None)
    res = z - a @ coef
    dof = len(x) - 2
    s2 = float(res @ res) / dof
    sxx = float(np.sum((x - x.mean()) ** 2))
    half = float(stats.t.ppf(0.5 + level / 2, dof) * math.sqrt(s2 / sxx))
    return DecayReport(t, y, (lo, hi), float(coef[0]), float(coef[1]), half,
                       float(math.sqrt(np.mean(res**2))), predicted, tolerance, label)


def _columns(series):
    if isinstance(series, tuple) and len(series) == 2 and np.ndim(series[0]) == 1:
        return series
    arr = np.asarray(series, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("series must be (t, norm) pairs")
    return arr[:, 0], arr[:, 1]


# ---- diagnostics along trajectories ---------------------------------------------
@dataclass
class DiagSeries:
    t: np.ndarray
    E: np.ndarray
    G: np.ndarray
    dEdt: np.ndarray
    X_low: np.ndarray = None
    X_high_a: np.ndarray = None
    X_high_u: np.ndarray = None
    D1: np.ndarray = None
    D2: np.ndarray = None
    D3: np.ndarray = None
    neg_norm: np.ndarray = None
    mass_mean: np.ndarray = None
    min_density: np.ndarray = None
    integrals: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    j0: int = None
    p: float = None
    sigma1: float = None
    d: int = None

    COLUMNS = ("t", "E", "G", "neg_norm", "X_low", "X_high_a", "X_high_u",
               "D1", "D2", "D3", "mass_mean", "min_density")

    def __len__(self):
        return len(self.t)

    @property
    def g_defined(self):
        return bool(np.all(np.isfinite(self.G))) and len(self.G) > 0

    def monotone_consistent(self):
        """Sign of every G increment is opposite to that of the E increment."""
        if not self.g_defined:
            return True
        de, dg = np.diff(self.E), np.diff(self.G)
        return bool(np.all((de == 0) == (dg == 0)) and np.all(np.sign(de) == -np.sign(dg)))

    def rows(self):
        cols = []
        for name in self.COLUMNS:
            v = getattr(self, name)
            cols.append(np.full(len(self.t), np.nan) if v is None else np.asarray(v, float))
        return [tuple(float(c[i]) for c in cols) for i in range(len(self.t))]


def _states(trajectory):
    if isinstance(trajectory, Trajectory):
        return list(trajectory.states)
    return list(trajectory)


def _exponent_gap(d, sigma1):
    gap = d / 2 - 1 + sigma1
    if not gap > 0:
        raise ValueError(f"d/2 - 1 + sigma1 = {gap} must be positive for the Lyapunov exponent")
    return gap


def _check_spacing(times, max_spacing):
    if len(times) > 1 and np.max(np.diff(times)) > max_spacing + 1e-12:
        raise ValueError(f"snapshot spacing {np.max(np.diff(times))} exceeds {max_spacing}")


def _stacked(*fields):
    grid = fields[0].grid
    parts = [f.coeffs.reshape((-1,) + grid.spectral_shape) for f in fields]
    return SpectralField(grid, np.concatenate(parts))


def _weighted(norms, s, js):
    return float(sum(2.0 ** (j * s) * norms[j] for j in js))


class _StateNorms:
    """Block norms of one snapshot, shared by every diagnostic."""

    def __init__(self, state, p, j0):
        a, u = state.a, state.u.zero_mean()
        g = a.grid
        self.d = g.d
        bank = filter_bank(g)
        if not bank.j_min <= j0 <= bank.j_max:
            raise ValueError(f"cutoff j0={j0} outside [{bank.j_min}, {bank.j_max}]")
        self.low = [j for j in bank.js if j <= j0]
        self.high = [j for j in bank.js if j >= j0 - 1]
        self.all = list(bank.js)
        pair2 = block_norms(_stacked(a, u), 2, bank, self.low)
        self.pair2 = pair2
        self.a_p = block_norms(a, p, bank)
        self.u_p = block_norms(u, p, bank, self.high)
        self.gau_p = block_norms(_stacked(grad(a), u), p, bank, self.high)
        self.p = p

    def low_pair(self, s):
        return _weighted(self.pair2, s, self.low)

    def neg(self, sigma1):
        return max(2.0 ** (-j * sigma1) * self.pair2[j] for j in self.low)


def _energy(sn):
    d, p = sn.d, sn.p
    return sn.low_pair(d / 2 - 1) + _weighted(sn.gau_p, d / p - 1, sn.high)


def _lyapunov(times, E, gap):
    with np.errstate(divide="ignore"):
        G = np.where(E > 0, E ** (-2.0 / gap), np.inf)
    dEdt = np.diff(E) / np.diff(times) if len(times) > 1 else np.zeros(0)
    return G, dEdt


def lyapunov_series(trajectory, j0=2, p=2, sigma1=None, max_spacing=0.1):
    """E(t), G(t) = E^{-2/(d/2-1+sigma1)} and finite-difference dE/dt.

    E = ||(a, u)||^l_{B^{d/2-1}_{2,1}} + ||(grad a, u)||^h_{B^{d/p-1}_{p,1}}, with each
    block of a pair measured by the Euclidean norm of the stacked components.
    """
    states = _states(trajectory)
    if not states:
        raise ValueError("empty trajectory")
    d = states[0].a.grid.d
    sigma1 = 2 * d / p - d / 2 if sigma1 is None else sigma1
    gap = _exponent_gap(d, sigma1)
    times = np.array([s.t for s in states], float)
    _check_spacing(times, max_spacing)
    E = np.array([_energy(_StateNorms(s, p, j0)) for s in states])
    G, dEdt = _lyapunov(times, E, gap)
    flags = [] if np.all(E > 0) else ["G undefined where E = 0"]
    return DiagSeries(times, E, G, dEdt, flags=flags, j0=j0, p=p, sigma1=sigma1, d=d)


def diagnostics(trajectory, j0=2, p=2, sigma1=None, max_spacing=0.1):
    """Lyapunov series plus the X components, D1, D2, D3, negative norm and their time integrals."""
    states = _states(trajectory)
    if not states:
        raise ValueError("empty trajectory")
    d = states[0].a.grid.d
    sigma1 = 2 * d / p - d / 2 if sigma1 is None else sigma1
    gap = _exponent_gap(d, sigma1)
    times = np.array([s.t for s in states], float)
    _check_spacing(times, max_spacing)
    cols = {k: [] for k in ("E", "X_low", "X_high_a", "X_high_u", "D1", "D2", "D3",
                            "neg_norm", "mass_mean", "min_density")}
    for s in states:
        sn = _StateNorms(s, p, j0)
        x_low = sn.low_pair(d / 2 - 1)
        x_ha = _weighted(sn.a_p, d / p, sn.high)
        x_hu = _weighted(sn.u_p, d / p - 1, sn.high)
        hu_up = _weighted(sn.u_p, d / p + 1, sn.high)
        cols["E"].append(_energy(sn))
        cols["X_low"].append(x_low)
        cols["X_high_a"].append(x_ha)
        cols["X_high_u"].append(x_hu)
        cols["D1"].append(sn.low_pair(d / 2 + 1) + x_ha + hu_up)
        cols["D2"].append(_weighted(sn.a_p, d / p, sn.all) ** 2)
        cols["D3"].append((x_low + x_ha + x_hu) * (x_ha + hu_up))
        cols["neg_norm"].append(sn.neg(sigma1))
        cols["mass_mean"].append(abs(s.a.mean()))
        cols["min_density"].append(1.0 + float(s.a.physical().min()))
    arr = {k: np.array(v, float) for k, v in cols.items()}
    G, dEdt = _lyapunov(times, arr["E"], gap)
    integrals = {}
    for key in ("D1", "D2", "D3"):
        integrals[key] = float(trapezoid(arr[key], times)) if len(times) > 1 else 0.0
    flags = [] if np.all(arr["E"] > 0) else ["G undefined where E = 0"]
    return DiagSeries(times, arr["E"], G, dEdt, arr["X_low"], arr["X_high_a"], arr["X_high_u"],
                      arr["D1"], arr["D2"], arr["D3"], arr["neg_norm"], arr["mass_mean"],
                      arr["min_density"], integrals, flags, j0, p, sigma1, d)


# ---- experiments ------------------------------------------------------------
SEMIGROUP_DEFAULTS = {
    "dimension": 3,
    "sigma1": 1.5,
    "sigma": 0.0,
    "fit_window": (1e2, 1e4),
    "tolerance": 0.05,
    "r_lo": 2.0**-20,
    "samples": 17,
}


def run_semigroup_experiment(config=None, **overrides):
    """Exact linear decay of the saturating profile, fitted and compared with the predicted rate.

    sigma = 0 fits the L^2 norm of the pair; otherwise the B^sigma_{2,1} norm.
    """
    cfg = dict(SEMIGROUP_DEFAULTS)
    cfg.update(config or {})
    cfg.update(overrides)
    d, s1, sig = int(cfg["dimension"]), float(cfg["sigma1"]), float(cfg["sigma"])
    pred = RatePredictor(d, 2, s1, sigma=sig)
    lo, hi = cfg["fit_window"]
    times = np.geomspace(lo, hi, int(cfg["samples"]))
    prof = saturating_profile(d, s1, r_lo=float(cfg["r_lo"]))
    key = (sig, 1.0)
    curve = decay_curve(prof, d, s1, times, besov=() if sig == 0 else (key,))
    norm = curve.l2 if sig == 0 else curve.besov[key]
    label = "L2" if sig == 0 else f"B^{sig}_(2,1)"
    return fit_decay((times, norm), (lo, hi), predict_exponent(pred), float(cfg["tolerance"]),
                     label=label)


TORUS_DEFAULTS = {
    "dimension": 2,
    "grid_n": 256,
    "box_length": 2 * math.pi,
    "gamma": 1.4,
    "mu": 0.25,
    "lam": 0.5,
    "visc_exponent": 0.0,
    "epsilon": 1e-3,
    "sigma1": None,
    "p": 2,
    "j0": 2,
    "dt": 0.02,
    "t_end": 50.0,
    "seed": 42,
    "snapshot_every": 0.1,
}

E_GROWTH_TOL = 0.05
G_STEP_TOL = 1e-6
NEG_FACTOR = 2.0
MASS_TOL = 1e-12
TRANSIENT = 1.0


@dataclass
class Verdict:
    passed: bool
    vacuous: bool = False
    detail: str = ""

    def as_dict(self):
        return {"passed": self.passed, "vacuous": self.vacuous, "detail": self.detail}


@dataclass
class TorusReport:
    series: DiagSeries
    verdicts: dict
    reports: dict
    initial: dict
    failure: str = None

    @property
    def passed(self):
        return self.failure is None and all(v.passed for v in self.verdicts.values())

    def __iter__(self):
        # unpacks as (series, reports)
        return iter((self.series, self.reports))


def _log_slope(t, y):
    a = np.column_stack([t, np.ones_like(t)])
    coef, *_ = np.linalg.lstsq(a, np.log(y), rcond=None)
    return float(coef[0])


def run_torus_experiment(config=None, **overrides):
    """Small-data nonlinear run on the box with the four structural verdicts.

    (i) E(t) <= 1.05 E(0) for t >= 1 and a negative fitted slope of log E;
    (ii) G nondecreasing up to 1e-6 G(0) per snapshot interval for t >= 1;
    (iii) sup_t of the low-frequency negative norm at most twice its initial value;
    (iv) |mean a| <= 1e-12 at every snapshot.
    """
    cfg = dict(TORUS_DEFAULTS)
    cfg.update(config or {})
    cfg.update(overrides)
    d, p = int(cfg["dimension"]), cfg["p"]
    sigma1 = 2 * d / p - d / 2 if cfg["sigma1"] is None else float(cfg["sigma1"])
    grid = Grid(d, int(cfg["grid_n"]), float(cfg["box_length"]))
    params = SolverParams(grid, gamma=float(cfg["gamma"]), mu=float(cfg["mu"]),
                          lam=float(cfg["lam"]), visc_exponent=float(cfg["visc_exponent"]),
                          dt=float(cfg["dt"]), t_end=float(cfg["t_end"]), seed=int(cfg["seed"]))
    init = make_initial(d, grid, float(cfg["epsilon"]), sigma1, p, int(cfg["seed"]))
    every = float(cfg["snapshot_every"])
    stride = max(1, int(round(every / params.dt)))
    count = int(math.floor(params.t_end / params.dt + 1e-9))
    schedule = [k * params.dt for k in range(0, count + 1, stride)]
    traj = run(params, init, schedule)
    series = diagnostics(traj, int(cfg["j0"]), p, sigma1, max_spacing=max(0.1, stride * params.dt))
    initial = {k: v for k, v in init.info.items() if not k.startswith("block")}
    verdicts, reports = torus_verdicts(series)
    return TorusReport(series, verdicts, reports, initial, traj.failure)


def torus_verdicts(s):
    """Structural verdicts and auxiliary reports (log-slope of E, growth of G) for a series."""
    t, E, G = s.t, s.E, s.G
    late = t >= TRANSIENT
    reports = {}
    if len(t) == 0 or not np.any(E > 0):
        v = Verdict(True, True, "zero trajectory")
        return {"energy": v, "lyapunov": v, "negative_norm": v, "mass": Verdict(
            bool(np.all(s.mass_mean <= MASS_TOL)) if len(t) else True, True, "zero trajectory")}, reports
    out = {}
    e0 = E[0]
    worst = float(np.max(E[late] / e0)) if np.any(late) else 0.0
    slope = _log_slope(t[late], E[late]) if late.sum() >= 2 else float("nan")
    reports["log_E_slope"] = slope
    if late.sum() >= 2:
        out["energy"] = Verdict(bool(worst <= 1 + E_GROWTH_TOL and slope < 0), False,
                                f"max E/E0 for t >= 1: {worst:.6g}; fitted d log E/dt: {slope:.6g}")
    else:
        # no slope to fit; only the growth bound can be checked
        out["energy"] = Verdict(bool(worst <= 1 + E_GROWTH_TOL), True,
                                f"max E/E0 for t >= 1: {worst:.6g}; under two samples past t = 1")
    g0 = G[0]
    if np.any(late):
        i0 = int(np.argmax(late))
        steps = np.diff(G[i0:])
        least = float(steps.min()) if len(steps) else 0.0
        gslope = (np.polyfit(t[late], G[late], 1)[0] if late.sum() >= 2 else float("nan"))
    else:
        least, gslope = 0.0, float("nan")
    gap = s.d / 2 - 1 + s.sigma1
    reports["G_growth"] = float(gslope)
    reports["c0_estimate"] = float(gslope * gap / 2) if np.isfinite(gslope) else float("nan")
    out["lyapunov"] = Verdict(bool(least >= -G_STEP_TOL * g0), False,
                              f"smallest G increment per interval for t >= 1: {least:.6g} "
                              f"(floor {-G_STEP_TOL * g0:.3g})")
    neg0 = s.neg_norm[0]
    ratio = float(s.neg_norm.max() / neg0) if neg0 > 0 else float("inf")
    out["negative_norm"] = Verdict(bool(ratio <= NEG_FACTOR), False,
                                   f"sup_t neg / neg(0) = {ratio:.6g}")
    mm = float(s.mass_mean.max())
    out["mass"] = Verdict(bool(mm <= MASS_TOL), False, f"max |mean a| = {mm:.3g}")
    return out, reports

