"""Experiment configs, report emission (CSV, JSON, SVG) and the command-line entry point."""
import argparse
import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy

from . import __version__
from .decay_harness import (DiagSeries, GateError, RatePredictor, Verdict, check_framework,
                            run_semigroup_experiment, run_torus_experiment, torus_verdicts)
from .field_ops import Grid, load_snapshot
from .lp_frame import BesovSpec, besov_norm
from .ns_torus import SolverParams

__all__ = [
    "ConfigError",
    "ReportError",
    "ExperimentConfig",
    "CONFIG_KEYS",
    "parse_config",
    "format_config",
    "config_hash",
    "RunResult",
    "emit_reports",
    "write_series_csv",
    "load_series_csv",
    "render_svg",
    "manifest",
    "main",
]


class ConfigError(ValueError):
    """Bad config text; ``gate`` names the violated admissibility gate when there is one."""

    def __init__(self, msg, gate=None):
        super().__init__(msg)
        self.gate = gate


class ReportError(OSError):
    pass


# key -> (kind, default)
CONFIG_KEYS = {
    "dimension": ("int", 2),
    "grid_n": ("int", 256),
    "box_length": ("float", 2 * math.pi),
    "gamma": ("float", 1.4),
    "mu": ("float", 0.25),
    "lam": ("float", 0.5),
    "visc_exponent": ("float", 0.0),
    "epsilon": ("float", 1e-3),
    "sigma1": ("float?", None),
    "p": ("float", 2.0),
    "j0": ("int", 2),
    "dt": ("float", 0.02),
    "t_end": ("float", 50.0),
    "seed": ("int", 42),
    "snapshot_every": ("float", 0.1),
    "fit_window": ("window", (1e2, 1e4)),
    "tolerance": ("float", 0.05),
    "output_dir": ("str", "out"),
    # linear semigroup experiment
    "sigma": ("float", 0.0),
    "r_lo": ("float", 2.0**-20),
    "samples": ("int", 17),
}


@dataclass(frozen=True)
class ExperimentConfig:
    dimension: int = 2
    grid_n: int = 256
    box_length: float = 2 * math.pi
    gamma: float = 1.4
    mu: float = 0.25
    lam: float = 0.5
    visc_exponent: float = 0.0
    epsilon: float = 1e-3
    sigma1: float = None
    p: float = 2.0
    j0: int = 2
    dt: float = 0.02
    t_end: float = 50.0
    seed: int = 42
    snapshot_every: float = 0.1
    fit_window: tuple = (1e2, 1e4)
    tolerance: float = 0.05
    output_dir: str = "out"
    sigma: float = 0.0
    r_lo: float = 2.0**-20
    samples: int = 17

    @property
    def sigma0(self):
        return 2 * self.dimension / self.p - self.dimension / 2

    @property
    def resolved_sigma1(self):
        return self.sigma0 if self.sigma1 is None else self.sigma1

    def as_dict(self):
        out = dataclasses.asdict(self)
        out["fit_window"] = list(self.fit_window)
        return out

    def torus(self):
        keys = ("dimension", "grid_n", "box_length", "gamma", "mu", "lam", "visc_exponent",
                "epsilon", "sigma1", "p", "j0", "dt", "t_end", "seed", "snapshot_every")
        return {k: getattr(self, k) for k in keys}

    def semigroup(self):
        return {"dimension": self.dimension, "sigma1": self.resolved_sigma1, "sigma": self.sigma,
                "fit_window": tuple(self.fit_window), "tolerance": self.tolerance,
                "r_lo": self.r_lo, "samples": self.samples}


def _coerce(key, kind, raw):
    text = raw.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "float?":
            return None if text.lower() in ("", "none") else float(text)
        if kind == "window":
            parts = [float(x) for x in text.strip("()[]").split(",")]
            if len(parts) != 2:
                raise ValueError
            return tuple(parts)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw.strip()!r} as {kind.rstrip('?')}") from None
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        text = text[1:-1]
    return text


def parse_config(text="", overrides=None):
    """Read ``key = value`` lines (``#`` starts a comment); defaults fill the rest, gates re-checked."""
    values = {}
    lines = list(text.splitlines()) + list(overrides or ())
    for num, line in enumerate(lines, 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {num}: expected 'key = value', got {line.strip()!r}")
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown key {key!r}")
        if key in values and num <= len(text.splitlines()):
            raise ConfigError(f"duplicate key {key!r}")
        values[key] = _coerce(key, CONFIG_KEYS[key][0], raw)
    cfg = ExperimentConfig(**values)
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    d = cfg.dimension
    if d not in (2, 3):
        raise ConfigError(f"dimension must be 2 or 3, got {d}")
    checks = [
        (cfg.grid_n >= 8 and cfg.grid_n % 2 == 0, "grid_n must be even and at least 8"),
        (cfg.box_length > 0, "box_length must be positive"),
        (cfg.epsilon >= 0, "epsilon must be nonnegative"),
        (cfg.t_end > 0, "t_end must be positive"),
        (cfg.snapshot_every > 0, "snapshot_every must be positive"),
        (0 < cfg.fit_window[0] < cfg.fit_window[1], "fit_window needs 0 < lo < hi"),
        (cfg.tolerance > 0, "tolerance must be positive"),
        (0 < cfg.r_lo < 1, "r_lo must lie in (0, 1)"),
        (cfg.samples >= 8, "samples must be at least 8"),
        (cfg.seed >= 0, "seed must be nonnegative"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)
    try:
        SolverParams(Grid(d, cfg.grid_n, cfg.box_length), gamma=cfg.gamma, mu=cfg.mu, lam=cfg.lam,
                     visc_exponent=cfg.visc_exponent, dt=cfg.dt, t_end=cfg.t_end, seed=cfg.seed)
    except ValueError as exc:
        raise ConfigError(f"solver parameters rejected: {exc}") from None
    sigma1 = cfg.resolved_sigma1 if cfg.sigma1 is not None else _sigma0_exact(d, cfg.p)
    try:
        # framework gates first so the report names the root cause, not its consequences
        check_framework(d, cfg.p, sigma1)
        RatePredictor(d, cfg.p, sigma1, sigma=cfg.sigma)
    except GateError as exc:
        raise ConfigError(f"gate violated: {exc}", gate=exc.gates[0]) from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _sigma0_exact(d, p):
    p = Fraction(repr(float(p)))
    return 2 * Fraction(d) / p - Fraction(d, 2)


def _fmt_value(v):
    if v is None:
        return "none"
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_config(cfg):
    """Inverse of parse_config: every key on its own line, floats written exactly."""
    return "".join(f"{k} = {_fmt_value(getattr(cfg, k))}\n" for k in CONFIG_KEYS)


def config_hash(cfg):
    return hashlib.sha256(format_config(cfg).encode("utf-8")).hexdigest()


# ---- results and reports -------------------------------------------------------
@dataclass
class RunResult:
    command: str
    config: ExperimentConfig
    series: DiagSeries = None
    fits: list = field(default_factory=list)
    verdicts: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)
    curve: tuple = None
    predicted: float = None
    extra: dict = field(default_factory=dict)
    wall_time: float = None

    @property
    def passed(self):
        ok = all(_verdict_passed(v) for v in self.verdicts.values())
        return ok and all(f.verdict is not False for f in self.fits)


def _verdict_passed(v):
    return v.passed if isinstance(v, Verdict) else bool(v)


def _clean(x):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats spelled out."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_clean(v) for v in x.tolist()]
    if isinstance(x, Verdict):
        return x.as_dict()
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def versions():
    return {"besovlab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def empty_series(cfg=None):
    z = np.zeros(0)
    d = cfg.dimension if cfg else None
    return DiagSeries(z, z, z, z, z, z, z, z, z, z, z, z, z, d=d,
                      sigma1=cfg.resolved_sigma1 if cfg else None)


def manifest(result):
    """Deterministic run record. Wall time lives in a sidecar file so this stays byte-stable."""
    verdicts = result.verdicts
    if result.series is not None and len(result.series) == 0 and not verdicts:
        verdicts = torus_verdicts(result.series)[0]
    return _clean({
        "command": result.command,
        "config": result.config.as_dict(),
        "config_hash": config_hash(result.config),
        "fits": [f.as_dict() for f in result.fits],
        "predicted_exponent": result.predicted,
        "verdicts": verdicts,
        "reports": result.reports,
        "passed": result.passed,
        "extra": result.extra,
        "versions": versions(),
    })


def write_series_csv(series, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DiagSeries.COLUMNS)
        for row in series.rows():
            w.writerow([repr(v) for v in row])


def load_series_csv(path, d, sigma1, p=2, j0=2):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != DiagSeries.COLUMNS:
        raise ValueError(f"{path}: header does not match {','.join(DiagSeries.COLUMNS)}")
    data = np.array([[float(x) for x in r] for r in rows[1:]], float).reshape(-1, len(DiagSeries.COLUMNS))
    cols = {name: data[:, i] for i, name in enumerate(DiagSeries.COLUMNS)}
    t, E = cols["t"], cols["E"]
    dEdt = np.diff(E) / np.diff(t) if len(t) > 1 else np.zeros(0)
    kw = {k: v for k, v in cols.items() if k not in ("t", "E", "G")}
    return DiagSeries(t, E, cols["G"], dEdt, **kw, j0=j0, p=p, sigma1=sigma1, d=d)


def _write_curve_csv(curve, path, fit=None):
    t, y = curve
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "norm"])
        for a, b in zip(t, y):
            w.writerow([repr(float(a)), repr(float(b))])


def render_svg(t, y, predicted=None, fitted=None, title="", width=640, height=420):
    """Self-contained log-log plot of y(t) with a dashed guide of slope -predicted."""
    t, y = np.asarray(t, float), np.asarray(y, float)
    keep = (t > 0) & (y > 0)
    t, y = t[keep], y[keep]
    if len(t) < 2:
        raise ValueError("need at least two positive samples to plot")
    lx, ly = np.log10(t), np.log10(y)
    ml, mr, mt, mb = 70, 20, 40, 50
    x0, x1 = lx.min(), lx.max()
    guide = None
    if predicted is not None:
        guide = ly[0] - predicted * (lx - lx[0])
        y0, y1 = min(ly.min(), guide.min()), max(ly.max(), guide.max())
    else:
        y0, y1 = ly.min(), ly.max()
    if y1 - y0 < 1e-12:
        y0, y1 = y0 - 0.5, y1 + 0.5

    def px(v):
        return ml + (v - x0) / (x1 - x0) * (width - ml - mr)

    def py(v):
        return height - mb - (v - y0) / (y1 - y0) * (height - mt - mb)

    def pts(xs, ys):
        return " ".join(f"{px(a):.3f},{py(b):.3f}" for a, b in zip(xs, ys))

    out = io.StringIO()
    out.write(f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
              f'viewBox="0 0 {width} {height}">\n')
    out.write(f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>\n')
    out.write(f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-family="sans-serif" '
              f'font-size="14">{_esc(title)}</text>\n')
    out.write(f'<rect x="{ml}" y="{mt}" width="{width - ml - mr}" height="{height - mt - mb}" '
              'fill="none" stroke="black"/>\n')
    for dec in range(int(math.ceil(x0)), int(math.floor(x1)) + 1):
        out.write(f'<text x="{px(dec):.3f}" y="{height - mb + 18}" text-anchor="middle" '
                  f'font-family="sans-serif" font-size="11">1e{dec}</text>\n')
    for dec in range(int(math.ceil(y0)), int(math.floor(y1)) + 1):
        out.write(f'<text x="{ml - 6}" y="{py(dec) + 4:.3f}" text-anchor="end" '
                  f'font-family="sans-serif" font-size="11">1e{dec}</text>\n')
    out.write(f'<polyline id="data" fill="none" stroke="#1f4e9c" stroke-width="2" '
              f'points="{pts(lx, ly)}"/>\n')
    if guide is not None:
        slope = -predicted
        out.write(f'<polyline id="guide" data-slope="{slope!r}" fill="none" stroke="#b22222" '
                  f'stroke-dasharray="6,4" points="{pts(lx, guide)}"/>\n')
        out.write(f'<text id="guide-label" x="{width - mr - 8}" y="{mt + 18}" text-anchor="end" '
                  f'font-family="sans-serif" font-size="12" fill="#b22222">'
                  f'predicted slope {slope!r}</text>\n')
    if fitted is not None:
        out.write(f'<text id="fit-label" x="{width - mr - 8}" y="{mt + 36}" text-anchor="end" '
                  f'font-family="sans-serif" font-size="12" fill="#1f4e9c">'
                  f'fitted slope {fitted:.6f}</text>\n')
    out.write("</svg>\n")
    return out.getvalue()


def _esc(s):
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def emit_reports(result, output_dir=None, csv_out=True, json_out=True, svg_out=None):
    """Write series.csv / curve.csv, manifest.json, timing.json and decay.svg; return written paths."""
    out = output_dir or result.config.output_dir
    try:
        os.makedirs(out, exist_ok=True)
        paths = {}
        if csv_out:
            if result.series is not None:
                paths["series"] = os.path.join(out, "series.csv")
                write_series_csv(result.series, paths["series"])
            if result.curve is not None:
                paths["curve"] = os.path.join(out, "curve.csv")
                _write_curve_csv(result.curve, paths["curve"])
        if json_out:
            paths["manifest"] = os.path.join(out, "manifest.json")
            with open(paths["manifest"], "w") as fh:
                json.dump(manifest(result), fh, indent=2, sort_keys=True)
                fh.write("\n")
            if result.wall_time is not None:
                paths["timing"] = os.path.join(out, "timing.json")
                with open(paths["timing"], "w") as fh:
                    json.dump({"wall_time_s": result.wall_time}, fh)
                    fh.write("\n")
        if svg_out is None:
            svg_out = result.curve is not None and result.predicted is not None
        if svg_out and result.curve is not None:
            fitted = result.fits[0].slope if result.fits else None
            paths["svg"] = os.path.join(out, "decay.svg")
            with open(paths["svg"], "w") as fh:
                fh.write(render_svg(*result.curve, predicted=result.predicted, fitted=fitted,
                                    title=f"{result.command}: d = {result.config.dimension}, "
                                          f"sigma1 = {result.config.resolved_sigma1}"))
    except OSError as exc:
        raise ReportError(f"cannot write reports to {out!r}: {exc}") from exc
    return paths


# ---- commands -------------------------------------------------------------------
def run_semigroup(cfg):
    if cfg.p != 2:
        raise ConfigError("the semigroup experiment works in L^2; set p = 2")
    t0 = time.perf_counter()
    fit = run_semigroup_experiment(cfg.semigroup())
    res = RunResult("semigroup", cfg, fits=[fit], curve=(fit.t, fit.norm), predicted=fit.predicted)
    res.wall_time = time.perf_counter() - t0
    return res


def run_simulate(cfg):
    t0 = time.perf_counter()
    rep = run_torus_experiment(cfg.torus())
    verdicts = dict(rep.verdicts)
    if rep.failure is not None:
        verdicts["solver"] = Verdict(False, False, rep.failure)
    res = RunResult("simulate", cfg, series=rep.series, verdicts=verdicts, reports=rep.reports,
                    extra={"initial": rep.initial, "min_density": float(rep.series.min_density.min())
                           if len(rep.series) else None})
    res.wall_time = time.perf_counter() - t0
    return res


def run_lyapunov(cfg, path):
    s = load_series_csv(path, cfg.dimension, cfg.resolved_sigma1, cfg.p, cfg.j0)
    gap = cfg.dimension / 2 - 1 + cfg.resolved_sigma1
    with np.errstate(divide="ignore"):
        G = np.where(s.E > 0, s.E ** (-2.0 / gap), np.inf)
    stored_ok = bool(np.allclose(G, s.G, rtol=1e-12, atol=0)) if len(s) else True
    verdicts, reports = torus_verdicts(s)
    keep = {k: verdicts[k] for k in ("energy", "lyapunov") if k in verdicts}
    keep["G_column"] = Verdict(stored_ok, len(s) == 0, "stored G equals E^(-2/(d/2-1+sigma1))")
    keep["monotone_consistent"] = Verdict(s.monotone_consistent(), len(s) == 0,
                                          "G moves opposite to E at every step")
    return RunResult("lyapunov", cfg, series=s, verdicts=keep, reports=reports,
                     extra={"source": os.path.basename(path)})


def _parse_kv(items):
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        k, v = (s.strip() for s in item.split("=", 1))
        try:
            out[k] = int(v)
        except ValueError:
            try:
                out[k] = float(v)
            except ValueError:
                out[k] = None if v.lower() == "none" else v
    return out


def run_ineq(cfg, checker, kind=None, trials=120, ns=(128, 256), params=None):
    from . import ineq_lab

    table = {
        "bernstein": ineq_lab.check_bernstein,
        "lower-bernstein": ineq_lab.check_lower_bernstein,
        "products": ineq_lab.check_products,
        "interpolation": ineq_lab.check_interpolation,
        "commutator": ineq_lab.check_commutator,
        "composition": ineq_lab.check_composition,
    }
    if checker not in table:
        raise ConfigError(f"unknown checker {checker!r}; choose from {sorted(table)}")
    params = dict(params or {})
    args = {"trials": trials, "ns": tuple(ns), "d": cfg.dimension, "seed": cfg.seed}
    try:
        if checker in ("products", "interpolation"):
            if kind is None:
                raise ConfigError(f"{checker} needs --kind")
            ens = table[checker](kind, params or None, **args)
        elif checker == "composition":
            ens = table[checker](kind or "I", **params, **args)
        else:
            ens = table[checker](**params, **args)
    except GateError as exc:
        raise ConfigError(f"gate violated: {exc}", gate=exc.gates[0]) from None
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    flagged = sum(r.flagged for r in ens.reports)
    stab = ens.stability()
    verdicts = {
        "no_flagged": Verdict(flagged == 0, False, f"{flagged} trials with rhs = 0 < lhs"),
        "stability": Verdict(not (stab >= 2.0), len(ens.resolutions()) < 2,
                             f"max ratio spread across resolutions: {stab:.6g}"),
    }
    return RunResult("ineq", cfg, verdicts=verdicts, extra={"ensemble": ens.to_dict()}), ens


def _build_parser():
    ap = argparse.ArgumentParser(prog="besovlab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        p.add_argument("--out", help="output directory (default: output_dir from the config)")
        return p

    common(sub.add_parser("semigroup", help="exact linear decay of the saturating profile"))
    common(sub.add_parser("simulate", help="small-data nonlinear run on the periodic box"))
    p = common(sub.add_parser("lyapunov", help="re-check energy and Lyapunov structure of a series CSV"))
    p.add_argument("series")
    p = common(sub.add_parser("besov-norm", help="homogeneous Besov norm of a snapshot"))
    p.add_argument("snapshot")
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--restriction", choices=("all", "low", "high"), default="all")
    p.add_argument("--j0", type=int, default=0)
    p.add_argument("--subtract-mean", action="store_true")
    p = common(sub.add_parser("ineq", help="empirical constant of one inequality"))
    p.add_argument("checker")
    p.add_argument("--kind")
    p.add_argument("--trials", type=int, default=120)
    p.add_argument("--ns", default="128,256", help="comma-separated resolutions")
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    return ap


def _config_from_args(args):
    text = ""
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text, args.set)


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        out = args.out or cfg.output_dir
        if args.command == "semigroup":
            res = run_semigroup(cfg)
        elif args.command == "simulate":
            res = run_simulate(cfg)
        elif args.command == "lyapunov":
            try:
                res = run_lyapunov(cfg, args.series)
            except (OSError, ValueError) as exc:
                raise ConfigError(str(exc)) from None
        elif args.command == "besov-norm":
            return _besov_command(args)
        else:
            ns = tuple(int(x) for x in args.ns.split(",") if x.strip())
            res, ens = run_ineq(cfg, args.checker, args.kind, args.trials, ns, _parse_kv(args.param))
            os.makedirs(out, exist_ok=True)
            ens.write_csv(os.path.join(out, "ratios.csv"))
        emit_reports(res, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ReportError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    _summary(res)
    return 0 if res.passed else 1


def _besov_command(args):
    try:
        f, t = load_snapshot(args.snapshot)
        if args.subtract_mean:
            f = f.zero_mean()
        val = besov_norm(f, BesovSpec(args.s, args.p, args.r, args.restriction, args.j0))
    except (OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({"norm": val, "time": t, "s": args.s, "p": args.p, "r": args.r,
                      "restriction": args.restriction, "j0": args.j0}))
    return 0


def _summary(res):
    for f in res.fits:
        print(f"{f.label}: slope {f.slope:.6f} (expected {f.expected_slope:.6f}) -> "
              f"{'pass' if f.verdict else 'FAIL'}")
    for name, v in res.verdicts.items():
        tag = "vacuous" if v.vacuous else ("pass" if v.passed else "FAIL")
        print(f"{name}: {tag}  {v.detail}")
