import csv
import json
import math

import numpy as np
import pytest

from besovlab.decay_harness import GateError
from besovlab.field_ops import Grid, from_physical, l2_norm, zeros
from besovlab.ineq_lab import (MIN_TRIALS, RatioReport, TrialEnsemble, band_field,
                               check_bernstein, check_commutator, check_composition,
                               check_interpolation, check_lower_bernstein, check_products,
                               commutator_sides, interpolation_sides, lower_bernstein_sides,
                               measure_n0, product_sides)
from fieldgen import diagonal_mode, plane_wave

FAST = dict(trials=MIN_TRIALS, ns=(32, 64))


# ---- reports and ensembles -------------------------------------------------------
def test_ratio_report_semantics():
    assert RatioReport(2.0, 4.0, 0, 32).ratio == 0.5
    zero = RatioReport(0.0, 0.0, 0, 32)
    assert zero.vacuous and math.isnan(zero.ratio) and not zero.flagged
    blown = RatioReport(1.0, 0.0, 0, 32)
    assert blown.ratio == math.inf and blown.flagged
    assert RatioReport(1e-14, 1e-15, 0, 32, atol=1e-12).vacuous
    with pytest.raises(ValueError):
        RatioReport(-1.0, 1.0, 0, 32)
    with pytest.raises(ValueError):
        RatioReport(float("nan"), 1.0, 0, 32)


def test_ensemble_statistics():
    ens = TrialEnsemble("demo", {})
    ens.reports += [RatioReport(1.0, 1.0, i, 32) for i in range(MIN_TRIALS)]
    ens.reports += [RatioReport(3.0, 1.0, i, 64) for i in range(MIN_TRIALS)]
    ens.reports.append(RatioReport(0.0, 0.0, 99, 64))
    assert ens.resolutions() == [32, 64]
    assert ens.max_ratio(32) == 1.0 and ens.max_ratio() == 3.0
    assert ens.stability() == 3.0 and ens.complete
    agg = ens.aggregate()
    assert agg["64"]["vacuous"] == 1 and agg["64"]["trials"] == MIN_TRIALS + 1
    ens.reports.append(RatioReport(1.0, 0.0, 100, 64))
    assert ens.max_ratio(64) == math.inf


def test_ensemble_needs_minimum_trials():
    with pytest.raises(ValueError, match=str(MIN_TRIALS)):
        check_bernstein(trials=MIN_TRIALS - 1)
    ens = TrialEnsemble("demo", {}, [RatioReport(1.0, 1.0, 0, 32)])
    assert not ens.complete and math.isnan(ens.stability())


def test_ensemble_files(tmp_path):
    ens = check_bernstein(**FAST)
    ens.write_csv(tmp_path / "r.csv")
    ens.write_json(tmp_path / "r.json")
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert rows[0] == ["seed", "n", "lhs", "rhs", "ratio"] and len(rows) == 2 * MIN_TRIALS + 1
    assert float(rows[1][4]) == ens.reports[0].ratio
    data = json.load(open(tmp_path / "r.json"))
    assert data["checker"] == "bernstein" and data["complete"] is True
    assert set(data["resolutions"]) == {"32", "64"}


def test_band_field_is_unit_and_band_limited(rng):
    g = Grid(2, 64)
    f = band_field(g, rng, 4, 9, slope=1.5)
    k = g.kabs[np.abs(f.coeffs) > 0]
    assert k.min() >= 4 and k.max() <= 9
    assert l2_norm(f) == pytest.approx(1.0, rel=1e-12)


# ---- Bernstein ------------------------------------------------------------------
def test_upper_bernstein_constant():
    ens = check_bernstein(**FAST)
    assert ens.max_ratio() <= 4 / 3 + 1e-12
    assert 1 <= ens.stability() < 2


def test_bernstein_without_derivatives_is_equality():
    ens = check_bernstein(k=0, a=2, b=2, **FAST)
    assert np.allclose(ens.ratios(), 1.0, rtol=1e-14)


def test_bernstein_exponent_order():
    with pytest.raises(ValueError):
        check_bernstein(a=4, b=2)
    with pytest.raises(ValueError):
        check_bernstein(k=3)


def test_lower_bernstein_at_p2_has_explicit_constant():
    # at p = 2 the right side is ||grad f||^2 >= (3/4)^2 4^j ||f||^2, so the ratio is <= 8/9
    ens = check_lower_bernstein(p=2, **FAST)
    assert ens.max_ratio() <= 8 / 9 + 1e-12
    for r in ens.reports:
        assert r.params["gradient_form_gap"] <= 1e-10 * r.rhs


def test_lower_bernstein_p4_single_mode():
    # f = cos(x) at j = 0: lhs = (3/4) int cos^4, rhs = 3 int sin^2 cos^2
    g = Grid(2, 32)
    lhs, rhs, alt = lower_bernstein_sides(plane_wave(g, (1, 0)), 0, 4)
    assert lhs == pytest.approx(0.75 * 3 / 8 * 4 * np.pi**2, rel=1e-13)
    assert rhs == pytest.approx(3 * 1 / 8 * 4 * np.pi**2, rel=1e-13)
    assert alt == pytest.approx(rhs, rel=1e-13)


def test_lower_bernstein_constant_is_uniform_in_j():
    cs = [check_lower_bernstein(j=j, p=4, trials=MIN_TRIALS, ns=(64,)).notes["c"] for j in range(0, 4)]
    assert min(cs) > 0 and max(cs) / min(cs) < 2


# ---- products -------------------------------------------------------------------
def test_nonstandard_product_closed_form():
    # f = cos(x + y) sits on the j = 0 plateau and g = cos(32(x + y)) on the j = 5 plateau;
    # fg lies inside block 5, so the ratio is pi / (2 pi^2) = 1/(2 pi)
    g = Grid(2, 256)
    f, h = plane_wave(g, (1, 1)), plane_wave(g, (32, 32))
    lhs, rhs = product_sides("nonstd", f, h)
    assert lhs == pytest.approx(2.0**-2.5 * np.pi, rel=1e-12)
    assert lhs / rhs == pytest.approx(1 / (2 * np.pi), rel=1e-12)


@pytest.mark.parametrize("kind", ["alg", "nonstd", "neg_index", "neg_index_shifted", "mixed"])
def test_product_ensembles_are_finite_and_homogeneous(kind):
    ens = check_products(kind, **FAST)
    assert np.isfinite(ens.max_ratio()) and not any(r.flagged for r in ens.reports)
    big = check_products(kind, scale=7.0, **FAST)
    assert np.allclose(big.ratios(), ens.ratios(), rtol=1e-10)


def test_negative_index_product_with_equal_low_block_factors():
    def gen(grid, rng):
        u = band_field(grid, rng, 0.75, 8 / 3)
        return u, u
    ens = check_products("neg_index", generator=gen, trials=100, ns=(64,))
    assert ens.max_ratio() < 10


def test_product_parameter_errors():
    with pytest.raises(ValueError, match=r"s1 \+ s2 >= 0 violated"):
        check_products("nonstd", {"s1": 0.2, "s2": -0.5})
    with pytest.raises(ValueError, match="unknown parameters"):
        check_products("alg", {"q": 1})
    with pytest.raises(ValueError, match="s > 0"):
        check_products("alg", {"s": 0})
    with pytest.raises(ValueError, match="unknown product kind"):
        check_products("tensor")
    with pytest.raises(GateError):
        check_products("neg_index", {"sigma1": -0.5})


def test_mixed_product_records_n0():
    ens = check_products("mixed", **FAST)
    for n in (32, 64):
        assert 0 <= ens.notes[f"N0[n={n}]"] <= ens.notes[f"N0_lattice_bound[n={n}]"]
    g = Grid(2, 64)
    assert measure_n0(g, 2) == measure_n0(g, 2)
    with pytest.raises(ValueError):
        measure_n0(g, 40)


# ---- interpolation -----------------------------------------------------------------
@pytest.mark.parametrize("j", [0, 2, 4])
def test_complex_interpolation_is_equality_on_one_block(j):
    u = diagonal_mode(Grid(2, 64), j)
    lhs, rhs = interpolation_sides("complex", u)
    assert lhs / rhs == pytest.approx(1.0, rel=1e-12)


def test_real_interpolation_two_block_field_respects_formula_constant():
    g = Grid(2, 64)
    u = diagonal_mode(g, 1) + diagonal_mode(g, 3, 0.3)
    lhs, rhs = interpolation_sides("real", u, {"theta": 0.4})
    ens = check_interpolation("real", {"theta": 0.4}, **FAST)
    assert lhs / rhs <= ens.notes["C_formula"]
    assert ens.max_ratio() <= ens.notes["C_formula"]


@pytest.mark.parametrize("kind", ["complex", "real", "gn"])
def test_interpolation_ensembles_are_homogeneous(kind):
    ens = check_interpolation(kind, **FAST)
    big = check_interpolation(kind, scale=7.0, **FAST)
    assert np.isfinite(ens.max_ratio())
    assert np.allclose(big.ratios(), ens.ratios(), rtol=1e-10)


def test_interpolation_parameter_errors():
    with pytest.raises(ValueError, match="theta"):
        check_interpolation("complex", {"theta": 1.0})
    with pytest.raises(ValueError, match="s < s_tilde"):
        check_interpolation("real", {"s": 1.0, "s_tilde": 0.0})
    with pytest.raises(ValueError, match="exponent relation"):
        check_interpolation("gn", {"k": 2.0, "theta": 0.3})
    with pytest.raises(ValueError, match="unknown interpolation kind"):
        check_interpolation("Lions")


# ---- commutator ----------------------------------------------------------------------
def test_commutator_with_constant_velocity_vanishes():
    g = Grid(2, 64)
    v = from_physical(g, np.stack([np.full(g.shape, 0.7), np.full(g.shape, -1.2)]))
    a = band_field(g, np.random.default_rng(1), 1, 12)
    lhs, rhs, atol = commutator_sides(v, a)
    assert lhs <= atol and rhs == 0.0


def test_commutator_ensemble():
    ens = check_commutator(**FAST)
    assert np.isfinite(ens.max_ratio()) and not any(r.flagged for r in ens.reports)
    big = check_commutator(scale=7.0, **FAST)
    assert np.allclose(big.ratios(), ens.ratios(), rtol=1e-10)


def test_commutator_window():
    with pytest.raises(ValueError, match="window"):
        check_commutator(s=3.0)


# ---- composition --------------------------------------------------------------------
@pytest.mark.parametrize("F_id, slope", [("I", 1.0), ("k", 0.6), ("mu_tilde", 0.25)])
def test_composition_linearises_at_small_amplitude(F_id, slope):
    # |F(u)| ~ |F'(0)| |u| for tiny u
    ens = check_composition(F_id, amplitude=1e-6, trials=MIN_TRIALS, ns=(32,))
    assert np.allclose(ens.ratios(), slope, rtol=1e-5)


def test_composition_of_zero_is_vacuous():
    ens = check_composition("I", generator=lambda grid, rng: zeros(grid), trials=MIN_TRIALS, ns=(32,))
    assert all(r.vacuous for r in ens.reports)


def test_pressure_composition_vanishes_at_exponent_two():
    ens = check_composition("k", gamma=2.0, trials=MIN_TRIALS, ns=(32,))
    assert all(r.lhs == 0.0 for r in ens.reports)


def test_composition_preconditions():
    with pytest.raises(ValueError, match="amplitude"):
        check_composition("I", amplitude=0.6)
    with pytest.raises(ValueError, match="unknown composition"):
        check_composition("exp")
    with pytest.raises(ValueError, match="s > 0"):
        check_composition("I", s=0.0)


def test_composition_ensemble_bounded():
    ens = check_composition("I", **FAST)
    # |F'| <= 4 on |a| <= 1/2, so the constant cannot be large
    assert 0 < ens.max_ratio() < 8
    assert 1 <= ens.stability() < 2
