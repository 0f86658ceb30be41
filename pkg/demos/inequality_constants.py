"""Empirical constants of a few harmonic-analysis inequalities.

Each checker draws random band-limited fields, evaluates both sides and keeps
the ratio.  What matters is that the largest ratio barely moves when the grid
is refined: a genuine constant does not depend on n.  With few trials on coarse
grids the sample maximum has not settled yet (try trials=30, ns=(64, 128)), so
this uses the 120-trial, n = 128/256 setting.
"""
from besovlab.ineq_lab import check_bernstein, check_commutator, check_products

ARGS = dict(trials=120, ns=(128, 256))

for name, ens in [
    ("Bernstein, L2 -> L2", check_bernstein(**ARGS)),
    ("product, nonstandard", check_products("nonstd", **ARGS)),
    ("commutator", check_commutator(**ARGS)),
]:
    per_n = ", ".join(f"n={n}: {ens.max_ratio(n):.4f}" for n in ens.resolutions())
    print(f"{name:22s} {per_n}  spread {ens.stability():.3f}")
