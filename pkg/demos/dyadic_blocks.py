"""Littlewood-Paley blocks of a random field and its Besov norms.

The blocks add back up to the field, each one lives on its own annulus, and
a gradient scales a block by roughly 2^j.
"""
import numpy as np

from besovlab.field_ops import Grid, grad, l2_norm, random_field
from besovlab.lp_frame import BesovSpec, besov_norm, dyadic_block, filter_bank

g = Grid(2, 128)
bank = filter_bank(g)
u = random_field(g, np.random.default_rng(0))
total = 0 * u
for j in bank.js:
    b = dyadic_block(u, j, bank)
    total = total + b
    if l2_norm(b) > 0:
        print(f"j={j:2d}  ||block|| {l2_norm(b):.4f}  ||grad||/(2^j ||block||) "
              f"{l2_norm(grad(b)) / l2_norm(b) / 2.0**j:.3f}")
print("reconstruction error", l2_norm(total - u))
for s in (-0.5, 0.0, 0.5):
    print(f"B^{s}_(2,1) norm", besov_norm(u, BesovSpec(s, 2, 1), bank))
