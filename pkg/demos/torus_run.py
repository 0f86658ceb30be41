"""Small perturbation of the constant state on the periodic box.

A short, coarse version of the full experiment: mass stays put, density stays
away from vacuum, the energy E drops and the Lyapunov quantity G does not fall.
Pass grid_n=256, t_end=50 to run_torus_experiment for the full-size run.
"""
from besovlab.decay_harness import run_torus_experiment

for alpha in (0.0, 1.0):
    rep = run_torus_experiment(grid_n=64, t_end=5.0, visc_exponent=alpha)
    s = rep.series
    print(f"alpha={alpha}: E {s.E[0]:.3e} -> {s.E[-1]:.3e}, min(1+a) {s.min_density.min():.6f}")
    for name, v in rep.verdicts.items():
        print(f"   {name:24s} {'pass' if v.passed else 'FAIL'}  {v.detail}")
