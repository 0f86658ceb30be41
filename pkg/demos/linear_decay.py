"""Sharp linear decay from data sitting on the edge of a negative Besov ball.

The saturating profile has constant dyadic shell norms, so it belongs to
B^{-sigma1}_{2,inf} and nowhere better.  Its L^2 norm under the exact 2x2
linear flow decays like t^{-sigma1/2}; we fit the slope for a few sigma1.
"""
import numpy as np

from besovlab.decay_harness import RatePredictor, fit_decay, predict_exponent
from besovlab.linear_semigroup import decay_curve, saturating_profile

t = np.geomspace(1e2, 1e4, 17)
for d, s1 in [(2, 0.5), (2, 1.0), (3, 1.5)]:
    curve = decay_curve(saturating_profile(d, s1), d, s1, t, besov=())
    pred = predict_exponent(RatePredictor(d, 2, s1, sigma=0))
    rep = fit_decay((t, curve.l2), (1e2, 1e4), predicted=pred, tolerance=0.05)
    print(f"d={d} sigma1={s1}: fitted slope {rep.slope:+.5f}, predicted {-pred:+.5f}, "
          f"{'ok' if rep.verdict else 'off'}")

# below zero the L^2 norm is set by the low cutoff and stops decaying
curve = decay_curve(saturating_profile(3, -0.4), 3, -0.4, t, besov=())
print("d=3 sigma1=-0.4: L2 at t=1e2 and 1e4:", curve.l2[0], curve.l2[-1])
