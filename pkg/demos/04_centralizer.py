"""
Which maps commute with a contraction?
======================================

A map commuting with a contraction f is, on each connected piece of a
punctured neighbourhood of the sink, a power of f. We recover planted
powers, see a glued map use different powers on the two half-lines, and
apply the eigenvalue test that forces periodic orbits to be fixed.
"""

import numpy as np

from symperturb.centralizer import CommutingPair, eigenvalue_obstruction, match_power
from symperturb.distortion_lab import ball_mesh
from symperturb.experiments import _power_map, glued_power_example
from symperturb.families import random_contraction

pts = ball_mesh(1, 41, 0.8, 0.2)
spacing = 1.6 / 40

f = random_contraction(np.random.default_rng(2), 1)
for i in (-3, 0, 4):
    rep = match_power(CommutingPair(f, _power_map(f, i, 1), pts), pts, spacing)
    print(f"planted f^{i}: matched powers {rep.powers()}")

f, g = glued_power_example()
rep = match_power(CommutingPair(f, g, pts), pts, spacing)
print("glued example, per component:", rep.powers(), "commutation residual", rep.commutation_residual)

rep = eigenvalue_obstruction([("p", 1, [0.5]), ("q", 1, [1 / 3]), ("r", 1, [0.5])])
print("orbit groups:", rep.groups, "forced fixed:", rep.forced_fixed)
