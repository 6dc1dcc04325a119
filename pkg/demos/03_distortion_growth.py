"""
Grafting distortion into a contraction
======================================

Along one orbit the log-Jacobian distortion of a contraction stays bounded.
Grafting a small copy of a map with a larger Jacobian onto the orbit of x
makes Delta_n(x, y) grow linearly for every y off that orbit.
"""

import math

import numpy as np

from symperturb.distortion_lab import Contraction, distortion_series, perturb_orbit
from symperturb.numerics_core import Box, linear_map

f = Contraction(1, linear_map(0.5 * np.eye(1), Box.cube(1, 1.0)), linear_radius=1.0)
x = np.array([0.7])
ys = np.array([[0.23], [0.61], [0.88]])
gap = math.log(1.2)

G = perturb_orbit(f, x, ys, N=10.0, jac_gap=gap)
print(f"grafting starts at i0 = {G.i0}, distortion passes 10 by n = {G.n}")
print(f"graft radius eps = {G.eps:.3e}")

L = perturb_orbit(f, x, ys, N=10.0, jac_gap=gap, n=G.i0 + 100)
for y in ys:
    s = distortion_series(L.contraction, x, y, L.i0 + 100)
    k = np.array([20, 50, 100])
    print(f"y = {y[0]:.2f}: Delta/(n - i0) at n - i0 = {k.tolist()}:", np.round(s[L.i0 + k] / k, 6).tolist())
print("target slope log 1.2 =", round(gap, 6))
