"""
Symplectic maps from generating functions
=========================================

A scalar function S(u, eta) close to u.eta defines a symplectic map through
dS/du = v, dS/deta = xi. We build one, check it is symplectic, and recover
its generating function from the map alone.
"""

import numpy as np

from symperturb.families import random_trig_genfn
from symperturb.generating_function import certify_symplectic, generate_map, genfn_from_map, identity_genfn

rng = np.random.default_rng(0)

# u.eta generates the identity
z = rng.uniform(-1, 1, (5, 2))
print("identity error:", np.abs(generate_map(identity_genfn(1))(z) - z).max())

# a small trigonometric perturbation of u.eta
S = random_trig_genfn(rng, 1, amplitude=0.05)
h = generate_map(S)
cert = certify_symplectic(h, rng.uniform(-0.8, 0.8, (500, 2)))
print(f"{cert.name}: {cert.value:.2e} (threshold {cert.threshold:g})")

# the round trip: integrate the closed one-form read off from h
S2 = genfn_from_map(h, np.zeros(2), half_width=0.3)
p = S2.domain.sample(rng, 200)
g1 = np.array([np.concatenate(S.grad(q[:1], q[1:])) for q in p])
g2 = np.array([np.concatenate(S2.grad(q[:1], q[1:])) for q in p])
print("round-trip gradient error:", np.abs(g1 - g2).max())
