"""Concrete map families used by the experiments, tests and demos."""

from __future__ import annotations

import numpy as np

from .generating_function import genfn_from_perturbation, standard_J
from .interpolation import DiskDiffeo
from .numerics_core import Box, SampledMap


def smooth_bump(x, center, radius):
    """``exp(1 - 1/(1 - s))`` with ``s = |x - c|^2 / r^2``; value 1 at the center.

    Returns value ``(...)`` and gradient ``(..., n)``; C-infinity, support is
    the open ball.
    """
    x = np.asarray(x, dtype=float)
    d = x - center
    s = np.einsum("...k,...k->...", d, d) / radius ** 2
    inside = s < 1.0
    one_minus = np.where(inside, 1.0 - s, 1.0)
    val = np.where(inside, np.exp(1.0 - 1.0 / one_minus), 0.0)
    dval_ds = np.where(inside, -val / one_minus ** 2, 0.0)
    grad = dval_ds[..., None] * (2.0 * d / radius ** 2)
    return val, grad


def bump_diffeo(n, amplitude, center=None, radius=1.0, bump_radius=0.6, direction=None):
    """``psi(u) = u + amplitude * b(u) * e`` with b a C-infinity bump inside the disk."""
    c = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    e = np.ones(n) if direction is None else np.asarray(direction, dtype=float)
    e = e / np.linalg.norm(e)
    bc = c.copy()

    def ev(x):
        val, _ = smooth_bump(x, bc, bump_radius)
        return np.asarray(x, dtype=float) + amplitude * val[..., None] * e

    def jac(x):
        _, grad = smooth_bump(x, bc, bump_radius)
        return np.eye(n) + amplitude * e[:, None] * grad[..., None, :]

    m = SampledMap(n, n, ev, jac, name=f"bump{n}d[{amplitude:g}]")
    return DiskDiffeo(n, m, c, radius, radius - bump_radius)


def identity_diffeo(n, radius=1.0, collar=0.4):
    from .numerics_core import identity_map

    return DiskDiffeo(n, identity_map(n), np.zeros(n), radius, collar)


def tanh_contraction_map(A, c, B):
    """``x -> A x + c tanh(B x)``, defined on all of R^d."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    d = A.shape[0]

    def ev(x):
        x = np.asarray(x, dtype=float)
        return x @ A.T + c * np.tanh(x @ B.T)

    def jac(x):
        x = np.asarray(x, dtype=float)
        sech2 = 1.0 - np.tanh(x @ B.T) ** 2
        return A + c * sech2[..., :, None] * B

    return SampledMap(d, d, ev, jac, Box.cube(d, 1.0), "tanh-contraction")


def random_contraction_parts(rng, d, rates=(0.3, 0.7), nonlinearity=0.12):
    """Random (A, c, B) with ||A|| + |c| ||B|| < 1 and sigma_min(A) > |c| ||B||."""
    lam = rng.uniform(*rates, size=d)
    if d > 1:
        Qm, _ = np.linalg.qr(rng.normal(size=(d, d)))
    else:
        Qm = np.ones((1, 1))
    signs = rng.choice([-1.0, 1.0], size=d) if d > 1 else np.ones(1)
    A = Qm @ np.diag(lam * signs) @ Qm.T
    B = rng.normal(size=(d, d))
    B /= np.linalg.norm(B, 2)
    c = nonlinearity * rng.uniform(0.3, 1.0)
    return A, c, B


def random_contraction(rng, d, **kw):
    from .distortion_lab import Contraction

    return Contraction(d, tanh_contraction_map(*random_contraction_parts(rng, d, **kw)))


def random_trig_genfn(rng, n, amplitude=0.05, terms=4, domain_half_width=1.0):
    """``S0 + amplitude * sum c_k sin(a_k . u + b_k . eta + phase_k)``."""
    freq = rng.normal(size=(terms, 2 * n))
    coef = rng.uniform(-1.0, 1.0, size=terms) / terms
    phase = rng.uniform(0, 2 * np.pi, size=terms)

    def jet(u, eta):
        z = np.concatenate([u, eta])
        th = freq @ z + phase
        val = amplitude * coef @ np.sin(th)
        grad = amplitude * (coef * np.cos(th)) @ freq
        hess = -amplitude * np.einsum("k,ki,kj->ij", coef * np.sin(th), freq, freq)
        return val, grad, hess

    return genfn_from_perturbation(n, jet, Box.cube(2 * n, domain_half_width), "S0+trig")


def random_symplectic_matrix(rng, n, scale=0.5):
    """Product of shear and block-diagonal symplectic generators."""
    eye, z = np.eye(n), np.zeros((n, n))
    P = np.eye(2 * n)
    for _ in range(2):
        S1 = rng.normal(scale=scale, size=(n, n))
        S1 = 0.5 * (S1 + S1.T)
        S2 = rng.normal(scale=scale, size=(n, n))
        S2 = 0.5 * (S2 + S2.T)
        G = np.eye(n) + rng.normal(scale=scale / 2, size=(n, n))
        P = P @ np.block([[eye, S1], [z, eye]]) @ np.block([[eye, z], [S2, eye]])
        P = P @ np.block([[G, z], [z, np.linalg.inv(G).T]])
    J = standard_J(n)
    assert np.allclose(P.T @ J @ P, J, atol=1e-9)
    return P


def hyperbolic_diagonal(rng, n, rates=(0.2, 0.85)):
    """``diag(l_1..l_n, 1/l_1..1/l_n)`` with random distinct contraction rates."""
    lam = np.sort(rng.uniform(*rates, size=n))
    return np.diag(np.concatenate([lam, 1.0 / lam])), lam
