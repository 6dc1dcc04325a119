"""Smoothed correction field Q(u, eta) built from a C1 disk diffeomorphism.

With ``F_i = psi_i - u_i`` and ``alpha_i = dF_i`` the field is

    Q(u, eta) = sum_i eta_i  int Phi_n(w) [F_i(u - eta_i w) - F_i(u* - eta_i w)] dw,

i.e. the path integral from ``u*`` to ``u`` of the convolved forms
``alpha_i^{*eta_i}(x) = eta_i int Phi_n(w) alpha_i(x - eta_i w) dw``. All
first and second derivatives are evaluated from kernels that only involve
``F`` and ``dF`` (never second derivatives of psi), with
``K(w) = grad Phi_n(w) . w + (n - 1) Phi_n(w)``:

    dQ/du            = sum_i eta_i int Phi_n(w) dF_i(u - eta_i w) dw
    dQ/deta_i        = - int K(w) [F_i(u - eta_i w) - F_i(u* - eta_i w)] dw
    d2Q/du deta_i    = - int K(w) dF_i(u - eta_i w) dw
    d2Q/du2          = sum_i int grad Phi_n(w) (x) dF_i(u - eta_i w) dw
    d2Q/deta_i deta_j = delta_ij int K(w) [dF_i(x - eta_i w) . w]_{x=u*}^{x=u} dw
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidDiskDiffeo, QuadratureInconsistency
from .generating_function import GeneratingFunction, genfn_from_perturbation
from .numerics_core import (
    Box,
    SampledMap,
    bell_nd_jet,
    gauss_rule,
    make_bell,
    radial_cutoff,
    tensor_rule,
)

DOUBLING_TOL = 1e-6


@dataclass(frozen=True)
class DiskDiffeo:
    """Diffeomorphism of R^n equal to the identity outside a disk.

    ``psi`` must be the identity on the collar ``radius - collar <= |u - c|``
    and beyond; ``base_point`` is a point of the boundary sphere.
    """

    n: int
    psi: SampledMap
    center: np.ndarray
    radius: float
    collar: float
    base_point: np.ndarray = None

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(self.n)
        object.__setattr__(self, "center", c)
        if self.base_point is None:
            e1 = np.zeros(self.n)
            e1[0] = self.radius
            object.__setattr__(self, "base_point", c + e1)
        else:
            object.__setattr__(self, "base_point", np.asarray(self.base_point, dtype=float))
        if not 0 < self.collar < self.radius:
            raise InvalidDiskDiffeo("collar must lie in (0, radius)")

    def displacement(self, x):
        return self.psi(x) - np.asarray(x, dtype=float)

    def displacement_jacobian(self, x):
        return self.psi.jacobian(x) - np.eye(self.n)

    def scaled(self, s):
        """``u + s (psi(u) - u)``."""
        base = self.psi
        n = self.n

        def ev(x):
            x = np.asarray(x, dtype=float)
            return x + s * (base(x) - x)

        jac = None
        if base.jac is not None:
            def jac(x):
                return np.eye(n) + s * (base.jacobian(x) - np.eye(n))

        m = SampledMap(n, n, ev, jac, base.domain, f"{base.name}*{s:g}")
        return DiskDiffeo(n, m, self.center, self.radius, self.collar, self.base_point)

    def validate(self, rng=None, count=400, tol=1e-12):
        """Probe the invariants; raises InvalidDiskDiffeo on failure."""
        rng = np.random.default_rng(0) if rng is None else rng
        if abs(np.linalg.norm(self.base_point - self.center) - self.radius) > 1e-12:
            raise InvalidDiskDiffeo("base point is not on the boundary sphere")
        if np.linalg.norm(self.displacement(self.base_point)) > tol:
            raise InvalidDiskDiffeo("psi does not fix the base point")
        dirs = rng.normal(size=(count, self.n))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radii = rng.uniform(self.radius - self.collar, 2.0 * self.radius, size=count)
        outside = self.center + radii[:, None] * dirs
        if np.abs(self.displacement(outside)).max() > tol:
            raise InvalidDiskDiffeo("psi is not the identity on the collar and beyond")
        inside = self.center + (rng.uniform(0, 1, count) ** (1 / self.n) * self.radius)[:, None] * dirs
        dets = np.linalg.det(self.psi.jacobian(inside))
        if np.any(dets <= 0):
            raise InvalidDiskDiffeo("psi is not an orientation-preserving local diffeomorphism")
        return True

    def c1_distance_to_identity(self, probes):
        probes = np.atleast_2d(probes)
        dv = np.linalg.norm(self.displacement(probes), axis=-1).max()
        dj = np.linalg.norm(self.displacement_jacobian(probes), ord=2, axis=(-2, -1)).max()
        return float(dv + dj)

    def disk_probes(self, rng, count):
        dirs = rng.normal(size=(count, self.n))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        r = self.radius * rng.uniform(0, 1, count) ** (1.0 / self.n)
        return self.center + r[:, None] * dirs


class CorrectionField:
    """Q and its derivatives, evaluated by tensor-product Gauss quadrature."""

    def __init__(self, disk, bell, rule=None):
        self.disk = disk
        self.n = disk.n
        self.bell = bell
        self.rule = rule or default_kernel_rule(bell, kernel_density(self.n))
        self._set_nodes(self.rule)

    def _set_nodes(self, rule):
        n = self.n
        W, wts = tensor_rule(rule, n)
        phi, dphi = bell_nd_jet(self.bell, W)
        keep = phi != 0.0
        keep |= np.any(dphi != 0.0, axis=1)
        self.W, self.weights = W[keep], wts[keep]
        self.phi, self.dphi = phi[keep], dphi[keep]
        self.K = np.einsum("qk,qk->q", self.dphi, self.W) + (n - 1) * self.phi

    def doubled(self):
        return CorrectionField(self.disk, self.bell, self.rule.doubled())

    def _F(self, pts):
        """F and dF at the stacked points; returns (N, n) and (N, n, n)."""
        psi = self.disk.psi
        return psi(pts) - pts, psi.jacobian(pts) - np.eye(self.n)

    def jet(self, u, eta):
        """Q, its gradient and its Hessian at one point, ordered (u, eta)."""
        n = self.n
        u = np.asarray(u, dtype=float)
        eta = np.asarray(eta, dtype=float)
        W, wq = self.W, self.weights
        N = W.shape[0]
        shifts = eta[:, None, None] * W[None, :, :]          # (n, N, n)
        pts = np.concatenate([u - shifts, self.disk.base_point - shifts]).reshape(-1, n)
        F, dF = self._F(pts)
        F = F.reshape(2, n, N, n)
        dF = dF.reshape(2, n, N, n, n)

        q = 0.0
        grad = np.zeros(2 * n)
        hess = np.zeros((2 * n, 2 * n))
        wphi, wK = wq * self.phi, wq * self.K
        for i in range(n):
            Fi_u, Fi_s = F[0, i, :, i], F[1, i, :, i]
            dFi_u, dFi_s = dF[0, i, :, i, :], dF[1, i, :, i, :]
            diff = Fi_u - Fi_s
            q += eta[i] * (wphi @ diff)
            grad[:n] += eta[i] * (wphi @ dFi_u)
            grad[n + i] = -(wK @ diff)
            hess[:n, :n] += np.einsum("q,qk,qj->kj", wq, self.dphi, dFi_u)
            hess[:n, n + i] = -(wK @ dFi_u)
            wdot = np.einsum("qk,qk->q", dFi_u, W) - np.einsum("qk,qk->q", dFi_s, W)
            hess[n + i, n + i] = wK @ wdot
        uu = 0.5 * (hess[:n, :n] + hess[:n, :n].T)
        hess[:n, :n] = uu
        hess[n:, :n] = hess[:n, n:].T
        return q, grad, hess

    def value(self, u, eta):
        return self.jet(u, eta)[0]

    def path_value(self, u, eta, waypoints=(), panels=32, nodes_per_panel=4):
        """Q from the iterated integral of the convolved forms along a polyline.

        The polyline runs ``u* -> waypoints... -> u``; the forms are evaluated
        pointwise from the Jacobian of psi.
        """
        n = self.n
        u = np.asarray(u, dtype=float)
        eta = np.asarray(eta, dtype=float)
        verts = np.vstack([self.disk.base_point, *np.atleast_2d(waypoints).reshape(-1, n), u]) \
            if len(waypoints) else np.vstack([self.disk.base_point, u])
        outer = gauss_rule(0.0, 1.0, panels=panels, density=nodes_per_panel * panels)
        total = 0.0
        for a, b in zip(verts[:-1], verts[1:]):
            seg = b - a
            xs = a[None, :] + outer.nodes[:, None] * seg[None, :]       # (M, n)
            for i in range(n):
                if eta[i] == 0.0:
                    continue
                pts = (xs[:, None, :] - eta[i] * self.W[None, :, :]).reshape(-1, n)
                dFi = self.disk.psi.jacobian(pts)[:, i, :]
                dFi[:, i] -= 1.0
                along = (dFi @ seg).reshape(xs.shape[0], -1)              # (M, N)
                total += eta[i] * (outer.weights @ along @ (self.weights * self.phi))
        return float(total)

    def quadrature_error(self, u, eta, doubled=None):
        ref = (doubled or self.doubled()).jet(u, eta)
        mine = self.jet(u, eta)
        return max(abs(ref[0] - mine[0]), np.abs(ref[1] - mine[1]).max(), np.abs(ref[2] - mine[2]).max())


def kernel_density(n):
    """Gauss nodes per unit length for the kernel grid; the tensor grid grows like density^n."""
    return 96 if n == 1 else 64


def default_kernel_rule(bell, density=64):
    b = bell.ramp_end
    return gauss_rule(-b, b, density=density, breakpoints=bell.breakpoints())


def convolve_form(alpha, t, bell, rule=None, n=None):
    """The smoothed 1-form ``x -> t int Phi_n(w) alpha(x - t w) dw``.

    ``alpha`` maps points ``(N, n)`` to covectors ``(N, n)``; the returned
    callable accepts ``(..., n)`` points.
    """
    rule = rule or default_kernel_rule(bell)

    def smoothed(x):
        x = np.asarray(x, dtype=float)
        dim = x.shape[-1] if n is None else n
        W, wq = tensor_rule(rule, dim)
        phi, _ = bell_nd_jet(bell, W)
        if t == 0.0:
            return np.zeros_like(x)
        flat = x.reshape(-1, dim)
        pts = (flat[:, None, :] - t * W[None, :, :]).reshape(-1, dim)
        vals = np.asarray(alpha(pts)).reshape(flat.shape[0], -1, dim)
        out = t * np.einsum("q,pqk->pk", wq * phi, vals)
        return out.reshape(x.shape)

    return smoothed


def build_Q(psi, bell=None, rule=None, check_points=None, tol=DOUBLING_TOL):
    """Correction field of ``psi``; the node-doubling check runs on ``check_points``."""
    bell = bell or make_bell()
    field = CorrectionField(psi, bell, rule)
    if check_points is None:
        rng = np.random.default_rng(12345)
        us = psi.disk_probes(rng, 4)
        etas = rng.uniform(-0.3, 0.3, size=(4, psi.n))
        check_points = np.hstack([us, etas])
    ref = field.doubled()
    for p in np.atleast_2d(check_points):
        err = field.quadrature_error(p[: psi.n], p[psi.n:], ref)
        if err > tol:
            raise QuadratureInconsistency(f"node doubling changes Q by {err:.3e} at {p}")
    return field


def cutoff_for(disk, U):
    """Product cutoff rho(u, eta), 1 near D x {0} and 0 outside U."""
    n = disk.n
    lo_u, hi_u = U.lo[:n], U.hi[:n]
    lo_e, hi_e = U.lo[n:], U.hi[n:]
    m_u = float(np.min(np.minimum(disk.center - lo_u, hi_u - disk.center))) - disk.radius
    m_e = float(np.min(np.minimum(-lo_e, hi_e)))
    if m_u <= 0 or m_e <= 0:
        raise ValueError("U must contain D x {0} with a positive margin")
    cu = radial_cutoff(disk.radius + m_u / 3.0, disk.radius + 2.0 * m_u / 3.0)
    ce = radial_cutoff(m_e / 3.0, 2.0 * m_e / 3.0)
    return cu, ce


def build_interpolating_genfn(psi, U, bell=None, field=None):
    """``S = S0 + rho Q`` with rho supported in ``U``."""
    n = psi.n
    U = U if isinstance(U, Box) else Box(*U)
    field = field or build_Q(psi, bell)
    cu, ce = cutoff_for(psi, U)
    center = psi.center

    def pert_jet(u, eta):
        a, ga, Ha = cu.radial_jet(u - center)
        b, gb, Hb = ce.radial_jet(eta)
        if a * b == 0.0:
            return 0.0, np.zeros(2 * n), np.zeros((2 * n, 2 * n))
        rho = a * b
        grho = np.concatenate([b * ga, a * gb])
        Hrho = np.block([[b * Ha, np.outer(ga, gb)], [np.outer(gb, ga), a * Hb]])
        q, gq, Hq = field.jet(u, eta)
        val = rho * q
        grad = q * grho + rho * gq
        hess = q * Hrho + np.outer(grho, gq) + np.outer(gq, grho) + rho * Hq
        return val, grad, hess

    meta = {"Q": field, "U": U, "disk": psi, "cutoffs": (cu, ce)}
    return genfn_from_perturbation(n, pert_jet, U.inflate(1.0), "S0+rhoQ", meta)


def default_support_box(disk, u_margin=0.6, eta_margin=0.6):
    """Box ``(D + u_margin) x [-eta_margin, eta_margin]^n`` around ``D x {0}``.

    The eta margin is kept small: quadrature of the kernel loses accuracy as
    ``|eta|`` grows, and the cutoff only reaches ``2/3`` of it.
    """
    n = disk.n
    hw = disk.radius + u_margin
    lo = np.concatenate([disk.center - hw, np.full(n, -eta_margin)])
    hi = np.concatenate([disk.center + hw, np.full(n, eta_margin)])
    return Box(lo, hi)
