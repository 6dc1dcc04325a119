"""Generating functions S(u, eta) and the symplectic maps they generate.

A scalar field ``S`` with nonsingular mixed block ``d2S/du deta`` defines the
map ``h(u, v) = (xi, eta)`` through ``dS/du(u, eta) = v`` and
``xi = dS/deta(u, eta)``. Coordinates on R^{2n} are ordered ``(u, v)`` with
``omega = sum du_i ^ dv_i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ClosednessViolation, NewtonDivergence, NondegeneracyViolation
from .numerics_core import Box, SampledMap, gauss_rule, polyline_integral

NEWTON_TOL = 1e-12
CERT_TOL = 1e-7
MAX_HALVINGS = 20
COND_LIMIT = 1e12


def standard_J(n):
    """Matrix of omega = sum du_i ^ dv_i in (u, v) ordering."""
    z, eye = np.zeros((n, n)), np.eye(n)
    return np.block([[z, eye], [-eye, z]])


@dataclass(frozen=True)
class GeneratingFunction:
    """Scalar field on R^{2n}; ``jet(u, eta)`` returns (value, gradient, Hessian).

    Gradient and Hessian are ordered ``(u, eta)``.
    """

    n: int
    jet: Callable
    domain: Box = None
    name: str = ""
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.domain is None:
            object.__setattr__(self, "domain", Box.everywhere(2 * self.n))

    def value(self, u, eta):
        return self.jet(u, eta)[0]

    def grad(self, u, eta):
        g = self.jet(u, eta)[1]
        return g[: self.n], g[self.n:]

    def hess(self, u, eta):
        return self.jet(u, eta)[2]

    def mixed_block(self, u, eta):
        return self.hess(u, eta)[: self.n, self.n:]

    def perturbation(self):
        """``S - S0`` as a generating-function-shaped jet."""
        return _difference_from_identity(self)

    def blend(self, s):
        """``S0 + s (S - S0)``."""
        if s == 1.0:
            return self
        n, base = self.n, self

        def jet(u, eta):
            v0, g0, h0 = _identity_jet(n, u, eta)
            v, g, h = base.jet(u, eta)
            return v0 + s * (v - v0), g0 + s * (g - g0), h0 + s * (h - h0)

        return GeneratingFunction(n, jet, self.domain, f"{self.name}@{s:g}", dict(self.meta))


def _identity_jet(n, u, eta):
    u = np.asarray(u, dtype=float)
    eta = np.asarray(eta, dtype=float)
    z, eye = np.zeros((n, n)), np.eye(n)
    return float(u @ eta), np.concatenate([eta, u]), np.block([[z, eye], [eye, z]])


def _difference_from_identity(S):
    def jet(u, eta):
        v0, g0, h0 = _identity_jet(S.n, u, eta)
        v, g, h = S.jet(u, eta)
        return v - v0, g - g0, h - h0

    return jet


def identity_genfn(n):
    """``S0(u, eta) = u . eta``, the generating function of the identity."""
    if n < 1:
        raise ValueError("n must be positive")
    return GeneratingFunction(n, lambda u, eta: _identity_jet(n, u, eta), name="S0")


def genfn_from_perturbation(n, pert_jet, domain=None, name="", meta=None):
    """``S0 + P`` where ``pert_jet`` returns the jet of ``P``."""

    def jet(u, eta):
        v0, g0, h0 = _identity_jet(n, u, eta)
        v, g, h = pert_jet(np.asarray(u, float), np.asarray(eta, float))
        return v0 + v, g0 + g, h0 + h

    return GeneratingFunction(n, jet, domain, name, meta or {})


def c2_distance(S, T, probes):
    """``sup |S-T| + sup |grad(S-T)| + sup ||Hess(S-T)||`` over probes in R^{2n}."""
    n = S.n
    dv = dg = dh = 0.0
    for p in np.atleast_2d(probes):
        a, b = S.jet(p[:n], p[n:]), T.jet(p[:n], p[n:])
        dv = max(dv, abs(a[0] - b[0]))
        dg = max(dg, float(np.linalg.norm(a[1] - b[1])))
        dh = max(dh, float(np.linalg.norm(a[2] - b[2], 2)))
    return dv + dg + dh


# ---------------------------------------------------------------- forward map


@dataclass
class NewtonTrace:
    eta: np.ndarray
    residuals: list = field(default_factory=list)

    @property
    def iterations(self):
        return len(self.residuals) - 1


def _mixed_inverse(A):
    if not np.all(np.isfinite(A)) or np.linalg.cond(A) > COND_LIMIT:
        raise NondegeneracyViolation("mixed Hessian block d2S/du deta is singular")
    return np.linalg.inv(A)


def solve_eta(S, u, v, newton_tol=NEWTON_TOL, max_iter=50):
    """Damped Newton for ``dS/du(u, eta) = v`` starting from ``eta = v``."""
    n = S.n
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    eta = v.copy()
    _, g, H = S.jet(u, eta)
    r = g[:n] - v
    res = float(np.linalg.norm(r, np.inf))
    trace = NewtonTrace(eta, [res])
    polished = False
    for _ in range(max_iter):
        if res <= newton_tol:
            if polished or res == 0.0:
                trace.eta = eta
                return trace
            polished = True
        step = -_mixed_inverse(H[:n, n:]) @ r
        lam = 1.0
        for _ in range(MAX_HALVINGS + 1):
            trial = eta + lam * step
            _, g_t, H_t = S.jet(u, trial)
            r_t = g_t[:n] - v
            res_t = float(np.linalg.norm(r_t, np.inf))
            if res_t < res or res_t <= newton_tol:
                break
            lam *= 0.5
        else:
            if res <= newton_tol:
                trace.eta = eta
                return trace
            raise NewtonDivergence(f"line search stalled at residual {res:.3e}")
        eta, g, H, r, res = trial, g_t, H_t, r_t, res_t
        trace.residuals.append(res)
    if res <= newton_tol:
        trace.eta = eta
        return trace
    raise NewtonDivergence(f"residual {res:.3e} after {max_iter} iterations")


def map_jacobian_from_hessian(H, n):
    """Implicit-function Jacobian of ``(u, v) -> (xi, eta)`` from Hess S."""
    Suu, A, Sue = H[:n, :n], H[:n, n:], H[n:, n:]
    Ainv = _mixed_inverse(A)
    deta_du = -Ainv @ Suu
    deta_dv = Ainv
    dxi_du = A.T + Sue @ deta_du
    dxi_dv = Sue @ deta_dv
    return np.block([[dxi_du, dxi_dv], [deta_du, deta_dv]])


@dataclass(frozen=True)
class SymplecticMapLocal:
    n: int
    map: SampledMap
    source_genfn: Optional[GeneratingFunction] = None
    value_and_jacobian: Optional[Callable] = field(default=None, repr=False, compare=False)

    def __call__(self, x):
        return self.map(x)

    def evaluate(self, x):
        """Values and Jacobians of a batch of points from one solve per point."""
        x = np.atleast_2d(x)
        if self.value_and_jacobian is None:
            return self.map(x), self.map.jacobian(x)
        pairs = [self.value_and_jacobian(z) for z in x]
        return np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])

    def jacobian(self, x, step=None):
        return self.map.jacobian(x, step)


def generate_map(S, newton_tol=NEWTON_TOL, max_iter=50, domain=None):
    """The symplectic map generated by ``S`` with analytic Jacobian."""
    n = S.n

    def point(z):
        trace = solve_eta(S, z[:n], z[n:], newton_tol, max_iter)
        _, g, H = S.jet(z[:n], trace.eta)
        return np.concatenate([g[n:], trace.eta]), H

    def ev(x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, 2 * n)
        out = np.array([point(z)[0] for z in flat])
        return out.reshape(x.shape)

    def jac(x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, 2 * n)
        out = np.array([map_jacobian_from_hessian(point(z)[1], n) for z in flat])
        return out.reshape(x.shape[:-1] + (2 * n, 2 * n))

    def both(z):
        out, H = point(np.asarray(z, dtype=float))
        return out, map_jacobian_from_hessian(H, n)

    m = SampledMap(2 * n, 2 * n, ev, jac, domain or S.domain, f"h[{S.name}]")
    return SymplecticMapLocal(n, m, S, both)


# ---------------------------------------------------------------- certificate


@dataclass(frozen=True)
class Certificate:
    name: str
    value: float
    threshold: float

    @property
    def passed(self):
        return bool(np.isfinite(self.value) and self.value <= self.threshold)

    def as_dict(self):
        return {"name": self.name, "value": float(self.value),
                "threshold": float(self.threshold), "passed": self.passed}


def symplectic_residual(Dh):
    """``max |Dh^T J Dh - J|`` over a stack of Jacobians."""
    Dh = np.asarray(Dh, dtype=float)
    n = Dh.shape[-1] // 2
    J = standard_J(n)
    R = np.swapaxes(Dh, -1, -2) @ J @ Dh - J
    return float(np.abs(R).max())


def certify_symplectic(h, sample_points, tol=CERT_TOL, step=None):
    m = h.map if isinstance(h, SymplecticMapLocal) else h
    if m.dim_in != m.dim_out or m.dim_in % 2:
        raise ValueError("symplectic certification needs an even-dimensional square map")
    pts = np.atleast_2d(sample_points)
    return Certificate("symplectic_residual", symplectic_residual(m.jacobian(pts, step)), tol)


# ---------------------------------------------------------------- inverse map


def _solve_v(h, u, eta, v0, tol=NEWTON_TOL, max_iter=60):
    """Newton for ``eta(u, v) = eta`` in v."""
    n = len(u)
    v = np.array(v0, dtype=float)
    for _ in range(max_iter):
        z = np.concatenate([u, v])
        out = h.map(z)
        r = out[n:] - eta
        if np.linalg.norm(r, np.inf) <= tol:
            return v, out[:n], h.map.jacobian(z)
        D = h.map.jacobian(z)
        Ev = D[n:, n:]
        if np.linalg.cond(Ev) > COND_LIMIT:
            raise NondegeneracyViolation("d eta / d v is singular")
        v = v - np.linalg.solve(Ev, r)
    raise NewtonDivergence("could not invert (u, v) -> (u, eta)")


def genfn_from_map(h, base_point, half_width=0.5, closedness_tol=1e-6, min_half_width=1e-3):
    """Recover a generating function of ``h`` on a box around ``base_point``.

    ``base_point`` is given in ``(u, eta)`` coordinates. The value is the
    integral of ``v du + xi deta`` from the base point, normalised so that
    ``S(base) = u_base . eta_base``. The box shrinks until the inversion
    converges at every corner, and closedness of the 1-form is checked by
    comparing straight and staircase paths to each corner.
    """
    if not isinstance(h, SymplecticMapLocal):
        h = SymplecticMapLocal(h.dim_in // 2, h)
    n = h.n
    base = np.asarray(base_point, dtype=float)
    rule = gauss_rule(0.0, 1.0, density=16)

    def gradient(p):
        u, eta = p[:n], p[n:]
        v, xi, D = _solve_v(h, u, eta, eta)
        return v, xi, D

    def alpha(points):
        out = np.empty_like(points)
        for k, p in enumerate(points):
            v, xi, _ = gradient(p)
            out[k] = np.concatenate([v, xi])
        return out

    hw = float(half_width)
    corners_unit = np.array(np.meshgrid(*([[-1.0, 1.0]] * (2 * n)), indexing="ij")).reshape(2 * n, -1).T
    while True:
        try:
            for c in corners_unit:
                gradient(base + hw * c)
            break
        except (NewtonDivergence, NondegeneracyViolation):
            hw *= 0.5
            if hw < min_half_width:
                raise
    box = Box.cube(2 * n, hw, base)

    offset = float(base[:n] @ base[n:])

    def value_from(p, vertices):
        return offset + polyline_integral(alpha, vertices, rule)

    worst = 0.0
    for c in corners_unit[: min(len(corners_unit), 8)]:
        target = base + hw * c
        knee = base.copy()
        knee[:n] = target[:n]
        straight = value_from(target, [base, target])
        staircase = value_from(target, [base, knee, target])
        worst = max(worst, abs(straight - staircase))
    if worst > closedness_tol:
        raise ClosednessViolation(f"1-form v du + xi deta is not closed: loop defect {worst:.3e}")

    def jet(u, eta):
        p = np.concatenate([np.asarray(u, float), np.asarray(eta, float)])
        v, xi, D = gradient(p)
        Xu, Xv, Eu, Ev = D[:n, :n], D[:n, n:], D[n:, :n], D[n:, n:]
        Evi = np.linalg.inv(Ev)
        dv_du = -Evi @ Eu
        dv_deta = Evi
        dxi_du = Xu + Xv @ dv_du
        dxi_deta = Xv @ Evi
        H = np.block([[dv_du, dv_deta], [dxi_du, dxi_deta]])
        H = 0.5 * (H + H.T)
        val = value_from(p, [base, p])
        return val, np.concatenate([v, xi]), H

    return GeneratingFunction(n, jet, box, f"S[{h.map.name}]")
