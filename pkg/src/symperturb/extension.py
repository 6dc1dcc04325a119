"""Conservative extensions of disk perturbations, isotopies, Lagrangian checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import schur

from .errors import (
    DeltaTooLarge,
    DimensionViolation,
    NewtonDivergence,
    NondegeneracyViolation,
    NotHyperbolic,
    NotSymplectic,
)
from .generating_function import (
    CERT_TOL,
    Certificate,
    GeneratingFunction,
    SymplecticMapLocal,
    generate_map,
    map_jacobian_from_hessian,
    solve_eta,
    standard_J,
    symplectic_residual,
)
from .interpolation import build_interpolating_genfn
from .numerics_core import FD_RELATIVE_STEP, Box, SampledMap, fd_jacobian, radial_cutoff

DISK_TOL = 1e-6
JAC_CONSISTENCY_TOL = 1e-6
JAC_CHECK_PROBES = 40
FD_STEP = 1e-5
DET_TOL = 1e-6
MIXED_BLOCK_TOL = 0.5
MAX_HALVINGS = 8


@dataclass
class ExtensionResult:
    phi: SampledMap
    support_box: Box
    on_disk_residual: float
    conservativity_residual: float
    c1_distance_to_id: float
    support_residual: float
    certificates: list = field(default_factory=list)
    genfn: Optional[GeneratingFunction] = None
    meta: dict = field(default_factory=dict, repr=False)

    @property
    def passed(self):
        return all(c.passed for c in self.certificates)

    def as_dict(self):
        return {
            "on_disk_residual": self.on_disk_residual,
            "conservativity_residual": self.conservativity_residual,
            "c1_distance_to_id": self.c1_distance_to_id,
            "support_residual": self.support_residual,
            "certificates": [c.as_dict() for c in self.certificates],
            **{k: v for k, v in self.meta.items() if isinstance(v, (int, float, str))},
        }


def _c1_from_samples(x, values, jacobians):
    dv = np.linalg.norm(values - x, axis=-1).max()
    dj = np.linalg.norm(jacobians - np.eye(x.shape[1]), ord=2, axis=(-2, -1)).max()
    return float(dv + dj)


def _jacobian_consistency(phi, pts, analytic):
    """Max gap between the analytic Jacobians and central differences of phi."""
    pts = pts[:JAC_CHECK_PROBES]
    fd = np.array([fd_jacobian(phi, p, FD_STEP) for p in pts])
    return float(np.abs(fd - analytic[: len(pts)]).max())


def _mixed_block_deviation(S, pts):
    n = S.n
    worst = 0.0
    for p in pts:
        A = S.mixed_block(p[:n], p[n:])
        worst = max(worst, float(np.linalg.norm(A - np.eye(n), 2)))
    return worst


# ------------------------------------------------------------------ symplectic


def _probe_sets(rng, U, psi, count, stencil):
    n = psi.n
    inner = U.sample(rng, count)
    shell = U.shell(rng, max(count // 4, 16), pad=stencil)
    u = psi.disk_probes(rng, max(count // 4, 16))
    disk = np.hstack([u, np.zeros_like(u)])
    return inner, shell, disk


def _certify_symplectic_extension(psi, U, eps, rng, count):
    n = psi.n
    S = build_interpolating_genfn(psi, U)
    stencil = FD_RELATIVE_STEP * U.scale
    inner, shell, disk = _probe_sets(rng, U, psi, count, stencil)
    mixed = _mixed_block_deviation(S, inner[: max(count // 10, 20)])
    if mixed > MIXED_BLOCK_TOL:
        raise NondegeneracyViolation(f"mixed block deviates from I by {mixed:.3f}")
    h = generate_map(S, domain=U.inflate(1.0))
    vals, jacs = h.evaluate(inner)
    symp = symplectic_residual(jacs)
    c1 = _c1_from_samples(inner, vals, jacs)
    disk_out = h(disk)
    target = np.hstack([psi.psi(disk[:, :n]), np.zeros((len(disk), n))])
    disk_err = np.abs(disk_out - target).max(axis=1)
    on_disk = float(disk_err.max())
    support = float(np.abs(h(shell) - shell).max())
    jcons = _jacobian_consistency(h.map, inner, jacs)
    certs = [
        Certificate("symplectic_residual", symp, CERT_TOL),
        Certificate("jacobian_consistency", jcons, JAC_CONSISTENCY_TOL),
        Certificate("on_disk_residual", on_disk, DISK_TOL),
        Certificate("support_residual", support, 0.0),
        Certificate("c1_distance_to_id", c1, eps),
    ]
    return ExtensionResult(h.map, U, on_disk, symp, c1, support, certs, S,
                           {"mixed_block_deviation": mixed, "probes": len(inner), "symplectic_map": h,
                            "disk_points": disk[:, :n], "disk_residuals": disk_err})


def _with_budget_search(run, psi, eps):
    try:
        res = run(psi)
        if res.c1_distance_to_id < eps:
            res.meta["amplitude_factor"] = 1.0
            return res
    except (NondegeneracyViolation, NewtonDivergence):
        pass
    s = 1.0
    for _ in range(MAX_HALVINGS):
        s *= 0.5
        try:
            res = run(psi.scaled(s))
        except (NondegeneracyViolation, NewtonDivergence):
            continue
        if res.c1_distance_to_id < eps:
            raise DeltaTooLarge(f"perturbation too large; certified at amplitude factor {s:g}", s)
    raise DeltaTooLarge("no certified amplitude found", 0.0)


def extend_symplectic(psi, U, eps=0.5, probes=1000, seed=0):
    """Symplectic map of R^{2n}, equal to psi on D x {0} and to Id off U."""
    U = U if isinstance(U, Box) else Box(*U)
    if U.dim != 2 * psi.n:
        raise ValueError("U must be a box in R^{2n}")
    psi.validate()

    def run(p):
        return _certify_symplectic_extension(p, U, eps, np.random.default_rng(seed), probes)

    return _with_budget_search(run, psi, eps)


# -------------------------------------------------------------------- isotopy


@dataclass(frozen=True)
class IsotopyFamily:
    """``t -> generate_map(S0 + (1 - t)(S - S0))``: extension at t=0, Id at t=1."""

    genfn: GeneratingFunction

    def __call__(self, t):
        return self.member(t)

    def member(self, t):
        if not 0.0 <= t <= 1.0:
            raise ValueError("t must lie in [0, 1]")
        return generate_map(self.genfn.blend(1.0 - t))

    def point(self, t, y):
        """Value, Jacobian in y, and derivative in t of the member at y."""
        return isotopy_point(self.genfn, 1.0 - t, y, dt_sign=-1.0)


def isotopy_point(S, s, y, dt_sign=1.0):
    """``phi^{(s)}(y)`` for ``S0 + s (S - S0)`` with its y-Jacobian and d/ds."""
    n = S.n
    y = np.asarray(y, dtype=float)
    u, v = y[:n], y[n:]
    if s == 0.0:
        return y.copy(), np.eye(2 * n), np.zeros(2 * n)
    Ss = S.blend(s)
    trace = solve_eta(Ss, u, v)
    eta = trace.eta
    _, g, H = Ss.jet(u, eta)
    _, gS, _ = S.jet(u, eta)
    pg = gS - np.concatenate([eta, u])
    A = H[:n, n:]
    deta = -np.linalg.solve(A, pg[:n])
    dxi = pg[n:] + H[n:, n:] @ deta
    return np.concatenate([g[n:], eta]), map_jacobian_from_hessian(H, n), dt_sign * np.concatenate([dxi, deta])


def build_isotopy(S, probes=None, tol=1e-10):
    fam = IsotopyFamily(S)
    if probes is not None:
        pts = np.atleast_2d(probes)
        ident = fam.member(1.0)
        err = float(np.abs(ident(pts) - pts).max())
        if err > tol:
            raise NewtonDivergence(f"isotopy endpoint t=1 is not the identity ({err:.2e})")
    return fam


# ------------------------------------------------------------ volume-preserving


def _flattening(k, m, graph):
    """Volume-preserving ``x -> (x', x'' - h(x'))`` and its inverse, with Jacobians."""
    if graph is None:
        return None
    ident = np.eye(m)

    def fwd(x):
        y = x.copy()
        y[k:] -= np.atleast_1d(graph(x[:k]))
        return y

    def inv(y):
        x = y.copy()
        x[k:] += np.atleast_1d(graph(y[:k]))
        return x

    def dfwd(x, sign):
        D = ident.copy()
        D[k:, :k] = sign * np.atleast_2d(graph.jacobian(x[:k])).reshape(m - k, k)
        return D

    return fwd, inv, dfwd


def _volume_map(S, k, m, zcut, graph):
    """Ambient map ``x -> (phi_{s(|z|)}(x_1..x_2k), z)`` conjugated by the flattening."""
    flat = _flattening(k, m, graph)

    def point(x):
        x = np.asarray(x, dtype=float)
        y = flat[0](x) if flat else x
        yb, z = y[: 2 * k], y[2 * k:]
        if m > 2 * k:
            s, gs, _ = zcut.radial_jet(z)
            s = float(s)
        else:
            s, gs = 1.0, np.zeros(0)
        out_b, Db, ds = isotopy_point(S, s, yb)
        if np.array_equal(out_b, yb):
            fy = y
        else:
            fy = np.concatenate([out_b, z])
        D = np.eye(m)
        D[: 2 * k, : 2 * k] = Db
        if m > 2 * k:
            D[: 2 * k, 2 * k:] = np.outer(ds, gs)
        if flat:
            if fy is y:
                return x.copy(), flat[2](fy, 1.0) @ D @ flat[2](x, -1.0)
            return flat[1](fy), flat[2](fy, 1.0) @ D @ flat[2](x, -1.0)
        return fy.copy(), D

    def ev(x):
        x = np.asarray(x, dtype=float)
        flatx = x.reshape(-1, m)
        return np.array([point(p)[0] for p in flatx]).reshape(x.shape)

    def jac(x):
        x = np.asarray(x, dtype=float)
        flatx = x.reshape(-1, m)
        return np.array([point(p)[1] for p in flatx]).reshape(x.shape[:-1] + (m, m))

    return SampledMap(m, m, ev, jac, name=f"vol[{k},{m}]"), point


def _volume_probes(rng, U, k, m, zcut, count):
    pts = U.sample(rng, count)
    if m > 2 * k:
        # half of the probes sit where the isotopy parameter is strictly inside (0, 1)
        half = count // 2
        dirs = rng.normal(size=(half, m - 2 * k))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        r = rng.uniform(zcut.plateau_halfwidth, zcut.ramp_end, size=half)
        pts[:half, 2 * k:] = r[:, None] * dirs
        lo_b, hi_b = U.lo[: 2 * k], U.hi[: 2 * k]
        c, w = 0.5 * (lo_b + hi_b), 0.5 * (hi_b - lo_b)
        pts[:half, : 2 * k] = c + 0.5 * w * rng.uniform(-1, 1, size=(half, 2 * k))
    return pts


def _certify_volume_extension(psi, k, m, U, eps, rng, count, graph):
    Ub = Box(U.lo[: 2 * k], U.hi[: 2 * k])
    S = build_interpolating_genfn(psi, Ub)
    zcut = None
    if m > 2 * k:
        rz = float(np.min(np.minimum(-U.lo[2 * k:], U.hi[2 * k:])))
        zcut = radial_cutoff(rz / 3.0, 2.0 * rz / 3.0)
    phi, point = _volume_map(S, k, m, zcut, graph)
    probes = _volume_probes(rng, U, k, m, zcut, count)
    mixed = _mixed_block_deviation(S, probes[: max(count // 10, 20), : 2 * k])
    if mixed > MIXED_BLOCK_TOL:
        raise NondegeneracyViolation(f"mixed block deviates from I by {mixed:.3f}")
    vals, jacs = [], []
    for p in probes:
        a, b = point(p)
        vals.append(a)
        jacs.append(b)
    vals, jacs = np.array(vals), np.array(jacs)
    det_dev = np.linalg.det(jacs) - 1.0
    det_res = float(np.abs(det_dev).max())
    c1 = _c1_from_samples(probes, vals, jacs)

    u = psi.disk_probes(rng, max(count // 4, 16))
    disk = np.zeros((len(u), m))
    disk[:, :k] = u
    target = np.zeros_like(disk)
    target[:, :k] = psi.psi(u)
    if graph is not None:
        disk[:, k:] += np.atleast_2d(graph(u)).reshape(len(u), m - k)
        target[:, k:] += np.atleast_2d(graph(target[:, :k])).reshape(len(u), m - k)
    on_disk = float(np.abs(phi(disk) - target).max())

    shell = U.shell(rng, max(count // 4, 16), pad=FD_RELATIVE_STEP * U.scale)
    if graph is not None:
        shell[:, k:] += np.atleast_2d(graph(shell[:, :k])).reshape(len(shell), m - k)
    support = float(np.abs(phi(shell) - shell).max())
    partial_mask = np.zeros(len(probes), dtype=bool)
    if zcut is not None:
        zr = np.linalg.norm(probes[:, 2 * k:], axis=1)
        partial_mask = (zr > zcut.plateau_halfwidth) & (zr < zcut.ramp_end)
    partial = int(partial_mask.sum())
    jcons = _jacobian_consistency(phi, probes, jacs)
    certs = [
        Certificate("det_residual", det_res, DET_TOL),
        Certificate("jacobian_consistency", jcons, JAC_CONSISTENCY_TOL),
        Certificate("on_disk_residual", on_disk, DISK_TOL),
        Certificate("support_residual", support, 0.0),
        Certificate("c1_distance_to_id", c1, eps),
    ]
    return ExtensionResult(phi, U, on_disk, det_res, c1, support, certs, S,
                           {"mixed_block_deviation": mixed, "partial_rho_probes": partial,
                            "probes": len(probes), "point": point,
                            "probe_points": probes, "det_deviation": det_dev, "partial_mask": partial_mask})


def extend_volume(psi, m, U, eps=0.5, probes=1000, seed=0, graph=None):
    """Volume-preserving map of R^m equal to psi on the k-disk D, Id off U.

    ``graph`` optionally describes D as the graph of ``h: R^k -> R^{m-k}``
    (a SampledMap with Jacobian); by default D lies in the coordinate plane.
    """
    k = psi.n
    if k > m - k:
        raise DimensionViolation(f"dim(W) = {k} exceeds codim(W) = {m - k}")
    U = U if isinstance(U, Box) else Box(*U)
    if U.dim != m:
        raise ValueError("U must be a box in R^m")
    psi.validate()

    def run(p):
        return _certify_volume_extension(p, k, m, U, eps, np.random.default_rng(seed), probes, graph)

    return _with_budget_search(run, psi, eps)


# ------------------------------------------------------------------ Lagrangian


@dataclass(frozen=True)
class LagrangianCertificate:
    stable_basis: np.ndarray
    unstable_basis: np.ndarray
    stable_residual: float
    unstable_residual: float
    tol: float

    @property
    def dims(self):
        return self.stable_basis.shape[1], self.unstable_basis.shape[1]

    @property
    def passed(self):
        n = (self.stable_basis.shape[0]) // 2
        return self.dims == (n, n) and max(self.stable_residual, self.unstable_residual) <= self.tol


def _invariant_basis(M, inside):
    T, Z, sdim = schur(M, output="real", sort="iuc" if inside else "ouc")
    return Z[:, :sdim]


def lagrangian_certificate(Df, tol=1e-8, unit_gap=1e-8):
    """Stable/unstable subspaces of a hyperbolic symplectic matrix and omega on them."""
    Df = np.asarray(Df, dtype=float)
    n = Df.shape[0] // 2
    J = standard_J(n)
    if np.abs(Df.T @ J @ Df - J).max() > tol:
        raise NotSymplectic("matrix does not preserve the standard symplectic form")
    mods = np.abs(np.linalg.eigvals(Df))
    if np.any(np.abs(mods - 1.0) <= unit_gap):
        raise NotHyperbolic("an eigenvalue lies on the unit circle")
    Es = _invariant_basis(Df, True)
    Eu = _invariant_basis(Df, False)
    rs = float(np.abs(Es.T @ J @ Es).max()) if Es.size else 0.0
    ru = float(np.abs(Eu.T @ J @ Eu).max()) if Eu.size else 0.0
    return LagrangianCertificate(Es, Eu, rs, ru, tol)
