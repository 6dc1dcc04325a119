"""Contractions of the unit ball, log-Jacobian distortion and orbit grafting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    ChartInversionFailure,
    GapInfeasible,
    GraphNotInvariant,
    NotAContraction,
    OrbitsNotSeparated,
    SingularJacobian,
)
from .numerics_core import Box, SampledMap, c1_distance, log_jacobian, radial_cutoff


def sphere_mesh(d, count, rng=None, radius=1.0):
    """Points on the sphere of given radius (deterministic in d <= 2)."""
    if d == 1:
        return np.array([[-radius], [radius]])
    if d == 2:
        th = np.linspace(0, 2 * np.pi, count, endpoint=False)
        return radius * np.column_stack([np.cos(th), np.sin(th)])
    rng = np.random.default_rng(0) if rng is None else rng
    p = rng.normal(size=(count, d))
    return radius * p / np.linalg.norm(p, axis=1, keepdims=True)


def ball_mesh(d, per_axis, radius=1.0, exclude=0.0):
    """Grid points of the closed ball, optionally without a small ball at 0."""
    ax = np.linspace(-radius, radius, per_axis)
    ax = 0.5 * (ax - ax[::-1])          # exactly symmetric about 0
    pts = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), axis=-1).reshape(-1, d)
    r = np.linalg.norm(pts, axis=1)
    return pts[(r <= radius + 1e-12) & (r > exclude)]


@dataclass(frozen=True)
class Contraction:
    """A map of the closed unit ball fixing 0 and mapping it into the open ball."""

    d: int
    map: SampledMap
    linear_radius: Optional[float] = None

    def __call__(self, x):
        return self.map(x)

    def jacobian(self, x):
        return self.map.jacobian(x)

    def log_jac(self, x):
        return log_jacobian(self.map, x)

    def check(self, boundary_count=256, interior=None, tol=1e-12):
        """Probe f(0) = 0, f(B) inside the open ball and nonsingularity."""
        if np.linalg.norm(self.map(np.zeros(self.d))) > tol:
            raise NotAContraction("the map does not fix 0")
        probes = sphere_mesh(self.d, boundary_count)
        if interior is not None:
            probes = np.vstack([probes, interior])
        if np.linalg.norm(self.map(probes), axis=1).max() >= 1.0:
            raise NotAContraction("the map sends a probe outside the open unit ball")
        try:
            log_jacobian(self.map, probes)
        except SingularJacobian as exc:
            raise NotAContraction(str(exc)) from exc
        return self

    def orbit(self, x, n):
        """``x, f(x), ..., f^n(x)`` as an ``(n+1, d)`` array."""
        pts = np.empty((n + 1, self.d))
        pts[0] = x
        for i in range(n):
            pts[i + 1] = self.map(pts[i])
        return pts

    def orbits(self, xs, n):
        """Orbits of many points at once: ``(n+1, P, d)``."""
        xs = np.atleast_2d(xs)
        pts = np.empty((n + 1,) + xs.shape)
        pts[0] = xs
        for i in range(n):
            pts[i + 1] = self.map(pts[i])
        return pts


def contraction_from_map(m, linear_radius=None, check=True):
    c = Contraction(m.dim_in, m, linear_radius)
    return c.check() if check else c


@dataclass(frozen=True)
class DistortionRecord:
    n: int
    x: np.ndarray
    y: np.ndarray
    delta: float

    def row(self):
        return [self.n, *np.atleast_1d(self.x), *np.atleast_1d(self.y), self.delta]


def log_jac_sums(f, x, n):
    """Cumulative ``sum_{i<k} log Jac f(f^i x)`` for k = 0..n."""
    orb = f.orbit(x, n - 1) if n > 0 else np.empty((0, f.d))
    lj = np.atleast_1d(log_jacobian(f.map, orb)) if n > 0 else np.empty(0)
    return np.concatenate([[0.0], np.cumsum(lj)])


def distortion_series(f, x, y, n):
    """``Delta_k(x, y)`` for k = 0..n, computed in log space."""
    return np.abs(log_jac_sums(f, x, n) - log_jac_sums(f, y, n))


def distortion(f, x, y, n):
    if n < 1:
        raise ValueError("n must be at least 1")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return DistortionRecord(n, x, y, float(distortion_series(f, x, y, n)[-1]))


def distortion_by_composition(f, x, y, n):
    """Same quantity from the Jacobian matrix of ``f^n`` (chain-rule product)."""

    # Accumulate D f^n = Q_n R_n ... R_1 with a QR step per factor; the raw
    # product turns numerically rank deficient long before n = 200.
    def logjac_power(p):
        Q = np.eye(f.d)
        total = 0.0
        for q in f.orbit(p, n - 1):
            Q, R = np.linalg.qr(np.atleast_2d(f.jacobian(q)) @ Q)
            diag = np.abs(np.diag(R))
            if np.any(diag == 0):
                raise SingularJacobian("f^n has a singular Jacobian")
            total += float(np.log(diag).sum())
        return total

    return abs(logjac_power(np.asarray(x, float)) - logjac_power(np.asarray(y, float)))


# ----------------------------------------------------------- linearisation


def linearize_near_zero(f, radius, probes_per_axis=41):
    """Blend f into its derivative at 0: equal to D0f on B(0, radius/2)."""
    d = f.d
    L = np.atleast_2d(f.jacobian(np.zeros(d)))
    cut = radial_cutoff(radius / 2.0, radius)
    base = f.map

    def ev(x):
        x = np.asarray(x, dtype=float)
        fx = base(x)
        lin = x @ L.T
        w = cut(np.linalg.norm(x, axis=-1))
        return fx - w[..., None] * (fx - lin)

    def jac(x):
        x = np.asarray(x, dtype=float)
        fx, Df = base(x), base.jacobian(x)
        w, gw, _ = cut.radial_jet(x)
        return Df - w[..., None, None] * (Df - L) - (fx - x @ L.T)[..., :, None] * gw[..., None, :]

    m = SampledMap(d, d, ev, jac, base.domain, f"lin[{base.name}]")
    probes = ball_mesh(d, probes_per_axis if d <= 2 else 11, radius=min(1.0, 1.2 * radius))
    g = Contraction(d, m, radius / 2.0)
    try:
        g.check(interior=ball_mesh(d, 21 if d <= 2 else 7))
    except NotAContraction as exc:
        raise NotAContraction(f"linearised map is not a contraction: {exc}") from exc
    dist = c1_distance(m, base, probes)
    return g, dist


# ----------------------------------------------------------------- grafting


@dataclass(frozen=True)
class GraftedContraction:
    base: Contraction
    centers: np.ndarray
    i0: int
    n: int
    eps: float
    g1: SampledMap
    jac_gap: float
    contraction: Contraction
    min_delta: float
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def map(self):
        return self.contraction.map


def graft_profile(plateau=0.5):
    return radial_cutoff(plateau, 1.0)


def make_g1(L, jac_gap, plateau=0.5, det_floor=0.1):
    """``g1(z) = L (z + c beta(|z|) z_1 e_1)`` with det Dg1(0) = det L * exp(jac_gap).

    Returns the perturbation ``g1 - L`` with its Jacobian and the factor c.
    """
    L = np.atleast_2d(L)
    d = L.shape[0]
    c = math.expm1(jac_gap)
    beta = graft_profile(plateau)
    r = np.linspace(0.0, 1.0, 4001)
    radial = beta(r) + r * beta.derivative(r, 1)
    worst = 1.0 + c * (radial.min() if c > 0 else radial.max())
    if worst <= det_floor:
        raise GapInfeasible(f"gap {jac_gap:g} would fold the graft (min det factor {worst:.3f})")
    e1 = np.zeros(d)
    e1[0] = 1.0
    Le1 = L @ e1

    def delta(z):
        z = np.asarray(z, dtype=float)
        b = beta(np.linalg.norm(z, axis=-1))
        return (c * b * z[..., 0])[..., None] * Le1

    def delta_jac(z):
        z = np.asarray(z, dtype=float)
        val, grad, _ = beta.radial_jet(z)
        row = c * (val[..., None] * e1 + z[..., :1] * grad)
        return Le1[:, None] * row[..., None, :]

    pert = SampledMap(d, d, delta, delta_jac, Box.cube(d, 1.0), "g1-L")

    def g1_eval(z):
        return np.asarray(z, dtype=float) @ L.T + delta(z)

    def g1_jac(z):
        return L + delta_jac(z)

    g1 = SampledMap(d, d, g1_eval, g1_jac, Box.cube(d, 1.0), "g1")
    return g1, pert, c


def _grafted_map(base, centers, eps, pert):
    d = base.d
    f = base.map

    def locate(x):
        diff = x[..., None, :] - centers                    # (..., C, d)
        dist = np.linalg.norm(diff, axis=-1)
        k = np.argmin(dist, axis=-1)
        near = np.take_along_axis(dist, k[..., None], axis=-1)[..., 0] < eps
        zeta = np.take_along_axis(diff, k[..., None, None], axis=-2)[..., 0, :] / eps
        return near, zeta

    def ev(x):
        x = np.asarray(x, dtype=float)
        out = f(x)
        near, zeta = locate(x)
        if np.any(near):
            out = out + np.where(near[..., None], eps * pert(np.where(near[..., None], zeta, 0.0)), 0.0)
        return out

    def jac(x):
        x = np.asarray(x, dtype=float)
        J = f.jacobian(x)
        near, zeta = locate(x)
        if np.any(near):
            J = J + np.where(near[..., None, None], pert.jacobian(np.where(near[..., None], zeta, 0.0)), 0.0)
        return J

    return SampledMap(d, d, ev, jac, f.domain, f"graft[{f.name}]")


def _min_pair_distance(P):
    if len(P) < 2:
        return np.inf
    from scipy.spatial import cKDTree

    dist, _ = cKDTree(P).query(P, k=2)
    return float(dist[:, 1].min())


def perturb_orbit(f, x, Lambda, N, jac_gap, n=None, eps=None, separation=1e-6, extra=60):
    """Graft Jacobian-changing bumps along the orbit of ``x``.

    ``f`` must be linear on ``B(0, f.linear_radius)``. Returns a grafted
    contraction whose distortion between ``x`` and every mesh point of
    ``Lambda`` exceeds ``N`` at the returned iterate count.
    """
    if f.linear_radius is None:
        raise ValueError("f must be linear near 0; use linearize_near_zero first")
    if jac_gap <= 0:
        raise GapInfeasible("jac_gap must be positive")
    d = f.d
    x = np.asarray(x, dtype=float).reshape(d)
    Lam = np.atleast_2d(np.asarray(Lambda, dtype=float))
    L = np.atleast_2d(f.jacobian(np.zeros(d)))
    g1, pert, _ = make_g1(L, jac_gap)
    r_lin = f.linear_radius

    horizon = 4096
    x_orb = f.orbit(x, horizon)
    y_orb = f.orbits(Lam, horizon)                          # (H+1, P, d)
    xn = np.linalg.norm(x_orb, axis=1)
    yn = np.linalg.norm(y_orb, axis=2).max(axis=1)
    inside = (xn <= 0.5 * r_lin) & (yn <= r_lin)
    tail_inside = np.flip(np.logical_and.accumulate(np.flip(inside)))
    if not tail_inside.any():
        raise ValueError("orbits never settle in the linear zone")
    i0 = int(np.argmax(tail_inside))

    lj_x = log_jac_sums(f, x, i0)[-1] if i0 else 0.0
    lj_y = np.array([log_jac_sums(f, y, i0)[-1] if i0 else 0.0 for y in Lam])
    delta_i0 = float(np.abs(lj_x - lj_y).max())
    n_min = i0 + int(math.floor((N + delta_i0) / jac_gap)) + 1
    n = max(n_min, n or 0)
    if n + extra > horizon:
        raise ValueError("iterate count too large for the orbit horizon")

    centers = x_orb[i0:n]
    cn = np.linalg.norm(centers, axis=1)
    # separation of x's graft centres from every Lambda iterate, relative to scale
    rel = np.empty(len(centers))
    d_lam = np.inf
    for k, c in enumerate(centers):
        dist = np.linalg.norm(y_orb[: n + extra] - c, axis=2).min()
        d_lam = min(d_lam, dist)
        rel[k] = dist / max(cn[k], 1e-300)
    if rel.min() < separation:
        raise OrbitsNotSeparated(f"orbit of x meets the orbit of Lambda (relative gap {rel.min():.2e})")
    others = np.delete(x_orb[: n + extra], np.arange(i0, n), axis=0)
    d_self = _min_pair_distance(centers)
    if len(others):
        d_self = min(d_self, float(np.linalg.norm(others[:, None, :] - centers[None], axis=2).min()))
    limit = min(d_self, d_lam) / 3.0
    limit = min(limit, r_lin - cn.max())
    eps = limit if eps is None else min(eps, limit)
    if not eps > 0:
        raise OrbitsNotSeparated("no room for disjoint graft supports")

    gm = _grafted_map(f, centers, eps, pert)
    g = Contraction(d, gm, None)
    g.check()
    gx = log_jac_sums(g, x, n)
    min_delta = np.inf
    for y in Lam:
        min_delta = min(min_delta, abs(gx[-1] - log_jac_sums(g, y, n)[-1]))
    return GraftedContraction(f, centers, i0, n, eps, g1, jac_gap, g, float(min_delta),
                              {"delta_i0": delta_i0, "n_min": n_min, "pert": pert, "N": N})


# ------------------------------------------------------------- stable charts


def _invert(psi, target, guess, tol=1e-13, max_iter=60):
    z = np.array(guess, dtype=float)
    for _ in range(max_iter):
        r = psi(z) - target
        if np.linalg.norm(r, np.inf) <= tol:
            return z
        D = psi.jacobian(z)
        try:
            z = z - np.linalg.solve(D, r)
        except np.linalg.LinAlgError as exc:
            raise ChartInversionFailure(str(exc)) from exc
        if not np.all(np.isfinite(z)):
            break
    raise ChartInversionFailure(f"chart inversion did not converge at {target}")


@dataclass(frozen=True)
class StableChart:
    psi: SampledMap
    graph: SampledMap
    v: np.ndarray
    period: int
    stable_dim: int

    @classmethod
    def for_point(cls, psi, graph, p, period, stable_dim):
        z = _invert(psi, np.asarray(p, float), np.asarray(p, float))
        return cls(psi, graph, z[:stable_dim], period, stable_dim)

    def lift(self, x):
        """``(x + v, g(x + v))`` in chart coordinates."""
        s = np.asarray(x, float) + self.v
        return np.concatenate([s, np.atleast_1d(self.graph(s))])


def stable_chart_projection(chart, f_tau, probes=None, graph_tol=1e-6):
    """The contraction induced on the stable coordinates, with chain-rule Jacobian."""
    ds = chart.stable_dim
    psi, graph = chart.psi, chart.graph

    def point(x):
        q = chart.lift(x)
        y = f_tau(psi(q))
        z = _invert(psi, y, q)
        return q, y, z

    def ev(x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, ds)
        out = np.array([point(p)[2][:ds] - chart.v for p in flat])
        return out.reshape(x.shape)

    def jac(x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, ds)
        out = []
        for p in flat:
            q, y, z = point(p)
            lift = np.vstack([np.eye(ds), np.atleast_2d(graph.jacobian(q[:ds]))])
            M = np.linalg.solve(psi.jacobian(z), f_tau.jacobian(psi(q)) @ psi.jacobian(q) @ lift)
            out.append(M[:ds])
        return np.array(out).reshape(x.shape[:-1] + (ds, ds))

    theta = SampledMap(ds, ds, ev, jac, Box.cube(ds, 1.0), "theta")
    if probes is None:
        probes = np.vstack([sphere_mesh(ds, 64), 0.5 * sphere_mesh(ds, 64), np.zeros((1, ds))])
    worst = 0.0
    for p in probes:
        _, _, z = point(p)
        worst = max(worst, float(np.linalg.norm(np.atleast_1d(graph(z[:ds])) - z[ds:], np.inf)))
    if worst > graph_tol:
        raise GraphNotInvariant(f"graph is not invariant: residual {worst:.3e}", worst)
    if np.linalg.norm(theta(np.zeros(ds))) > 1e-10:
        raise NotAContraction("theta does not fix 0")
    return Contraction(ds, theta).check(boundary_count=64)
