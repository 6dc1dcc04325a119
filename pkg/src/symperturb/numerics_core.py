"""Differentiable maps on chart boxes, finite differences, quadrature, bumps.

Conventions used throughout the package: a point is a 1-D float array; every
map rule is vectorised over leading axes, so ``eval`` takes ``(..., dim_in)``
and returns ``(..., dim_out)`` and ``jac`` returns ``(..., dim_out, dim_in)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import brentq

from .errors import NoFeasiblePlateau, SingularJacobian, StencilOutsideDomain

FD_RELATIVE_STEP = 1e-5
DEFAULT_DENSITY = 32


@dataclass(frozen=True)
class Box:
    """Axis-aligned box; infinite bounds are allowed."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ValueError(f"invalid box bounds {lo} {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, dim, half_width=1.0, center=None):
        c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
        return cls(c - half_width, c + half_width)

    @classmethod
    def everywhere(cls, dim):
        return cls(np.full(dim, -np.inf), np.full(dim, np.inf))

    @property
    def dim(self):
        return self.lo.size

    @property
    def center(self):
        return 0.5 * (self.lo + self.hi)

    @property
    def half_widths(self):
        return 0.5 * (self.hi - self.lo)

    @property
    def scale(self):
        w = self.hi - self.lo
        w = w[np.isfinite(w)]
        return float(w.max()) if w.size else 1.0

    def contains(self, x, atol=0.0):
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lo - atol) & (x <= self.hi + atol), axis=-1)

    def inflate(self, pad):
        return Box(self.lo - pad, self.hi + pad)

    def sample(self, rng, count):
        return rng.uniform(self.lo, self.hi, size=(count, self.dim))

    def shell(self, rng, count, pad=0.0):
        """Random points on the boundary of the box inflated by ``pad``."""
        lo, hi = self.lo - pad, self.hi + pad
        pts = rng.uniform(lo, hi, size=(count, self.dim))
        axis = rng.integers(0, self.dim, size=count)
        side = rng.integers(0, 2, size=count)
        pts[np.arange(count), axis] = np.where(side == 0, lo[axis], hi[axis])
        return pts


@dataclass(frozen=True)
class SampledMap:
    """A differentiable map of a box, given by vectorised rules."""

    dim_in: int
    dim_out: int
    eval: Callable[[np.ndarray], np.ndarray]
    jac: Optional[Callable[[np.ndarray], np.ndarray]] = None
    domain: Box = None
    name: str = ""

    def __post_init__(self):
        if self.domain is None:
            object.__setattr__(self, "domain", Box.everywhere(self.dim_in))
        if self.domain.dim != self.dim_in:
            raise ValueError("domain dimension does not match dim_in")

    def __call__(self, x):
        return np.asarray(self.eval(np.asarray(x, dtype=float)), dtype=float)

    def jacobian(self, x, step=None):
        """Analytic Jacobian when available, central differences otherwise."""
        if self.jac is not None:
            return np.asarray(self.jac(np.asarray(x, dtype=float)), dtype=float)
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return fd_jacobian(self, x, step)
        flat = x.reshape(-1, self.dim_in)
        out = np.stack([fd_jacobian(self, p, step) for p in flat])
        return out.reshape(x.shape[:-1] + (self.dim_out, self.dim_in))

    def without_jac(self):
        return SampledMap(self.dim_in, self.dim_out, self.eval, None, self.domain, self.name)


def identity_map(dim, domain=None):
    def ev(x):
        return np.array(x, dtype=float, copy=True)

    def jac(x):
        x = np.asarray(x)
        return np.broadcast_to(np.eye(dim), x.shape[:-1] + (dim, dim)).copy()

    return SampledMap(dim, dim, ev, jac, domain, "identity")


def linear_map(matrix, domain=None):
    A = np.atleast_2d(np.asarray(matrix, dtype=float))

    def ev(x):
        return np.asarray(x) @ A.T

    def jac(x):
        x = np.asarray(x)
        return np.broadcast_to(A, x.shape[:-1] + A.shape).copy()

    return SampledMap(A.shape[1], A.shape[0], ev, jac, domain, "linear")


def compose(f, g):
    """The map ``f o g`` with chain-rule Jacobian (analytic iff both are)."""
    if g.dim_out != f.dim_in:
        raise ValueError("dimension mismatch in composition")

    def ev(x):
        return f(g(x))

    jac = None
    if f.jac is not None and g.jac is not None:
        def jac(x):
            return f.jacobian(g(x)) @ g.jacobian(x)

    return SampledMap(g.dim_in, f.dim_out, ev, jac, g.domain, f"{f.name}o{g.name}")


def default_step(m):
    return FD_RELATIVE_STEP * m.domain.scale


def fd_jacobian(m, x, step=None):
    """Central-difference Jacobian of ``m`` at the single point ``x``."""
    x = np.asarray(x, dtype=float)
    h = default_step(m) if step is None else float(step)
    stencil = x + h * np.vstack([np.eye(m.dim_in), -np.eye(m.dim_in)])
    if not np.all(m.domain.contains(stencil)):
        raise StencilOutsideDomain(f"stencil of width {h:g} around {x} leaves {m.domain}")
    vals = m(stencil)
    return ((vals[: m.dim_in] - vals[m.dim_in:]) / (2.0 * h)).T


def log_jacobian(m, x, step=None):
    """``log |det D_x m|``; square maps only."""
    if m.dim_in != m.dim_out:
        raise ValueError("log_jacobian is only defined for square maps")
    sign, logdet = np.linalg.slogdet(m.jacobian(x, step))
    if np.any(sign == 0) or np.any(logdet < np.log(1e-300)):
        raise SingularJacobian(f"Jacobian determinant vanishes at {x}")
    return logdet if np.ndim(logdet) else float(logdet)


def c1_distance(f, g, probes, step=None):
    """``sup |f - g| + sup ||Df - Dg||`` over probe points (spectral norm)."""
    probes = np.atleast_2d(probes)
    dv = np.linalg.norm(f(probes) - g(probes), axis=-1).max()
    dj = np.linalg.norm(f.jacobian(probes, step) - g.jacobian(probes, step), ord=2, axis=(-2, -1)).max()
    return float(dv + dj)


# ---------------------------------------------------------------- quadrature


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    order: int
    breakpoints: tuple = field(default=(), compare=False)

    @property
    def interval(self):
        return self.breakpoints[0], self.breakpoints[-1]

    def integrate(self, values):
        """Contract the last axis of ``values`` against the weights."""
        return np.asarray(values) @ self.weights

    def doubled(self):
        return composite_gauss(self.breakpoints, 2 * _nodes_per_panel(self))


def _nodes_per_panel(rule):
    return rule.nodes.size // (len(rule.breakpoints) - 1)


def composite_gauss(breakpoints, nodes_per_panel):
    """Gauss-Legendre rule with ``nodes_per_panel`` nodes on every panel."""
    b = np.asarray(breakpoints, dtype=float)
    x, w = leggauss(int(nodes_per_panel))
    mid = 0.5 * (b[1:] + b[:-1])
    half = 0.5 * (b[1:] - b[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return QuadratureRule(nodes, weights, 2 * int(nodes_per_panel) - 1, tuple(b))


def gauss_rule(a, b, density=DEFAULT_DENSITY, breakpoints=(), panels=None):
    """Composite Gauss-Legendre rule on [a, b] aligned with ``breakpoints``.

    Without explicit ``panels`` the interval is split at the breakpoints and
    the panel node count is chosen so the total is about ``density`` nodes per
    unit length (at least 4 per panel).
    """
    inner = sorted(p for p in breakpoints if a < p < b)
    brk = [a, *inner, b]
    if panels is not None:
        brk = np.unique(np.concatenate([np.linspace(a, b, panels + 1), inner]))
    brk = np.asarray(brk, dtype=float)
    per = max(4, int(np.ceil(density * (b - a) / (brk.size - 1))))
    return composite_gauss(brk, per)


def tensor_rule(rule, dim):
    """Tensor-product nodes ``(N, dim)`` and weights ``(N,)``."""
    grids = np.meshgrid(*([rule.nodes] * dim), indexing="ij")
    wgrids = np.meshgrid(*([rule.weights] * dim), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return nodes, weights


def path_integral_1form(alpha, a, b, rule=None):
    """Integral of the 1-form ``alpha`` along the segment from a to b.

    ``alpha`` maps points ``(N, n)`` to covectors ``(N, n)``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    rule = rule or gauss_rule(0.0, 1.0)
    pts = a[None, :] + rule.nodes[:, None] * (b - a)[None, :]
    return float(rule.weights @ (np.asarray(alpha(pts)) @ (b - a)))


def polyline_integral(alpha, vertices, rule=None):
    verts = np.atleast_2d(np.asarray(vertices, dtype=float))
    return sum(path_integral_1form(alpha, p, q, rule) for p, q in zip(verts[:-1], verts[1:]))


# --------------------------------------------------------------------- bumps


def smoothstep(t):
    """Quintic smoothstep, clamped to [0, 1]; C2 with flat ends."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


def smoothstep_d1(t):
    t = np.clip(t, 0.0, 1.0)
    return 30.0 * t * t * (1.0 - t) ** 2


def smoothstep_d2(t):
    t = np.clip(t, 0.0, 1.0)
    return 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t)


@dataclass(frozen=True)
class BumpProfile:
    """Even profile: 1 on ``|r| <= plateau_halfwidth``, quintic ramp down to 0
    at ``ramp_end``, 0 beyond.

    For ``bell_1d``/``bell_nd`` the ramp ends strictly inside (-1, 1); for
    ``radial_cutoff`` the profile is evaluated at ``||x||``.
    """

    kind: str
    plateau_halfwidth: float
    ramp_end: float
    support_radius: float = 1.0

    def __post_init__(self):
        if self.kind not in ("bell_1d", "bell_nd", "radial_cutoff"):
            raise ValueError(f"unknown bump kind {self.kind!r}")
        if not 0.0 <= self.plateau_halfwidth < self.ramp_end <= self.support_radius:
            raise ValueError("need 0 <= plateau < ramp_end <= support_radius")

    @property
    def _width(self):
        return self.ramp_end - self.plateau_halfwidth

    def _t(self, r):
        return (np.abs(r) - self.plateau_halfwidth) / self._width

    def __call__(self, r):
        return 1.0 - smoothstep(self._t(r))

    def derivative(self, r, order=1):
        r = np.asarray(r, dtype=float)
        if order == 0:
            return self(r)
        if order == 1:
            return -np.sign(r) * smoothstep_d1(self._t(r)) / self._width
        if order == 2:
            return -smoothstep_d2(self._t(r)) / self._width ** 2
        raise ValueError("derivatives are provided up to order 2")

    def breakpoints(self):
        a, b = self.plateau_halfwidth, self.ramp_end
        return (-b, -a, a, b) if a > 0 else (-b, 0.0, b)

    def radial_jet(self, x):
        """Value, gradient and Hessian of ``x -> profile(||x||)``, vectorised."""
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        val = self(r)
        d1 = self.derivative(r, 1)
        d2 = self.derivative(r, 2)
        dim = x.shape[-1]
        safe = np.where(r > 0, r, 1.0)
        e = x / safe[..., None]
        grad = d1[..., None] * e
        # d1 vanishes near r = 0 because of the plateau (requires plateau > 0)
        over_r = np.where(r > 0, d1 / safe, 0.0)
        eye = np.eye(dim)
        ee = e[..., :, None] * e[..., None, :]
        hess = d2[..., None, None] * ee + over_r[..., None, None] * (eye - ee)
        return val, grad, hess


def radial_cutoff(inner, outer):
    return BumpProfile("radial_cutoff", float(inner), float(outer), float(outer))


def _bell_integral(a, b, density):
    prof = BumpProfile("bell_1d", a, b)
    rule = gauss_rule(-1.0, 1.0, density=density, breakpoints=prof.breakpoints())
    return rule.integrate(prof(rule.nodes))


def make_bell(plateau_halfwidth_hint=0.25, density=DEFAULT_DENSITY):
    """Bell kernel with unit integral, flat on a plateau around 0.

    The ramp ends at ``1 - hint`` and the plateau half-width is root-found so
    that the composite Gauss integral equals 1.
    """
    hint = float(plateau_halfwidth_hint)
    if not 0.0 < hint < 0.5:
        raise ValueError("plateau hint must lie in (0, 0.5)")
    edge = 1.0 - hint
    lo, hi = 1e-9, edge - 1e-9
    g = lambda a: _bell_integral(a, edge, density) - 1.0
    if g(lo) * g(hi) > 0:
        raise NoFeasiblePlateau(f"integral cannot reach 1 with ramp end {edge}")
    a = brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    bell = BumpProfile("bell_1d", a, edge)
    if abs(_bell_integral(a, edge, 2 * density) - 1.0) > 1e-10:
        raise NoFeasiblePlateau("bell integral not certified at doubled node count")
    return bell


def bell_nd_jet(bell, w):
    """``Phi_n(w)`` and its gradient for nodes ``w`` of shape ``(N, n)``."""
    w = np.atleast_2d(w)
    vals = bell(w)
    ders = bell.derivative(w, 1)
    phi = np.prod(vals, axis=-1)
    n = w.shape[-1]
    grad = np.empty_like(w)
    for k in range(n):
        others = np.prod(np.delete(vals, k, axis=-1), axis=-1) if n > 1 else 1.0
        grad[:, k] = ders[:, k] * others
    return phi, grad
