"""Power matching for commuting maps and the eigenvalue obstruction for orbits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import AmbiguousMatch, NewtonDivergence

MATCH_TOL = 1e-6
LIPSCHITZ_MARGIN = 2


def _inverse_point(f, y, tol=1e-14, max_iter=80):
    """Solve ``f(x) = y`` by Newton from ``x = y`` (f a global diffeomorphism)."""
    x = np.array(y, dtype=float)
    scale = max(1.0, float(np.linalg.norm(y)))
    for _ in range(max_iter):
        r = f(x) - y
        if np.linalg.norm(r, np.inf) <= tol * scale:
            return x
        x = x - np.linalg.solve(np.atleast_2d(f.jacobian(x)), r)
    raise NewtonDivergence(f"could not invert f at {y}")


def power(f, i, x):
    """``f^i(x)`` for any integer i; negative powers use Newton inversion."""
    m = getattr(f, "map", f)
    x = np.array(x, dtype=float)
    if i >= 0:
        for _ in range(i):
            x = m(x)
        return x
    for _ in range(-i):
        x = np.atleast_1d(_inverse_point(m, x))
    return x


def _inverse_points(m, Y, tol=1e-14, max_iter=80):
    """Batched Newton for ``f(X) = Y`` started at ``X = Y``."""
    X = Y.copy()
    scale = np.maximum(1.0, np.linalg.norm(Y, axis=1))
    for _ in range(max_iter):
        R = m(X) - Y
        if np.all(np.linalg.norm(R, np.inf, axis=1) <= tol * scale):
            return X
        J = np.asarray(m.jacobian(X)).reshape(len(X), Y.shape[1], Y.shape[1])
        X = X - np.linalg.solve(J, R[..., None])[..., 0]
    raise NewtonDivergence("could not invert f on the probe set")


def power_points(f, i, pts):
    """``f^i`` on an array of points; negative powers by batched Newton."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if i >= 0:
        return power(f, i, pts)
    m = getattr(f, "map", f)
    for _ in range(-i):
        pts = _inverse_points(m, pts)
    return pts


def check_commutation(f, g, probes):
    """``sup |f(g(x)) - g(f(x))|`` over probes."""
    probes = np.atleast_2d(probes)
    return float(np.linalg.norm(f(g(probes)) - g(f(probes)), axis=-1).max())


@dataclass
class CommutingPair:
    f: object
    g: object
    probes: np.ndarray
    commutation_residual: float = field(init=False)

    def __post_init__(self):
        self.commutation_residual = check_commutation(self.f, self.g, self.probes)


@dataclass
class ComponentMatch:
    component: int
    power: Optional[int]
    residual: float
    size: int


@dataclass
class PowerMatchReport:
    components: list
    lipschitz_bound_used: float
    i_range: tuple
    commutation_residual: float
    probe_powers: np.ndarray = field(repr=False, default=None)
    probe_residuals: np.ndarray = field(repr=False, default=None)

    def powers(self):
        return [c.power for c in self.components]

    def rows(self):
        return [[c.component, "NONE" if c.power is None else c.power, c.residual, c.size]
                for c in self.components]


def weakest_rate(f, d):
    """Largest eigenvalue modulus of D0 f (the slowest contraction)."""
    D0 = np.atleast_2d(f.jacobian(np.zeros(d)))
    return float(np.abs(np.linalg.eigvals(D0)).max())


def lipschitz_estimates(g, pts, max_pairs=20000, rng=None):
    """Max and min of ``|g(x) - g(y)| / |x - y|`` over probe pairs."""
    pts = np.atleast_2d(pts)
    rng = np.random.default_rng(0) if rng is None else rng
    P = len(pts)
    if P * (P - 1) // 2 <= max_pairs:
        a, b = np.triu_indices(P, 1)
    else:
        a = rng.integers(0, P, max_pairs)
        b = rng.integers(0, P, max_pairs)
        keep = a != b
        a, b = a[keep], b[keep]
    gp = np.atleast_2d(g(pts))
    num = np.linalg.norm(gp[a] - gp[b], axis=1)
    den = np.linalg.norm(pts[a] - pts[b], axis=1)
    ratio = num / den
    return float(ratio.max()), float(ratio.min())


def lipschitz_power_bound(f, g, pts, margin=LIPSCHITZ_MARGIN):
    """``|i|`` bound for g = f^i from the expansion and compression of g."""
    d = np.atleast_2d(pts).shape[1]
    lam = weakest_rate(f, d)
    lip, colip = lipschitz_estimates(g, pts)
    k = abs(math.log(lam))
    up = max(0.0, math.log(lip)) / k
    down = max(0.0, -math.log(colip)) / k if colip > 0 else float("inf")
    return int(math.ceil(max(up, down))) + margin, lip


def mesh_components(pts, spacing):
    """Connected components of probes joined when closer than the mesh spacing."""
    tree = cKDTree(pts)
    pairs = np.array(sorted(tree.query_pairs(spacing * (1 + 1e-9))), dtype=int).reshape(-1, 2)
    P = len(pts)
    adj = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(P, P))
    return connected_components(adj, directed=False)


def match_power(pair, region, spacing, i_range=None, tol=MATCH_TOL, ambiguity=None):
    """Per-component identification of g with a power of f on a probe mesh."""
    f, g = pair.f, pair.g
    pts = np.atleast_2d(region)
    if i_range is None:
        bound, lip = lipschitz_power_bound(f, g, pts)
        i_range = (-bound, bound)
    else:
        lip = lipschitz_estimates(g, pts)[0]
    lo, hi = i_range
    gx = np.atleast_2d(g(pts))
    powers = list(range(lo, hi + 1))
    res = np.empty((len(powers), len(pts)))
    for k, i in enumerate(powers):
        try:
            res[k] = np.linalg.norm(power_points(f, i, pts) - gx, axis=1)
        except (NewtonDivergence, np.linalg.LinAlgError, FloatingPointError):
            res[k] = np.inf
    order = np.argsort(res, axis=0)
    best = order[0]
    best_res = res[best, np.arange(len(pts))]
    second = res[order[1], np.arange(len(pts))] if len(powers) > 1 else np.full(len(pts), np.inf)
    amb = tol if ambiguity is None else ambiguity
    clash = (best_res <= tol) & (second <= amb)
    if np.any(clash):
        p = pts[np.argmax(clash)]
        raise AmbiguousMatch(f"two powers of f match g within {amb:g} at {p}")
    probe_powers = np.array(powers)[best]
    ncomp, labels = mesh_components(pts, spacing)
    comps = []
    for c in range(ncomp):
        mask = labels == c
        worst = float(best_res[mask].max())
        vals = np.unique(probe_powers[mask])
        pw = int(vals[0]) if (len(vals) == 1 and worst <= tol) else None
        comps.append(ComponentMatch(c, pw, worst, int(mask.sum())))
    comps.sort(key=lambda cm: tuple(pts[labels == cm.component].min(axis=0)))
    for k, cm in enumerate(comps):
        cm.component = k
    return PowerMatchReport(comps, lip, (lo, hi), pair.commutation_residual, probe_powers, best_res)


def orbit_distance(f, x, y, i_range):
    """Distance from y to the discrete orbit ``{f^i(x)}`` for i in the range."""
    lo, hi = i_range
    return min(float(np.linalg.norm(power(f, i, x) - y)) for i in range(lo, hi + 1))


# ------------------------------------------------------- eigenvalue obstruction


def _same_multiset(a, b, tol):
    a, b = np.asarray(a, complex), np.asarray(b, complex)
    if a.shape != b.shape:
        return False
    cost = np.abs(a[:, None] - b[None, :])
    r, c = linear_sum_assignment(cost)
    return bool(cost[r, c].max() <= tol)


@dataclass
class PairingReport:
    groups: list                  # list of sorted lists of orbit ids
    forced_fixed: list            # orbit ids alone in their class
    permutable: list              # groups with at least two orbits

    def as_dict(self):
        return {"groups": self.groups, "forced_fixed": self.forced_fixed, "permutable": self.permutable}


def eigenvalue_obstruction(orbits, tol=1e-8):
    """Group periodic orbits by (period, eigenvalue multiset).

    ``orbits`` is an iterable of ``(orbit_id, period, eigenvalues)``. A
    Lipschitz commuting map can only send an orbit to one in its own group.
    """
    items = sorted(((oid, int(tau), np.atleast_1d(ev)) for oid, tau, ev in orbits), key=lambda t: str(t[0]))
    parent = list(range(len(items)))

    def find(k):
        while parent[k] != k:
            parent[k] = parent[parent[k]]
            k = parent[k]
        return k

    for a in range(len(items)):
        for b in range(a + 1, len(items)):
            if items[a][1] == items[b][1] and _same_multiset(items[a][2], items[b][2], tol):
                parent[find(a)] = find(b)
    buckets = {}
    for k, it in enumerate(items):
        buckets.setdefault(find(k), []).append(it[0])
    groups = sorted((sorted(v, key=str) for v in buckets.values()), key=lambda g: str(g[0]))
    forced = sorted((g[0] for g in groups if len(g) == 1), key=str)
    perm = [g for g in groups if len(g) > 1]
    return PairingReport(groups, forced, perm)
