"""Experiment pipelines behind the command line.

Every experiment takes a validated parameter dict and a seed and returns an
``Outcome``: certificates plus named data streams (header row + rows).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .centralizer import CommutingPair, eigenvalue_obstruction, match_power, power, power_points
from .distortion_lab import (
    Contraction,
    ball_mesh,
    distortion_series,
    log_jac_sums,
    perturb_orbit,
)
from .errors import NewtonDivergence
from .extension import extend_symplectic, extend_volume, lagrangian_certificate
from .families import (
    bump_diffeo,
    hyperbolic_diagonal,
    random_contraction,
    random_symplectic_matrix,
    random_trig_genfn,
    tanh_contraction_map,
)
from .generating_function import Certificate, generate_map
from .interpolation import default_support_box
from .numerics_core import Box, SampledMap, linear_map


@dataclass
class Outcome:
    certificates: list = field(default_factory=list)
    streams: dict = field(default_factory=dict)       # name -> (header, rows)
    summary: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c.passed for c in self.certificates)


def _upper(name, value, threshold):
    return Certificate(name, float(value), float(threshold))


def _flag(name, ok):
    """Boolean certificate encoded as residual 0 (pass) or 1 (fail) against threshold 0."""
    return Certificate(name, 0.0 if ok else 1.0, 0.0)


# ------------------------------------------------------------------ extension


def run_extend_symplectic(p, seed):
    n = p["n"]
    psi = bump_diffeo(n, p["amplitude"], bump_radius=p["bump_radius"])
    U = default_support_box(psi, p["u_margin"], p["eta_margin"])
    res = extend_symplectic(psi, U, eps=p["eps"], probes=p["probes"], seed=seed)
    certs = [Certificate(c.name, c.value, p["tolerances"].get(c.name, c.threshold)) for c in res.certificates]
    pts, err = res.meta["disk_points"], res.meta["disk_residuals"]
    header = ["index"] + [f"u{i + 1}" for i in range(n)] + ["residual"]
    rows = [[k, *pt, e] for k, (pt, e) in enumerate(zip(pts, err))]
    return Outcome(certs, {"disk_residuals": (header, rows)}, res.as_dict())


def volume_box(psi, m, u_margin=0.6, eta_margin=0.6, z_half_width=1.0):
    b = default_support_box(psi, u_margin, eta_margin)
    extra = m - 2 * psi.n
    return Box(np.r_[b.lo, np.full(extra, -z_half_width)], np.r_[b.hi, np.full(extra, z_half_width)])


def run_extend_volume(p, seed):
    k, m = p["k"], p["m"]
    psi = bump_diffeo(k, p["amplitude"], bump_radius=p["bump_radius"])
    U = volume_box(psi, m, p["u_margin"], p["eta_margin"], p["z_half_width"])
    res = extend_volume(psi, m, U, eps=p["eps"], probes=p["probes"], seed=seed)
    certs = [Certificate(c.name, c.value, p["tolerances"].get(c.name, c.threshold)) for c in res.certificates]
    header = ["index", "partial_rho", "det_minus_one"]
    rows = [[i, int(flag), dev] for i, (flag, dev) in
            enumerate(zip(res.meta["partial_mask"], res.meta["det_deviation"]))]
    return Outcome(certs, {"det_residuals": (header, rows)}, res.as_dict())


# ----------------------------------------------------------------- distortion


def measured_slope(series, i0, window):
    """Least-squares slope of ``Delta_{i0+k}`` against k over the window."""
    k = np.arange(window[0], window[1] + 1)
    return float(np.polyfit(k, series[i0 + k], 1)[0]), series[i0 + k] / k


def same_orbit_check(f, x, k, n_max, sup_mesh):
    """``sup_{n <= n_max} Delta_n(x, f^k x)`` and the bound ``2k sup |log Jac f|``."""
    y = power(f, k, x)
    ser = distortion_series(f, x, y, n_max)
    orb = f.orbit(x, n_max + k)
    pts = np.vstack([sup_mesh, orb])
    sup_lj = float(np.abs(f.log_jac(pts)).max())
    return float(ser.max()), 2 * k * sup_lj


def run_distortion(p, seed):
    rng = np.random.default_rng(seed)
    d = p["d"]
    f = Contraction(d, linear_map(p["rate"] * np.eye(d), Box.cube(d, 1.0)), linear_radius=1.0)
    x = np.asarray(p["x"], dtype=float).reshape(d)
    lam = rng.uniform(p["lambda_lo"], p["lambda_hi"], size=(p["lambda_count"], d))
    gap = p["jac_gap"]
    w_lo, w_hi = p["window"]

    # minimal grafting for the N-threshold, long grafting for the slope
    G = perturb_orbit(f, x, lam, p["N"], gap)
    n_pred = G.n
    G_long = perturb_orbit(f, x, lam, p["N"], gap, n=G.i0 + w_hi)
    i0 = G.i0
    g = G_long.contraction

    series = np.array([distortion_series(g, x, y, n_pred) for y in lam])
    crossed = bool(np.all(series[:, n_pred] > p["N"]))
    slopes = []
    long_series = []
    for y in lam:
        s = distortion_series(g, x, y, i0 + w_hi)
        long_series.append(s)
        slopes.append(measured_slope(s, i0, (w_lo, w_hi))[1])
    ratios = np.concatenate(slopes) / gap
    slope_err = float(np.abs(ratios - 1.0).max())
    lower = min(float((s[i0:] - np.arange(len(s) - i0) * gap).min()) for s in long_series)
    certs = [
        _upper("slope_relative_error", slope_err, p["slope_tol"]),
        _flag("delta_exceeds_N_at_predicted_n", crossed),
        _upper("growth_lower_bound_violation", max(0.0, -(lower + G.meta["delta_i0"])), 1e-9),
    ]

    so_rows = []
    worst = 0.0
    for j in range(p["same_orbit_contractions"]):
        dd = 1 + j % 2
        fj = random_contraction(rng, dd)
        xj = rng.uniform(-0.8, 0.8, size=dd)
        mesh = ball_mesh(dd, 21 if dd == 1 else 15)
        for kk in range(1, p["same_orbit_k"] + 1):
            sup_delta, bound = same_orbit_check(fj, xj, kk, p["same_orbit_n"], mesh)
            worst = max(worst, sup_delta / bound - 1.0)
            so_rows.append([j, dd, kk, sup_delta, bound])
    if so_rows:
        certs.append(_upper("same_orbit_excess", max(worst, 0.0), 1e-12))

    header = ["n"] + [f"x{i + 1}" for i in range(d)] + [f"y{i + 1}" for i in range(d)] + ["delta"]
    rows = []
    for y, s in zip(lam, long_series):
        for n, val in enumerate(s):
            rows.append([n, *x, *y, val])
    summary = {"i0": i0, "predicted_n": n_pred, "predicted_offset": n_pred - i0,
               "measured_slope_mean": float(np.mean(ratios) * gap), "certified_slope": gap,
               "eps": G.eps, "delta_i0": G.meta["delta_i0"]}
    return Outcome(certs, {
        "distortion": (header, rows),
        "same_orbit": (["contraction", "d", "k", "sup_delta", "bound"], so_rows),
    }, summary)


# ----------------------------------------------------------------- centralizer


def _power_map(f, i, d):
    def ev(x):
        x = np.asarray(x, dtype=float)
        return power_points(f, i, x.reshape(-1, d)).reshape(x.shape)

    return SampledMap(d, d, ev, None, name=f"f^{i}")


def glued_power_example(lo_power=3, hi_power=1):
    """``g = f^hi`` on x > 0 and ``f^lo`` on x < 0 for an odd increasing 1-D contraction."""
    f = Contraction(1, tanh_contraction_map([[0.45]], 0.1, [[1.0]]))

    def ev(x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, power(f, hi_power, x), power(f, lo_power, x))

    return f, SampledMap(1, 1, ev, None, name="glued")


def run_centralizer(p, seed):
    rng = np.random.default_rng(seed)
    lo, hi = p["powers"]
    rows = []
    certs = []
    worst_planted = 0.0
    misses = 0
    for j in range(p["contractions"]):
        d = 1 + j % 2
        f = random_contraction(rng, d)
        per = p["mesh_per_axis"] if d == 1 else max(p["mesh_per_axis"] * 3 // 4, 9)
        pts = ball_mesh(d, per, p["outer_radius"], p["inner_radius"])
        spacing = 2 * p["outer_radius"] / (per - 1)
        for i in range(lo, hi + 1):
            rep = match_power(CommutingPair(f, _power_map(f, i, d), pts), pts, spacing, tol=p["match_tol"])
            for c in rep.components:
                rows.append([j, d, i, c.component, "NONE" if c.power is None else c.power, c.residual, c.size])
                worst_planted = max(worst_planted, c.residual)
                misses += c.power != i
    certs.append(_flag("planted_powers_recovered", misses == 0))
    certs.append(_upper("planted_residual", worst_planted, p["exact_tol"]))

    f, g = glued_power_example()
    pts = ball_mesh(1, 2 * p["mesh_per_axis"] - 1, p["outer_radius"], p["inner_radius"])
    spacing = 2 * p["outer_radius"] / (2 * p["mesh_per_axis"] - 2)
    rep = match_power(CommutingPair(f, g, pts), pts, spacing, tol=p["match_tol"])
    glued = rep.powers()
    for c in rep.components:
        rows.append(["glued", 1, "3|1", c.component, "NONE" if c.power is None else c.power, c.residual, c.size])
    certs.append(_flag("glued_components_distinct", glued == [3, 1]))

    obstruction = [
        eigenvalue_obstruction([("p", 1, [0.5]), ("q", 1, [1 / 3])]).forced_fixed == ["p", "q"],
        eigenvalue_obstruction([("p", 1, [0.5]), ("q", 1, [0.5])]).permutable == [["p", "q"]],
        eigenvalue_obstruction([("p", 2, [0.5, 2.0]), ("q", 1, [0.5, 2.0])]).forced_fixed == ["p", "q"],
    ]
    certs.append(_flag("eigenvalue_obstruction", all(obstruction)))
    header = ["contraction", "d", "planted", "component", "matched", "residual", "size"]
    return Outcome(certs, {"power_matches": (header, rows)}, {"glued_powers": str(glued)})


# ------------------------------------------------------------------ lagrangian


def random_hyperbolic_symplectic(rng, n, scale=0.4, genfn_amplitude=0.05):
    """``P diag(lam, 1/lam) P^-1`` with P a product of generators and a generated-map Jacobian."""
    D, lam = hyperbolic_diagonal(rng, n)
    P = random_symplectic_matrix(rng, n, scale)
    S = random_trig_genfn(rng, n, genfn_amplitude)
    h = generate_map(S)
    z = rng.uniform(-0.5, 0.5, size=2 * n)
    P = P @ h.map.jacobian(z)
    return P @ D @ np.linalg.inv(P), lam


def run_lagrangian(p, seed):
    rng = np.random.default_rng(seed)
    rows = []
    worst = 0.0
    dims_ok = True
    for j in range(p["count"]):
        n = p["n_values"][j % len(p["n_values"])]
        M, _ = random_hyperbolic_symplectic(rng, n)
        cert = lagrangian_certificate(M, tol=p["symplectic_tol"])
        ds, du = cert.dims
        dims_ok &= (ds, du) == (n, n)
        worst = max(worst, cert.stable_residual, cert.unstable_residual)
        rows.append([j, n, ds, du, cert.stable_residual, cert.unstable_residual])
    certs = [_flag("stable_dimension_equals_n", dims_ok), _upper("omega_residual", worst, p["omega_tol"])]
    header = ["index", "n", "stable_dim", "unstable_dim", "stable_residual", "unstable_residual"]
    return Outcome(certs, {"lagrangian": (header, rows)}, {"matrices": p["count"]})


RUNNERS = {
    "extend-symplectic": run_extend_symplectic,
    "extend-volume": run_extend_volume,
    "distortion": run_distortion,
    "centralizer-check": run_centralizer,
    "lagrangian": run_lagrangian,
}

_TOL = {"symplectic_residual": 1e-7, "on_disk_residual": 1e-6, "det_residual": 1e-6,
        "jacobian_consistency": 1e-6}

DEFAULTS = {
    "extend-symplectic": {
        "n": 1, "amplitude": 0.01, "bump_radius": 0.6, "u_margin": 0.6, "eta_margin": 0.6,
        "eps": 0.5, "probes": 1000, "tolerances": {k: _TOL[k] for k in
                                                 ("symplectic_residual", "on_disk_residual", "jacobian_consistency")},
    },
    "extend-volume": {
        "k": 1, "m": 3, "amplitude": 0.01, "bump_radius": 0.6, "u_margin": 0.6, "eta_margin": 0.6,
        "z_half_width": 1.0, "eps": 0.5, "probes": 1000,
        "tolerances": {k: _TOL[k] for k in ("det_residual", "on_disk_residual", "jacobian_consistency")},
    },
    "distortion": {
        "d": 1, "rate": 0.5, "jac_gap": math.log(1.2), "N": 10.0, "x": [0.7],
        "lambda_lo": 0.2, "lambda_hi": 0.9, "lambda_count": 8, "window": [20, 100], "slope_tol": 0.01,
        "same_orbit_contractions": 20, "same_orbit_k": 5, "same_orbit_n": 1000,
    },
    "centralizer-check": {
        "contractions": 10, "powers": [-5, 5], "mesh_per_axis": 21, "outer_radius": 0.8,
        "inner_radius": 0.2, "match_tol": 1e-6, "exact_tol": 1e-10,
    },
    "lagrangian": {"count": 100, "n_values": [1, 2, 3], "symplectic_tol": 1e-8, "omega_tol": 1e-8},
}

FAST_OVERRIDES = {
    "extend-symplectic": {"probes": 200},
    "extend-volume": {"probes": 200},
    "distortion": {"same_orbit_contractions": 4, "same_orbit_n": 200},
    "centralizer-check": {"contractions": 2, "powers": [-2, 2]},
    "lagrangian": {"count": 12},
}
