import math

import numpy as np
import pytest

from symperturb.errors import GraphNotInvariant, NotAContraction, OrbitsNotSeparated
from symperturb.families import random_contraction, random_trig_genfn, tanh_contraction_map
from symperturb.generating_function import generate_map
from symperturb.distortion_lab import (
    Contraction,
    StableChart,
    ball_mesh,
    distortion,
    distortion_by_composition,
    distortion_series,
    linearize_near_zero,
    log_jac_sums,
    make_g1,
    perturb_orbit,
    stable_chart_projection,
)
from symperturb.numerics_core import Box, SampledMap, c1_distance, fd_jacobian, identity_map, linear_map, log_jacobian

GAP = math.log(1.2)


def half_map(d=1):
    return Contraction(d, linear_map(0.5 * np.eye(d), Box.cube(d, 1.0)), linear_radius=1.0)


@pytest.fixture(scope="module")
def grafted():
    lam = np.linspace(0.2, 0.9, 8)[:, None] + 0.0123
    return perturb_orbit(half_map(), np.array([0.7]), lam, 10.0, GAP), lam


# -------------------------------------------------------------- contractions


def test_contraction_check():
    half_map().check()
    with pytest.raises(NotAContraction):
        Contraction(1, linear_map(1.2 * np.eye(1))).check()
    with pytest.raises(NotAContraction):
        Contraction(1, SampledMap(1, 1, lambda x: 0.5 * np.asarray(x) + 0.1, lambda x: np.full(np.shape(x) + (1,), 0.5))).check()


def test_linear_half_map_has_no_distortion():
    f = half_map()
    for n in (1, 10, 100):
        assert distortion(f, np.array([0.3]), np.array([-0.8]), n).delta == 0.0


@pytest.mark.parametrize("seed", range(6))
def test_same_orbit_distortion_bounded(seed):
    rng = np.random.default_rng(seed)
    d = 1 + seed % 2
    f = random_contraction(rng, d)
    x = rng.uniform(-0.8, 0.8, d)
    y = f(x)
    ser = distortion_series(f, x, y, 1000)
    sup_lj = np.abs(f.log_jac(np.vstack([ball_mesh(d, 21), f.orbit(x, 1001)]))).max()
    assert ser.max() <= 2 * sup_lj


@pytest.mark.parametrize("seed", range(4))
def test_chain_rule_consistency(seed):
    rng = np.random.default_rng(50 + seed)
    d = 1 + seed % 2
    f = random_contraction(rng, d)
    x, y = rng.uniform(-0.9, 0.9, (2, d))
    for n in (1, 17, 200):
        assert distortion(f, x, y, n).delta == pytest.approx(distortion_by_composition(f, x, y, n), abs=1e-8)


def test_composed_log_jacobian_is_sum_along_orbit(grafted):
    G, _ = grafted
    x = np.array([0.7])
    n = 12
    fn = identity_map(1)
    for _ in range(n):
        fn = SampledMap(1, 1, (lambda prev: lambda z: G.map(prev(z)))(fn),
                        (lambda prev: lambda z: G.map.jacobian(prev(z)) @ prev.jacobian(z))(fn))
    assert log_jacobian(fn, x) == pytest.approx(log_jac_sums(G.contraction, x, n)[-1], abs=1e-12)


# ----------------------------------------------------------- linearisation


def test_linearize_example():
    def ev(x):
        x = np.asarray(x, dtype=float)
        return x / 2 + x ** 2 / 10

    f = Contraction(1, SampledMap(1, 1, ev, lambda x: (0.5 + np.asarray(x) / 5)[..., None], Box.cube(1, 1.0)))
    g, dist = linearize_near_zero(f, 0.1)
    xs = np.linspace(-0.05, 0.05, 41)[:, None]
    assert np.abs(g.jacobian(xs) - 0.5).max() < 1e-15
    assert dist <= 0.03
    assert g(np.array([0.2])) == f(np.array([0.2]))


def test_linearize_linear_map_is_unchanged():
    f = half_map()
    g, dist = linearize_near_zero(f, 0.3)
    xs = np.linspace(-1, 1, 51)[:, None]
    assert np.array_equal(g(xs), f(xs)) and dist == 0.0


# ------------------------------------------------------------------ grafting


def test_g1_jacobian_gap():
    L = 0.5 * np.eye(2)
    g1, pert, c = make_g1(L, GAP)
    assert np.linalg.det(g1.jacobian(np.zeros(2))) == pytest.approx(0.25 * 1.2, abs=1e-14)
    z = np.array([[1.0, 0.0], [0.0, 1.2]])
    assert not pert(z).any()


def test_grafted_threshold_and_slope(grafted):
    G, lam = grafted
    assert G.n - G.i0 == 55                 # 10 / log 1.2 = 54.85
    x = np.array([0.7])
    for y in lam:
        s = distortion_series(G.contraction, x, y, G.n)
        assert s[G.n] > 10.0 and s[G.n - 1] < 10.0
    long = perturb_orbit(half_map(), x, lam, 10.0, GAP, n=G.i0 + 100)
    s = distortion_series(long.contraction, x, lam[0], G.i0 + 100)
    k = np.arange(20, 101)
    assert np.abs(s[G.i0 + k] / k / GAP - 1).max() < 0.01


def test_grafted_growth_lower_bound():
    rng = np.random.default_rng(9)
    base = random_contraction(rng, 2)
    f, _ = linearize_near_zero(base, 0.3)
    x = np.array([0.6, -0.3])
    lam = rng.uniform(-0.7, 0.7, (6, 2))
    G = perturb_orbit(f, x, lam, 3.0, 0.15)
    for y in lam:
        s = distortion_series(G.contraction, x, y, G.n)
        n = np.arange(G.i0, G.n + 1)
        assert np.all(s[n] - (n - G.i0) * 0.15 >= -G.meta["delta_i0"] - 1e-9)
    assert G.min_delta > 3.0


def test_same_orbit_is_not_separated():
    x = np.array([0.7])
    with pytest.raises(OrbitsNotSeparated):
        perturb_orbit(half_map(), x, np.array([[0.35]]), 10.0, GAP)


def test_grafted_jacobian_matches_fd():
    x = np.array([0.7])
    G = perturb_orbit(half_map(), x, np.array([[0.41]]), 0.3, GAP)
    c = G.centers[0]
    p = c + 0.3 * G.eps
    assert np.abs(fd_jacobian(G.map, p, 1e-6 * G.eps) - G.map.jacobian(p)).max() < 1e-6


def test_graft_c1_size_is_scale_free():
    x = np.array([0.7])
    lam = np.array([[0.41]])
    G0 = perturb_orbit(half_map(), x, lam, 0.3, GAP)
    g1_size = c1_distance(G0.g1, linear_map(0.5 * np.eye(1)), np.linspace(-1, 1, 2001)[:, None])
    dists = []
    for s in (1.0, 0.5, 0.25):
        G = perturb_orbit(half_map(), x, lam, 0.3, GAP, eps=s * G0.eps)
        probes = (G.centers[:, None, :] + G.eps * np.linspace(-1, 1, 401)[None, :, None]).reshape(-1, 1)
        dists.append(c1_distance(G.map, half_map().map, probes))
    assert max(dists) <= g1_size * (1 + 1e-9)
    assert max(dists) / min(dists) <= 1.05


# --------------------------------------------------------------- stable charts


def saddle(c=0.0):
    def ev(z):
        z = np.asarray(z, dtype=float)
        return np.stack([z[..., 0] / 2, 2 * z[..., 1] + c * z[..., 0] ** 2], -1)

    def jac(z):
        z = np.asarray(z, dtype=float)
        J = np.zeros(z.shape[:-1] + (2, 2))
        J[..., 0, 0], J[..., 1, 1], J[..., 1, 0] = 0.5, 2.0, 2 * c * z[..., 0]
        return J

    return SampledMap(2, 2, ev, jac)


def quad_graph(k):
    return SampledMap(1, 1, lambda s: k * np.asarray(s) ** 2, lambda s: (2 * k * np.asarray(s))[..., None])


def test_linear_model_chart():
    chart = StableChart(identity_map(2), quad_graph(0.0), np.zeros(1), 1, 1)
    theta = stable_chart_projection(chart, saddle())
    xs = np.linspace(-1, 1, 9)[:, None]
    assert np.abs(theta(xs) - xs / 2).max() < 1e-14


def test_nonlinear_saddle_chart():
    c = 0.3
    chart = StableChart(identity_map(2), quad_graph(-4 * c / 7), np.zeros(1), 1, 1)
    theta = stable_chart_projection(chart, saddle(c))
    xs = np.linspace(-1, 1, 9)[:, None]
    assert np.abs(theta(xs) - xs / 2).max() < 1e-12


def test_graph_not_invariant():
    chart = StableChart(identity_map(2), quad_graph(0.0), np.zeros(1), 1, 1)
    with pytest.raises(GraphNotInvariant) as info:
        stable_chart_projection(chart, saddle(0.3))
    assert info.value.residual > 1e-6


def test_symplectic_chart_preserves_stable_eigenvalue():
    S = random_trig_genfn(np.random.default_rng(4), 1, amplitude=0.02)
    psi = generate_map(S).map
    # the dynamics in original coordinates is psi A psi^-1, so the chart sees A
    chart = StableChart(psi, quad_graph(0.0), np.zeros(1), 1, 1)
    from symperturb.distortion_lab import _invert

    def f_ev(y):
        y = np.atleast_2d(y)
        out = np.array([psi(saddle()(_invert(psi, p, p))) for p in y])
        return out.reshape(np.shape(y))

    def f_jac(y):
        z = _invert(psi, y, y)
        return psi.jacobian(saddle()(z)) @ saddle().jacobian(z) @ np.linalg.inv(psi.jacobian(z))

    f_tau = SampledMap(2, 2, lambda y: f_ev(y).reshape(np.shape(y)), f_jac)
    theta = stable_chart_projection(chart, f_tau)
    assert theta.jacobian(np.zeros(1))[0, 0] == pytest.approx(0.5, abs=1e-6)
    p = psi(np.zeros(2))
    stable = np.sort(np.abs(np.linalg.eigvals(f_jac(p))))[0]
    assert abs(theta.jacobian(np.zeros(1))[0, 0] - stable) < 1e-8
