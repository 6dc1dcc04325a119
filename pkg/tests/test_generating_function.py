import numpy as np
import pytest
from hypothesis import given, strategies as st

from symperturb.errors import ClosednessViolation, NondegeneracyViolation
from symperturb.families import random_trig_genfn
from symperturb.generating_function import (
    GeneratingFunction,
    certify_symplectic,
    generate_map,
    genfn_from_map,
    genfn_from_perturbation,
    identity_genfn,
    solve_eta,
)
from symperturb.numerics_core import Box, SampledMap, identity_map, linear_map


def shift_genfn(c=0.3):
    # S = u eta + c eta  (n = 1)
    return genfn_from_perturbation(1, lambda u, e: (c * e[0], np.array([0.0, c]), np.zeros((2, 2))))


def scaling_genfn(lam=2.0):
    def jet(u, e):
        return lam * u[0] * e[0], np.array([lam * e[0], lam * u[0]]), np.array([[0.0, lam], [lam, 0.0]])

    return GeneratingFunction(1, jet, name="lam u eta")


# ---------------------------------------------------------------- identity


def test_identity_value_and_hessian():
    S0 = identity_genfn(2)
    assert S0.value(np.array([1.0, 2.0]), np.array([3.0, 4.0])) == 11.0
    H = S0.hess(np.zeros(2), np.zeros(2))
    assert np.array_equal(H[:2, 2:], np.eye(2)) and not H[:2, :2].any() and not H[2:, 2:].any()


def test_identity_generates_identity():
    h = generate_map(identity_genfn(2))
    z = np.array([0.2, -0.1, 0.5, 0.3])
    assert np.abs(h(z) - z).max() <= 1e-10
    assert solve_eta(identity_genfn(2), z[:2], z[2:]).iterations <= 1


# ------------------------------------------------------------ closed forms


def test_shift_generating_function():
    h = generate_map(shift_genfn(0.3))
    z = np.array([0.4, -0.7])
    assert np.abs(h(z) - np.array([0.7, -0.7])).max() <= 1e-9


def test_linear_scaling_generating_function():
    h = generate_map(scaling_genfn(2.0))
    z = np.array([0.4, -0.7])
    assert np.abs(h(z) - np.array([0.8, -0.35])).max() <= 1e-9
    assert np.abs(h.jacobian(z) - np.diag([2.0, 0.5])).max() <= 1e-12


def test_degenerate_mixed_block():
    S = GeneratingFunction(1, lambda u, e: (0.0, np.zeros(2), np.zeros((2, 2))))
    with pytest.raises(NondegeneracyViolation):
        generate_map(S)(np.array([0.1, 0.2]))


# ------------------------------------------------------------ certificate


def test_certify_identity_and_linear(rng):
    pts = rng.uniform(-1, 1, size=(100, 2))
    assert certify_symplectic(identity_map(2), pts, 1e-9).value == 0.0
    cert = certify_symplectic(linear_map(np.diag([2.0, 0.5])), pts, 1e-8)
    assert cert.passed and cert.value <= 1e-8


def test_certify_rejects_area_change(rng):
    cert = certify_symplectic(linear_map(np.diag([1.0, 1.1])), rng.uniform(-1, 1, (10, 2)), 1e-6)
    # det = 1.1, so J picks up 0.1 in the off-diagonal entries
    assert cert.value == pytest.approx(0.1, abs=1e-12) and not cert.passed


@pytest.mark.parametrize("seed", range(10))
def test_generated_maps_are_symplectic(seed):
    rng = np.random.default_rng(seed)
    n = 1 + seed % 2
    S = random_trig_genfn(rng, n, amplitude=0.05)
    h = generate_map(S)
    pts = S.domain.sample(rng, 1000)
    _, jacs = h.evaluate(pts)
    from symperturb.generating_function import symplectic_residual

    assert symplectic_residual(jacs) <= 1e-7
    # the analytic Jacobian agrees with central differences of the solved map
    from symperturb.numerics_core import fd_jacobian

    for p in pts[:5]:
        assert np.abs(fd_jacobian(h.map, p, 1e-5) - h.jacobian(p)).max() < 1e-7


# ------------------------------------------------------------------ inverse


def test_genfn_from_identity():
    S = genfn_from_map(generate_map(identity_genfn(1)), np.array([0.1, 0.2]))
    for p in S.domain.sample(np.random.default_rng(0), 5):
        assert np.abs(np.concatenate(S.grad(p[:1], p[1:])) - np.array([p[1], p[0]])).max() <= 1e-8
        assert S.value(p[:1], p[1:]) == pytest.approx(p[0] * p[1], abs=1e-8)


def test_genfn_from_linear_scaling():
    h = SampledMap(2, 2, lambda x: np.asarray(x) * np.array([2.0, 0.5]), lambda x: np.diag([2.0, 0.5]))
    S = genfn_from_map(h, np.array([0.1, 0.3]))
    for p in S.domain.sample(np.random.default_rng(1), 5):
        assert S.mixed_block(p[:1], p[1:])[0, 0] == pytest.approx(2.0, abs=1e-9)


def test_genfn_from_non_symplectic_map():
    h = SampledMap(2, 2, lambda x: np.asarray(x) * np.array([1.0, 1.01]), lambda x: np.diag([1.0, 1.01]))
    with pytest.raises(ClosednessViolation):
        genfn_from_map(h, np.array([0.0, 0.0]))


@pytest.mark.parametrize("seed", range(4))
def test_round_trip_gradient(seed):
    rng = np.random.default_rng(100 + seed)
    n = 1 + seed % 2
    S = random_trig_genfn(rng, n, amplitude=0.03)
    h = generate_map(S)
    base = rng.uniform(-0.3, 0.3, 2 * n)
    S2 = genfn_from_map(h, base, half_width=0.3)
    for p in S2.domain.sample(rng, 10):
        assert np.abs(np.concatenate(S.grad(p[:n], p[n:])) - np.concatenate(S2.grad(p[:n], p[n:]))).max() <= 1e-6


# ------------------------------------------------------- qualitative limit


def _c1_to_identity(h, pts):
    vals, jacs = h.evaluate(pts)
    return np.linalg.norm(vals - pts, axis=1).max() + np.linalg.norm(jacs - np.eye(pts.shape[1]), 2, axis=(1, 2)).max()


@pytest.mark.parametrize("seed", range(10))
def test_blend_c1_distance_vanishes(seed):
    rng = np.random.default_rng(200 + seed)
    S = random_trig_genfn(rng, 1, amplitude=0.1)
    pts = S.domain.sample(rng, 40)
    ts = [1.0, 0.5, 0.25, 0.125, 0.0625]
    d = [_c1_to_identity(generate_map(S.blend(t)), pts) for t in ts]
    assert all(b <= a * (1 + 1e-9) for a, b in zip(d, d[1:]))
    assert d[-1] < 0.1 * d[0] and _c1_to_identity(generate_map(S.blend(0.0)), pts) < 1e-12


@given(st.integers(0, 10 ** 6))
def test_newton_quadratic_tail(seed):
    rng = np.random.default_rng(seed)
    S = random_trig_genfn(rng, 2, amplitude=0.2)
    z = rng.uniform(-1, 1, 4)
    res = solve_eta(S, z[:2], z[2:]).residuals
    tail = [r for r in res if 0 < r < 1e-2]
    for a, b in zip(tail, tail[1:]):
        if a > 1e-10:
            assert b <= 10 * a ** 2 + 1e-15
