import numpy as np
import pytest

from symperturb.errors import DeltaTooLarge, DimensionViolation, NotHyperbolic, NotSymplectic
from symperturb.experiments import random_hyperbolic_symplectic, volume_box
from symperturb.families import bump_diffeo, identity_diffeo, random_symplectic_matrix
from symperturb.generating_function import certify_symplectic, generate_map
from symperturb.interpolation import build_interpolating_genfn, default_support_box
from symperturb.extension import (
    build_isotopy,
    extend_symplectic,
    extend_volume,
    lagrangian_certificate,
)
from symperturb.numerics_core import Box, SampledMap


@pytest.fixture(scope="module")
def psi1():
    return bump_diffeo(1, 0.01)


@pytest.fixture(scope="module")
def ext1(psi1):
    return extend_symplectic(psi1, default_support_box(psi1), eps=0.5, probes=1000, seed=0)


# ------------------------------------------------------------ symplectic


def test_identity_disk_gives_identity():
    psi = identity_diffeo(1)
    res = extend_symplectic(psi, default_support_box(psi), probes=200)
    assert res.on_disk_residual == 0.0 and res.support_residual == 0.0
    assert res.c1_distance_to_id == 0.0 and res.passed


def test_symplectic_extension_certificates(ext1):
    assert ext1.passed
    assert ext1.conservativity_residual <= 1e-7
    assert ext1.on_disk_residual <= 1e-6
    assert ext1.support_residual == 0.0


def test_symplectic_extension_equals_psi_on_disk(ext1, psi1, rng):
    u = psi1.disk_probes(rng, 50)
    z = np.hstack([u, np.zeros_like(u)])
    out = ext1.phi(z)
    assert np.abs(out[:, :1] - psi1.psi(u)).max() <= 1e-6 and not out[:, 1:].any()


def test_identity_outside_support(ext1, rng):
    far = np.vstack([Box.cube(2, 5.0).shell(rng, 20), [[1.7, 0.0], [0.0, 0.65]]])
    assert np.array_equal(ext1.phi(far), far)


def test_c1_budget_halves(psi1):
    U = default_support_box(psi1)
    big = extend_symplectic(psi1, U, probes=300).c1_distance_to_id
    small = extend_symplectic(psi1.scaled(0.5), U, probes=300).c1_distance_to_id
    assert small <= 0.6 * big
    assert small / big == pytest.approx(0.5, rel=0.2)


def test_delta_too_large_reports_certified_amplitude(psi1):
    with pytest.raises(DeltaTooLarge) as info:
        extend_symplectic(psi1, default_support_box(psi1), eps=0.1, probes=200)
    assert 0.0 < info.value.largest_certified < 1.0


def test_nondegeneracy_failure_is_delta_too_large():
    psi = bump_diffeo(1, 0.2)
    with pytest.raises(DeltaTooLarge):
        extend_symplectic(psi, default_support_box(psi), eps=0.05, probes=100)


# --------------------------------------------------------------- isotopy


@pytest.fixture(scope="module")
def genfn1(psi1):
    return build_interpolating_genfn(psi1, default_support_box(psi1))


def test_isotopy_endpoints(genfn1, rng):
    pts = default_support_box(bump_diffeo(1, 0.01)).sample(rng, 50)
    fam = build_isotopy(genfn1, probes=pts)
    assert np.abs(fam(1.0)(pts) - pts).max() <= 1e-10
    assert np.array_equal(fam(0.0)(pts), generate_map(genfn1)(pts))


def test_isotopy_midpoint_symplectic(genfn1, rng):
    pts = default_support_box(bump_diffeo(1, 0.01)).sample(rng, 300)
    assert certify_symplectic(build_isotopy(genfn1)(0.5), pts, 1e-7).passed


def test_isotopy_continuity(genfn1, rng):
    pts = default_support_box(bump_diffeo(1, 0.01)).sample(rng, 20)
    fam = build_isotopy(genfn1)
    vals = {k: fam(k / 128)(pts) for k in range(129)}
    coarse = max(np.abs(vals[k + 2] - vals[k]).max() for k in range(0, 127, 2))
    fine = max(np.abs(vals[k + 1] - vals[k]).max() for k in range(128))
    assert coarse <= 4 * fine


def test_isotopy_time_derivative(genfn1):
    fam = build_isotopy(genfn1)
    y = np.array([0.3, 0.1])
    h = 1e-6
    _, _, dt = fam.point(0.4, y)
    fd = (fam(0.4 + h)(y) - fam(0.4 - h)(y)) / (2 * h)
    assert np.abs(dt - fd).max() < 1e-7


# ------------------------------------------------------------ volume


def test_volume_identity_disk():
    psi = identity_diffeo(1)
    res = extend_volume(psi, 2, volume_box(psi, 2), probes=100)
    z = np.random.default_rng(0).uniform(-2, 2, (30, 2))
    assert np.array_equal(res.phi(z), z)


def test_volume_three_dimensional(psi1, rng):
    U = volume_box(psi1, 3)
    res = extend_volume(psi1, 3, U, probes=1000)
    assert res.passed and res.conservativity_residual <= 1e-6
    assert res.meta["partial_rho_probes"] > 0
    # the slice x3 = 0 (rho = 1) is the planar symplectic extension
    planar = extend_symplectic(psi1, default_support_box(psi1), probes=100).phi
    pts = default_support_box(psi1).sample(rng, 30)
    out = res.phi(np.hstack([pts, np.zeros((30, 1))]))
    assert np.array_equal(out[:, :2], planar(pts)) and not out[:, 2].any()


def test_volume_dimension_violation():
    psi = bump_diffeo(2, 0.01)
    with pytest.raises(DimensionViolation):
        extend_volume(psi, 3, Box.cube(3, 2.0))


def test_volume_with_flattening(psi1, rng):
    # D is the graph x'' = h(x') of h(s) = (0.2 s^2, -0.1 s) inside R^3
    def ev(s):
        s = np.asarray(s, dtype=float)
        return np.concatenate([0.2 * s ** 2, -0.1 * s], axis=-1)

    def jac(s):
        s = np.asarray(s, dtype=float)
        return np.stack([0.4 * s, np.full_like(s, -0.1)], axis=-2)

    graph = SampledMap(1, 2, ev, jac)
    res = extend_volume(psi1, 3, volume_box(psi1, 3), probes=300, graph=graph)
    assert res.passed
    u = psi1.disk_probes(rng, 20)
    on = np.hstack([u, ev(u)])
    target = np.hstack([psi1.psi(u), ev(psi1.psi(u))])
    assert np.abs(res.phi(on) - target).max() <= 1e-6


# --------------------------------------------------------------- lagrangian


def test_lagrangian_diagonal_n1():
    cert = lagrangian_certificate(np.diag([0.5, 2.0]))
    assert cert.dims == (1, 1) and cert.passed
    assert abs(abs(cert.stable_basis[0, 0]) - 1.0) < 1e-14


def test_lagrangian_diagonal_n2():
    cert = lagrangian_certificate(np.diag([0.5, 1 / 3, 2.0, 3.0]))
    Es = cert.stable_basis
    assert cert.dims == (2, 2) and cert.stable_residual == 0.0
    assert np.abs(Es[2:]).max() < 1e-14


@pytest.mark.parametrize("seed", range(5))
def test_lagrangian_conjugated(seed):
    rng = np.random.default_rng(seed)
    P = random_symplectic_matrix(rng, 2)
    M = P @ np.diag([0.5, 1 / 3, 2.0, 3.0]) @ np.linalg.inv(P)
    cert = lagrangian_certificate(M)
    assert cert.dims == (2, 2) and cert.stable_residual <= 1e-8 and cert.unstable_residual <= 1e-8


def test_lagrangian_generated_conjugation():
    M, _ = random_hyperbolic_symplectic(np.random.default_rng(1), 3)
    assert lagrangian_certificate(M).passed


def test_lagrangian_errors():
    with pytest.raises(NotHyperbolic):
        lagrangian_certificate(np.eye(2))
    with pytest.raises(NotSymplectic):
        lagrangian_certificate(np.diag([0.5, 3.0]))
