import numpy as np
import pytest
from hypothesis import given, strategies as st

from symperturb.centralizer import (
    AmbiguousMatch,
    CommutingPair,
    check_commutation,
    eigenvalue_obstruction,
    lipschitz_power_bound,
    match_power,
    mesh_components,
    orbit_distance,
    power,
    power_points,
)
from symperturb.distortion_lab import Contraction, ball_mesh
from symperturb.experiments import _power_map, glued_power_example
from symperturb.families import random_contraction
from symperturb.numerics_core import Box, linear_map


def mesh(d=1, per=21):
    pts = ball_mesh(d, per, 0.8, 0.2)
    return pts, 1.6 / (per - 1)


def test_power_inverse_roundtrip(rng):
    f = random_contraction(rng, 2)
    x = rng.uniform(-0.5, 0.5, 2)
    assert np.allclose(power(f, -3, power(f, 3, x)), x, atol=1e-13)
    pts = rng.uniform(-0.5, 0.5, (7, 2))
    assert np.allclose(power_points(f, -2, pts), np.array([power(f, -2, p) for p in pts]), atol=1e-13)


def test_commutation_examples(rng):
    f = random_contraction(rng, 2)
    pts, _ = mesh(2, 11)
    assert check_commutation(f, _power_map(f, 3, 2), pts) < 1e-14
    assert check_commutation(f, _power_map(f, -2, 2), pts) < 1e-12
    shift = linear_map(np.eye(2)) 
    other = random_contraction(np.random.default_rng(1), 2)
    assert check_commutation(f, other, pts) > 1e-3
    assert check_commutation(f, shift, pts) == 0.0


@pytest.mark.parametrize("seed", range(3))
def test_planted_powers_recovered(seed):
    rng = np.random.default_rng(seed)
    d = 1 + seed % 2
    f = random_contraction(rng, d)
    pts, spacing = mesh(d, 21 if d == 1 else 15)
    for i in range(-4, 5):
        rep = match_power(CommutingPair(f, _power_map(f, i, d), pts), pts, spacing)
        assert all(p == i for p in rep.powers())
        assert max(c.residual for c in rep.components) < 1e-10


@pytest.mark.parametrize("i", [-5, -1, 2, 5])
def test_lipschitz_range_contains_planted_power(i):
    f = random_contraction(np.random.default_rng(3), 1)
    pts, _ = mesh()
    bound, _ = lipschitz_power_bound(f, _power_map(f, i, 1), pts)
    assert bound >= abs(i)


def test_glued_components_get_distinct_powers():
    f, g = glued_power_example()
    pts, spacing = mesh(1, 41)
    rep = match_power(CommutingPair(f, g, pts), pts, spacing)
    assert rep.commutation_residual < 1e-14
    assert rep.powers() == [3, 1]
    assert [c.size for c in rep.components] == [15, 15]


def test_non_integer_power_is_none():
    f = Contraction(1, linear_map(np.array([[0.5]]), Box.cube(1, 1.0)), linear_radius=1.0)
    g = linear_map(np.array([[0.5 ** 1.5]]))
    pts, spacing = mesh()
    rep = match_power(CommutingPair(f, g, pts), pts, spacing)
    assert rep.powers() == [None, None]
    assert min(c.residual for c in rep.components) > 0.05


def test_identity_power_ambiguity_detected():
    ident = linear_map(np.eye(1))
    pts, spacing = mesh()
    with pytest.raises(AmbiguousMatch):
        match_power(CommutingPair(ident, ident, pts), pts, spacing, i_range=(-1, 1))


def test_matched_map_preserves_orbits():
    f, g = glued_power_example()
    for x in (-0.7, -0.3, 0.25, 0.6):
        x = np.array([x])
        assert orbit_distance(f, x, g(x), (-5, 5)) < 1e-14


def test_mesh_components_split_at_excluded_ball():
    pts, spacing = mesh()
    n, labels = mesh_components(pts, spacing)
    assert n == 2
    assert len(set(labels[pts[:, 0] > 0])) == 1
    pts2, spacing2 = mesh(2, 15)
    assert mesh_components(pts2, spacing2)[0] == 1


# ---------------------------------------------------------- eigenvalue obstruction


def test_obstruction_examples():
    assert eigenvalue_obstruction([("p", 1, [0.5]), ("q", 1, [1 / 3])]).forced_fixed == ["p", "q"]
    assert eigenvalue_obstruction([("p", 1, [0.5]), ("q", 1, [0.5])]).permutable == [["p", "q"]]
    rep = eigenvalue_obstruction([("p", 2, [0.5, 2.0]), ("q", 1, [0.5, 2.0])])
    assert rep.forced_fixed == ["p", "q"] and rep.permutable == []


def test_obstruction_complex_multisets():
    z = 0.3 + 0.4j
    rep = eigenvalue_obstruction([("a", 1, [z, np.conj(z), 2.0]), ("b", 1, [2.0, np.conj(z), z]),
                                  ("c", 1, [z, z, 2.0])])
    assert rep.permutable == [["a", "b"]] and rep.forced_fixed == ["c"]


@given(st.permutations(list(range(6))), st.integers(0, 2 ** 32 - 1))
def test_obstruction_is_permutation_invariant(order, seed):
    rng = np.random.default_rng(seed)
    base = rng.uniform(0.1, 0.9, 3)
    orbits = [(f"o{k}", 1 + k % 2, rng.permutation(base if k < 4 else base + 0.01)) for k in range(6)]
    ref = eigenvalue_obstruction(orbits).as_dict()
    assert eigenvalue_obstruction([orbits[k] for k in order]).as_dict() == ref
