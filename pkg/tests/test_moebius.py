import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conformal_bound.measure import grid
from conformal_bound.moebius import (
    Cap,
    MoebiusError,
    basis_vector,
    cap_contains,
    cap_reflection,
    complement,
    conformal_factor,
    moebius,
    moebius_apply,
    reflection,
    sphere_point,
    tangent_project,
)

import oracles

dims = st.sampled_from([2, 3])
seeds = st.integers(0, 2**31 - 1)


def _ball(rng, n, rmax=0.95):
    v = rng.normal(size=n + 1)
    return v / np.linalg.norm(v) * rng.uniform(0, rmax)


def _sphere(rng, n, k=1):
    return oracles.monte_carlo_sphere(n, k, rng)


def test_identity_map():
    x = _sphere(np.random.default_rng(0), 2, 10)
    assert np.allclose(moebius_apply(np.zeros(3), x), x, atol=1e-15)


@pytest.mark.parametrize("r", [0.3, 0.9])
def test_axis_points_fixed(r):
    e1 = basis_vector(2)
    assert np.allclose(moebius(r * e1, e1), e1, atol=1e-14)
    assert np.allclose(moebius(r * e1, -e1), -e1, atol=1e-14)


@given(dims, seeds)
def test_matches_stereographic_dilation(n, seed):
    rng = np.random.default_rng(seed)
    xi = _ball(rng, n, 0.9)
    x = _sphere(rng, n, 20)
    assert np.allclose(moebius(xi, x), oracles.moebius_stereographic(xi, x), atol=1e-9)


@given(dims, seeds)
def test_inverse_and_sphericity(n, seed):
    rng = np.random.default_rng(seed)
    xi = _ball(rng, n)
    x = _sphere(rng, n, 100)
    y = moebius(xi, x)
    assert np.allclose(np.linalg.norm(y, axis=1), 1.0, atol=1e-10)
    assert np.allclose(moebius(-xi, y), x, atol=1e-10)
    b = x * rng.uniform(0, 0.99, size=(100, 1))
    yb = moebius(xi, b)
    assert np.all(np.linalg.norm(yb, axis=1) < 1)
    assert np.allclose(moebius(-xi, yb), b, atol=1e-10)


def test_origin_goes_to_xi():
    xi = np.array([0.1, -0.4, 0.2])
    assert np.allclose(moebius(xi, np.zeros(3)), xi)


def test_reflection_properties():
    rng = np.random.default_rng(1)
    e1 = basis_vector(3)
    assert np.allclose(reflection(e1, e1), -e1)
    p = sphere_point(rng.normal(size=4))
    x, y = rng.normal(size=(2, 4))
    assert np.allclose(reflection(p, reflection(p, x)), x)
    assert reflection(p, x) @ reflection(p, y) == pytest.approx(x @ y, abs=1e-12)
    h = tangent_project(p, x)
    assert np.allclose(reflection(p, h), h)


def test_sphere_point_renormalizes():
    p = sphere_point([3.0, 4.0, 0.0])
    assert np.linalg.norm(p) == pytest.approx(1.0, abs=1e-15)


def test_cap_at_zero_is_hyperplane_reflection():
    rng = np.random.default_rng(2)
    p = sphere_point(rng.normal(size=3))
    x = _sphere(rng, 2, 50)
    assert np.allclose(cap_reflection(Cap(0.0, p), x), reflection(p, x), atol=1e-14)


@given(dims, seeds, st.floats(-0.95, 0.95))
def test_cap_reflection_involution_and_boundary(n, seed, r):
    rng = np.random.default_rng(seed)
    a = Cap(r, rng.normal(size=n + 1))
    x = _sphere(rng, n, 200)
    assert np.allclose(a.reflect(a.reflect(x)), x, atol=1e-10)
    b = a.boundary_points(20, rng)
    assert np.allclose(a.reflect(b), b, atol=1e-10)
    margin = np.abs(a.margin(x))
    off = margin > 1e-9
    assert np.all(a.contains(a.reflect(x[off])) != a.contains(x[off]))


def test_cap_membership_examples():
    e1 = basis_vector(2)
    a = Cap(0.0, e1)
    assert cap_contains(a, e1)
    assert not cap_contains(a, -e1)


@given(dims, seeds, st.floats(-0.99, 0.99))
def test_cap_partition_and_latitude(n, seed, r):
    rng = np.random.default_rng(seed)
    a = Cap(r, rng.normal(size=n + 1))
    x = _sphere(rng, n, 1000)
    inside = cap_contains(a, x)
    off = np.abs(x @ a.p - a.height) > 1e-9
    assert np.all(inside[off] ^ cap_contains(complement(a), x)[off])
    assert np.all(inside[off] == (x @ a.p > a.height)[off])


def test_complement_example():
    e1 = basis_vector(2)
    b = complement(Cap(0.5, e1))
    assert b.r == -0.5 and np.allclose(b.p, -e1)
    c = complement(b)
    assert c.r == 0.5 and np.allclose(c.p, e1)


@pytest.mark.parametrize("r", [1.0, -1.0, 0.9999999, 1.5])
def test_degenerate_caps_rejected(r):
    with pytest.raises(MoebiusError):
        Cap(r, basis_vector(2))


def test_singular_denominator_reported():
    with pytest.raises(MoebiusError):
        moebius(np.array([1.0, 0, 0]), np.array([-1.0, 0, 0]))


def test_conformal_factor_trivial():
    x = _sphere(np.random.default_rng(3), 3, 10)
    assert np.allclose(conformal_factor(np.zeros(4), x), 1.0)


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("t", [0.0, 0.3, 0.7])
def test_conformal_factor_total_volume(n, t):
    q = grid(n, 80)
    xi = t * sphere_point(np.arange(1.0, n + 2))
    total = q.integrate(conformal_factor(xi, q.nodes) ** n)
    assert total == pytest.approx(q.weights.sum(), abs=1e-8)


@given(dims, seeds)
def test_conformal_factor_finite_differences(n, seed):
    rng = np.random.default_rng(seed)
    xi = _ball(rng, n, 0.8)
    x = _sphere(rng, n)[0]
    lam = conformal_factor(xi, x)
    h = 1e-6
    for _ in range(2):
        v = tangent_project(x, rng.normal(size=n + 1))
        v /= np.linalg.norm(v)
        fwd = moebius(xi, np.cos(h) * x + np.sin(h) * v)
        bwd = moebius(xi, np.cos(h) * x - np.sin(h) * v)
        stretch = np.linalg.norm(fwd - bwd) / (2 * h)
        assert stretch == pytest.approx(lam, rel=1e-6)
