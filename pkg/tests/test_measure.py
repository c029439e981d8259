import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conformal_bound.metric import ConformalMetric, harmonic_basis
from conformal_bound.measure import (
    BoundaryEscape,
    DiscreteMeasure,
    NonConvergence,
    balance_residual,
    cap_grid,
    grid,
    hersch_renormalize,
    lift,
    metric_measure,
    pushforward,
)
from conformal_bound.moebius import Cap, basis_vector, moebius, random_rotation

import oracles


def test_grid_examples():
    q = grid(2, 20)
    x = q.nodes
    assert abs(q.integrate(np.ones(len(q))) - 4 * math.pi) < 1e-12
    assert abs(q.integrate(x[:, 0] ** 2) - 4 * math.pi / 3) < 1e-10
    assert abs(q.integrate(x[:, 0] * x[:, 1])) < 1e-12


@pytest.mark.parametrize("n,order", [(2, 12), (3, 10), (4, 6)])
def test_grid_exact_on_harmonics(n, order):
    q = grid(n, order)
    assert abs(q.weights.sum() - oracles.sphere_volume(n)) < 1e-10
    assert np.all(q.weights > 0)
    # products of two harmonics of degree <= order/2 are orthonormal
    Y = harmonic_basis(n, order // 2, q.nodes)
    G = q.integrate(Y[:, :, None] * Y[:, None, :])
    assert np.abs(G - np.eye(Y.shape[1])).max() < 1e-10


def test_grid_monte_carlo_agreement():
    rng = np.random.default_rng(0)
    q = grid(3, 30)
    f = lambda x: np.exp(x[:, 0] - 0.5 * x[:, 2] ** 2)
    mc = oracles.monte_carlo_sphere(3, 400000, rng)
    estimate = oracles.sphere_volume(3) * f(mc).mean()
    assert q.integrate(f(q.nodes)) == pytest.approx(estimate, rel=5e-3)


def test_grid_rejects_unsupported():
    with pytest.raises(ValueError):
        grid(7, 4)
    with pytest.raises(ValueError):
        grid(2, 0)


@pytest.mark.parametrize("r", [-0.8, 0.0, 0.6])
def test_cap_grid_covers_sphere(r):
    a = Cap(r, [0.3, -0.2, 0.9])
    q = cap_grid(a, 30, 40)
    assert q.weights.sum() == pytest.approx(4 * math.pi, abs=1e-10)
    # cap area from its latitude: 2 pi (1 - h)
    assert q.weights[q.inside].sum() == pytest.approx(2 * math.pi * (1 - a.height), abs=1e-10)
    assert np.all(a.contains(q.nodes[q.inside]))


def test_discrete_measure_validation():
    with pytest.raises(ValueError):
        DiscreteMeasure([[1.0, 0, 0]], [-1.0])
    with pytest.raises(ValueError):
        DiscreteMeasure([[1.0, 0, 0]], [0.0])
    with pytest.raises(ValueError):
        DiscreteMeasure([[2.0, 0, 0]], [1.0])


def test_measure_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    nu = DiscreteMeasure(oracles.monte_carlo_sphere(2, 30, rng), rng.uniform(0.1, 1, 30))
    nu.to_csv(tmp_path / "m.csv")
    back = DiscreteMeasure.from_csv(tmp_path / "m.csv")
    assert np.allclose(back.points, nu.points, atol=1e-15)
    assert np.array_equal(back.weights, nu.weights)
    (tmp_path / "bad.csv").write_text("a,b,c\n1,0,0\n")
    with pytest.raises(ValueError):
        DiscreteMeasure.from_csv(tmp_path / "bad.csv")


def test_metric_measure_examples():
    q = grid(2, 30)
    assert metric_measure(ConformalMetric.round(2), q).mass == pytest.approx(4 * math.pi, abs=1e-10)
    c = 0.3
    g = ConformalMetric.round(2).scaled(c)
    assert metric_measure(g, q).mass == pytest.approx(math.exp(2 * c) * 4 * math.pi, rel=1e-12)
    eta = np.array([0.0, 0.4, 0.1])
    g = ConformalMetric.from_pullback(eta)
    assert metric_measure(g, grid(2, 80)).mass == pytest.approx(4 * math.pi, abs=1e-8)


def test_pushforward_examples():
    rng = np.random.default_rng(2)
    nu = grid(2, 10).as_measure()
    same = pushforward(nu, lambda x: x)
    assert np.array_equal(same.points, nu.points)
    xi = np.array([0.2, -0.5, 0.3])
    moved = pushforward(nu, xi)
    assert moved.mass == nu.mass
    back = pushforward(moved, -xi)
    assert np.allclose(back.points, nu.points, atol=1e-10)
    Q = random_rotation(2, rng)
    assert np.allclose(pushforward(nu, lambda x: x @ Q.T).points, nu.points @ Q.T)


@given(st.integers(0, 10**6), st.floats(-0.9, 0.9))
def test_lift_properties(seed, r):
    rng = np.random.default_rng(seed)
    nu = DiscreteMeasure(oracles.monte_carlo_sphere(2, 300, rng), rng.uniform(0.1, 1, 300))
    a = Cap(r, rng.normal(size=3))
    mu = lift(nu, a)
    assert mu.mass == pytest.approx(nu.mass, rel=1e-14)
    assert np.all(a.margin(mu.points) > -1e-12)
    mu_star = lift(nu, a.complement())
    mapped = pushforward(mu, a.reflect)
    key = lambda m: np.lexsort(np.round(m.points, 8).T)
    i, j = key(mu_star), key(mapped)
    assert np.allclose(mu_star.points[i], mapped.points[j], atol=1e-10)
    assert np.allclose(mu_star.weights[i], mapped.weights[j])


def test_lift_counts_boundary_atoms():
    a = Cap(0.0, basis_vector(2))
    nu = DiscreteMeasure([[0.0, 1.0, 0.0], [1.0, 0, 0]], [1.0, 1.0])
    assert lift(nu, a).boundary_hits == 1


def test_hersch_examples():
    assert np.linalg.norm(hersch_renormalize(grid(2, 20).as_measure()).xi) < 1e-12
    two = DiscreteMeasure([[1.0, 0, 0], [-1.0, 0, 0]], [1.0, 1.0])
    assert np.linalg.norm(hersch_renormalize(two).xi) < 1e-12
    eta = 0.4 * basis_vector(2, 1)
    nu = pushforward(grid(2, 30).as_measure(), eta)
    rp = hersch_renormalize(nu)
    assert np.allclose(rp.xi, -eta, atol=1e-8)
    assert rp.residual <= 1e-10
    assert balance_residual(nu, rp.xi) == pytest.approx(rp.residual)


def test_hersch_equivariance_and_uniqueness():
    rng = np.random.default_rng(3)
    g = ConformalMetric.random(2, 3, 0.4, rng=5)
    nu = metric_measure(g, grid(2, 30))
    xi = hersch_renormalize(nu).xi
    Q = random_rotation(2, rng)
    xi_rot = hersch_renormalize(pushforward(nu, lambda x: x @ Q.T)).xi
    assert np.allclose(xi_rot, Q @ xi, atol=1e-8)
    for _ in range(20):
        v = rng.normal(size=3)
        start = v / np.linalg.norm(v) * rng.uniform(0, 0.9)
        assert np.allclose(hersch_renormalize(nu, start=start).xi, xi, atol=1e-8)


def test_hersch_rejects_concentrated_measure():
    nu = DiscreteMeasure([[1.0, 0, 0], [0.0, 1.0, 0]], [1.0, 1e-14])
    with pytest.raises((BoundaryEscape, NonConvergence)):
        hersch_renormalize(nu)


def test_hersch_iteration_limit():
    nu = pushforward(grid(2, 20).as_measure(), np.array([0.0, 0.0, 0.9]))
    with pytest.raises(NonConvergence):
        hersch_renormalize(nu, max_iter=1)


def test_hersch_continuity_toward_whole_sphere():
    g = ConformalMetric.random(2, 3, 0.3, rng=1)
    xi0 = hersch_renormalize(metric_measure(g, grid(2, 40))).xi
    dist = []
    for r in [-0.9, -0.99, -0.999]:
        a = Cap(r, basis_vector(2))
        q = cap_grid(a, 40, 63)
        nu = DiscreteMeasure(q.nodes, q.weights * g.density(q.nodes))
        dist.append(np.linalg.norm(hersch_renormalize(lift(nu, a)).xi - xi0))
    assert dist[0] > dist[1] > dist[2]
    assert dist[2] < 1e-2
