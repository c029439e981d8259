import numpy as np
import pytest

from conformal_bound.measure import QuadratureGrid
from conformal_bound.moebius import basis_vector, random_rotation, reflection_matrix
from conformal_bound.topology import (
    NonIntegerDegree,
    SampledMap,
    anti_equivariance_residual,
    antipodal_map,
    claim3_verify,
    constant_map,
    degree,
    degree_grid,
    equivariance_residual,
    equivariant_sample_maps,
    expected_parity,
    icosphere,
    identity_map,
    jacobian_determinant,
    preimage_degree,
    rotation_map,
    write_map_csv,
)

import oracles


def square_map():
    """z -> z^2 in stereographic coordinates: doubles the longitude, degree 2."""

    def rule(x):
        r = np.hypot(x[:, 0], x[:, 1])
        c, s = np.where(r > 0, x[:, 0] / np.maximum(r, 1e-300), 1.0), x[:, 1] / np.maximum(r, 1e-300)
        return np.column_stack([r * (c * c - s * s), r * 2 * c * s, x[:, 2]])

    return SampledMap(rule, 2, "square")


def test_icosphere_weights():
    q = icosphere(4)
    assert q.weights.sum() == pytest.approx(4 * np.pi, rel=1e-12)
    assert np.allclose(np.linalg.norm(q.nodes, axis=1), 1.0)


@pytest.mark.parametrize("n", [2, 3])
def test_builtin_degrees(n):
    assert degree(identity_map(n)).degree == 1
    assert degree(antipodal_map(n)).degree == (-1) ** (n + 1)
    assert degree(rotation_map(random_rotation(n, 0))).degree == 1
    assert degree(constant_map(n)).degree == 0


def test_reflection_has_degree_minus_one():
    rep = degree(rotation_map(reflection_matrix(basis_vector(2, 1))))
    assert rep.degree == -1 and rep.rounding_gap < 1e-6


def test_degree_two_map():
    rep = degree(square_map(), crosscheck=True)
    assert rep.degree == 2
    assert rep.preimage_degree == 2 and rep.agrees


def test_jacobian_determinant_of_identity():
    x = oracles.monte_carlo_sphere(3, 20, np.random.default_rng(0))
    assert np.allclose(jacobian_determinant(identity_map(3), x), 1.0, atol=1e-8)


def test_preimage_count_of_antipodal():
    assert preimage_degree(antipodal_map(2)) == (-1, 1)


def test_non_integer_degree_rejected():
    q = icosphere(4)
    north = q.nodes[:, 2] > 0
    half = QuadratureGrid(q.nodes[north], q.weights[north], q.order, 2)
    with pytest.raises(NonIntegerDegree) as info:
        degree(identity_map(2), quad=half)
    assert info.value.report.rounding_gap >= 0.1


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        degree(identity_map(2), n=3)


def test_unit_norm_enforced():
    with pytest.raises(ValueError):
        SampledMap(lambda x: 2 * x, 2)(np.eye(3))


@pytest.mark.parametrize("n", [2, 3])
def test_equivariance_examples(n):
    assert equivariance_residual(identity_map(n)) < 1e-14
    assert equivariance_residual(antipodal_map(n)) < 1e-14
    assert equivariance_residual(constant_map(n)) >= 0.5
    assert anti_equivariance_residual(constant_map(n)) >= 0.5


@pytest.mark.parametrize("n", [2, 3])
def test_corpus_claim3(n):
    maps = equivariant_sample_maps(n)
    assert len(maps) >= 8
    for f in maps:
        assert equivariance_residual(f) <= 1e-10, f.name
        rep = claim3_verify(f)
        assert rep.holds, f.name
        assert rep.degree.rounding_gap < 0.05
        if n == 3:
            assert rep.degree.degree == 1


def test_expected_parity():
    assert expected_parity(2, -1) and expected_parity(2, 3) and not expected_parity(2, 2)
    assert expected_parity(3, 1) and not expected_parity(3, -1)


def test_claim3_gate():
    with pytest.raises(ValueError):
        claim3_verify(constant_map(2))


@pytest.mark.parametrize("n", [2, 3])
def test_degree_times_orthogonal(n):
    R = reflection_matrix(basis_vector(n, 1))
    for f in equivariant_sample_maps(n)[:5]:
        base = degree(f).degree
        assert degree(f.precompose(R)).degree == -base
        assert degree(f.precompose(random_rotation(n, 1))).degree == base


def test_homotopy_invariance():
    maps = equivariant_sample_maps(2)
    f, g = maps[0], maps[2]  # identity and a perturbed identity
    x = degree_grid(2).nodes
    assert np.min(np.sum(f(x) * g(x), axis=1)) > -0.9  # no antipodal values, so no zero crossing
    for t in (0.25, 0.5, 0.75):
        h = SampledMap(lambda p, t=t: oracles_normalize((1 - t) * f(p) + t * g(p)), 2, "blend")
        assert degree(h).degree == degree(f).degree


def oracles_normalize(v):
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def test_interpolated_map_from_csv(tmp_path):
    p = icosphere(3).nodes
    Q = random_rotation(2, 2)
    write_map_csv(tmp_path / "m.csv", p, p @ Q.T)
    f = SampledMap.from_csv(tmp_path / "m.csv")
    assert not f.smooth
    rep = degree(f)
    assert rep.degree == 1 and rep.preimage_degree == 1
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        SampledMap.from_csv(tmp_path / "bad.csv")


def test_report_json(tmp_path):
    rep = degree(antipodal_map(2))
    rep.to_json(tmp_path / "d.json")
    assert '"degree": -1' in (tmp_path / "d.json").read_text()
