"""Brouwer degree of maps S^n -> S^n and the reflection-equivariance
constraint f(-p) = R_p f(p).

The degree is computed as the normalized integral of the Jacobian
determinant, with the determinant taken against the outward normal,

    deg f = (1 / sigma_n) int det[f(x), Df e_1, ..., Df e_n] det[x, e_1, ..., e_n] dsigma,

which does not depend on the tangent frame e_i chosen at x. A signed count
of preimages of a generic point serves as an independent check.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from .constants import sphere_volume
from .measure import QuadratureGrid, grid
from .moebius import basis_vector, random_rotation, sphere_point, tangent_project

ACCEPT_GAP = 0.1
EQUIVARIANCE_TOL = 1e-6


class NonIntegerDegree(RuntimeError):
    def __init__(self, report: "DegreeReport"):
        super().__init__(f"degree integral {report.raw_integral:.4f} is not near an integer")
        self.report = report


# ---------------------------------------------------------------- maps


@dataclass(frozen=True)
class SampledMap:
    """A map S^n -> S^n given by a vectorized rule on (N, n+1) arrays.

    ``smooth`` is a hint for the degree computation: non-smooth maps (for
    instance interpolated data) are checked by preimage counting as well.
    """

    rule: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    n: int
    name: str = "map"
    smooth: bool = True

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.asarray(self.rule(x), dtype=float)
        if np.any(np.abs(np.linalg.norm(y, axis=-1) - 1.0) > 1e-8):
            raise ValueError(f"{self.name}: values are not on the unit sphere")
        return y

    def conjugate(self, Q) -> "SampledMap":
        """p -> Q f(Q^T p); preserves the equivariance constraint."""
        Q = np.asarray(Q, dtype=float)
        return SampledMap(lambda x: self.rule(x @ Q) @ Q.T, self.n, f"{self.name}^Q", self.smooth)

    def precompose(self, Q) -> "SampledMap":
        """p -> f(Q p)."""
        Q = np.asarray(Q, dtype=float)
        return SampledMap(lambda x: self.rule(x @ Q.T), self.n, f"{self.name}oQ", self.smooth)

    @classmethod
    def from_samples(cls, points, values, radius: float = 0.05, name: str = "samples") -> "SampledMap":
        """Interpolate scattered samples by a spherical moving average.

        The kernel is the compactly supported Wendland function
        (1 - d/R)^4 (4 d/R + 1) of the chord distance d, so the average is C^2
        and finite-difference Jacobians stay meaningful. The support R is
        ``radius``, widened to 2.5 sample spacings where the data are sparser.
        Averages are projected back onto the sphere.
        """
        points = sphere_point(np.asarray(points, dtype=float))
        values = sphere_point(np.asarray(values, dtype=float))
        n = points.shape[1] - 1
        tree = cKDTree(points)
        spacing = float(np.median(tree.query(points, k=min(2, len(points)))[0][:, -1]))
        support = max(radius, 2.5 * spacing)
        # a ball of radius `support` around x sits inside the ball of radius
        # support + 2 spacing around the sample nearest to x
        reach = tree.query_ball_point(points, support + 2 * spacing, return_length=True).max()
        k = int(min(len(points), reach + 1))
        padded = np.vstack([values, np.zeros(n + 1)])

        def rule(x):
            dist, idx = tree.query(x, k=k, distance_upper_bound=support)
            dist, idx = dist.reshape(len(x), k), idx.reshape(len(x), k)
            q = np.minimum(dist / support, 1.0)
            w = (1.0 - q) ** 4 * (4.0 * q + 1.0)
            avg = np.einsum("nk,nkd->nd", w, padded[idx])
            norm = np.linalg.norm(avg, axis=1, keepdims=True)
            if np.any(norm < 1e-12):
                raise ValueError("interpolated value vanishes; samples are sparse or inconsistent")
            return avg / norm

        return cls(rule, n, name, smooth=False)

    @classmethod
    def from_csv(cls, path, radius: float = 0.05) -> "SampledMap":
        """Read samples with columns p0..pn, f0..fn."""
        path = Path(path)
        with path.open() as fh:
            header = next(csv.reader(fh))
        d = len(header) // 2
        if len(header) != 2 * d or header != [f"p{i}" for i in range(d)] + [f"f{i}" for i in range(d)]:
            raise ValueError(f"{path}: expected header p0..pn,f0..fn")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls.from_samples(data[:, :d], data[:, d:], radius, name=path.stem)


def write_map_csv(path, points, values) -> None:
    points, values = np.atleast_2d(points), np.atleast_2d(values)
    d = points.shape[1]
    header = ",".join([f"p{i}" for i in range(d)] + [f"f{i}" for i in range(d)])
    np.savetxt(path, np.column_stack([points, values]), delimiter=",", header=header, comments="", fmt="%.17g")


def identity_map(n: int) -> SampledMap:
    return SampledMap(lambda x: x.copy(), n, "identity")


def antipodal_map(n: int) -> SampledMap:
    return SampledMap(lambda x: -x, n, "antipodal")


def rotation_map(Q) -> SampledMap:
    Q = np.asarray(Q, dtype=float)
    return SampledMap(lambda x: x @ Q.T, Q.shape[0] - 1, "rotation")


def constant_map(n: int, c=None) -> SampledMap:
    c = basis_vector(n) if c is None else sphere_point(np.asarray(c, dtype=float))
    return SampledMap(lambda x: np.broadcast_to(c, x.shape).copy(), n, "constant")


# ---------------------------------------------------------------- grids


@lru_cache(maxsize=4)
def icosphere(level: int = 5) -> QuadratureGrid:
    """Centroids of a subdivided icosahedron with spherical-triangle areas as weights."""
    t = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
             (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    V = sphere_point(np.array(verts, dtype=float))
    F = np.array(faces)
    for _ in range(level):
        edges = np.sort(np.concatenate([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]]), axis=1)
        uniq, inv = np.unique(edges, axis=0, return_inverse=True)
        inv = inv.ravel()
        mids = sphere_point(V[uniq[:, 0]] + V[uniq[:, 1]])
        m = len(F)
        a, b, c = (inv[:m] + len(V), inv[m:2 * m] + len(V), inv[2 * m:] + len(V))
        V = np.vstack([V, mids])
        F = np.concatenate([
            np.column_stack([F[:, 0], a, c]), np.column_stack([F[:, 1], b, a]),
            np.column_stack([F[:, 2], c, b]), np.column_stack([a, b, c]),
        ])
    A, B, C = V[F[:, 0]], V[F[:, 1]], V[F[:, 2]]
    # solid angle of a spherical triangle (Van Oosterom-Strackee)
    num = np.abs(np.einsum("ij,ij->i", A, np.cross(B, C)))
    den = 1.0 + np.einsum("ij,ij->i", A, B) + np.einsum("ij,ij->i", B, C) + np.einsum("ij,ij->i", C, A)
    area = 2.0 * np.arctan2(num, den)
    return QuadratureGrid(sphere_point(A + B + C), area, -1, 2)


def degree_grid(n: int, resolution: int | None = None) -> QuadratureGrid:
    if n == 2:
        return icosphere(5 if resolution is None else resolution)
    if n in (3, 4):
        return grid(n, 40 if resolution is None else resolution)
    raise ValueError(f"degree grids are provided for n in 2..4, not n={n}")


# ---------------------------------------------------------------- degree


def tangent_frames(x: np.ndarray) -> np.ndarray:
    """Orthonormal bases of T_x S^n from Householder reflections, shape (N, n, n+1)."""
    x = np.atleast_2d(x)
    N, d = x.shape
    s = np.where(x[:, 0] < 0, 1.0, -1.0)
    v = x.copy()
    v[:, 0] -= s  # reflection swapping x and s e_0
    H = np.eye(d)[None] - 2.0 * v[:, :, None] * v[:, None, :] / np.einsum("ij,ij->i", v, v)[:, None, None]
    return np.transpose(H[:, :, 1:], (0, 2, 1))


def _jacobian_columns(f: SampledMap, x: np.ndarray, E: np.ndarray, h: float) -> np.ndarray:
    """Central differences of f along the frame vectors, shape (N, n, n+1)."""
    cols = []
    for i in range(E.shape[1]):
        e = E[:, i]
        plus = f(np.cos(h) * x + np.sin(h) * e)
        minus = f(np.cos(h) * x - np.sin(h) * e)
        cols.append((plus - minus) / (2.0 * h))
    return np.stack(cols, axis=1)


def jacobian_determinant(f: SampledMap, x, h: float = 1e-5) -> np.ndarray:
    x = sphere_point(np.atleast_2d(np.asarray(x, dtype=float)))
    E = tangent_frames(x)
    fx = f(x)
    D = _jacobian_columns(f, x, E, h)
    target = np.linalg.det(np.concatenate([fx[:, None, :], D], axis=1))
    source = np.linalg.det(np.concatenate([x[:, None, :], E], axis=1))
    return target * source


@dataclass(frozen=True)
class DegreeReport:
    degree: int
    raw_integral: float
    rounding_gap: float
    method: str
    preimage_degree: int | None = None
    preimages: int | None = None

    @property
    def agrees(self) -> bool | None:
        return None if self.preimage_degree is None else self.preimage_degree == self.degree

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def degree_integral(f: SampledMap, quad: QuadratureGrid | None = None, h: float = 1e-5) -> float:
    quad = degree_grid(f.n) if quad is None else quad
    total = 0.0
    for start in range(0, len(quad), 8192):
        sl = slice(start, start + 8192)
        total += float(quad.weights[sl] @ jacobian_determinant(f, quad.nodes[sl], h))
    return total / sphere_volume(f.n)


def preimage_degree(
    f: SampledMap, y=None, rng=0, quad: QuadratureGrid | None = None, h: float = 1e-6
) -> tuple[int, int]:
    """Signed count of solutions of f(x) = y, found by Newton from grid seeds.

    Returns (signed count, number of distinct preimages).
    """
    rng = np.random.default_rng(rng)
    n = f.n
    y = sphere_point(rng.normal(size=n + 1) if y is None else np.asarray(y, dtype=float))
    quad = degree_grid(n) if quad is None else quad
    fx = f(quad.nodes)
    dist = np.linalg.norm(fx - y, axis=1)
    # seeds: grid points whose image is close to y
    spacing = math.sqrt(4.0 * sphere_volume(n) ** (2.0 / n) / len(quad) ** (2.0 / n))
    x = quad.nodes[dist < max(0.3, 20 * spacing)].copy()
    roots = []
    done = []
    for _ in range(60):
        if x.size == 0:
            break
        res = f(x) - y
        converged = np.linalg.norm(res, axis=1) < 1e-12
        if np.any(converged):
            done.append(x[converged])
            x, res = x[~converged], res[~converged]
            if x.size == 0:
                break
        E = tangent_frames(x)
        D = _jacobian_columns(f, x, E, h)
        M = np.einsum("nid,njd->nij", D, D)
        rhs = -np.einsum("nid,nd->ni", D, res)
        try:
            delta = np.linalg.solve(M + 1e-14 * np.eye(n)[None], rhs[..., None])[..., 0]
        except np.linalg.LinAlgError:
            break
        step = np.linalg.norm(delta, axis=1, keepdims=True)
        delta = np.where(step > 0.2, 0.2 * delta / np.maximum(step, 1e-300), delta)
        x = sphere_point(x + np.einsum("ni,nid->nd", delta, E))
    if x.size:
        done.append(x)
    if done:
        x = np.vstack(done)
        ok = np.linalg.norm(f(x) - y, axis=1) < 1e-9
        for p in x[ok]:
            if all(np.linalg.norm(p - q) > 1e-6 for q in roots):
                roots.append(p)
    if not roots:
        return 0, 0
    roots = np.array(roots)
    signs = np.sign(jacobian_determinant(f, roots, h))
    return int(signs.sum()), len(roots)


def degree(f: SampledMap, n: int | None = None, quad=None, crosscheck: bool | None = None) -> DegreeReport:
    """Brouwer degree by the Jacobian integral, optionally checked by preimages."""
    if n is not None and n != f.n:
        raise ValueError(f"map is on S^{f.n}, not S^{n}")
    raw = degree_integral(f, quad)
    deg = int(round(raw))
    report = DegreeReport(deg, raw, abs(raw - deg), "jacobian-integral")
    if crosscheck or (crosscheck is None and not f.smooth):
        signed, count = preimage_degree(f, quad=quad)
        report = DegreeReport(deg, raw, abs(raw - deg), "jacobian-integral", signed, count)
    if report.rounding_gap >= ACCEPT_GAP:
        raise NonIntegerDegree(report)
    return report


# ---------------------------------------------------------------- equivariance


def _reflect_rows(p: np.ndarray, v: np.ndarray) -> np.ndarray:
    """R_p v for each row pair."""
    return v - 2.0 * np.einsum("ij,ij->i", p, v)[:, None] * p


def equivariance_residual(f: SampledMap, points=None) -> float:
    """max |f(-p) - R_p f(p)| over a test grid."""
    p = degree_grid(f.n, 3 if f.n == 2 else 12).nodes if points is None else np.atleast_2d(points)
    return float(np.max(np.linalg.norm(f(-p) - _reflect_rows(p, f(p)), axis=1)))


def anti_equivariance_residual(f: SampledMap, points=None) -> float:
    """max |f(-p) + R_p f(p)|, the relation met by the lift p -> s(0, p) when eps = -1."""
    p = degree_grid(f.n, 3 if f.n == 2 else 12).nodes if points is None else np.atleast_2d(points)
    return float(np.max(np.linalg.norm(f(-p) + _reflect_rows(p, f(p)), axis=1)))


@dataclass(frozen=True)
class Claim3Report:
    name: str
    n: int
    residual: float
    degree: DegreeReport
    holds: bool


def expected_parity(n: int, deg: int) -> bool:
    """Odd degree on even-dimensional spheres, degree one on odd-dimensional ones."""
    return deg % 2 == 1 if n % 2 == 0 else deg == 1


def claim3_verify(f: SampledMap, n: int | None = None, tol: float = EQUIVARIANCE_TOL) -> Claim3Report:
    n = f.n if n is None else n
    res = equivariance_residual(f)
    if res > tol:
        raise ValueError(f"{f.name}: equivariance residual {res:.2e} exceeds {tol:.0e}")
    rep = degree(f, n)
    return Claim3Report(f.name, n, res, rep, expected_parity(n, rep.degree))


# ---------------------------------------------------------------- corpus


def even_tangent_field(n: int, amplitude: float, rng) -> Callable[[np.ndarray], np.ndarray]:
    """X(p) = P_p(B p (c . p)), a tangent field with X(-p) = X(p)."""
    B = rng.normal(size=(n + 1, n + 1))
    c = rng.normal(size=n + 1)
    return lambda x: amplitude * tangent_project(x, (x @ B.T) * (x @ c)[:, None])


def scalar_lambda_map(n: int, field_rule, lam_rule, name: str) -> SampledMap:
    """normalize(X + lambda x); equivariant whenever X and lambda are even."""

    def rule(x):
        v = field_rule(x) + lam_rule(x)[:, None] * x
        norm = np.linalg.norm(v, axis=1, keepdims=True)
        if np.any(norm < 1e-12):
            raise ValueError(f"{name}: X + lambda x vanishes")
        return v / norm

    return SampledMap(rule, n, name)


def hemisphere_extension(h_rule, n: int, name: str) -> SampledMap:
    """Extend h from {x_n >= 0} by f(-p) = R_p h(p).

    h must agree with an equivariant map on the equator for the result to be
    continuous; the corpus uses perturbations of the identity that vanish to
    second order there.
    """

    def rule(x):
        upper = x[:, -1] >= 0
        out = np.empty_like(x)
        if np.any(upper):
            out[upper] = h_rule(x[upper])
        lower = ~upper
        if np.any(lower):
            p = -x[lower]
            out[lower] = _reflect_rows(p, h_rule(p))
        return out

    return SampledMap(rule, n, name)


def equivariant_sample_maps(n: int, rng=0, count: int = 3) -> list[SampledMap]:
    """Corpus of maps with f(-p) = R_p f(p) on S^n."""
    if n not in (2, 3):
        raise ValueError("the corpus is generated for n = 2, 3")
    rng = np.random.default_rng(rng)
    maps = [identity_map(n), antipodal_map(n)]
    for k in range(count):
        X = even_tangent_field(n, 0.6, rng)
        A = rng.normal(size=(n + 1, n + 1))
        A = 0.3 * (A + A.T)
        maps.append(scalar_lambda_map(n, X, lambda x, A=A: 1.0 + np.einsum("ij,jk,ik->i", x, A, x) / 3.0,
                                      f"identity+X[{k}]"))
        maps.append(scalar_lambda_map(n, X, lambda x, A=A: -1.0 - np.einsum("ij,jk,ik->i", x, A, x) / 3.0,
                                      f"antipodal+X[{k}]"))
    # lambda changes sign; X = P_x(e_2) keeps X + lambda x away from zero
    e2 = basis_vector(n, 1)
    maps.append(scalar_lambda_map(
        n, lambda x: tangent_project(x, np.broadcast_to(e2, x.shape)),
        lambda x: 2.0 * x[:, 0] ** 2 - 0.5, "sign-changing-lambda",
    ))
    for k in range(count):
        U = rng.normal(size=(n + 1, n + 1))
        amp = 0.3 + 0.3 * k

        def h(x, U=U, amp=amp):
            return sphere_point(x + amp * (x[:, -1:] ** 2) * np.tanh(x @ U.T))

        maps.append(hemisphere_extension(h, n, f"hemisphere[{k}]"))
    Q = random_rotation(n, rng)
    maps += [m.conjugate(Q) for m in maps[2:4]]
    return maps


# ---------------------------------------------------------------- lift map


def lift_map_samples(g_measure, points, r: float = 0.0, anchor_r: float = -0.999, steps: int = 12, **kw):
    """s(r, p) at each sample p, continued in r from s = -e_1 at anchor_r.

    Returns (values, status) where status[i] is "ok" or "multiple" when a
    multiple measure was met on the way.
    """
    from .quadform import MultiplicityEncountered, lift_path

    points = sphere_point(np.atleast_2d(points))
    r_grid = np.linspace(anchor_r, r, steps)
    values = np.full(points.shape, np.nan)
    status = []
    for i, p in enumerate(points):
        try:
            path = lift_path(g_measure, p, r_grid, **kw)
        except MultiplicityEncountered:
            status.append("multiple")
            continue
        values[i] = path.samples[-1].s
        status.append("ok")
    return values, status
