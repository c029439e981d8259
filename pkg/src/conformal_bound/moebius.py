"""Conformal maps of the closed unit ball: the d_xi family, hyperplane
reflections and the conformal reflections through cap boundaries.

All functions are vectorized: points are arrays of shape (..., n + 1) and the
ball parameter ``xi`` is a single vector of shape (n + 1,).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SPHERE_TOL = 1e-9
CAP_LIMIT = 1.0 - 1e-6


class MoebiusError(ValueError):
    """Raised when a map is evaluated outside its valid domain."""


def sphere_point(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise MoebiusError("zero vector has no direction")
    return v / norm


def ball_point(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if np.linalg.norm(v) >= 1.0:
        raise MoebiusError(f"|xi| = {np.linalg.norm(v):.3g} is not inside the unit ball")
    return v


def basis_vector(n: int, i: int = 0) -> np.ndarray:
    """Unit vector e_{i+1} of R^{n+1}; index 0 is the axis written e_1 in the docs."""
    e = np.zeros(n + 1)
    e[i] = 1.0
    return e


def _resnap(x_in: np.ndarray, y: np.ndarray) -> np.ndarray:
    # keep sphere points on the sphere; ball points are left alone
    on_sphere = np.abs(np.linalg.norm(x_in, axis=-1) - 1.0) < SPHERE_TOL
    if np.any(on_sphere):
        y = np.array(y, copy=True)
        y[on_sphere] /= np.linalg.norm(y[on_sphere], axis=-1, keepdims=True)
    return y


def moebius(xi, x) -> np.ndarray:
    """d_xi(x) = ((1-|xi|^2) x + (1 + 2 xi.x + |x|^2) xi) / (1 + 2 xi.x + |x|^2 |xi|^2).

    d_0 is the identity, d_{-xi} inverts d_xi and d_xi(0) = xi.
    """
    xi = np.asarray(xi, dtype=float)
    x = np.asarray(x, dtype=float)
    xx = np.sum(x * x, axis=-1, keepdims=True)
    xd = x @ xi
    xd = xd[..., None]
    nxi = float(xi @ xi)
    den = 1.0 + 2.0 * xd + xx * nxi
    if np.any(np.abs(den) < 1e-14):
        raise MoebiusError("near-singular denominator in d_xi")
    y = ((1.0 - nxi) * x + (1.0 + 2.0 * xd + xx) * xi) / den
    return _resnap(x, y)


def moebius_jacobian(xi, x) -> np.ndarray:
    """Ambient Jacobian of d_xi at x, shape (..., n+1, n+1)."""
    xi = np.asarray(xi, dtype=float)
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    xx = np.sum(x * x, axis=-1)[..., None]
    xd = (x @ xi)[..., None]
    nxi = float(xi @ xi)
    num = (1.0 - nxi) * x + (1.0 + 2.0 * xd + xx) * xi
    den = (1.0 + 2.0 * xd + xx * nxi)[..., None]
    dnum = (1.0 - nxi) * np.eye(d) + xi[:, None] * (2.0 * xi + 2.0 * x)[..., None, :]
    dden = 2.0 * xi + 2.0 * nxi * x
    return (dnum - num[..., :, None] * dden[..., None, :] / den) / den


def conformal_factor(xi, x) -> np.ndarray:
    """Stretch factor of d_xi on the unit sphere: (d_xi)^* g0 = factor^2 g0."""
    xi = np.asarray(xi, dtype=float)
    x = np.asarray(x, dtype=float)
    nxi = float(xi @ xi)
    return (1.0 - nxi) / (1.0 + 2.0 * (x @ xi) + nxi)


def reflection(p, x) -> np.ndarray:
    """R_p(x) = x - 2 (p.x) p."""
    p = np.asarray(p, dtype=float)
    x = np.asarray(x, dtype=float)
    return x - 2.0 * (x @ p)[..., None] * p


def reflection_matrix(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return np.eye(p.size) - 2.0 * np.outer(p, p)


def tangent_project(x, v) -> np.ndarray:
    """Project ambient vectors v onto the tangent spaces at sphere points x."""
    return v - np.sum(v * x, axis=-1, keepdims=True) * x


@dataclass(frozen=True)
class Cap:
    """The cap a_{r,p} = d_{rp}({x : x.p > 0}).

    Equivalently the latitude cap {x : x.p > 2r / (1 + r^2)}: r -> 1 shrinks
    it to the point p, r -> -1 grows it to the whole sphere.
    """

    r: float
    p: np.ndarray = field(repr=False)

    def __post_init__(self):
        r = float(self.r)
        if not abs(r) <= CAP_LIMIT:
            raise MoebiusError(f"cap parameter r={r} outside [-{CAP_LIMIT}, {CAP_LIMIT}]")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "p", sphere_point(self.p))

    @property
    def n(self) -> int:
        return self.p.size - 1

    @property
    def center(self) -> np.ndarray:
        """The ball point r p defining the cap."""
        return self.r * self.p

    @property
    def height(self) -> float:
        """Boundary latitude: x is in the cap iff x.p > height."""
        return 2.0 * self.r / (1.0 + self.r * self.r)

    def complement(self) -> "Cap":
        return Cap(-self.r, -self.p)

    def margin(self, x) -> np.ndarray:
        """Signed membership margin d_{-rp}(x).p; positive inside the cap."""
        return moebius(-self.center, x) @ self.p

    def contains(self, x) -> np.ndarray:
        return self.margin(x) > 0.0

    def reflect(self, x) -> np.ndarray:
        """tau_a = d_{rp} o R_p o d_{-rp}; an involution fixing the boundary."""
        c = self.center
        return moebius(c, reflection(self.p, moebius(-c, x)))

    def reflect_jacobian(self, x) -> np.ndarray:
        c = self.center
        y = moebius(-c, x)
        z = reflection(self.p, y)
        return moebius_jacobian(c, z) @ reflection_matrix(self.p) @ moebius_jacobian(-c, x)

    def boundary_points(self, count: int, rng=None) -> np.ndarray:
        """Random points of the boundary sphere of the cap."""
        rng = np.random.default_rng(rng)
        v = rng.normal(size=(count, self.n + 1))
        v = tangent_project(np.broadcast_to(self.p, v.shape), v)
        v /= np.linalg.norm(v, axis=-1, keepdims=True)
        h = self.height
        return h * self.p + np.sqrt(1.0 - h * h) * v


def complement(a: Cap) -> Cap:
    return a.complement()


def cap_contains(a: Cap, x) -> np.ndarray:
    return a.contains(x)


def cap_reflection(a: Cap, x) -> np.ndarray:
    return a.reflect(x)


def moebius_apply(xi, x) -> np.ndarray:
    return moebius(xi, x)


def orthogonal_part(xi_star, a: Cap, xi) -> np.ndarray:
    """Matrix of d_{xi*} o tau_a o d_{-xi}.

    When xi* is the renormalization point of the complementary cap this map
    fixes the origin, hence is orthogonal; its columns are the images of the
    standard basis vectors.
    """
    d = np.asarray(xi).size
    return moebius(xi_star, a.reflect(moebius(-np.asarray(xi), np.eye(d)))).T


def random_rotation(n: int, rng=None) -> np.ndarray:
    """Haar-random element of SO(n+1)."""
    rng = np.random.default_rng(rng)
    q, r = np.linalg.qr(rng.normal(size=(n + 1, n + 1)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
