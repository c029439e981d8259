"""Discrete measures on the sphere, product quadrature, cap lifting and
Hersch renormalization.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .moebius import Cap, MoebiusError, moebius, sphere_point

log = logging.getLogger(__name__)

BOUNDARY_MARGIN = 1e-12
ESCAPE_RADIUS = 1.0 - 1e-9


class NonConvergence(RuntimeError):
    pass


class BoundaryEscape(RuntimeError):
    """The renormalization point left every compact part of the ball."""


# ---------------------------------------------------------------- quadrature


@dataclass(frozen=True)
class QuadratureGrid:
    """Nodes on S^n with weights for the round measure."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int
    n: int

    def __len__(self) -> int:
        return self.weights.size

    def integrate(self, values) -> float | np.ndarray:
        return np.tensordot(self.weights, np.asarray(values), axes=(0, 0))

    def as_measure(self) -> "DiscreteMeasure":
        return DiscreteMeasure(self.nodes, self.weights)


@lru_cache(maxsize=None)
def _product_rule(n: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    # S^n = {t e_0 + sqrt(1 - t^2) y : y in S^{n-1}} with weight (1-t^2)^{(n-2)/2} dt
    if n == 1:
        m = order + 1
        phi = 2.0 * np.pi * np.arange(m) / m
        return np.column_stack([np.cos(phi), np.sin(phi)]), np.full(m, 2.0 * np.pi / m)
    base_x, base_w = _product_rule(n - 1, order)
    m = order // 2 + 1
    a = (n - 2) / 2.0
    t, wt = roots_jacobi(m, a, a) if a else roots_legendre(m)
    s = np.sqrt(1.0 - t * t)
    nodes = np.concatenate(
        [np.column_stack([np.full(len(base_w), ti), si * base_x]) for ti, si in zip(t, s)]
    )
    weights = np.outer(wt, base_w).ravel()
    return nodes, weights


def grid(n: int, order: int) -> QuadratureGrid:
    """Product Gauss rule on S^n, exact for polynomials of degree <= order.

    Supported for n = 2, 3 (the solver dimensions) and n = 4 (constant checks).
    """
    if n not in (2, 3, 4):
        raise ValueError(f"quadrature grids are provided for n in 2..4, not n={n}")
    if order < 1:
        raise ValueError("order must be >= 1")
    nodes, weights = _product_rule(n, int(order))
    return QuadratureGrid(nodes.copy(), weights.copy(), int(order), n)


def _frame(p: np.ndarray) -> np.ndarray:
    """Orthogonal matrix whose first column is p."""
    d = p.size
    q, _ = np.linalg.qr(np.column_stack([p, np.eye(d)]))
    q = q[:, :d]
    if q[:, 0] @ p < 0:
        q = -q
    return q


@dataclass(frozen=True)
class CapGrid(QuadratureGrid):
    """Round-measure quadrature split along the boundary of a cap.

    The integrand of cap-defined functions is smooth on each side of the
    boundary, so each side gets its own Gauss rule in the polar angle.
    """

    inside: np.ndarray = field(default=None, repr=False)
    cap: Cap | None = None


def cap_grid(a: Cap, polar_nodes: int = 40, base_order: int = 63) -> CapGrid:
    """Quadrature on S^n adapted to the cap a (polar axis along a.p)."""
    n = a.n
    base_x, base_w = _product_rule(n - 1, base_order)
    theta_c = float(np.arccos(np.clip(a.height, -1.0, 1.0)))
    g, gw = roots_legendre(polar_nodes)
    thetas, tws = [], []
    for lo, hi in ((0.0, theta_c), (theta_c, np.pi)):
        th = 0.5 * (hi - lo) * (g + 1.0) + lo
        thetas.append(th)
        tws.append(0.5 * (hi - lo) * gw * np.sin(th) ** (n - 1))
    th = np.concatenate(thetas)
    tw = np.concatenate(tws)
    local = np.concatenate(
        [np.column_stack([np.full(len(base_w), np.cos(t)), np.sin(t) * base_x]) for t in th]
    )
    weights = np.outer(tw, base_w).ravel()
    nodes = local @ _frame(a.p).T
    inside = np.repeat(np.arange(th.size) < polar_nodes, len(base_w))
    return CapGrid(nodes, weights, -1, n, inside=inside, cap=a)


# ---------------------------------------------------------------- measures


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finite atomic measure sum_i w_i delta_{x_i} on S^n."""

    points: np.ndarray
    weights: np.ndarray
    boundary_hits: int = 0

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float).ravel()
        if pts.shape[0] != w.size:
            raise ValueError("points and weights differ in length")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if not w.sum() > 0:
            raise ValueError("measure has zero mass")
        norms = np.linalg.norm(pts, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-8):
            raise ValueError("atoms must lie on the unit sphere")
        object.__setattr__(self, "points", pts / norms[:, None])
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.points.shape[1] - 1

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def integrate(self, values) -> float | np.ndarray:
        return np.tensordot(self.weights, np.asarray(values), axes=(0, 0))

    def first_moment(self) -> np.ndarray:
        return self.weights @ self.points

    def to_csv(self, path) -> None:
        d = self.points.shape[1]
        header = ",".join([f"x{i}" for i in range(d)] + ["weight"])
        np.savetxt(
            path, np.column_stack([self.points, self.weights]),
            delimiter=",", header=header, comments="", fmt="%.17g",
        )

    @classmethod
    def from_csv(cls, path) -> "DiscreteMeasure":
        path = Path(path)
        with path.open() as fh:
            header = fh.readline().strip().split(",")
        if not header or header[-1] != "weight" or not all(
            h == f"x{i}" for i, h in enumerate(header[:-1])
        ):
            raise ValueError(f"{path}: expected header x0,...,xn,weight")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, :-1], data[:, -1])


def metric_measure(g, quad: QuadratureGrid) -> DiscreteMeasure:
    """dv_g discretized on a round-measure quadrature: weights w_i e^{n w(x_i)}."""
    return DiscreteMeasure(quad.nodes, quad.weights * g.density(quad.nodes))


def pushforward(nu: DiscreteMeasure, T: Callable | np.ndarray) -> DiscreteMeasure:
    """Move atoms by T; a vector argument is read as the ball point of d_xi."""
    if callable(T):
        pts = T(nu.points)
    else:
        pts = moebius(T, nu.points)
    return DiscreteMeasure(sphere_point(pts), nu.weights, nu.boundary_hits)


def lift(nu: DiscreteMeasure, a: Cap) -> DiscreteMeasure:
    """Fold the measure into the cap: atoms of a* move by tau_a, weights kept."""
    margin = a.margin(nu.points)
    on_boundary = np.abs(margin) < BOUNDARY_MARGIN
    outside = (margin < 0) & ~on_boundary
    hits = int(on_boundary.sum())
    if hits:
        log.warning("%d atoms on the cap boundary assigned to the cap", hits)
    pts = nu.points.copy()
    if np.any(outside):
        pts[outside] = a.reflect(pts[outside])
    return DiscreteMeasure(pts, nu.weights, nu.boundary_hits + hits)


# ---------------------------------------------------------------- Hersch


@dataclass(frozen=True)
class RenormalizationPoint:
    xi: np.ndarray
    residual: float
    iterations: int


def balance_residual(nu: DiscreteMeasure, xi) -> float:
    """|int d_xi(x) dnu| / mass(nu)."""
    return float(np.linalg.norm(nu.weights @ moebius(xi, nu.points)) / nu.mass)


def hersch_renormalize(
    nu: DiscreteMeasure,
    tol: float = 1e-10,
    max_iter: int = 200,
    start=None,
) -> RenormalizationPoint:
    """Find xi in the open ball with int d_xi(x) dnu(x) = 0.

    Newton iteration in the group: with y = d_xi(x) the pushed atoms, a
    correction d_eta has Jacobian 2 int (I - y y^T) dnu at eta = 0, and the
    composite d_eta o d_xi is again d_{xi'} up to a rotation, with
    xi' = -d_{-xi}(-eta). Steps are damped by backtracking on the residual;
    if that stalls, a half step toward the center of mass is taken instead.
    """
    d = nu.points.shape[1]
    mass = nu.mass
    xi = np.zeros(d) if start is None else np.asarray(start, dtype=float).copy()
    if np.linalg.norm(xi) >= 1.0:
        raise ValueError("start point must lie inside the ball")

    def state(x):
        try:
            y = moebius(x, nu.points)
        except MoebiusError as exc:
            raise BoundaryEscape(f"|xi| = {np.linalg.norm(x):.12f}: {exc}") from exc
        m = nu.weights @ y / mass
        return y, m, float(np.linalg.norm(m))

    y, m, res = state(xi)
    for it in range(max_iter + 1):
        if res <= tol:
            return RenormalizationPoint(xi, res, it)
        if it == max_iter:
            break
        jac = 2.0 * (np.eye(d) - (nu.weights[:, None] * y).T @ y / mass)
        try:
            eta = -np.linalg.solve(jac, m)
        except np.linalg.LinAlgError:
            eta = -0.5 * m
        step = 1.0
        accepted = False
        for _ in range(40):
            e = step * eta
            if np.linalg.norm(e) < 0.999:
                cand = -moebius(-xi, -e)
                if np.linalg.norm(cand) < ESCAPE_RADIUS:
                    try:
                        yc, mc, rc = state(cand)
                    except BoundaryEscape:
                        rc = np.inf  # trial point too close to an atom's antipode
                    if rc < (1.0 - 1e-4 * step) * res:
                        accepted = True
                        break
            step *= 0.5
        if not accepted:
            # fixed-point fallback: push mass away from its center
            cand = -moebius(-xi, 0.5 * m)
            yc, mc, rc = state(cand)
        if np.linalg.norm(cand) >= ESCAPE_RADIUS:
            raise BoundaryEscape(f"|xi| = {np.linalg.norm(cand):.12f} after {it + 1} iterations")
        xi, y, m, res = cand, yc, mc, rc
    raise NonConvergence(f"residual {res:.3e} > {tol:.1e} after {max_iter} iterations")
