"""Laplace-Beltrami spectra of conformal metrics on S^n by Galerkin projection
onto spherical harmonics, and the normalization of a metric used by the
eigenvalue certificate.

For g = e^{2w} g0 the Rayleigh quotient of u is

    int |grad_0 u|^2 e^{(n-2) w} dv_0  /  int u^2 e^{n w} dv_0,

so the stiffness and mass matrices only need the density e^{n w} on a round
quadrature grid.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.linalg
from scipy.special import eval_gegenbauer

from .measure import DiscreteMeasure, QuadratureGrid, cap_grid, grid, hersch_renormalize
from .metric import ConformalMetric, harmonic_dimension, space_dimension
from .moebius import Cap, basis_vector, conformal_factor, moebius
from .quadform import MULTIPLICITY_TOL, MaximalDirection, gram, maximal_direction

DEFAULT_L = {2: 15, 3: 10}
CHUNK = 4096


class DiscretizationError(RuntimeError):
    pass


# ---------------------------------------------------------------- basis


class GalerkinBasis:
    """Orthonormal real harmonics of degree <= L built from zonal functions.

    Degree l is spanned by the Gegenbauer zonals C_l^{(n-1)/2}(x . y_k) for
    enough scattered poles y_k; a weighted eigen-decomposition of their Gram
    matrix picks an orthonormal basis of the (exactly known) dimension.
    Values and tangential gradients are then available in closed form.
    """

    def __init__(self, n: int, L: int, seed: int = 20240611):
        self.n, self.L = n, L
        self.alpha = (n - 1) / 2.0
        quad = grid(n, max(2 * L, 2))
        rng = np.random.default_rng(seed)
        self.degrees = []
        self._poles, self._transforms = [], []
        for l in range(L + 1):
            h = harmonic_dimension(n, l)
            m = 1 if l == 0 else 2 * h + 4
            y = rng.normal(size=(m, n + 1))
            y /= np.linalg.norm(y, axis=1, keepdims=True)
            Z = self._zonal(l, quad.nodes @ y.T)
            G = (Z * quad.weights[:, None]).T @ Z
            vals, vecs = np.linalg.eigh(G)
            vals, vecs = vals[-h:], vecs[:, -h:]
            if vals[0] < 1e-10 * vals[-1]:
                raise DiscretizationError(f"zonal poles fail to span degree {l}")
            self._poles.append(y)
            self._transforms.append(vecs / np.sqrt(vals))
            self.degrees += [l] * h
        self.degrees = np.array(self.degrees)

    def __len__(self) -> int:
        return self.degrees.size

    def _zonal(self, l, t):
        if l == 0:
            return np.ones_like(t)
        return eval_gegenbauer(l, self.alpha, t)

    def _zonal_prime(self, l, t):
        if l == 0:
            return np.zeros_like(t)
        return 2.0 * self.alpha * eval_gegenbauer(l - 1, self.alpha + 1.0, t)

    def values(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.concatenate(
            [self._zonal(l, x @ y.T) @ T for l, (y, T) in enumerate(zip(self._poles, self._transforms))],
            axis=1,
        )

    def gradients(self, x) -> np.ndarray:
        """Tangential gradients, shape (n+1, N, dim): component first."""
        x = np.atleast_2d(x)
        d = x.shape[1]
        out = []
        for l, (y, T) in enumerate(zip(self._poles, self._transforms)):
            t = x @ y.T
            dz = self._zonal_prime(l, t)
            # grad_x C(x.y) = C'(x.y) (y - (x.y) x)
            radial = (dz * t) @ T
            out.append(np.stack([(dz * y[:, k]) @ T - x[:, k:k + 1] * radial for k in range(d)]))
        return np.concatenate(out, axis=2)


@lru_cache(maxsize=8)
def galerkin_basis(n: int, L: int) -> GalerkinBasis:
    return GalerkinBasis(n, L)


# ---------------------------------------------------------------- spectrum


@dataclass(frozen=True)
class SpectrumReport:
    n: int
    L: int
    eigenvalues: np.ndarray
    volume: float
    grid_order: int

    def invariant(self, k: int) -> float:
        return lambda_invariant(self, k)

    def to_dict(self, ks=(1, 2)) -> dict:
        return {
            "n": self.n,
            "L": self.L,
            "grid_order": self.grid_order,
            "volume": self.volume,
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "Lambda": {str(k): lambda_invariant(self, k) for k in ks if k < self.eigenvalues.size},
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def default_grid_order(n: int, L: int) -> int:
    return 2 * L + (30 if n == 2 else 20)


def galerkin_matrices(g, L: int, quad: QuadratureGrid) -> tuple[np.ndarray, np.ndarray, float]:
    """Stiffness A (weight e^{(n-2)w}), mass B (weight e^{nw}) and Vol_g."""
    n = quad.n
    basis = galerkin_basis(n, L)
    dim = len(basis)
    A = np.zeros((dim, dim))
    B = np.zeros((dim, dim))
    vol = 0.0
    for start in range(0, len(quad), CHUNK):
        x = quad.nodes[start:start + CHUNK]
        w = quad.weights[start:start + CHUNK]
        rho = g.density(x)
        vol += float(w @ rho)
        V = basis.values(x)
        B += (V * (w * rho)[:, None]).T @ V
        wa = w * rho ** ((n - 2) / n)
        Gd = basis.gradients(x)
        for Gk in Gd:
            A += (Gk * wa[:, None]).T @ Gk
    return 0.5 * (A + A.T), 0.5 * (B + B.T), vol


def spectrum(g, L: int | None = None, k_max: int = 9, grid_order: int | None = None) -> SpectrumReport:
    """Lowest k_max + 1 Galerkin eigenvalues of the Laplacian of g."""
    n = g.n
    L = DEFAULT_L.get(n, 8) if L is None else L
    if hasattr(g, "degree") and g.pullback is None and L < g.degree + 2:
        raise ValueError(f"basis degree L={L} must be >= L_w + 2 = {g.degree + 2}")
    dim = space_dimension(n, L)
    if k_max >= dim:
        raise ValueError(f"k_max={k_max} needs more than {dim} basis functions")
    order = default_grid_order(n, L) if grid_order is None else grid_order
    A, B, vol = galerkin_matrices(g, L, grid(n, order))
    try:
        np.linalg.cholesky(B)
    except np.linalg.LinAlgError as exc:
        raise DiscretizationError("mass matrix is not positive definite; refine the grid") from exc
    vals = scipy.linalg.eigh(A, B, eigvals_only=True, subset_by_index=[0, k_max])
    return SpectrumReport(n, L, vals, vol, order)


def lambda_invariant(report: SpectrumReport, k: int) -> float:
    """Lambda_{n,k} = lambda_k Vol^{2/n}, with lambda_0 = 0 and multiplicities repeated."""
    return float(report.eigenvalues[k] * report.volume ** (2.0 / report.n))


# ---------------------------------------------------------------- normalization


@dataclass(frozen=True)
class NormalizedMetric:
    """Volume-one metric isometric to ``base`` with balanced first moments
    and maximal Gram direction along e_1.

    Its volume measure is the pushforward of dv_base / volume by
    S = rotation o d_xi; ``density`` is the round-measure density of that
    pushforward.
    """

    base: ConformalMetric
    xi: np.ndarray
    rotation: np.ndarray
    volume: float
    direction: MaximalDirection = field(repr=False)
    grid_order: int = 40

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def multiple(self) -> bool:
        return self.direction.multiple

    def to_original(self, y) -> np.ndarray:
        return moebius(-self.xi, np.asarray(y) @ self.rotation)

    def from_original(self, x) -> np.ndarray:
        return moebius(self.xi, np.asarray(x)) @ self.rotation.T

    def density(self, y) -> np.ndarray:
        y = np.atleast_2d(y)
        z = y @ self.rotation
        x = moebius(-self.xi, z)
        return self.base.density(x) * conformal_factor(-self.xi, z) ** self.n / self.volume

    def log_factor(self, y) -> np.ndarray:
        return np.log(self.density(y)) / self.n

    def measure(self, quad: QuadratureGrid) -> DiscreteMeasure:
        return DiscreteMeasure(quad.nodes, quad.weights * self.density(quad.nodes))

    def cap_measure(self, a: Cap, **grid_kw) -> DiscreteMeasure:
        quad = cap_grid(a, **grid_kw)
        return DiscreteMeasure(quad.nodes, quad.weights * self.density(quad.nodes))


def normalize(g: ConformalMetric, grid_order: int = 40, tol: float = MULTIPLICITY_TOL) -> NormalizedMetric:
    """Scale to volume one, renormalize by d_xi and rotate the top direction to e_1."""
    quad = grid(g.n, grid_order)
    dens = g.density(quad.nodes)
    vol = float(quad.weights @ dens)
    nu = DiscreteMeasure(quad.nodes, quad.weights * dens / vol)
    rp = hersch_renormalize(nu)
    moved = moebius(rp.xi, nu.points)
    top = maximal_direction(gram(DiscreteMeasure(moved, nu.weights)), tol)
    Q = top.eigenvectors.T.copy()
    if np.linalg.det(Q) < 0:
        Q[-1] = -Q[-1]
    rotated = DiscreteMeasure(moved @ Q.T, nu.weights)
    direction = maximal_direction(gram(rotated), tol)
    return NormalizedMetric(g, rp.xi, Q, vol, direction, grid_order)
