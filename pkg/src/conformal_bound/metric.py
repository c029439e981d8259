"""Conformal metrics g = e^{2w} g0 on S^n and the harmonic basis for w.

Coefficient ordering
--------------------
The log-factor w is expanded in an orthonormal (round L^2) basis of real
spherical harmonics, grouped by degree l = 0, 1, ..., L_w. Inside degree l
the basis is built canonically: the homogeneous monomials x^alpha with
|alpha| = l are listed in descending lexicographic order of alpha, each is
projected onto the harmonic polynomials of degree l, and Gram-Schmidt keeps
the ones that are independent of those already accepted. ``basis_labels``
returns the generating exponent of each basis function. Degree 0 is the
constant 1/sqrt(sigma_n) and degree 1 is sqrt((n+1)/sigma_n) x_i.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.linalg import null_space
from scipy.special import comb, gammaln

from .moebius import conformal_factor


def harmonic_dimension(n: int, l: int) -> int:
    """Dimension of the degree-l spherical harmonics on S^n."""
    if l < 0:
        return 0
    if l == 0:
        return 1
    return int(comb(l + n, n, exact=True) - comb(l + n - 2, n, exact=True))


def space_dimension(n: int, L: int) -> int:
    return sum(harmonic_dimension(n, l) for l in range(L + 1))


def exponents(d: int, l: int) -> np.ndarray:
    """All exponent vectors of length d and total degree l, descending lex order."""
    if d == 1:
        return np.array([[l]])
    rows = []
    for first in range(l, -1, -1):
        for rest in exponents(d - 1, l - first):
            rows.append([first, *rest])
    return np.array(rows, dtype=int)


def sphere_monomial_integral(alpha) -> float:
    """Integral of x^alpha over the unit sphere in R^{len(alpha)}."""
    alpha = np.asarray(alpha)
    if np.any(alpha % 2):
        return 0.0
    b = (alpha + 1) / 2.0
    return 2.0 * math.exp(float(np.sum(gammaln(b)) - gammaln(b.sum())))


@lru_cache(maxsize=None)
def _degree_block(n: int, l: int) -> tuple[np.ndarray, np.ndarray, tuple]:
    d = n + 1
    ex = exponents(d, l)
    m = len(ex)
    if l < 2:
        null = np.eye(m)
    else:
        lower = {tuple(a): i for i, a in enumerate(exponents(d, l - 2))}
        lap = np.zeros((len(lower), m))
        for j, a in enumerate(ex):
            for i in range(d):
                if a[i] >= 2:
                    b = a.copy()
                    b[i] -= 2
                    lap[lower[tuple(b)], j] += a[i] * (a[i] - 1)
        null = null_space(lap)
    gram = np.array([[sphere_monomial_integral(a + b) for b in ex] for a in ex])
    proj = null @ np.linalg.solve(null.T @ gram @ null, null.T @ gram)
    h = harmonic_dimension(n, l)
    accepted, labels = [], []
    for j in range(m):
        v = proj[:, j].copy()
        scale = math.sqrt(max(v @ gram @ v, 0.0))
        for u in accepted:
            v -= (u @ gram @ v) * u
        norm = math.sqrt(max(v @ gram @ v, 0.0))
        if scale == 0.0 or norm < 1e-8 * scale:
            continue
        accepted.append(v / norm)
        labels.append(tuple(int(k) for k in ex[j]))
        if len(accepted) == h:
            break
    coef = np.array(accepted)
    coef[np.abs(coef) < 1e-15] = 0.0
    return ex, coef, tuple(labels)


def basis_labels(n: int, L: int) -> list[tuple[int, tuple]]:
    return [(l, lab) for l in range(L + 1) for lab in _degree_block(n, l)[2]]


def harmonic_basis(n: int, L: int, x) -> np.ndarray:
    """Values of the orthonormal basis of degree <= L at points x, shape (N, dim)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d = x.shape[1]
    powers = np.ones((max(L, 0) + 1, x.shape[0], d))
    for k in range(1, L + 1):
        powers[k] = powers[k - 1] * x
    cols = []
    for l in range(L + 1):
        ex, coef, _ = _degree_block(n, l)
        mono = powers[ex[:, 0], :, 0]
        for i in range(1, d):
            mono = mono * powers[ex[:, i], :, i]
        cols.append(mono.T @ coef.T)
    return np.concatenate(cols, axis=1)


@dataclass(frozen=True)
class ConformalMetric:
    """g = e^{2w} g0 with w = sum_k coeffs[k] Y_k (+ log of a Moebius stretch).

    ``pullback`` holds an optional ball point xi; the metric then also
    carries the factor of (d_xi)^* g0, which makes it isometric to g0 when
    the harmonic part vanishes.
    """

    n: int
    coeffs: np.ndarray = field(repr=False)
    pullback: np.ndarray | None = None

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")
        c = np.asarray(self.coeffs, dtype=float).ravel()
        L = 0
        while space_dimension(self.n, L) < c.size:
            L += 1
        if space_dimension(self.n, L) != c.size:
            raise ValueError(
                f"{c.size} coefficients do not fill the harmonics of degree <= {L} on S^{self.n}"
            )
        object.__setattr__(self, "coeffs", c)
        if self.pullback is not None:
            xi = np.asarray(self.pullback, dtype=float)
            if xi.shape != (self.n + 1,) or np.linalg.norm(xi) >= 1:
                raise ValueError("pullback point must be inside the unit ball of R^{n+1}")
            object.__setattr__(self, "pullback", xi)

    @property
    def degree(self) -> int:
        L = 0
        while space_dimension(self.n, L) < self.coeffs.size:
            L += 1
        return L

    def log_factor(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        w = harmonic_basis(self.n, self.degree, x) @ self.coeffs
        if self.pullback is not None:
            w = w + np.log(conformal_factor(self.pullback, x))
        return w

    def density(self, x) -> np.ndarray:
        """dv_g / dv_0 = e^{n w}."""
        return np.exp(self.n * self.log_factor(x))

    # -- constructors / transforms

    @classmethod
    def round(cls, n: int) -> "ConformalMetric":
        return cls(n, np.zeros(1))

    @classmethod
    def from_pullback(cls, xi) -> "ConformalMetric":
        xi = np.asarray(xi, dtype=float)
        return cls(xi.size - 1, np.zeros(1), xi)

    @classmethod
    def random(cls, n: int, degree: int = 3, amplitude: float = 0.3, rng=None) -> "ConformalMetric":
        """Coefficients i.i.d. uniform in [-amplitude, amplitude] up to the given degree."""
        rng = np.random.default_rng(rng)
        return cls(n, rng.uniform(-amplitude, amplitude, space_dimension(n, degree)))

    def scaled(self, c: float) -> "ConformalMetric":
        """The metric e^{2c} g."""
        from .constants import _sphere_volume

        coeffs = self.coeffs.copy()
        coeffs[0] += c * math.sqrt(_sphere_volume(self.n))
        return ConformalMetric(self.n, coeffs, self.pullback)

    def rotated(self, Q) -> "ConformalMetric":
        """Metric whose factor is w o Q^T (the pushforward by the rotation Q)."""
        from .measure import grid

        Q = np.asarray(Q, dtype=float)
        L = self.degree
        quad = grid(self.n, max(2 * L, 1))
        vals = harmonic_basis(self.n, L, quad.nodes @ Q) @ self.coeffs
        coeffs = quad.integrate(vals[:, None] * harmonic_basis(self.n, L, quad.nodes))
        xi = None if self.pullback is None else Q @ self.pullback
        return ConformalMetric(self.n, coeffs, xi)

    # -- JSON

    def to_dict(self) -> dict:
        out = {
            "n": self.n,
            "L_w": self.degree,
            "ordering": "degree blocks, descending-lex monomial projection (see basis_labels)",
            "coeffs": [float(c) for c in self.coeffs],
        }
        if self.pullback is not None:
            out["pullback"] = [float(v) for v in self.pullback]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ConformalMetric":
        n = int(data["n"])
        coeffs = np.asarray(data.get("coeffs", [0.0]), dtype=float)
        if "L_w" in data and space_dimension(n, int(data["L_w"])) != coeffs.size:
            raise ValueError("L_w does not match the number of coefficients")
        xi = data.get("pullback")
        w = data.get("w")
        if isinstance(w, str):
            if not w.startswith("pullback:"):
                raise ValueError(f"unknown closed-form factor {w!r}")
            xi = [float(v) for v in w.split(":", 1)[1].split(",")]
        return cls(n, coeffs, None if xi is None else np.asarray(xi, dtype=float))

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_json(cls, path) -> "ConformalMetric":
        return cls.from_dict(json.loads(Path(path).read_text()))
