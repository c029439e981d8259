"""Closed-form constants for the second conformal eigenvalue bound on spheres."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, roots_legendre


def _check_dimension(n: int) -> int:
    if int(n) != n or n < 2:
        raise ValueError(f"dimension must be an integer >= 2, got {n!r}")
    return int(n)


def _sphere_volume(n: int) -> float:
    # valid for any n >= 0; the public wrapper enforces n >= 2
    return 2.0 * math.pi ** ((n + 1) / 2) / math.gamma((n + 1) / 2)


def sphere_volume(n: int) -> float:
    """Volume of the unit n-sphere in R^{n+1}."""
    return _sphere_volume(_check_dimension(n))


def k_constant(n: int) -> float:
    """The dimensional constant K_n multiplying the conjectured bound.

    Evaluated in log-space so that large n (hundreds) stays accurate.
    """
    n = _check_dimension(n)
    log_ratio = gammaln(n) + gammaln((n + 1) / 2) - gammaln(n + 0.5) - gammaln(n / 2)
    return (n + 1) / n * math.exp(2.0 / n * log_ratio)


def conjecture_bound(n: int) -> float:
    """n (2 sigma_n)^{2/n}: the value of two disjoint round spheres."""
    n = _check_dimension(n)
    return n * (2.0 * sphere_volume(n)) ** (2.0 / n)


def theorem_bound(n: int) -> float:
    """K_n n (2 sigma_n)^{2/n}, the proven upper bound for lambda_2 Vol^{2/n}."""
    return k_constant(n) * conjecture_bound(n)


def grad_norm_integral(n: int, nodes: int | None = None) -> float:
    """Integral of |grad X_s|^n over the round sphere for a unit vector s.

    On the sphere |grad X_s|^2 = 1 - (s.x)^2, so the integrand depends on the
    height t = s.x only and the integral reduces to

        sigma_{n-1} * int_{-1}^{1} (1 - t^2)^{n/2} (1 - t^2)^{(n-2)/2} dt,

    a polynomial of degree 2n - 2 that Gauss-Legendre integrates exactly.
    """
    n = _check_dimension(n)
    m = nodes if nodes is not None else n
    t, w = roots_legendre(m)
    return _sphere_volume(n - 1) * float(np.sum(w * (1.0 - t * t) ** (n - 1)))


def gradient_constant(n: int) -> float:
    """2^{2/n} (n+1) (int |grad X_s|^n)^{2/n}.

    Equals theorem_bound(n); kept separate so the Gamma-function identity can
    be cross-checked against quadrature.
    """
    n = _check_dimension(n)
    return 2.0 ** (2.0 / n) * (n + 1) * grad_norm_integral(n) ** (2.0 / n)


@dataclass(frozen=True)
class BoundConstants:
    n: int
    sigma_n: float
    k_n: float
    theorem_bound: float
    conjecture_bound: float

    @classmethod
    def for_dimension(cls, n: int) -> "BoundConstants":
        n = _check_dimension(n)
        return cls(
            n=n,
            sigma_n=sphere_volume(n),
            k_n=k_constant(n),
            theorem_bound=theorem_bound(n),
            conjecture_bound=conjecture_bound(n),
        )
