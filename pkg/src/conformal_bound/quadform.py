"""Gram forms of measures, maximal directions, and the continuous lift of
the maximal direction along families of caps.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence, Union

import numpy as np

from .measure import (
    DiscreteMeasure,
    RenormalizationPoint,
    hersch_renormalize,
    lift,
    pushforward,
)
from .moebius import Cap, basis_vector, orthogonal_part, sphere_point

log = logging.getLogger(__name__)

MULTIPLICITY_TOL = 1e-4

MeasureSource = Union[DiscreteMeasure, Callable[[Cap], DiscreteMeasure]]


class MultiplicityEncountered(RuntimeError):
    """A measure along the path has a repeated top eigenvalue.

    Not a failure of the computation: a multiple measure supplies its own
    two-dimensional test space.
    """

    def __init__(self, r: float, family: "CapFamily", path: "LiftPath"):
        super().__init__(f"multiple measure at r = {r:.6f} (gap {family.direction.gap:.3e})")
        self.r = r
        self.family = family
        self.path = path


def gram(nu: DiscreteMeasure) -> np.ndarray:
    """Q_ij = int x_i x_j dnu."""
    return (nu.points * nu.weights[:, None]).T @ nu.points


@dataclass(frozen=True)
class MaximalDirection:
    s: np.ndarray
    value: float
    gap: float
    multiple: bool
    eigenvalues: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)

    @property
    def top_space(self) -> np.ndarray:
        """The two leading eigenvectors as columns."""
        return self.eigenvectors[:, :2]


def maximal_direction(Q, tol: float = MULTIPLICITY_TOL) -> MaximalDirection:
    """Top eigenpair of a symmetric form; multiple iff the relative gap is <= tol."""
    Q = np.asarray(Q, dtype=float)
    vals, vecs = np.linalg.eigh(0.5 * (Q + Q.T))
    vals, vecs = vals[::-1], vecs[:, ::-1]
    gap = float(vals[0] - vals[1])
    multiple = gap <= tol * abs(vals[0])
    return MaximalDirection(vecs[:, 0].copy(), float(vals[0]), gap, bool(multiple), vals, vecs)


class CapFamily(NamedTuple):
    renorm: RenormalizationPoint
    measure: DiscreteMeasure
    direction: MaximalDirection


def _measure_for(source: MeasureSource, a: Cap) -> DiscreteMeasure:
    return source(a) if callable(source) else source


def renormalized_family(
    g_measure: MeasureSource, a: Cap, tol: float = MULTIPLICITY_TOL, **hersch_kw
) -> CapFamily:
    """Lift dv_g into the cap, renormalize it and find the maximal direction."""
    mu = lift(_measure_for(g_measure, a), a)
    rp = hersch_renormalize(mu, **hersch_kw)
    nu_a = pushforward(mu, rp.xi)
    return CapFamily(rp, nu_a, maximal_direction(gram(nu_a), tol))


@dataclass(frozen=True)
class Claim1Report:
    xi_residual: float
    direction_residual: float
    orthogonality_defect: float
    R_a: np.ndarray = field(repr=False)
    family: CapFamily = field(repr=False)
    family_star: CapFamily = field(repr=False)


def claim1_check(g_measure: MeasureSource, a: Cap, **kw) -> Claim1Report:
    """Residuals of xi(a*) = -tau_a(-xi(a)) and [s(a*)] = R_a [s(a)]."""
    fam = renormalized_family(g_measure, a, **kw)
    fam_star = renormalized_family(g_measure, a.complement(), **kw)
    xi, xi_star = fam.renorm.xi, fam_star.renorm.xi
    xi_res = float(np.linalg.norm(xi_star + a.reflect(-xi)))
    R = orthogonal_part(xi_star, a, xi)
    dot = float(fam_star.direction.s @ (R @ fam.direction.s))
    ortho = float(np.abs(R.T @ R - np.eye(R.shape[0])).max())
    return Claim1Report(xi_res, 1.0 - abs(dot), ortho, R, fam, fam_star)


# ---------------------------------------------------------------- lifts


@dataclass(frozen=True)
class LiftSample:
    r: float
    s: np.ndarray
    gap: float
    xi: np.ndarray
    value: float


@dataclass
class LiftPath:
    p: np.ndarray
    samples: list = field(default_factory=list)

    @property
    def r(self) -> np.ndarray:
        return np.array([smp.r for smp in self.samples])

    @property
    def s(self) -> np.ndarray:
        return np.array([smp.s for smp in self.samples])

    def at(self, r: float) -> LiftSample:
        i = int(np.argmin(np.abs(self.r - r)))
        if abs(self.samples[i].r - r) > 1e-12:
            raise KeyError(f"r = {r} not sampled")
        return self.samples[i]

    def continuity(self) -> np.ndarray:
        s = self.s
        return np.sum(s[1:] * s[:-1], axis=1)

    def to_csv(self, path, extra: dict | None = None) -> None:
        d = self.p.size
        extra = extra or {}
        header = ["r"] + [f"s{i}" for i in range(d)] + ["gap"] + [f"xi{i}" for i in range(d)]
        header += list(extra)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k, smp in enumerate(self.samples):
                row = [smp.r, *smp.s, smp.gap, *smp.xi] + [extra[c][k] for c in extra]
                w.writerow([f"{v:.17g}" if not isinstance(v, str) else v for v in row])


def _oriented(s: np.ndarray, ref: np.ndarray) -> np.ndarray:
    return s if s @ ref >= 0 else -s


def lift_path(
    g_measure: MeasureSource,
    p,
    r_grid: Sequence[float],
    anchor=None,
    tol: float = MULTIPLICITY_TOL,
    min_step: float = 1e-5,
    **hersch_kw,
) -> LiftPath:
    """Track the maximal direction s(r, p) continuously along r.

    The sign at the first grid point is fixed by s . anchor > 0 (default
    anchor -e_1, the boundary value as the cap grows to the whole sphere).
    Between grid points the step is halved while consecutive directions
    have |s_k . s_{k+1}| < 0.5.
    """
    p = sphere_point(p)
    r_grid = [float(r) for r in r_grid]
    if any(b <= a for a, b in zip(r_grid, r_grid[1:])) and any(
        b >= a for a, b in zip(r_grid, r_grid[1:])
    ):
        raise ValueError("r_grid must be monotone")
    ref = -basis_vector(p.size - 1) if anchor is None else np.asarray(anchor, dtype=float)
    path = LiftPath(p)

    def evaluate(r: float) -> CapFamily:
        fam = renormalized_family(g_measure, Cap(r, p), tol, **hersch_kw)
        if fam.direction.multiple:
            raise MultiplicityEncountered(r, fam, path)
        return fam

    def record(r: float, fam: CapFamily, s: np.ndarray) -> None:
        d = fam.direction
        path.samples.append(LiftSample(r, s, d.gap, fam.renorm.xi, d.value))

    fam = evaluate(r_grid[0])
    s_prev = _oriented(fam.direction.s, ref)
    record(r_grid[0], fam, s_prev)
    r_prev = r_grid[0]
    for r_target in r_grid[1:]:
        pending = [r_target]
        while pending:
            r = pending[-1]
            fam = evaluate(r)
            s = _oriented(fam.direction.s, s_prev)
            if abs(s @ s_prev) < 0.5 and abs(r - r_prev) > min_step:
                pending.append(0.5 * (r + r_prev))
                continue
            if abs(s @ s_prev) < 0.5:
                log.warning("direction jumps by %.3f at r = %.6f", s @ s_prev, r)
            pending.pop()
            record(r, fam, s)
            s_prev, r_prev = s, r
    return path


def claim2_dots(
    g_measure: MeasureSource, p, r_values: Sequence[float], anchor_r: float = -0.999, **kw
) -> tuple[np.ndarray, LiftPath, LiftPath]:
    """<s(a*), R_a s(a)> for a = a_{r,p}, with signs from the continuous lift.

    The lift is tracked along p and along -p starting from anchor_r; the
    complement of a_{r,p} is a_{-r,-p}, found on the second path.
    """
    p = sphere_point(p)
    r_values = np.asarray(r_values, dtype=float)
    grid_r = np.unique(np.concatenate([[anchor_r], r_values, -r_values]))
    path_p = lift_path(g_measure, p, grid_r, **kw)
    path_m = lift_path(g_measure, -p, grid_r, **kw)
    dots = []
    for r in r_values:
        a = Cap(r, p)
        fwd, back = path_p.at(r), path_m.at(-r)
        R = orthogonal_part(back.xi, a, fwd.xi)
        dots.append(float(back.s @ (R @ fwd.s)))
    return np.array(dots), path_p, path_m


@dataclass(frozen=True)
class MultipleCap:
    cap: Cap
    family: CapFamily
    relative_gap: float
    evaluations: int


def relative_gap(g_measure: MeasureSource, a: Cap, **hersch_kw) -> float:
    d = renormalized_family(g_measure, a, **hersch_kw).direction
    return d.gap / abs(d.value)


def locate_multiple_cap(
    g_measure: MeasureSource,
    r0: float,
    p0,
    tol: float = MULTIPLICITY_TOL,
    step: float = 0.05,
    max_evals: int = 600,
) -> MultipleCap:
    """Minimize the relative top gap of nu_a over caps near a_{r0,p0}.

    The multiple caps form a set of codimension two, so a one-parameter
    path generically misses them; a near-crossing along the path marks
    where to look. The search runs Nelder-Mead in (r, tilt of p), the
    tilt living in the tangent space at p0.
    """
    from scipy.optimize import minimize

    from .measure import _frame

    p0 = sphere_point(p0)
    B = _frame(p0)[:, 1:]
    d = p0.size

    def cap_of(z) -> Cap:
        p = p0 + B @ z[1:]
        return Cap(float(np.clip(z[0], -0.995, 0.995)), p / np.linalg.norm(p))

    def objective(z) -> float:
        return relative_gap(g_measure, cap_of(z))

    z0 = np.zeros(d)
    z0[0] = r0
    simplex = np.vstack([z0, z0 + step * np.eye(d)])
    res = minimize(
        objective, z0, method="Nelder-Mead",
        options=dict(initial_simplex=simplex, xatol=1e-10, fatol=0.1 * tol, maxfev=max_evals),
    )
    a = cap_of(res.x)
    fam = renormalized_family(g_measure, a, tol)
    rel = fam.direction.gap / abs(fam.direction.value)
    return MultipleCap(a, fam, float(rel), int(res.nfev))
