"""Rayleigh-quotient certificate for lambda_2 Vol^{2/n} on conformal spheres.

The test space is spanned by phi = X_{e_1} and the cap-lifted function
psi_r = u_{a_{r,e_1}}. The cap parameter is chosen where the cross term of
the two quadratic forms balances; any multiple Gram form met on the way
gives a two-dimensional test space directly.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.optimize

from .constants import conjecture_bound, grad_norm_integral, theorem_bound
from .measure import DiscreteMeasure, cap_grid, grid
from .metric import ConformalMetric
from .moebius import Cap, basis_vector, moebius, moebius_jacobian, sphere_point, tangent_project
from .quadform import (
    MULTIPLICITY_TOL,
    CapFamily,
    MultiplicityEncountered,
    LiftPath,
    locate_multiple_cap,
    renormalized_family,
)
from .spectral import NormalizedMetric, lambda_invariant, normalize, spectrum

log = logging.getLogger(__name__)

STRICT_SLACK = 1e-10
CAP_GRID = {2: dict(polar_nodes=40, base_order=63), 3: dict(polar_nodes=32, base_order=31)}


class NoSignChange(RuntimeError):
    def __init__(self, scan):
        super().__init__(
            "alpha_r - 2^{2/n} beta_r does not change sign on the scan: "
            + ", ".join(f"r={r:.3f}: {f:.3e}" for r, f in (scan[0], scan[-1]))
        )
        self.scan = scan


class CertificationError(RuntimeError):
    def __init__(self, message, partial: dict):
        super().__init__(message)
        self.partial = partial


# ---------------------------------------------------------------- test functions


@dataclass(frozen=True)
class TestFunction:
    """u = X_s o d_xi on the cap and X_s o d_xi o tau_a on its complement."""

    cap: Cap
    xi: np.ndarray
    s: np.ndarray

    __test__ = False  # not a pytest class

    def _inside(self, x, inside):
        return self.cap.contains(x) if inside is None else np.asarray(inside, dtype=bool)

    def folded(self, x, inside=None) -> np.ndarray:
        x = np.atleast_2d(x)
        inside = self._inside(x, inside)
        y = x.copy()
        if np.any(~inside):
            y[~inside] = self.cap.reflect(x[~inside])
        return y

    def values(self, x, inside=None) -> np.ndarray:
        return moebius(self.xi, self.folded(x, inside)) @ self.s

    def gradients(self, x, inside=None) -> np.ndarray:
        """Tangential gradients, by the chain rule through d_xi and tau_a."""
        x = np.atleast_2d(x)
        inside = self._inside(x, inside)
        y = self.folded(x, inside)
        g = np.einsum("nij,i->nj", moebius_jacobian(self.xi, y), self.s)
        out = ~inside
        if np.any(out):
            g[out] = np.einsum("nij,ni->nj", self.cap.reflect_jacobian(x[out]), g[out])
        return tangent_project(x, g)


def gradient_check(u: TestFunction, count: int = 100, h: float = 1e-6, rng=0) -> float:
    """Largest gap between chain-rule gradients and central differences along
    random tangent directions, at random points away from the cap boundary."""
    rng = np.random.default_rng(rng)
    d = u.s.size
    x = sphere_point(rng.normal(size=(4 * count, d)))
    x = x[np.abs(u.cap.margin(x)) > 1e-3][:count]
    v = tangent_project(x, rng.normal(size=x.shape))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    inside = u.cap.contains(x)
    xp = sphere_point(x + h * v)
    xm = sphere_point(x - h * v)
    fd = (u.values(xp, inside) - u.values(xm, inside)) / (2 * h)
    exact = np.sum(u.gradients(x, inside) * v, axis=1)
    return float(np.max(np.abs(fd - exact) / np.maximum(1.0, np.abs(exact))))


def test_function(
    g: NormalizedMetric, a: Cap, s_ref=None, grid_kw=None, measure: DiscreteMeasure | None = None
) -> tuple[TestFunction, CapFamily]:
    """u_a^{s(a)} for the normalized metric, sign of s aligned with s_ref."""
    if measure is None:
        measure = g.cap_measure(a, **(grid_kw or CAP_GRID[g.n]))
    fam = renormalized_family(measure, a)
    if fam.direction.multiple:
        raise MultiplicityEncountered(a.r, fam, LiftPath(a.p))
    s = fam.direction.s
    ref = -basis_vector(g.n) if s_ref is None else s_ref
    s = s if s @ ref >= 0 else -s
    return TestFunction(a, fam.renorm.xi, s), fam


# ---------------------------------------------------------------- coefficients


@dataclass(frozen=True)
class RayleighCoefficients:
    r: float
    n: int
    sigma: float
    tau: float
    alpha: float
    beta: float
    I: float
    J: float
    mean_psi: float = 0.0

    @property
    def balance(self) -> float:
        """alpha_r - 2^{2/n} beta_r."""
        return self.alpha - 2.0 ** (2.0 / self.n) * self.beta

    def sup_q(self) -> float:
        num = np.array([[self.sigma, self.alpha], [self.alpha, self.tau]])
        den = np.array([[self.I, self.beta], [self.beta, self.J]])
        return float(scipy.linalg.eigh(num, den, eigvals_only=True)[-1])

    def box_violations(self) -> list[str]:
        c = 2.0 ** (2.0 / self.n)
        bad = []
        if not self.sigma < 1 + STRICT_SLACK:
            bad.append("sigma < 1")
        if not self.tau < c + STRICT_SLACK:
            bad.append("tau_r < 2^{2/n}")
        if not self.I > 1 - STRICT_SLACK:
            bad.append("I > 1")
        if not self.J > 1 - STRICT_SLACK:
            bad.append("J_r > 1")
        return bad


def _weights(g: NormalizedMetric, nodes, weights, dens=None):
    dens = g.density(nodes) if dens is None else dens
    return weights * dens, weights * dens ** ((g.n - 2) / g.n)


def coefficients_for(g: NormalizedMetric, u: TestFunction, quad, density=None) -> RayleighCoefficients:
    n = g.n
    x = quad.nodes
    wm, wk = _weights(g, x, quad.weights, density)
    e1 = basis_vector(n)
    phi = x[:, 0]
    dphi = tangent_project(x, np.broadcast_to(e1, x.shape))
    inside = getattr(quad, "inside", None)
    psi = u.values(x, inside)
    dpsi = u.gradients(x, inside)
    gp = grad_norm_integral(n) ** (2.0 / n)
    return RayleighCoefficients(
        r=u.cap.r,
        n=n,
        sigma=float(wk @ np.sum(dphi * dphi, 1)) / gp,
        tau=float(wk @ np.sum(dpsi * dpsi, 1)) / gp,
        alpha=float(wk @ np.sum(dpsi * dphi, 1)) / gp,
        beta=(n + 1) * float(wm @ (phi * psi)),
        I=(n + 1) * float(wm @ (phi * phi)),
        J=(n + 1) * float(wm @ (psi * psi)),
        mean_psi=float(wm @ psi),
    )


def rayleigh_coefficients(g: NormalizedMetric, r: float, s_ref=None, grid_kw=None) -> RayleighCoefficients:
    """sigma, tau_r, alpha_r, beta_r, I, J_r for the cap a_{r,e_1}."""
    a = Cap(r, basis_vector(g.n))
    u, _ = test_function(g, a, s_ref, grid_kw)
    return coefficients_for(g, u, cap_grid(a, **(grid_kw or CAP_GRID[g.n])))


@dataclass
class CapSample:
    r: float
    s: np.ndarray
    coeffs: RayleighCoefficients
    xi: np.ndarray
    gap: float


def _sample(g, r, s_ref, grid_kw) -> CapSample:
    a = Cap(r, basis_vector(g.n))
    quad = cap_grid(a, **(grid_kw or CAP_GRID[g.n]))
    dens = g.density(quad.nodes)
    u, fam = test_function(g, a, s_ref, measure=DiscreteMeasure(quad.nodes, quad.weights * dens))
    return CapSample(r, u.s, coefficients_for(g, u, quad, dens), u.xi, fam.direction.gap)


def scan_caps(
    g: NormalizedMetric,
    r_min: float = -0.95,
    r_max: float = 0.95,
    samples: int = 40,
    anchor_r: float = -0.999,
    grid_kw=None,
    min_step: float = 1e-5,
) -> list[CapSample]:
    """Coefficients along a_{r,e_1}, with the sign of s(r) continued from
    s = -e_1 at anchor_r. The anchor sample itself is not returned."""
    targets = np.linspace(r_min, r_max, samples)
    prev = _sample(g, anchor_r, None, grid_kw)
    out = []
    for r_t in targets:
        pending = [float(r_t)]
        while pending:
            r = pending[-1]
            smp = _sample(g, r, prev.s, grid_kw)
            if abs(smp.s @ prev.s) < 0.5 and abs(r - prev.r) > min_step:
                pending.append(0.5 * (r + prev.r))
                continue
            pending.pop()
            prev = smp
            if r in targets:
                out.append(smp)
    return out


@dataclass
class BalancedCap:
    r_star: float
    coeffs: RayleighCoefficients
    s: np.ndarray
    xi: np.ndarray
    history: list = field(default_factory=list)
    scan: list = field(default_factory=list)


def balanced_cap(
    g: NormalizedMetric, tol: float = 1e-8, max_steps: int = 60, scan: list | None = None, grid_kw=None
) -> BalancedCap:
    """Root of alpha_r - 2^{2/n} beta_r on the first + to - sign change of the scan."""
    samples = scan_caps(g, grid_kw=grid_kw) if scan is None else scan
    table = [(smp.r, smp.coeffs.balance) for smp in samples]
    lo = hi = None
    for left, right in zip(samples, samples[1:]):
        if left.coeffs.balance == 0.0:
            lo = hi = left
            break
        if left.coeffs.balance > 0 > right.coeffs.balance:
            lo, hi = left, right
            break
    if lo is None:
        raise NoSignChange(table)
    history = [(lo.r, lo.coeffs.balance, hi.r, hi.coeffs.balance)]
    best = lo if abs(lo.coeffs.balance) <= abs(hi.coeffs.balance) else hi
    # Brent's method on the bracket: bisection safeguarded by inverse
    # interpolation, so the bracket is kept while far fewer caps are solved.
    class _Balanced(Exception):
        pass

    def f(r: float) -> float:
        nonlocal best
        if r in (lo.r, hi.r):
            return (lo if r == lo.r else hi).coeffs.balance
        smp = _sample(g, r, lo.s, grid_kw)
        history.append((r, smp.coeffs.balance))
        if abs(smp.coeffs.balance) < abs(best.coeffs.balance):
            best = smp
        if abs(smp.coeffs.balance) <= tol:
            raise _Balanced
        return smp.coeffs.balance

    if abs(best.coeffs.balance) > tol:
        try:
            scipy.optimize.brentq(f, lo.r, hi.r, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=max_steps)
        except _Balanced:
            pass
        except RuntimeError:
            log.warning("root search stopped after %d steps", max_steps)
    return BalancedCap(best.r, best.coeffs, best.s, best.xi, history, table)


# ---------------------------------------------------------------- certificate


@dataclass
class BoundCertificate:
    n: int
    branch: str
    minmax_value: float
    theorem_bound: float
    conjecture_bound: float
    passed: bool
    r_star: float | None = None
    sup_q: float | None = None
    coefficients: dict | None = None
    solver_lambda2: float | None = None
    normalization: dict = field(default_factory=dict)
    cap: dict | None = None
    scan: list = field(default_factory=list)
    settings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def _two_by_two(num, den) -> float:
    return float(scipy.linalg.eigh(num, den, eigvals_only=True)[-1])


def _span_minmax(g: NormalizedMetric, funcs, quad) -> float:
    """Top Rayleigh quotient over span(funcs); each item is (values, gradients)."""
    wm, wk = _weights(g, quad.nodes, quad.weights)
    k = len(funcs)
    num = np.empty((k, k))
    den = np.empty((k, k))
    for i, (vi, gi) in enumerate(funcs):
        for j, (vj, gj) in enumerate(funcs):
            num[i, j] = wk @ np.sum(gi * gj, 1)
            den[i, j] = wm @ (vi * vj)
    return _two_by_two(num, den)


def _cap_multiple_value(N: NormalizedMetric, a: Cap, family: CapFamily, grid_kw=None) -> float:
    """Top Rayleigh quotient over E = {u_a^s : s in the top eigenspace}."""
    quad = cap_grid(a, **(grid_kw or CAP_GRID[N.n]))
    funcs = []
    for s in family.direction.top_space.T:
        u = TestFunction(a, family.renorm.xi, s)
        funcs.append((u.values(quad.nodes, quad.inside), u.gradients(quad.nodes, quad.inside)))
    return _span_minmax(N, funcs, quad)


def certify(
    g: ConformalMetric,
    solver: bool = True,
    basis_L: int | None = None,
    grid_order: int = 40,
    tol: float = 1e-8,
    multiplicity_tol: float = MULTIPLICITY_TOL,
    grid_kw=None,
) -> BoundCertificate:
    """Upper bound for lambda_2 Vol^{2/n} from a two-dimensional test space."""
    n = g.n
    record = dict(
        n=n,
        theorem_bound=theorem_bound(n),
        conjecture_bound=conjecture_bound(n),
        settings=dict(
            grid_order=grid_order,
            cap_grid=grid_kw or CAP_GRID[n],
            basis_L=basis_L,
            tol=tol,
            multiplicity_tol=multiplicity_tol,
        ),
    )
    try:
        if solver:
            rep = spectrum(g, basis_L, k_max=2)
            record["solver_lambda2"] = lambda_invariant(rep, 2)
            record["settings"]["basis_L"] = rep.L
        N = normalize(g, grid_order, multiplicity_tol)
        record["normalization"] = dict(
            volume=N.volume, xi=N.xi.tolist(), rotation=N.rotation.tolist(), gap=N.direction.gap
        )
        if N.multiple:
            quad = grid(n, grid_order)
            x = quad.nodes
            funcs = [(x @ s, tangent_project(x, np.broadcast_to(s, x.shape))) for s in N.direction.top_space.T]
            value = _span_minmax(N, funcs, quad)
            return _finish(record, "metric-multiple", value)
        try:
            samples = scan_caps(N, grid_kw=grid_kw)
        except MultiplicityEncountered as hit:
            a = Cap(hit.r, basis_vector(n))
            record.update(r_star=hit.r, cap=dict(r=a.r, p=a.p.tolist(), gap=hit.family.direction.gap))
            return _finish(record, "cap-multiple", _cap_multiple_value(N, a, hit.family, grid_kw))
        record["scan"] = [(smp.r, smp.coeffs.balance) for smp in samples]
        first, last = samples[0].coeffs.balance, samples[-1].coeffs.balance
        if not first > 0 > last:
            # The limits of psi_r at r -> -1 and r -> 1 hold when every nu_a is
            # simple; endpoint signs that disagree mean some cap is multiple,
            # so look for it next to the closest near-crossing of the scan.
            near = min(samples, key=lambda smp: smp.gap / smp.coeffs.J)
            source = lambda a: N.cap_measure(a, **(grid_kw or CAP_GRID[n]))
            found = locate_multiple_cap(source, near.r, basis_vector(n), multiplicity_tol)
            a = found.cap
            record["cap"] = dict(
                r=a.r, p=a.p.tolist(), relative_gap=found.relative_gap, evaluations=found.evaluations
            )
            if found.family.direction.multiple:
                record["r_star"] = a.r
                return _finish(record, "cap-multiple", _cap_multiple_value(N, a, found.family, grid_kw))
            log.warning("endpoint signs %.3e, %.3e but no multiple cap found", first, last)
        bc = balanced_cap(N, tol, scan=samples, grid_kw=grid_kw)
        c = bc.coeffs
        sup_q = c.sup_q()
        value = (n + 1) * grad_norm_integral(n) ** (2.0 / n) * sup_q
        record.update(r_star=bc.r_star, sup_q=sup_q, coefficients=asdict(c))
        record["coefficients"]["balance"] = c.balance
        return _finish(record, "balanced-cap", value)
    except CertificationError:
        raise
    except (MultiplicityEncountered, NoSignChange, RuntimeError, ValueError) as exc:
        raise CertificationError(f"certification failed: {exc}", record) from exc


def _finish(record: dict, branch: str, value: float) -> BoundCertificate:
    return BoundCertificate(
        branch=branch,
        minmax_value=float(value),
        passed=bool(value < record["theorem_bound"]),
        **record,
    )
