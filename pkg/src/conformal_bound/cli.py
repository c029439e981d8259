"""Command-line entry point: constants tables, certificate campaigns, lift
scans, degrees of sampled maps and the renormalization solver.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("conformal_bound")


class UsageError(ValueError):
    pass


@dataclass
class CampaignConfig:
    n: int = 2
    seed: int = 7
    count: int = 20
    degree: int = 3
    amplitude: float = 0.3
    metrics: list = field(default_factory=list)
    grid_order: int = 40
    basis_L: int | None = None
    tol: float = 1e-8
    multiplicity_tol: float = 1e-4
    out: str = "out"

    def validate(self) -> "CampaignConfig":
        if self.n not in (2, 3):
            raise UsageError(f"n must be 2 or 3, got {self.n}")
        for name in ("tol", "multiplicity_tol", "amplitude"):
            if not getattr(self, name) > 0:
                raise UsageError(f"{name} must be positive")
        if self.count < 1 and not self.metrics:
            raise UsageError("count must be >= 1 when no metric files are given")
        if self.grid_order < 2:
            raise UsageError("grid_order must be >= 2")
        for m in self.metrics:
            if not Path(m).is_file():
                raise UsageError(f"metric file {m} not found")
        return self

    @classmethod
    def from_sources(cls, path=None, **overrides) -> "CampaignConfig":
        data = {}
        if path is not None:
            try:
                data = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise UsageError(f"cannot read config {path}: {exc}") from exc
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data).validate()

    def metric_sources(self):
        """(label, ConformalMetric) pairs in campaign order."""
        from .metric import ConformalMetric

        if self.metrics:
            for m in self.metrics:
                g = ConformalMetric.from_json(m)
                if g.n != self.n:
                    raise UsageError(f"{m} is a metric on S^{g.n}, config says n = {self.n}")
                yield Path(m).stem, g
            return
        seeds = np.random.SeedSequence(self.seed).spawn(self.count)
        for k, ss in enumerate(seeds):
            yield f"seed{self.seed}_{k:03d}", ConformalMetric.random(
                self.n, self.degree, self.amplitude, rng=np.random.default_rng(ss)
            )


# ---------------------------------------------------------------- helpers


def parse_range(text: str) -> list[int]:
    try:
        if ".." in text:
            lo, hi = (int(v) for v in text.split(".."))
        else:
            lo = hi = int(text)
    except ValueError as exc:
        raise UsageError(f"bad range {text!r}; use N or A..B") from exc
    if lo < 1 or hi < lo:
        raise UsageError(f"bad range {text!r}")
    return list(range(lo, hi + 1))


def parse_vector(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise UsageError(f"bad vector {text!r}") from exc


def _fmt(v) -> str:
    return f"{v:.17g}" if isinstance(v, float) else str(v)


def _write_rows(rows: list[list], header: list[str], out) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    if out is None:
        sys.stdout.write(buf.getvalue())
    else:
        Path(out).write_text(buf.getvalue())


def _dump(obj, out) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    raise TypeError(f"cannot serialize {type(v).__name__}")


def _load_metric(args):
    from .metric import ConformalMetric

    if args.metric:
        try:
            return ConformalMetric.from_json(args.metric)
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot read metric {args.metric}: {exc}") from exc
    if args.n not in (2, 3):
        raise UsageError("--n must be 2 or 3")
    if args.round:
        return ConformalMetric.round(args.n)
    return ConformalMetric.random(args.n, 3, 0.3, rng=args.seed)


# ---------------------------------------------------------------- commands


def cmd_constants(args) -> int:
    from .constants import BoundConstants

    rows = []
    for n in parse_range(args.n):
        if n < 2:
            raise UsageError("n must be >= 2")
        c = BoundConstants.for_dimension(n)
        rows.append([n, c.sigma_n, c.k_n, c.theorem_bound, c.conjecture_bound])
    _write_rows(rows, ["n", "sigma_n", "K_n", "theorem_bound", "conjecture_bound"], args.out)
    return EXIT_OK


def cmd_certify(args) -> int:
    from .bound import CertificationError, certify

    cfg = CampaignConfig.from_sources(
        args.config, n=args.n, seed=args.seed, count=args.count, grid_order=args.grid_order,
        basis_L=args.basis_L, tol=args.tol, out=args.out,
        metrics=args.metric or None,
    )
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _dump(asdict(cfg), out / "config.json")
    rows, failed = [], 0
    for label, g in cfg.metric_sources():
        g.to_json(out / f"{label}.metric.json")
        try:
            cert = certify(g, basis_L=cfg.basis_L, grid_order=cfg.grid_order, tol=cfg.tol,
                           multiplicity_tol=cfg.multiplicity_tol)
        except CertificationError as exc:
            failed += 1
            _dump(dict(error=str(exc), partial=exc.partial), out / f"{label}.certificate.json")
            rows.append([label, "error", "", "", "", "", False])
            log.error("%s: %s", label, exc)
            continue
        _dump(cert.to_dict(), out / f"{label}.certificate.json")
        failed += not cert.passed
        solver = cert.solver_lambda2 if cert.solver_lambda2 is not None else float("nan")
        rows.append([
            label, cert.branch, cert.minmax_value, solver,
            cert.theorem_bound - cert.minmax_value, cert.conjecture_bound - solver, cert.passed,
        ])
        log.info("%s: %s %.6f < %.6f %s", label, cert.branch, cert.minmax_value, cert.theorem_bound, cert.passed)
    header = ["metric", "branch", "minmax_value", "solver_lambda2", "margin_theorem", "margin_conjecture", "passed"]
    _write_rows(rows, header, out / "summary.csv")
    return EXIT_NUMERIC if failed else EXIT_OK


def cmd_lift_scan(args) -> int:
    from .bound import CAP_GRID
    from .measure import NonConvergence, BoundaryEscape
    from .quadform import MultiplicityEncountered, claim1_check, lift_path
    from .spectral import normalize
    from .topology import degree_grid, lift_map_samples, write_map_csv

    g = _load_metric(args)
    n = g.n
    d = n + 1
    p = parse_vector(args.p) if args.p else np.eye(d)[0]
    if p.size != d:
        raise UsageError(f"--p needs {d} components")
    if not -1 < args.r_min < args.r_max < 1 or args.samples < 2:
        raise UsageError("need -1 < r-min < r-max < 1 and at least 2 samples")
    N = normalize(g, args.grid_order)
    header = ["r"] + [f"s{i}" for i in range(d)] + ["gap"] + [f"xi{i}" for i in range(d)]
    header += ["claim1_residual", "status"]
    if N.multiple:
        _write_rows([[float("nan")] * (len(header) - 1) + ["multiple:metric"]], header, args.out)
        log.warning("normalized metric is multiple; no lift is defined")
        return EXIT_OK
    source = lambda a: N.cap_measure(a, **CAP_GRID[n])
    r_grid = np.linspace(args.r_min, args.r_max, args.samples)
    rows = []
    try:
        path = lift_path(source, p, r_grid, tol=args.multiplicity_tol)
        status_tail = None
    except MultiplicityEncountered as hit:
        path, status_tail = hit.path, hit
    except (NonConvergence, BoundaryEscape) as exc:
        log.error("%s", exc)
        return EXIT_NUMERIC
    from .moebius import Cap

    for smp in path.samples:
        try:
            rep = claim1_check(source, Cap(smp.r, path.p))
            res = max(rep.xi_residual, rep.direction_residual)
        except (NonConvergence, BoundaryEscape, MultiplicityEncountered) as exc:
            # the complementary cap a_{-r,-p} is tiny when r is close to -1
            log.warning("claim 1 check at r = %.6f unresolved: %s", smp.r, exc)
            res = float("nan")
        rows.append([smp.r, *smp.s, smp.gap, *smp.xi, res, "ok"])
    if status_tail is not None:
        fam = status_tail.family
        rows.append([status_tail.r, *fam.direction.s, fam.direction.gap, *fam.renorm.xi,
                     float("nan"), "multiple:cap"])
    _write_rows(rows, header, args.out)
    if args.map_out:
        pts = degree_grid(n, 2 if n == 2 else 6).nodes
        values, status = lift_map_samples(source, pts, r=0.0, tol=args.multiplicity_tol)
        write_map_csv(args.map_out, pts, values)
        log.info("lift map: %d samples, %d multiple", len(status), status.count("multiple"))
    return EXIT_OK


BUILTIN_MAPS = ("identity", "antipodal", "rotation", "constant")


def cmd_degree(args) -> int:
    from .topology import (
        NonIntegerDegree, SampledMap, anti_equivariance_residual, antipodal_map, constant_map,
        degree, equivariance_residual, expected_parity, identity_map, rotation_map,
    )
    from .moebius import random_rotation

    note = None
    if args.from_lift:
        path = Path(args.from_lift)
        if not path.is_file():
            raise UsageError(f"{path} not found")
        with path.open() as fh:
            header = next(csv.reader(fh))
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        d = len(header) // 2
        ok = np.all(np.isfinite(data), axis=1)
        if not ok.all():
            note = f"{int((~ok).sum())} samples met a multiple measure; degree of the remaining samples"
        if ok.sum() < 4:
            _dump(dict(note="multiplicity: lift map is not defined", samples=int(data.shape[0])), args.out)
            return EXIT_OK
        f = SampledMap.from_samples(data[ok, :d], data[ok, d:], name=path.stem)
    else:
        n = args.n
        if n not in (2, 3):
            raise UsageError("--n must be 2 or 3")
        name = args.builtin or "identity"
        if name not in BUILTIN_MAPS:
            raise UsageError(f"unknown builtin map {name!r}; choose from {', '.join(BUILTIN_MAPS)}")
        f = dict(
            identity=lambda: identity_map(n),
            antipodal=lambda: antipodal_map(n),
            rotation=lambda: rotation_map(random_rotation(n, args.seed)),
            constant=lambda: constant_map(n),
        )[name]()
    try:
        rep = degree(f, crosscheck=args.crosscheck or None)
    except NonIntegerDegree as exc:
        _dump(dict(error=str(exc), report=exc.report.to_dict()), args.out)
        return EXIT_NUMERIC
    except ValueError as exc:
        # interpolated samples that do not cover the sphere
        _dump(dict(error=str(exc)), args.out)
        return EXIT_NUMERIC
    out = dict(map=f.name, n=f.n, **rep.to_dict())
    out["equivariance_residual"] = equivariance_residual(f)
    out["anti_equivariance_residual"] = anti_equivariance_residual(f)
    out["odd_or_one"] = expected_parity(f.n, rep.degree)
    if note:
        out["note"] = note
    _dump(out, args.out)
    return EXIT_OK


def cmd_renormalize(args) -> int:
    from .measure import BoundaryEscape, DiscreteMeasure, NonConvergence, grid, hersch_renormalize, metric_measure

    if args.measure:
        try:
            nu = DiscreteMeasure.from_csv(args.measure)
        except (OSError, ValueError) as exc:
            raise UsageError(str(exc)) from exc
    else:
        g = _load_metric(args)
        nu = metric_measure(g, grid(g.n, args.grid_order))
    try:
        rp = hersch_renormalize(nu, tol=args.tol)
    except (NonConvergence, BoundaryEscape) as exc:
        _dump(dict(error=str(exc)), args.out)
        return EXIT_NUMERIC
    _dump(dict(xi=rp.xi, residual=rp.residual, iterations=rp.iterations, atoms=len(nu.weights)), args.out)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conformal-bound", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("constants", help="sigma_n, K_n and both bounds as CSV")
    p.add_argument("--n", default="2..10", help="dimension or range A..B")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("certify", help="certificate campaign over metrics")
    p.add_argument("--config", help="JSON campaign config; flags override it")
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--count", type=int)
    p.add_argument("--metric", action="append", help="metric JSON file (repeatable)")
    p.add_argument("--grid-order", type=int)
    p.add_argument("--basis-L", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_certify)

    def metric_args(p):
        p.add_argument("--metric", help="metric JSON file")
        p.add_argument("--n", type=int, default=2)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--round", action="store_true", help="use the round metric")
        p.add_argument("--grid-order", type=int, default=40)

    p = sub.add_parser("lift-scan", help="continuous lift s(r, p) along a family of caps")
    metric_args(p)
    p.add_argument("--p", help="cap direction, comma separated (default e_1)")
    p.add_argument("--r-min", type=float, default=-0.99)
    p.add_argument("--r-max", type=float, default=0.95)
    p.add_argument("--samples", type=int, default=40)
    p.add_argument("--multiplicity-tol", type=float, default=1e-4)
    p.add_argument("--map-out", help="also write samples of p -> s(0, p) to this CSV")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_lift_scan)

    p = sub.add_parser("degree", help="Brouwer degree of a map S^n -> S^n")
    p.add_argument("--builtin", help=f"one of {', '.join(BUILTIN_MAPS)}")
    p.add_argument("--from-lift", help="CSV of samples p0..pn,f0..fn")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--crosscheck", action="store_true", help="also count preimages")
    p.add_argument("--out", help="JSON path (default stdout)")
    p.set_defaults(func=cmd_degree)

    p = sub.add_parser("renormalize", help="renormalization point of a measure")
    metric_args(p)
    p.add_argument("--measure", help="CSV of atoms x0..xn,weight")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out", help="JSON path (default stdout)")
    p.set_defaults(func=cmd_renormalize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
