"""Sample the map p -> s(r, p) for a random metric and compute its degree.

Samples that meet a multiple measure are dropped; the remaining samples are
interpolated and the degree is reported together with both the equivariance
residual |f(-p) - R_p f(p)| and the anti-equivariance residual
|f(-p) + R_p f(p)|.

    python scripts/lift_map_degree.py --seed 0 --level 2 --out results/lift_map_seed0
"""

from __future__ import annotations

import argparse
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from conformal_bound.bound import CAP_GRID
from conformal_bound.metric import ConformalMetric
from conformal_bound.spectral import normalize
from conformal_bound.topology import (
    NonIntegerDegree,
    SampledMap,
    anti_equivariance_residual,
    degree,
    equivariance_residual,
    icosphere,
    lift_map_samples,
    write_map_csv,
)

log = logging.getLogger("lift_map_degree")


@dataclass
class LiftMapConfig:
    seed: int = 0
    level: int = 2
    r: float = 0.0
    steps: int = 12
    out: Path = Path("results/lift_map")


def run(cfg: LiftMapConfig) -> dict:
    N = normalize(ConformalMetric.random(2, 3, 0.3, rng=cfg.seed))
    if N.multiple:
        return dict(seed=cfg.seed, note="normalized metric is multiple")
    source = lambda a: N.cap_measure(a, **CAP_GRID[2])
    points = icosphere(cfg.level).nodes
    values, status = lift_map_samples(source, points, r=cfg.r, steps=cfg.steps)
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_map_csv(cfg.out / "samples.csv", points, values)
    ok = np.all(np.isfinite(values), axis=1)
    report = dict(seed=cfg.seed, r=cfg.r, samples=len(points), multiple=int((~ok).sum()))
    f = SampledMap.from_samples(points[ok], values[ok], name=f"lift_seed{cfg.seed}")
    report["equivariance_residual"] = equivariance_residual(f)
    report["anti_equivariance_residual"] = anti_equivariance_residual(f)
    try:
        report.update(degree(f).to_dict())
    except (NonIntegerDegree, ValueError) as exc:
        report["degree_error"] = str(exc)
    return report


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--level", type=int, default=2, help="icosphere level of the sample points")
    ap.add_argument("--r", type=float, default=0.0)
    ap.add_argument("--out", type=Path, default=LiftMapConfig.out)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    cfg = LiftMapConfig(seed=args.seed, level=args.level, r=args.r, out=args.out)
    report = run(cfg)
    (cfg.out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    print(json.dumps(report, indent=2))


if __name__ == "__main__":
    main()
