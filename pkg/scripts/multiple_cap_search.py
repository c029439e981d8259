"""Locate a multiple cap for a random metric.

The cap directions p(t) = cos t e_1 + sin t e_2 are swept; along each family
a_{r,p(t)} the lift is tracked and the sign c(t) = s(r_end, p) . R_p e_1 is
recorded with the smallest relative gap of the Gram form. A flip of c(t)
between neighboring t brackets a multiple cap, which is then refined by
minimizing the relative gap over (r, p).

    python scripts/multiple_cap_search.py --seed 0 --out results/multiple_cap_seed0.json
"""

from __future__ import annotations

import argparse
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from conformal_bound.bound import CAP_GRID
from conformal_bound.metric import ConformalMetric
from conformal_bound.moebius import reflection
from conformal_bound.quadform import MultiplicityEncountered, lift_path, locate_multiple_cap
from conformal_bound.spectral import normalize

log = logging.getLogger("multiple_cap_search")


@dataclass
class SearchConfig:
    seed: int = 0
    degree: int = 3
    amplitude: float = 0.3
    angles: int = 13
    r_end: float = 0.95
    path_samples: int = 30
    out: Path = Path("results/multiple_cap.json")


def run(cfg: SearchConfig) -> dict:
    N = normalize(ConformalMetric.random(2, cfg.degree, cfg.amplitude, rng=cfg.seed))
    if N.multiple:
        return dict(config=asdict(cfg), result="normalized metric is multiple")
    source = lambda a: N.cap_measure(a, **CAP_GRID[2])
    r_grid = np.linspace(-0.999, cfg.r_end, cfg.path_samples)
    e1 = np.eye(3)[0]
    sweep, best = [], None
    for t in np.linspace(0.0, np.pi / 2, cfg.angles):
        p = np.array([np.cos(t), np.sin(t), 0.0])
        try:
            path = lift_path(source, p, r_grid)
        except MultiplicityEncountered as hit:
            sweep.append(dict(t=t, sign=None, min_relative_gap=0.0, at_r=hit.r))
            best = (0.0, hit.r, p)
            continue
        rel = [smp.gap / smp.value for smp in path.samples]
        i = int(np.argmin(rel))
        sign = float(path.samples[-1].s @ reflection(p, e1))
        sweep.append(dict(t=t, sign=sign, min_relative_gap=rel[i], at_r=path.samples[i].r))
        log.info("t = %.3f  c = %+.3f  smallest relative gap %.2e at r = %.3f", t, sign, rel[i], path.samples[i].r)
        if best is None or rel[i] < best[0]:
            best = (rel[i], path.samples[i].r, p)
    found = locate_multiple_cap(source, best[1], best[2])
    result = dict(
        r=found.cap.r, p=found.cap.p.tolist(), relative_gap=found.relative_gap,
        evaluations=found.evaluations, multiple=bool(found.family.direction.multiple),
    )
    return dict(config={k: str(v) if isinstance(v, Path) else v for k, v in asdict(cfg).items()},
                sweep=sweep, multiple_cap=result)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--angles", type=int, default=13)
    ap.add_argument("--out", type=Path, default=SearchConfig.out)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    cfg = SearchConfig(seed=args.seed, angles=args.angles, out=args.out)
    report = run(cfg)
    cfg.out.parent.mkdir(parents=True, exist_ok=True)
    cfg.out.write_text(json.dumps(report, indent=2) + "\n")
    print(json.dumps(report.get("multiple_cap", report), indent=2))


if __name__ == "__main__":
    main()
