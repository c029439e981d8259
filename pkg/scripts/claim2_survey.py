"""Survey of the sign <s(a*), R_a s(a)> along cap families a_{r,p}.

For each random metric and each coordinate direction p the lift s(r, p) is
tracked from r = -0.999 and the sign relation is evaluated at a few radii.
Paths that meet a multiple measure are recorded as such.

    python scripts/claim2_survey.py --seeds 0..11 --out results/claim2.csv
"""

from __future__ import annotations

import argparse
import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from conformal_bound.bound import CAP_GRID
from conformal_bound.metric import ConformalMetric
from conformal_bound.quadform import MultiplicityEncountered, claim2_dots
from conformal_bound.spectral import normalize

log = logging.getLogger("claim2_survey")


@dataclass
class SurveyConfig:
    n: int = 2
    seeds: list = field(default_factory=lambda: list(range(12)))
    degree: int = 3
    amplitude: float = 0.3
    r_values: tuple = (-0.6, -0.3, 0.0, 0.3, 0.6)
    out: Path = Path("results/claim2.csv")


def run(cfg: SurveyConfig) -> list[dict]:
    rows = []
    for seed in cfg.seeds:
        N = normalize(ConformalMetric.random(cfg.n, cfg.degree, cfg.amplitude, rng=seed))
        if N.multiple:
            rows.append(dict(seed=seed, p="", r="", dot="", min_relative_gap="", status="multiple:metric"))
            continue
        source = lambda a, N=N: N.cap_measure(a, **CAP_GRID[cfg.n])
        for i, p in enumerate(np.eye(cfg.n + 1)):
            try:
                dots, path_p, path_m = claim2_dots(source, p, cfg.r_values)
            except MultiplicityEncountered as hit:
                rows.append(dict(seed=seed, p=f"e{i + 1}", r=hit.r, dot="", min_relative_gap="", status="multiple:cap"))
                continue
            gap = min(smp.gap / smp.value for smp in path_p.samples + path_m.samples)
            for r, d in zip(cfg.r_values, dots):
                rows.append(dict(seed=seed, p=f"e{i + 1}", r=r, dot=d, min_relative_gap=gap, status="ok"))
            log.info("seed %d e%d: dots %s, smallest relative gap %.2e", seed, i + 1, np.round(dots, 4), gap)
    return rows


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2)
    ap.add_argument("--seeds", default="0..11")
    ap.add_argument("--out", type=Path, default=SurveyConfig.out)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    lo, _, hi = args.seeds.partition("..")
    seeds = list(range(int(lo), int(hi or lo) + 1))
    cfg = SurveyConfig(n=args.n, seeds=seeds, out=args.out)
    rows = run(cfg)
    cfg.out.parent.mkdir(parents=True, exist_ok=True)
    with cfg.out.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    ok = [r for r in rows if r["status"] == "ok"]
    plus = sum(1 for r in ok if r["dot"] > 0)
    print(f"{len(ok)} sampled caps, {plus} with a positive sign, "
          f"{sum(r['status'] != 'ok' for r in rows)} paths stopped by multiplicity -> {cfg.out}")


if __name__ == "__main__":
    main()
