"""Sample action radii for the three tail studies and fit their decays."""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from mfi_lab.core import RngStream, dumps_17g
from mfi_lab.derivatives import BoundaryHit, action_radius_trial
from mfi_lab.experiments import tail_cases
from mfi_lab.pointproc import sample_poisson
from mfi_lab.tails import radii_to_csv, tail_fit
from mfi_lab.tessellation import UnboundedGSet, voronoi_action_radius


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--n", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=101)
    parser.add_argument("--out", type=Path, default=Path("out/tails"))
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    cases = tail_cases()

    box = cases["voronoi"]["box"]
    center = np.full(box.dimension, box.side / 2.0)
    rng = RngStream(args.seed, ("tail", "voronoi"))
    rows, samples = [], []
    for i in range(args.n):
        cfg = sample_poisson(box, 1.0, 0.0, rng.child(f"p{i}"))
        try:
            rho = voronoi_action_radius(cfg, center, 0, box)
        except UnboundedGSet:
            continue
        rows.append((center, 0.0, rho, i))
        samples.append(rho)
    radii_to_csv(rows, args.out / "voronoi_radii.csv")
    fit = tail_fit(np.array(samples), "weibull", shape=2.0)
    print(f"voronoi: weibull-2 R2={fit.r_squared:.4f} rate={fit.rate:.4f}")
    (args.out / "voronoi_fit.json").write_text(
        dumps_17g({"family": fit.family, "rate": fit.rate, "r2": fit.r_squared}))

    for label in ("parking", "inclusions"):
        model = cases[label]["model"]
        center = np.full(model.box.dimension, model.box.side / 2.0)
        rng = RngStream(args.seed, ("tail", label))
        rows, samples = [], []
        for i in range(args.n):
            try:
                rho, _ = action_radius_trial(model, center, 0.0, rng.child(f"r{i}"))
            except BoundaryHit:
                continue
            rows.append((center, 0.0, rho, i))
            samples.append(rho)
        radii_to_csv(rows, args.out / f"{label}_radii.csv")
        fit = tail_fit(np.array(samples), "exponential")
        print(f"{label}: exp R2={fit.r_squared:.4f} rate={fit.rate:.4f}")
        (args.out / f"{label}_fit.json").write_text(
            dumps_17g({"family": fit.family, "rate": fit.rate, "r2": fit.r_squared}))


if __name__ == "__main__":
    main()
