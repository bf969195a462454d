"""Measure action-radius tails and fit the weight constants.

The fitted rates are the source of the frozen constants in
mfi_lab.experiments (stretched-exp C for Voronoi, exp C for parking).
"""

from __future__ import annotations

import argparse

import numpy as np

from mfi_lab.core import RngStream
from mfi_lab.derivatives import BoundaryHit, action_radius_trial
from mfi_lab.experiments import tail_cases
from mfi_lab.pointproc import sample_poisson
from mfi_lab.tails import tail_fit
from mfi_lab.tessellation import UnboundedGSet, voronoi_action_radius


def voronoi_radii(case, n, seed):
    box = case["box"]
    rng = RngStream(seed, ("calibrate", "voronoi"))
    center = np.full(box.dimension, box.side / 2.0)
    out = []
    for i in range(n):
        cfg = sample_poisson(box, 1.0, 0.0, rng.child(f"p{i}"))
        try:
            out.append(voronoi_action_radius(cfg, center, 0, box))
        except UnboundedGSet:
            pass
    return np.array(out)


def empirical_radii(model, n, seed, label):
    rng = RngStream(seed, ("calibrate", label))
    center = np.full(model.box.dimension, model.box.side / 2.0)
    out = []
    for i in range(n):
        try:
            rho, _ = action_radius_trial(model, center, 0.0, rng.child(f"r{i}"))
            out.append(rho)
        except BoundaryHit:
            pass
    return np.array(out)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--n", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=101)
    args = parser.parse_args()
    cases = tail_cases()

    rhos = voronoi_radii(cases["voronoi"], args.n, args.seed)
    fit = tail_fit(rhos, "weibull", shape=2.0)
    print(f"voronoi geometric radius: n={len(rhos)} weibull-2 rate={fit.rate:.4f} "
          f"R2={fit.r_squared:.4f} -> stretched-exp C={1.0 / fit.rate:.3f}")

    rhos = empirical_radii(cases["parking"]["model"], args.n, args.seed, "parking")
    fit = tail_fit(rhos, "exponential")
    print(f"parking measured radius: n={len(rhos)} exp rate={fit.rate:.4f} "
          f"R2={fit.r_squared:.4f} -> exp C={1.0 / fit.rate:.3f}")

    rhos = empirical_radii(cases["inclusions"]["model"], args.n, args.seed, "incl")
    fit = tail_fit(rhos, "exponential")
    print(f"inclusion measured radius: n={len(rhos)} exp rate={fit.rate:.4f} "
          f"R2={fit.r_squared:.4f} (radius law rate "
          f"{cases['inclusions']['law'].law.params[0]:.2f})")


if __name__ == "__main__":
    main()
