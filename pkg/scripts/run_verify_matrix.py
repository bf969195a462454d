"""Run the multiscale-inequality verification matrix.

For each (model, tail-matched weight) pair and three observables, estimate
both sides of the chosen inequality at a base resolution and at doubled
(n, K, scale-grid) resolution, and report the best-constant drift.
"""

from __future__ import annotations

import argparse
import time
from pathlib import Path

from mfi_lab.core import RngStream, dumps_17g
from mfi_lab.estimators import verify_inequality
from mfi_lab.experiments import verification_matrix
from mfi_lab.weights import geometric_scale_grid


def run_case(case, inequality, n, K, seed, workers, refine):
    grid = geometric_scale_grid(case.weight, refine=refine)
    return verify_inequality(
        case.model, case.observables, case.weight, inequality, n=n, K=K,
        rng=RngStream(seed, (case.model_id,)), model_id=case.model_id,
        n_rhs=case.n_rhs * (2 if refine else 1), scale_grid=grid,
        derivative=case.derivative, workers=workers)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--n", type=int, default=4000)
    parser.add_argument("--K", type=int, default=32)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--inequality", default="MSG")
    parser.add_argument("--out", type=Path, default=Path("out/verify"))
    parser.add_argument("--skip-doubling", action="store_true")
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    for case in verification_matrix():
        t0 = time.time()
        base = run_case(case, args.inequality, args.n, args.K, args.seed,
                        args.workers, refine=0)
        rows = {rep.observables[0]: {"base": rep.as_dict()} for rep in base}
        if not args.skip_doubling:
            doubled = run_case(case, args.inequality, 2 * args.n, 2 * args.K,
                               args.seed, args.workers, refine=1)
            for rep in doubled:
                rows[rep.observables[0]]["doubled"] = rep.as_dict()
        for name, payload in rows.items():
            bc1 = payload["base"]["best_constant"]
            line = f"{case.model_id:>20} {name:>15}: bc={bc1:.4g}"
            if "doubled" in payload:
                bc2 = payload["doubled"]["best_constant"]
                drift = abs(bc2 - bc1) / bc1 if bc1 > 0 else float("nan")
                line += f" doubled={bc2:.4g} drift={drift:.1%}"
            print(line)
            path = args.out / f"{case.model_id}_{name}.json"
            path.write_text(dumps_17g(payload), encoding="utf-8")
        print(f"{case.model_id}: {time.time() - t0:.0f}s")


if __name__ == "__main__":
    main()
