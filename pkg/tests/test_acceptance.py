"""Acceptance suite: one test per criterion, one pass/fail line each.

Property-based and empirical checks at desk scale (d = 2, small boxes).
The verification matrix (criterion 4) is the long pole; everything runs
with two workers, which cannot change any number (criterion 9).
"""

from __future__ import annotations

import json
import os
import time

import numpy as np
import pytest
from scipy import integrate

from mfi_lab.core import BoxSpec, RngStream
from mfi_lab.derivatives import BoundaryHit, action_radius_trial
from mfi_lab.estimators import efron_stein_check, verify_inequality
from mfi_lab.experiments import (INCLUSION_RADIUS_LAW, failure_signal_case,
                                 tail_cases, verification_matrix)
from mfi_lab.gaussian import (CovarianceModel, LipschitzClamp, brascamp_lieb_oracle,
                              empirical_covariance, gaussian_weight,
                              sample_gaussian_field)
from mfi_lab.inclusions import InclusionModelSpec
from mfi_lab.laws import RadiusLaw, ScalarLaw
from mfi_lab.models import PoissonInclusionModel
from mfi_lab.pointproc import graphical_parking, rsa_sweep_oracle, sample_poisson
from mfi_lab.tails import survival_table, tail_fit
from mfi_lab.tessellation import UnboundedGSet, voronoi_action_radius
from mfi_lab.weights import QuarterConditionViolated, iterated_radius_weight

WORKERS = min(2, os.cpu_count() or 1)


def report(criterion: str, ok: bool, detail: str) -> None:
    print(f"[{criterion}] {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"{criterion}: {detail}"


def test_criterion_1_hardcore_and_oracle_equivalence():
    t0 = time.time()
    box = BoxSpec(2, 6.0, 1.0, margin=1.0)
    rng = RngStream(1001)
    R = 0.7
    worst_gap = np.inf
    for i in range(1000):
        cfg = sample_poisson(box, 2.0, 1.0, rng.child(str(i)))
        if cfg.count > 200:
            cfg = cfg.subset(np.arange(200))
        a = graphical_parking(cfg, R)
        b = rsa_sweep_oracle(cfg, R)
        assert np.array_equal(np.sort(a.positions, axis=0), np.sort(b.positions, axis=0))
        if a.count >= 2:
            from scipy.spatial.distance import pdist

            worst_gap = min(worst_gap, pdist(a.positions).min())
    elapsed = time.time() - t0
    report("criterion 1", worst_gap > 2 * R and elapsed < 60.0,
           f"1000 configs: construction == oracle, min gap {worst_gap:.3f} > "
           f"{2 * R}, {elapsed:.0f}s")


def test_criterion_2_action_radius_soundness():
    trials = 500
    failures = {}
    cases = tail_cases()
    specs = [("parking", cases["parking"]["model"], 0.0),
             ("inclusions", cases["inclusions"]["model"], 0.0)]
    from mfi_lab.experiments import verification_matrix

    matrix = {c.model_id: c.model for c in verification_matrix()}
    specs.append(("hardcore-poisson", matrix["hardcore-poisson"], 0.0))
    specs.append(("voronoi", matrix["voronoi"], 0.0))
    for label, model, ell in specs:
        center = np.full(model.box.dimension, model.box.side / 2.0)
        rng = RngStream(1002, (label,))
        bad = skipped = 0
        done = 0
        i = 0
        while done < trials:
            try:
                rho, certified = action_radius_trial(model, center, ell,
                                                     rng.child(f"r{i}"))
            except (BoundaryHit, UnboundedGSet):
                skipped += 1
                i += 1
                if skipped > trials // 10:
                    break
                continue
            i += 1
            if certified is None:
                skipped += 1
                continue
            done += 1
            if rho > certified + 1e-9:
                bad += 1
        failures[label] = (bad, done, skipped)
    ok = all(bad == 0 and done == trials for bad, done, _ in failures.values())
    report("criterion 2", ok,
           "; ".join(f"{k}: {v[0]} violations / {v[1]} trials" for k, v in failures.items()))


def _voronoi_tail_samples(n: int, seed: int) -> np.ndarray:
    case = tail_cases()["voronoi"]
    box = case["box"]
    center = np.full(box.dimension, box.side / 2.0)
    rng = RngStream(seed, ("tail", "voronoi"))
    out = []
    for i in range(n):
        cfg = sample_poisson(box, 1.0, 0.0, rng.child(f"p{i}"))
        try:
            out.append(voronoi_action_radius(cfg, center, 0, box))
        except UnboundedGSet:
            pass
    return np.asarray(out)


def _empirical_tail_samples(model, n: int, seed: int, label: str) -> np.ndarray:
    center = np.full(model.box.dimension, model.box.side / 2.0)
    rng = RngStream(seed, ("tail", label))
    out = []
    for i in range(n):
        try:
            rho, _ = action_radius_trial(model, center, 0.0, rng.child(f"r{i}"))
            out.append(rho)
        except BoundaryHit:
            pass
    return np.asarray(out)


def test_criterion_3a_voronoi_tail_shape():
    t0 = time.time()
    rhos = _voronoi_tail_samples(2000, 101)
    fit = tail_fit(rhos, "weibull", shape=2.0)
    elapsed = time.time() - t0
    report("criterion 3a", fit.r_squared >= 0.95 and fit.rate > 0 and elapsed < 600,
           f"voronoi log S vs l^2: R2={fit.r_squared:.4f}, slope -{fit.rate:.3f}, "
           f"n={len(rhos)}, {elapsed:.0f}s")


def test_criterion_3b_parking_tail_shape():
    t0 = time.time()
    model = tail_cases()["parking"]["model"]
    rhos = _empirical_tail_samples(model, 2000, 102, "parking")
    fit = tail_fit(rhos, "exponential")
    elapsed = time.time() - t0
    report("criterion 3b", fit.r_squared >= 0.95 and fit.rate > 0 and elapsed < 600,
           f"parking log S vs l: R2={fit.r_squared:.4f}, slope -{fit.rate:.3f}, "
           f"n={len(rhos)}, {elapsed:.0f}s")


def test_criterion_3c_inclusion_tail_vs_radius_law():
    t0 = time.time()
    case = tail_cases()["inclusions"]
    rhos = _empirical_tail_samples(case["model"], 2000, 103, "inclusions")
    positive = rhos[rhos > 0]
    levels, surv = survival_table(positive)
    lo, hi = np.quantile(positive, 0.5), np.quantile(positive, 0.995)
    sel = (levels >= lo) & (levels <= hi) & (surv > 0)
    target = case["law"].law.survival(np.maximum(levels[sel] - 1.0, 0.0))
    log_norm = np.mean(np.log(surv[sel]) - np.log(target))
    ratio = surv[sel] / (np.exp(log_norm) * target)
    elapsed = time.time() - t0
    ok = bool(ratio.max() <= 2.0 and ratio.min() >= 0.5)
    report("criterion 3c", ok and elapsed < 600,
           f"inclusion S vs radius-law tail on [{lo:.2f},{hi:.2f}]: ratio in "
           f"[{ratio.min():.2f},{ratio.max():.2f}] subset [0.5,2], "
           f"{len(positive)} positive radii, {elapsed:.0f}s")


@pytest.mark.parametrize("case", verification_matrix(), ids=lambda c: c.model_id)
def test_criterion_4_multiscale_inequality_validity(case):
    from mfi_lab.weights import geometric_scale_grid

    t0 = time.time()
    n_base, k_base = 4000, 32
    results = {}
    for tag, n, K, refine, n_rhs in (("base", n_base, k_base, 0, case.n_rhs),
                                     ("doubled", 2 * n_base, 2 * k_base, 1,
                                      2 * case.n_rhs)):
        grid = geometric_scale_grid(case.weight, refine=refine)
        reports = verify_inequality(
            case.model, case.observables, case.weight, "MSG", n=n, K=K,
            rng=RngStream(1004, (case.model_id,)), model_id=case.model_id,
            n_rhs=n_rhs, scale_grid=grid, derivative=case.derivative,
            workers=WORKERS)
        results[tag] = {rep.observables[0]: rep for rep in reports}
    lines = []
    ok = True
    for obs in results["base"]:
        b, d = results["base"][obs], results["doubled"][obs]
        valid = (b.rhs.value > 0 and np.isfinite(b.best_constant)
                 and b.lhs.value <= b.best_constant * b.rhs.value + 1e-12)
        drift = (abs(d.best_constant - b.best_constant) / b.best_constant
                 if b.best_constant > 0 else np.inf)
        ok = ok and valid and drift <= 0.20
        lines.append(f"{obs}: bc={b.best_constant:.3g}->{d.best_constant:.3g} "
                     f"(drift {drift:.1%})")
    report(f"criterion 4 [{case.model_id}]", ok,
           "; ".join(lines) + f"; {time.time() - t0:.0f}s")


def test_criterion_5_standard_fi_failure_signal():
    t0 = time.time()
    model, weight, windows, observables = failure_signal_case()
    constants = []
    for w in windows:
        rep = verify_inequality(model, [observables[w]], weight, "MSG", n=4000,
                                K=16, rng=RngStream(1005), model_id="voronoi-sparse",
                                n_rhs=64, scale_grid=[0.0, 0.5, 1.0], glue=True,
                                workers=WORKERS)[0]
        constants.append(rep.best_constant)
    growth = [constants[i + 1] / constants[i] for i in range(len(constants) - 1)]
    ok = all(g >= 1.5 for g in growth)
    report("criterion 5", ok,
           f"compact weight, windows {windows}: best constants "
           f"{[f'{c:.3g}' for c in constants]}, growth {[f'{g:.2f}x' for g in growth]}"
           f"; {time.time() - t0:.0f}s")


def test_criterion_6_gaussian_pipeline():
    t0 = time.time()
    box = BoxSpec(2, 64.0, 1.0, 0.0, "periodic")
    cov = CovarianceModel("exponential", 1.0, 4.0)
    rng = RngStream(1006)
    fields = [sample_gaussian_field(box, cov, LipschitzClamp(), rng.child(str(i)))
              for i in range(5000)]
    cov_ok = True
    details = []
    for entry in empirical_covariance(fields, [0.0, 2.0, 4.0, 8.0]):
        tol = max(0.02, 3 * entry["stderr"])
        err = abs(entry["estimate"] - float(cov(entry["lag"])))
        cov_ok = cov_ok and err < tol
        details.append(f"lag {entry['lag']:.0f}: err {err:.4f} < {tol:.4f}")
    weight_ok = True
    for model in (cov, CovarianceModel("gaussian-bump", 2.0, 3.0),
                  CovarianceModel("polynomial", 1.5, 2.0, alpha=3.0)):
        w = gaussian_weight(model)
        total, _ = integrate.quad(lambda u: float(w(u)), 0, np.inf, limit=400)
        weight_ok = weight_ok and abs(total - model.sigma2) / model.sigma2 < 1e-6
    gen = RngStream(1006, ("bl",)).generator()
    bl_ok = True
    checked = 0
    for N in (1, 2, 3, 4):
        for trial in range(5):
            F = gen.normal(size=(N, N))
            coeffs = gen.normal(size=N)
            fns = [lambda a, c=coeffs: a @ c,
                   lambda a: np.prod(a, axis=1),
                   lambda a, c=coeffs: (a**2) @ c + a[:, 0],
                   lambda a: (a**3).sum(axis=1)]
            out = brascamp_lieb_oracle(F, fns[trial % 4], quadrature_level=12)
            bl_ok = bl_ok and out["lhs"] <= out["rhs"] + 1e-8
            checked += 1
    ok = cov_ok and weight_ok and bl_ok and checked == 20
    report("criterion 6", ok,
           f"covariance at 4 lags ({'; '.join(details)}); weight mass == c(0)-c(inf) "
           f"to 1e-6; matrix-variance bound holds on {checked} (F, Z) pairs; "
           f"{time.time() - t0:.0f}s")


def test_criterion_7_efron_stein():
    rng = RngStream(1007)
    coeffs = np.array([1.0, -0.5, 0.25])
    lin = efron_stein_check(3, ScalarLaw.uniform(0, 1), lambda x: x @ coeffs,
                            40_000, rng.child("lin"))
    lin_ok = abs(lin["ratio"] - 1.0) < 3 * lin["ratio_stderr"]
    mean, _ = integrate.dblquad(lambda u, v: max(u, v), 0, 1, 0, 1)
    second, _ = integrate.dblquad(lambda u, v: max(u, v) ** 2, 0, 1, 0, 1)
    brute = second - mean**2
    mx = efron_stein_check(2, ScalarLaw.uniform(0, 1), lambda x: x.max(axis=1),
                           40_000, rng.child("max"))
    max_ok = (abs(mx["lhs"].value - brute) < 3 * mx["lhs"].stderr
              and abs(brute - 1.0 / 18.0) < 1e-7
              and mx["ratio"] <= 1.0 + 3 * mx["ratio_stderr"])
    report("criterion 7", lin_ok and max_ok,
           f"linear ratio {lin['ratio']:.4f} == 1 within 3 SE; max-of-uniforms "
           f"lhs {mx['lhs'].value:.5f} == 1/18 within 3 SE of quadrature value")


def test_criterion_8_weight_constructors():
    w = iterated_radius_weight(lambda l: np.exp(-l), R=1.0, dimension=2)
    hand = 36.0 * (8.0 / 5.0) * np.exp(-2.5)
    vals_ok = (abs(float(w(5.0)) - hand) <= 1e-12 * hand
               and all(abs(float(w(l)) - (l + 1.0) ** 2) <= 1e-12 * (l + 1.0) ** 2
                       for l in (0.0, 1.0, 4.0)))
    fired = False
    try:
        iterated_radius_weight(lambda l: np.exp(-l), 1.0, 2, tail_data=0.26)
    except QuarterConditionViolated:
        fired = True
    not_fired = True
    try:
        iterated_radius_weight(lambda l: np.exp(-l), 1.0, 2, tail_data=0.25)
        iterated_radius_weight(lambda l: np.exp(-l), 1.0, 2, tail_data=0.10)
    except QuarterConditionViolated:
        not_fired = False
    report("criterion 8", vals_ok and fired and not_fired,
           "iterated-radius weight matches hand values to 1e-12; quarter "
           "condition fires exactly above 1/4")


def test_criterion_9_determinism_across_workers(tmp_path):
    from mfi_lab.cli import run_config

    verify_cfg = {
        "kind": "verify", "seed": 99, "model.type": "voronoi", "box.side": 8.0,
        "box.margin": 4.0, "model.value_law": ["uniform", 0.0, 1.0],
        "observable.0.kind": "window-average", "observable.0.name": "wa",
        "observable.0.radius": 2.5, "weight.family": "stretched-exp",
        "weight.C": 2.0, "estimator.n": 256, "estimator.K": 8,
        "estimator.n_rhs": 16,
    }
    tail_cfg = {"kind": "tail", "seed": 98, "model.type": "parking",
                "box.side": 6.0, "model.R": 1.0, "model.horizon": 2.0,
                "tail.n": 250, "tail.family": "exponential"}
    identical = True
    for label, cfg, names in (("verify", verify_cfg, ("report_wa.json", "reports.csv")),
                              ("tail", tail_cfg, ("radii.csv", "tail.json"))):
        outs = []
        for workers in (1, 4):
            out = tmp_path / f"{label}_w{workers}"
            run_config(cfg, out, workers=workers)
            outs.append(out)
        for name in names:
            identical = identical and ((outs[0] / name).read_bytes()
                                       == (outs[1] / name).read_bytes())
        m1 = json.loads((outs[0] / "manifest.json").read_text())
        m2 = json.loads((outs[1] / "manifest.json").read_text())
        m1.pop("workers_requested")
        m2.pop("workers_requested")
        identical = identical and m1 == m2
    report("criterion 9", identical,
           "verify and tail artifacts byte-identical for --workers 1 vs 4")
