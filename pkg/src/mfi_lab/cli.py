"""Batch experiment runner.

``mfi-lab run config.json [--workers N] [--out DIR]`` parses a flat JSON
config (dotted keys), dispatches the generators and estimators, and writes
artifacts atomically together with a manifest echoing every resolved
default.  ``mfi-lab report <glob>`` consolidates verification reports into
one CSV.  Identical configs (including the seed) produce byte-identical
artifacts on any worker count.
"""

from __future__ import annotations

import argparse
import glob as globmod
import json
import os
import sys
from pathlib import Path

import numpy as np

from .core import BoxSpec, RngStream, dumps_17g, field_to_binary, field_to_csv
from .derivatives import BoundaryHit, action_radius_trial
from .estimators import efron_stein_check, verify_inequality
from .gaussian import CovarianceModel, LipschitzClamp, brascamp_lieb_oracle, gaussian_weight
from .inclusions import ClippedMap, InclusionModelSpec
from .laws import RadiusLaw, ScalarLaw
from .models import (DependentColorVoronoiModel, GaussianModel, HardcorePoissonModel,
                     MovingAverageModel, ParkingInclusionModel, PoissonInclusionModel,
                     VoronoiModel)
from .observables import make_observable
from .pointproc import HardcoreSpec
from .tails import tail_fit
from .weights import WeightFunction, radius_law_weight

__all__ = ["main", "run_config", "report_table", "ConfigError", "MixedReportKinds"]

EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


class ConfigError(ValueError):
    pass


class MixedReportKinds(ValueError):
    pass


_KINDS = ("generate", "action-radius", "tail", "verify", "efron-stein", "brascamp-lieb")
_MODEL_TYPES = ("gaussian", "voronoi", "poisson-inclusions", "parking",
                "hardcore-poisson", "moving-average", "dependent-color-voronoi")

_COMMON_KEYS = {"kind", "seed"}
_BOX_KEYS = {"box.dimension", "box.side", "box.spacing", "box.margin", "box.boundary"}
_MODEL_KEYS = {
    "model.type", "model.intensity", "model.value_law", "model.scheme",
    "model.radius_law", "model.alpha", "model.beta", "model.w_law",
    "model.priority", "model.f.lo", "model.f.hi", "model.R", "model.horizon",
    "model.ball_radius", "model.lambda", "model.window_radius",
    "model.cov.family", "model.cov.sigma2", "model.cov.xi", "model.cov.alpha",
    "model.clamp.kind", "model.clamp.slope", "model.clamp.cap",
}
_OBS_FIELDS = ("kind", "name", "center", "radius", "scale", "cap", "points")
_WEIGHT_KEYS = {"weight.family", "weight.C", "weight.R0", "weight.ell",
                "weight.values", "weight.normalization"}
_EST_KEYS = {"estimator.n", "estimator.K", "estimator.n_rhs", "estimator.inequality",
             "estimator.scale_grid", "estimator.glue", "estimator.derivative",
             "estimator.x_spacing"}
_KIND_KEYS = {
    "generate": _BOX_KEYS | _MODEL_KEYS | {"generate.n", "generate.format"},
    "action-radius": _BOX_KEYS | _MODEL_KEYS | {"radius.n", "radius.ell", "radius.x"},
    "tail": _BOX_KEYS | _MODEL_KEYS | {"tail.n", "tail.ell", "tail.x", "tail.family",
                                       "tail.shape"},
    "verify": _BOX_KEYS | _MODEL_KEYS | _WEIGHT_KEYS | _EST_KEYS,
    "efron-stein": {"es.n_vars", "es.law", "es.functional", "es.coeffs", "es.n_mc"},
    "brascamp-lieb": {"bl.F", "bl.observable", "bl.level", "bl.scale"},
}


def _validate_keys(config: dict) -> str:
    kind = config.get("kind")
    if kind not in _KINDS:
        raise ConfigError(f"key 'kind' must be one of {list(_KINDS)}, got {kind!r}")
    if "seed" not in config:
        raise ConfigError("key 'seed' is required (no wall-clock seeding)")
    allowed = _COMMON_KEYS | _KIND_KEYS[kind]
    for key in config:
        if key in allowed:
            continue
        parts = key.split(".")
        if kind == "verify" and parts[0] == "observable" and len(parts) == 3 \
                and parts[1].isdigit() and parts[2] in _OBS_FIELDS:
            continue
        raise ConfigError(
            f"unknown key {key!r} for kind {kind!r}; allowed: "
            f"{sorted(allowed)} plus observable.<i>.<{'|'.join(_OBS_FIELDS)}>")
    return kind


def _law(value, what: str) -> ScalarLaw:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{what} must be a list [kind, params...]")
    try:
        return ScalarLaw(str(value[0]), tuple(float(v) for v in value[1:]))
    except ValueError as exc:
        raise ConfigError(f"{what}: {exc}") from exc


def _radius_law(value, what: str) -> RadiusLaw:
    law = _law(value, what)
    try:
        return RadiusLaw(law)
    except ValueError as exc:
        raise ConfigError(f"{what}: {exc}") from exc


def _build_box(config: dict, resolved: dict, model_type: str) -> BoxSpec:
    d = int(config.get("box.dimension", 2))
    side = float(config.get("box.side", 16.0))
    spacing = float(config.get("box.spacing", 1.0))
    if model_type in ("gaussian",):
        boundary = config.get("box.boundary", "periodic")
        margin_default = 0.0
    else:
        boundary = config.get("box.boundary", "padded-free")
        if model_type in ("parking", "hardcore-poisson"):
            margin_default = 8.0 * float(config.get("model.R", 1.0))
        elif model_type == "poisson-inclusions":
            rl = _radius_law(config.get("model.radius_law", ["uniform", 0.0, 1.0]),
                             "model.radius_law")
            margin_default = float(rl.law.quantile(1.0 - 1e-4)) + 1.0
        elif model_type == "moving-average":
            margin_default = float(config.get("model.window_radius", 1.0)) + spacing
        else:
            margin_default = 6.0
        if boundary == "periodic":
            margin_default = 0.0
    margin = float(config.get("box.margin", margin_default))
    resolved.update({"box.dimension": d, "box.side": side, "box.spacing": spacing,
                     "box.margin": margin, "box.boundary": boundary})
    try:
        return BoxSpec(d, side, spacing, margin, boundary)
    except ValueError as exc:
        raise ConfigError(f"box.*: {exc}") from exc


def _build_model(config: dict, resolved: dict):
    mtype = config.get("model.type")
    if mtype not in _MODEL_TYPES:
        raise ConfigError(f"key 'model.type' must be one of {list(_MODEL_TYPES)}, "
                          f"got {mtype!r}")
    resolved["model.type"] = mtype
    box = _build_box(config, resolved, mtype)
    if mtype in ("gaussian", "dependent-color-voronoi"):
        fam = config.get("model.cov.family", "exponential")
        cov = CovarianceModel(fam, float(config.get("model.cov.sigma2", 1.0)),
                              float(config.get("model.cov.xi", 2.0)),
                              (float(config["model.cov.alpha"])
                               if "model.cov.alpha" in config else None))
        clamp = LipschitzClamp(config.get("model.clamp.kind", "identity"),
                               float(config.get("model.clamp.slope", 1.0)),
                               float(config.get("model.clamp.cap", 1.0)))
        resolved.update({"model.cov.family": cov.family, "model.cov.sigma2": cov.sigma2,
                         "model.cov.xi": cov.xi, "model.clamp.kind": clamp.kind,
                         "model.clamp.slope": clamp.slope, "model.clamp.cap": clamp.cap})
        if cov.alpha is not None:
            resolved["model.cov.alpha"] = cov.alpha
        if mtype == "gaussian":
            return GaussianModel(box, cov, clamp), box
        intensity = float(config.get("model.intensity", 1.0))
        resolved["model.intensity"] = intensity
        return DependentColorVoronoiModel(box, cov, clamp, intensity), box
    if mtype == "voronoi":
        law = _law(config.get("model.value_law", ["uniform", 0.0, 1.0]),
                   "model.value_law")
        intensity = float(config.get("model.intensity", 1.0))
        resolved.update({"model.intensity": intensity,
                         "model.value_law": [law.kind, *law.params]})
        return VoronoiModel(box, intensity, law), box
    if mtype == "poisson-inclusions":
        rl = _radius_law(config.get("model.radius_law", ["uniform", 0.0, 1.0]),
                         "model.radius_law")
        w_law = _law(config.get("model.w_law", ["const", 1.0]), "model.w_law")
        spec = InclusionModelSpec(
            config.get("model.scheme", "A1-two-phase"), rl,
            float(config.get("model.intensity", 1.0)),
            alpha=float(config.get("model.alpha", 1.0)),
            beta=float(config.get("model.beta", 0.0)),
            f=ClippedMap(float(config.get("model.f.lo", -np.inf)),
                         float(config.get("model.f.hi", np.inf))),
            w_law=w_law, priority=config.get("model.priority", "value"))
        resolved.update({"model.scheme": spec.scheme, "model.intensity": spec.intensity,
                         "model.alpha": spec.alpha, "model.beta": spec.beta,
                         "model.radius_law": [rl.law.kind, *rl.law.params],
                         "model.w_law": [w_law.kind, *w_law.params],
                         "model.priority": spec.priority})
        return PoissonInclusionModel(box, spec), box
    if mtype == "parking":
        model = ParkingInclusionModel(
            box, R=float(config.get("model.R", 1.0)),
            horizon=float(config.get("model.horizon", 2.0)),
            alpha=float(config.get("model.alpha", 1.0)),
            beta=float(config.get("model.beta", 0.0)),
            ball_radius=float(config.get("model.ball_radius", config.get("model.R", 1.0))))
        resolved.update({"model.R": model.R, "model.horizon": model.horizon,
                         "model.alpha": model.alpha, "model.beta": model.beta,
                         "model.ball_radius": model.ball_radius})
        return model, box
    if mtype == "hardcore-poisson":
        spec = HardcoreSpec(float(config.get("model.R", 1.0)),
                            float(config.get("model.lambda", 1.0)),
                            float(config.get("model.horizon", 1.0)))
        model = HardcorePoissonModel(
            box, spec, alpha=float(config.get("model.alpha", 1.0)),
            beta=float(config.get("model.beta", 0.0)),
            ball_radius=float(config.get("model.ball_radius", spec.R / 2.0)))
        resolved.update({"model.R": spec.R, "model.lambda": spec.lam,
                         "model.horizon": spec.T, "model.alpha": model.alpha,
                         "model.beta": model.beta, "model.ball_radius": model.ball_radius})
        return model, box
    model = MovingAverageModel(box, float(config.get("model.window_radius", 1.0)))
    resolved["model.window_radius"] = model.window_radius
    return model, box


def _build_observables(config: dict, resolved: dict, box: BoxSpec):
    indices = sorted({int(k.split(".")[1]) for k in config
                      if k.startswith("observable.")})
    if not indices:
        raise ConfigError("verify needs at least one observable.<i>.kind key")
    out = []
    for i in indices:
        get = lambda f, default=None: config.get(f"observable.{i}.{f}", default)
        kind = get("kind")
        if kind not in ("window-average", "clipped-exp", "site-max", "two-point"):
            raise ConfigError(f"observable.{i}.kind must be window-average, "
                              f"clipped-exp, site-max, or two-point; got {kind!r}")
        name = get("name", f"obs{i}")
        kwargs = {}
        if kind == "two-point":
            pts = get("points")
            if not pts or len(pts) != 2:
                raise ConfigError(f"observable.{i}.points must list two coordinates")
            kwargs["points"] = pts
        else:
            kwargs["radius"] = float(get("radius", 3.0))
            if get("center") is not None:
                kwargs["center"] = [float(c) for c in get("center")]
            if kind == "clipped-exp":
                kwargs["scale"] = float(get("scale", 1.0))
                kwargs["cap"] = float(get("cap", 8.0))
        out.append(make_observable(box, kind, name, **kwargs))
        resolved[f"observable.{i}.kind"] = kind
        resolved[f"observable.{i}.name"] = name
        for f, v in kwargs.items():
            resolved[f"observable.{i}.{f}"] = v
    return out


def _build_weight(config: dict, resolved: dict, model, box: BoxSpec) -> WeightFunction:
    family = config.get("weight.family")
    norm = float(config.get("weight.normalization", 1.0))
    resolved["weight.normalization"] = norm
    if family in ("exp", "exp-log"):
        w = WeightFunction(family, {"C": float(config.get("weight.C", 1.0))},
                           normalization=norm)
    elif family == "stretched-exp":
        w = WeightFunction(family, {"C": float(config.get("weight.C", 1.0)),
                                    "dim": box.dimension}, normalization=norm)
    elif family == "compact":
        w = WeightFunction(family, {"R0": float(config.get("weight.R0", 1.0))},
                           normalization=norm)
    elif family == "gaussian":
        if not isinstance(model, (GaussianModel, DependentColorVoronoiModel)):
            raise ConfigError("weight.family 'gaussian' needs a gaussian model")
        w = gaussian_weight(model.cov)
    elif family == "radius-law":
        if not isinstance(model, PoissonInclusionModel):
            raise ConfigError("weight.family 'radius-law' needs poisson-inclusions")
        w = radius_law_weight(model.spec.radius_law, model.spec.intensity,
                              box.dimension)
    elif family == "tabulated":
        w = WeightFunction("tabulated", table=(config["weight.ell"],
                                               config["weight.values"]),
                           normalization=norm)
    else:
        raise ConfigError("weight.family must be exp, stretched-exp, exp-log, "
                          f"compact, gaussian, radius-law, or tabulated; got {family!r}")
    resolved["weight.family"] = family
    for key in ("weight.C", "weight.R0"):
        if key in config:
            resolved[key] = float(config[key])
    return w


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8", newline="\n")
    os.replace(tmp, path)


def _named_functional(name: str, coeffs):
    if name == "sum":
        return lambda x: x.sum(axis=1)
    if name == "mean":
        return lambda x: x.mean(axis=1)
    if name == "max":
        return lambda x: x.max(axis=1)
    if name == "linear":
        c = np.asarray(coeffs, dtype=float)
        return lambda x: x @ c
    raise ConfigError(f"es.functional must be sum, mean, max, or linear; got {name!r}")


def _named_bl_observable(name: str):
    if name == "linear":
        return lambda a: a[:, 0]
    if name == "product":
        return lambda a: np.prod(a, axis=1)
    if name == "cubic":
        return lambda a: (a**3).sum(axis=1)
    raise ConfigError(f"bl.observable must be linear, product, or cubic; got {name!r}")


def run_config(config: dict, out_dir: Path, workers: int = 1) -> dict:
    """Execute one experiment; returns the resolved manifest dictionary."""
    kind = _validate_keys(config)
    seed = int(config["seed"])
    resolved = {"kind": kind, "seed": seed, "workers_requested": workers}
    rng = RngStream(seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts: list[str] = []

    if kind == "generate":
        model, box = _build_model(config, resolved)
        n = int(config.get("generate.n", 1))
        fmt = config.get("generate.format", "csv")
        if fmt not in ("csv", "binary"):
            raise ConfigError(f"generate.format must be csv or binary, got {fmt!r}")
        resolved.update({"generate.n": n, "generate.format": fmt})
        for i in range(n):
            field = model.observe(model.realize(rng.child(f"r{i}").child("m")))
            if fmt == "csv":
                path = out_dir / f"field_{i}.csv"
                field_to_csv(field, path)
                artifacts.append(path.name)
            else:
                path = out_dir / f"field_{i}.bin"
                field_to_binary(field, path)
                artifacts.extend([path.name, path.name + ".json"])
    elif kind in ("action-radius", "tail"):
        model, box = _build_model(config, resolved)
        prefix = "radius" if kind == "action-radius" else "tail"
        n = int(config.get(f"{prefix}.n", 500))
        ell = float(config.get(f"{prefix}.ell", 0.0))
        x = config.get(f"{prefix}.x", [box.side / 2.0] * box.dimension)
        resolved.update({f"{prefix}.n": n, f"{prefix}.ell": ell,
                         f"{prefix}.x": [float(c) for c in x]})
        rows = []
        samples = []
        skipped = 0
        for i in range(n):
            try:
                rho, _ = action_radius_trial(model, x, ell, rng.child(f"r{i}"))
            except BoundaryHit:
                skipped += 1
                continue
            rows.append((x, ell, rho, i))
            samples.append(rho)
        resolved["boundary_skipped"] = skipped
        path = out_dir / "radii.csv"
        lines = ["x,ell,rho,realization_id"]
        for xx, ee, rr, rid in rows:
            xs = ";".join(format(float(c), ".17g") for c in np.atleast_1d(xx))
            lines.append(f"{xs},{format(ee, '.17g')},{format(rr, '.17g')},{rid}")
        _atomic_write(path, "\n".join(lines) + "\n")
        artifacts.append(path.name)
        if kind == "tail":
            family = config.get("tail.family", "exponential")
            shape = config.get("tail.shape")
            resolved["tail.family"] = family
            if shape is not None:
                resolved["tail.shape"] = float(shape)
            fit = tail_fit(np.asarray(samples), family,
                           shape=None if shape is None else float(shape))
            fit_dict = {"family": fit.family, "shape": fit.shape, "rate": fit.rate,
                        "intercept": fit.intercept, "r_squared": fit.r_squared,
                        "fit_window": list(fit.fit_window),
                        "n_samples": fit.n_samples, "rate_ci": list(fit.rate_ci)}
            tpath = out_dir / "tail.json"
            _atomic_write(tpath, dumps_17g(fit_dict))
            artifacts.append(tpath.name)
    elif kind == "verify":
        model, box = _build_model(config, resolved)
        observables = _build_observables(config, resolved, box)
        weight = _build_weight(config, resolved, model, box)
        inequality = config.get("estimator.inequality", "MSG").upper()
        if inequality not in ("MSG", "MLSI", "MCI"):
            raise ConfigError("estimator.inequality must be MSG, MLSI, or MCI")
        n = int(config.get("estimator.n", 1000))
        K = int(config.get("estimator.K", 32))
        n_rhs = config.get("estimator.n_rhs")
        n_rhs = int(n_rhs) if n_rhs is not None else max(32, n // 64)
        glue = bool(config.get("estimator.glue", False))
        derivative = config.get("estimator.derivative",
                                "fct" if isinstance(model, GaussianModel) else "osc")
        scale_grid = config.get("estimator.scale_grid")
        x_fixed = config.get("estimator.x_spacing")
        resolved.update({"estimator.inequality": inequality, "estimator.n": n,
                         "estimator.K": K, "estimator.n_rhs": n_rhs,
                         "estimator.glue": glue, "estimator.derivative": derivative})
        kwargs = {}
        if scale_grid is not None:
            kwargs["scale_grid"] = [float(l) for l in scale_grid]
            resolved["estimator.scale_grid"] = kwargs["scale_grid"]
        if x_fixed is not None:
            spacing_value = float(x_fixed)
            kwargs["x_spacing"] = lambda b, ell: spacing_value
            resolved["estimator.x_spacing"] = spacing_value
        reports = verify_inequality(model, observables, weight, inequality, n, K,
                                    rng, model_id=config["model.type"], n_rhs=n_rhs,
                                    glue=glue, derivative=derivative,
                                    workers=workers, **kwargs)
        for rep in reports:
            path = out_dir / f"report_{'_'.join(rep.observables)}.json"
            _atomic_write(path, rep.to_json())
            artifacts.append(path.name)
        csv_path = out_dir / "reports.csv"
        rows = [reports[0].CSV_HEADER] + [r.to_csv_row() for r in reports]
        _atomic_write(csv_path, "\n".join(rows) + "\n")
        artifacts.append(csv_path.name)
    elif kind == "efron-stein":
        n_vars = int(config.get("es.n_vars", 2))
        law = _law(config.get("es.law", ["uniform", 0.0, 1.0]), "es.law")
        fname = config.get("es.functional", "sum")
        functional = _named_functional(fname, config.get("es.coeffs"))
        n_mc = int(config.get("es.n_mc", 10_000))
        resolved.update({"es.n_vars": n_vars, "es.law": [law.kind, *law.params],
                         "es.functional": fname, "es.n_mc": n_mc})
        out = efron_stein_check(n_vars, law, functional, n_mc, rng)
        payload = {"lhs": out["lhs"].as_dict(), "rhs": out["rhs"].as_dict(),
                   "ratio": out["ratio"], "ratio_stderr": out["ratio_stderr"]}
        path = out_dir / "efron_stein.json"
        _atomic_write(path, dumps_17g(payload))
        artifacts.append(path.name)
    else:  # brascamp-lieb
        F = np.asarray(config.get("bl.F", [[1.0]]), dtype=float)
        obs_name = config.get("bl.observable", "linear")
        level = int(config.get("bl.level", 12))
        resolved.update({"bl.F": F.tolist(), "bl.observable": obs_name,
                         "bl.level": level})
        out = brascamp_lieb_oracle(F, _named_bl_observable(obs_name),
                                   quadrature_level=level)
        path = out_dir / "brascamp_lieb.json"
        _atomic_write(path, dumps_17g(out))
        artifacts.append(path.name)

    resolved["artifacts"] = sorted(artifacts)
    manifest = out_dir / "manifest.json"
    _atomic_write(manifest, dumps_17g(resolved))
    return resolved


def report_table(paths) -> str:
    """Consolidated one-row-per-report CSV, sorted by model id."""
    reports = []
    for p in paths:
        data = json.loads(Path(p).read_text(encoding="utf-8"))
        if "inequality" not in data:
            raise MixedReportKinds(f"{p} is not a verification report")
        reports.append(data)
    kinds = {r["inequality"] for r in reports}
    if len(kinds) > 1:
        raise MixedReportKinds(f"mixed report kinds: {sorted(kinds)}")
    reports.sort(key=lambda r: (r["model"], ";".join(r["observables"])))
    from .estimators import MfiReport

    rows = [MfiReport.CSV_HEADER]
    for r in reports:
        cells = [r["inequality"], r["model"], ";".join(r["observables"]),
                 format(r["lhs"]["value"], ".17g"), format(r["lhs"]["stderr"], ".17g"),
                 format(r["rhs"]["value"], ".17g"), format(r["rhs"]["stderr"], ".17g"),
                 format(r["best_constant"], ".17g"), str(r["K"]), str(r["n"]),
                 str(r["n_rhs"]), str(r["seed"]), r["derivative"], str(r["glue"])]
        rows.append(",".join(cells))
    return "\n".join(rows) + "\n"


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mfi-lab")
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run one experiment config")
    run_p.add_argument("config", type=Path)
    run_p.add_argument("--workers", type=int,
                       default=int(os.environ.get("MFI_LAB_WORKERS", "1")))
    run_p.add_argument("--out", type=Path, default=Path("out"))
    rep_p = sub.add_parser("report", help="consolidate verification reports")
    rep_p.add_argument("globs", nargs="+")
    rep_p.add_argument("--out", type=Path, default=None)
    args = parser.parse_args(argv)

    if args.command == "run":
        try:
            config = json.loads(args.config.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        try:
            run_config(config, args.out, workers=max(args.workers, 1))
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        except Exception as exc:  # noqa: BLE001 - runtime failures exit 3
            print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        return 0

    paths = sorted(_expand_globs(args.globs))
    try:
        table = report_table(paths)
    except MixedReportKinds as exc:
        print(f"report error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if args.out is not None:
        _atomic_write(args.out, table)
    else:
        sys.stdout.write(table)
    return 0


def _expand_globs(globs) -> list[str]:
    out: list[str] = []
    for g in globs:
        matches = globmod.glob(g)
        out.extend(matches if matches else [g])
    return out


if __name__ == "__main__":
    sys.exit(main())
