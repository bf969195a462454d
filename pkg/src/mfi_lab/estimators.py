"""Monte Carlo estimators for both sides of the multiscale inequalities.

Left-hand sides (variance, entropy, covariance) are plain sample statistics
with resampling stderrs.  Right-hand sides integrate squared local
derivatives over a deterministic (scale, position) grid: trapezoid in the
scale, cell sums in position, Monte Carlo over realizations.  The first
right-hand-side realizations reuse the left-hand-side streams so ratios
cancel Monte Carlo noise where the definitions allow.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from multiprocessing import get_context

import numpy as np

from .core import BoxSpec, RngStream, dumps_17g, lattice_sites, periodic_delta
from .derivatives import _snap_tiny
from .models import Region
from .observables import Observable
from .weights import WeightFunction

__all__ = [
    "Estimate",
    "MfiReport",
    "ZeroObservable",
    "WeightSupportNotCovered",
    "sample_observables",
    "variance_estimate",
    "entropy_estimate",
    "covariance_estimate",
    "multiscale_rhs",
    "mci_rhs",
    "efron_stein_check",
    "verify_inequality",
    "default_x_spacing",
    "coarse_cells",
]


class ZeroObservable(ValueError):
    pass


class WeightSupportNotCovered(ValueError):
    pass


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float

    def as_dict(self) -> dict:
        return {"value": self.value, "stderr": self.stderr}


# -- deterministic chunked parallelism ---------------------------------------

_CHUNK = 64


def _chunk_ranges(n: int):
    return [(s, min(s + _CHUNK, n)) for s in range(0, n, _CHUNK)]


def _run_chunks(job, args, n: int, workers: int):
    """Run job(args, start, stop) over fixed chunks; combine in chunk order."""
    ranges = _chunk_ranges(n)
    if workers <= 1 or len(ranges) == 1:
        return [job((args, s, e)) for s, e in ranges]
    with get_context("fork").Pool(min(workers, len(ranges))) as pool:
        return pool.map(job, [(args, s, e) for s, e in ranges])


# -- observable sampling and plain estimators ---------------------------------


def _sample_chunk(packed):
    (model, observables, rng), start, stop = packed
    out = np.empty((stop - start, len(observables)))
    for i in range(start, stop):
        real = model.realize(rng.child(f"r{i}").child("m"))
        flat = model.observe(real).flat
        for j, obs in enumerate(observables):
            out[i - start, j] = obs.evaluate(flat)
    return out


def sample_observables(model, observables, n: int, rng: RngStream,
                       workers: int = 1) -> np.ndarray:
    """(n, n_obs) observable values over independent realizations."""
    chunks = _run_chunks(_sample_chunk, (model, tuple(observables), rng), n, workers)
    return np.vstack(chunks)


def _jackknife_variance_stderr(z: np.ndarray) -> float:
    n = len(z)
    mean = z.mean()
    ss = ((z - mean) ** 2).sum()
    ss_i = ss - (z - mean) ** 2 * n / (n - 1)
    var_i = ss_i / (n - 2)
    return float(np.sqrt((n - 1) / n * ((var_i - var_i.mean()) ** 2).sum()))


def variance_from_values(z: np.ndarray) -> Estimate:
    z = np.asarray(z, dtype=float)
    return Estimate(float(z.var(ddof=1)), _jackknife_variance_stderr(z))


def variance_estimate(model, observable: Observable, n: int, rng: RngStream,
                      workers: int = 1) -> Estimate:
    """Unbiased sample variance of the observable with jackknife stderr."""
    if n < 2:
        raise ValueError("need n >= 2")
    z = sample_observables(model, [observable], n, rng, workers)[:, 0]
    return variance_from_values(z)


def entropy_from_values(z: np.ndarray, n_boot: int = 200, seed: int = 0) -> Estimate:
    z2 = np.asarray(z, dtype=float) ** 2
    if np.all(z2 == 0):
        raise ZeroObservable("observable vanishes almost surely")

    def plug_in(v):
        m = v.mean()
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(v > 0, v * np.log(v / m), 0.0)
        return terms.mean()

    est = plug_in(z2)
    gen = RngStream(seed, ("entropy-boot",)).generator()
    boots = [plug_in(gen.choice(z2, size=len(z2), replace=True)) for _ in range(n_boot)]
    return Estimate(float(est), float(np.std(boots, ddof=1)))


def entropy_estimate(model, observable: Observable, n: int, rng: RngStream,
                     workers: int = 1) -> Estimate:
    """Plug-in estimate of Ent[Z^2] with bootstrap stderr."""
    if n < 2:
        raise ValueError("need n >= 2")
    z = sample_observables(model, [observable], n, rng, workers)[:, 0]
    return entropy_from_values(z)


def covariance_from_values(y: np.ndarray, z: np.ndarray) -> Estimate:
    n = len(y)
    yc = y - y.mean()
    zc = z - z.mean()
    prod = yc * zc
    cov = prod.sum() / (n - 1)
    stderr = prod.std(ddof=1) / np.sqrt(n) * n / (n - 1)
    return Estimate(float(cov), float(stderr))


def covariance_estimate(model, obs_y: Observable, obs_z: Observable, n: int,
                        rng: RngStream, workers: int = 1) -> Estimate:
    """Unbiased sample covariance on paired realizations."""
    if n < 2:
        raise ValueError("need n >= 2")
    vals = sample_observables(model, [obs_y, obs_z], n, rng, workers)
    return covariance_from_values(vals[:, 0], vals[:, 1])


# -- right-hand sides ----------------------------------------------------------


def default_x_spacing(box: BoxSpec, ell: float) -> float:
    """Sublattice spacing for the position grid: max(h, ell / 4) snapped to a
    multiple of the lattice pitch."""
    h = box.spacing
    return max(h, np.floor(ell / 4.0 / h) * h)


def snapped_spacing(box: BoxSpec, spacing: float) -> float:
    """Coarse-cell pitch adjusted so the cells tile the box exactly."""
    per_side = max(int(np.floor(box.side / spacing)), 1)
    return box.side / per_side


def coarse_cells(box: BoxSpec, spacing: float) -> np.ndarray:
    """Centers of the coarse cells of the given spacing tiling the box."""
    spacing = snapped_spacing(box, spacing)
    per_side = int(round(box.side / spacing))
    axis = (np.arange(per_side) + 0.5) * spacing
    grids = np.meshgrid(*([axis] * box.dimension), indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=-1)


def _trapezoid_coeffs(grid: np.ndarray) -> np.ndarray:
    if len(grid) == 1:
        return np.ones(1)
    c = np.empty(len(grid))
    c[0] = (grid[1] - grid[0]) / 2.0
    c[-1] = (grid[-1] - grid[-2]) / 2.0
    c[1:-1] = (grid[2:] - grid[:-2]) / 2.0
    return c


def _check_support(weight: WeightFunction, scale_grid) -> None:
    if not weight.integrable:
        raise WeightSupportNotCovered("weight is non-integrable")
    total = weight.integral()
    if weight.mass_beyond(float(np.max(scale_grid))) > 0.01 * total:
        raise WeightSupportNotCovered(
            "scale grid stops before 99% of the weight's mass")


def _union_support(box: BoxSpec, observables) -> tuple[np.ndarray, list[slice]]:
    sites = lattice_sites(box)
    coords = []
    slices = []
    at = 0
    for obs in observables:
        c = sites[obs.support_idx]
        coords.append(c)
        slices.append(slice(at, at + len(c)))
        at += len(c)
    return np.vstack(coords), slices


def _osc_chunk(packed):
    (model, observables, scale_grid, x_grids, K, glue, rng), start, stop = packed
    union_coords, slices = _union_support(model.box, observables)
    n_obs = len(observables)
    out = {ell: np.zeros((stop - start, n_obs, len(x_grids[ell])))
           for ell in scale_grid}
    active = {}
    if glue:
        # field-local oscillation vanishes unless the ball meets the support
        for ell in scale_grid:
            delta = periodic_delta(model.box, x_grids[ell][:, None, :]
                                   - union_coords[None, :, :])
            dmin = np.sqrt(np.einsum("ijk,ijk->ij", delta, delta)).min(axis=1)
            active[ell] = dmin <= ell + 1.0 + 1e-12
    for r in range(start, stop):
        stream = rng.child(f"r{r}")
        real = model.realize(stream.child("m"))
        support = model.prepare_support(real, union_coords)
        base_vals = support["base_vals"]
        for ell in scale_grid:
            cells = x_grids[ell]
            for ci in range(len(cells)):
                if glue and not active[ell][ci]:
                    continue
                region = Region.ball(cells[ci], ell + 1.0)
                vals = model.osc_values_batch(real, support, region,
                                              stream.child(f"o{ell}:{ci}"), K)
                if vals is None:
                    continue
                if glue:
                    inside = region.contains(union_coords, model.box)
                    if not inside.any():
                        continue
                    vals = np.where(inside[None, :], vals, base_vals[None, :])
                # base field evaluated through the same batched path
                vals = np.vstack([base_vals[None, :], vals])
                for j, obs in enumerate(observables):
                    zk = obs.evaluate_batch(vals[:, slices[j]])
                    osc = _snap_tiny(float(zk.max() - zk.min()), zk)
                    out[ell][r - start, j, ci] = osc * osc
    return out


def _fct_chunk(packed):
    (model, observables, scale_grid, x_grids, fd_step, rng), start, stop = packed
    box = model.box
    sites = lattice_sites(box)
    hd = box.spacing ** box.dimension
    n_obs = len(observables)
    out = {ell: np.zeros((stop - start, n_obs, len(x_grids[ell])))
           for ell in scale_grid}
    dist_cache = {}
    for r in range(start, stop):
        stream = rng.child(f"r{r}")
        real = model.realize(stream.child("m"))
        flat = model.observe(real).flat
        for j, obs in enumerate(observables):
            density = np.abs(obs.gradient_density(flat)) * hd
            coords = sites[obs.support_idx]
            for ell in scale_grid:
                key = (j, ell)
                if key not in dist_cache:
                    delta = x_grids[ell][:, None, :] - coords[None, :, :]
                    if box.periodic:
                        delta = delta - box.side * np.round(delta / box.side)
                    dist_cache[key] = np.sqrt(np.einsum("ijk,ijk->ij", delta, delta))
                mask = dist_cache[key] <= ell + 1.0 + 1e-12
                per_cell = mask @ density
                out[ell][r - start, j, :] = per_cell**2
    return out


def multiscale_rhs(model, observables, weight: WeightFunction, K: int, n: int,
                   rng: RngStream, scale_grid=None, x_spacing=default_x_spacing,
                   glue: bool = False, derivative: str = "osc",
                   fd_step: float | None = None, workers: int = 1):
    """Right-hand side of the multiscale Poincare inequality per observable.

    Returns (estimates, cube, x_grids): per-observable Estimate, plus the raw
    per-realization squared-derivative cell sums for reuse (covariance form,
    bootstrap).
    """
    from .weights import geometric_scale_grid

    if scale_grid is None:
        scale_grid = geometric_scale_grid(weight)
    scale_grid = np.asarray(sorted(set(float(l) for l in scale_grid)))
    _check_support(weight, scale_grid)
    box = model.box
    x_grids = {ell: coarse_cells(box, x_spacing(box, ell)) for ell in scale_grid}
    observables = tuple(observables)
    if derivative == "osc":
        chunks = _run_chunks(_osc_chunk, (model, observables, tuple(scale_grid),
                                          x_grids, K, glue, rng), n, workers)
    elif derivative == "fct":
        for obs in observables:
            if not obs.differentiable:
                from .observables import NonSmoothObservable

                raise NonSmoothObservable(obs.kind)
        chunks = _run_chunks(_fct_chunk, (model, observables, tuple(scale_grid),
                                          x_grids, fd_step, rng), n, workers)
    else:
        raise ValueError("derivative must be 'osc' or 'fct'")
    cube = {ell: np.concatenate([c[ell] for c in chunks], axis=0) for ell in scale_grid}
    coeffs = _trapezoid_coeffs(scale_grid)
    d = box.dimension
    estimates = []
    for j in range(len(observables)):
        totals = np.zeros(n)
        for li, ell in enumerate(scale_grid):
            meas = snapped_spacing(box, x_spacing(box, ell)) ** d
            cell_sum = cube[ell][:, j, :].sum(axis=1) * meas
            totals += coeffs[li] * (ell + 1.0) ** (-d) * float(weight(ell)) * cell_sum
        estimates.append(Estimate(float(totals.mean()),
                                  float(totals.std(ddof=1) / np.sqrt(n))))
    return estimates, cube, x_grids


def mci_rhs_from_cube(box: BoxSpec, weight: WeightFunction, cube, x_spacing,
                      j_y: int, j_z: int, n_boot: int = 200,
                      seed: int = 0) -> Estimate:
    """Covariance-form right-hand side from stored per-cell squared derivatives:
    product of root-mean squares, same draws as the variance form."""
    scale_grid = np.asarray(sorted(cube.keys()))
    coeffs = _trapezoid_coeffs(scale_grid)
    d = box.dimension

    def reduce(idx):
        total = 0.0
        for li, ell in enumerate(scale_grid):
            meas = snapped_spacing(box, x_spacing(box, ell)) ** d
            my = cube[ell][idx, j_y, :].mean(axis=0)
            mz = cube[ell][idx, j_z, :].mean(axis=0)
            total += (coeffs[li] * (ell + 1.0) ** (-d) * float(weight(ell))
                      * float(np.sqrt(my * mz).sum()) * meas)
        return total

    n = next(iter(cube.values())).shape[0]
    base = reduce(np.arange(n))
    gen = RngStream(seed, ("mci-boot",)).generator()
    boots = [reduce(gen.integers(0, n, size=n)) for _ in range(n_boot)]
    return Estimate(float(base), float(np.std(boots, ddof=1)))


def mci_rhs(model, obs_y: Observable, obs_z: Observable, weight: WeightFunction,
            K: int, n: int, rng: RngStream, scale_grid=None,
            x_spacing=default_x_spacing, glue: bool = False,
            derivative: str = "osc", workers: int = 1) -> Estimate:
    """Multiscale covariance-inequality right-hand side."""
    _, cube, _ = multiscale_rhs(model, [obs_y, obs_z], weight, K, n, rng,
                                scale_grid=scale_grid, x_spacing=x_spacing,
                                glue=glue, derivative=derivative, workers=workers)
    return mci_rhs_from_cube(model.box, weight, cube, x_spacing, 0, 1)


# -- independent-block sanity check -------------------------------------------


def efron_stein_check(n_vars: int, law, functional, n_mc: int, rng: RngStream) -> dict:
    """Monte Carlo both sides of the block-resampling variance bound with
    shared draws; the ratio lhs/rhs must not exceed 1 beyond noise."""
    if n_vars > 64:
        raise ValueError("n_vars must be <= 64")
    draws = law.sample(rng.child("X"), n_mc * n_vars).reshape(n_mc, n_vars)
    fresh = law.sample(rng.child("Xp"), n_mc * n_vars).reshape(n_mc, n_vars)
    f0 = np.asarray(functional(draws), dtype=float)
    rhs_terms = np.zeros(n_mc)
    for x in range(n_vars):
        perturbed = draws.copy()
        perturbed[:, x] = fresh[:, x]
        fx = np.asarray(functional(perturbed), dtype=float)
        rhs_terms += (f0 - fx) ** 2
    rhs_terms *= 0.5
    lhs = variance_from_values(f0)
    rhs = Estimate(float(rhs_terms.mean()),
                   float(rhs_terms.std(ddof=1) / np.sqrt(n_mc)))
    if rhs.value > 0:
        ratio = lhs.value / rhs.value
        rel = np.sqrt((lhs.stderr / max(lhs.value, 1e-300)) ** 2
                      + (rhs.stderr / rhs.value) ** 2)
        ratio_stderr = abs(ratio) * rel
    else:
        ratio = 0.0 if lhs.value <= 0 else float("inf")
        ratio_stderr = 0.0
    return {"lhs": lhs, "rhs": rhs, "ratio": float(ratio),
            "ratio_stderr": float(ratio_stderr)}


# -- verification reports -------------------------------------------------------


@dataclass(frozen=True)
class MfiReport:
    """Paired LHS/RHS estimates for one inequality, model, observable(s)."""

    inequality: str
    model_id: str
    observables: tuple[str, ...]
    lhs: Estimate
    rhs: Estimate
    best_constant: float
    scale_grid: tuple[float, ...]
    x_spacing: tuple[float, ...]
    K: int
    n: int
    n_rhs: int
    seed: int
    derivative: str
    glue: bool = False

    def as_dict(self) -> dict:
        return {
            "inequality": self.inequality,
            "model": self.model_id,
            "observables": list(self.observables),
            "lhs": self.lhs.as_dict(),
            "rhs": self.rhs.as_dict(),
            "best_constant": self.best_constant,
            "scale_grid": list(self.scale_grid),
            "x_spacing": list(self.x_spacing),
            "K": self.K,
            "n": self.n,
            "n_rhs": self.n_rhs,
            "seed": self.seed,
            "derivative": self.derivative,
            "glue": self.glue,
        }

    def to_json(self) -> str:
        return dumps_17g(self.as_dict())

    CSV_HEADER = ("inequality,model,observables,lhs,lhs_stderr,rhs,rhs_stderr,"
                  "best_constant,K,n,n_rhs,seed,derivative,glue")

    def to_csv_row(self) -> str:
        cells = [self.inequality, self.model_id, ";".join(self.observables),
                 format(self.lhs.value, ".17g"), format(self.lhs.stderr, ".17g"),
                 format(self.rhs.value, ".17g"), format(self.rhs.stderr, ".17g"),
                 format(self.best_constant, ".17g"), str(self.K), str(self.n),
                 str(self.n_rhs), str(self.seed), self.derivative, str(self.glue)]
        return ",".join(cells)


def _best_constant(lhs: float, rhs: float) -> float:
    if rhs > 0:
        return max(lhs, 0.0) / rhs
    return 0.0 if lhs <= 0 else float("inf")


def verify_inequality(model, observables, weight: WeightFunction, inequality: str,
                      n: int, K: int, rng: RngStream, model_id: str = "model",
                      n_rhs: int | None = None, scale_grid=None,
                      x_spacing=default_x_spacing, glue: bool = False,
                      derivative: str = "osc", workers: int = 1) -> list[MfiReport]:
    """Estimate lhs and rhs for each observable (or the pair, for the
    covariance inequality) and report the smallest admissible constant.

    The first n_rhs right-hand-side realizations reuse the left-hand-side
    streams; resample randomness comes from disjoint substreams.
    """
    inequality = inequality.upper()
    if inequality not in ("MSG", "MLSI", "MCI"):
        raise ValueError("inequality must be MSG, MLSI, or MCI")
    observables = list(observables)
    if n_rhs is None:
        n_rhs = max(32, n // 64)
    values = sample_observables(model, observables, n, rng, workers)
    if scale_grid is None:
        from .weights import geometric_scale_grid

        scale_grid = geometric_scale_grid(weight)
    rhs_est, cube, x_grids = multiscale_rhs(
        model, observables, weight, K, n_rhs, rng, scale_grid=scale_grid,
        x_spacing=x_spacing, glue=glue, derivative=derivative, workers=workers)
    spacings = tuple(snapped_spacing(model.box, x_spacing(model.box, ell))
                     for ell in scale_grid)
    reports = []
    if inequality == "MCI":
        if len(observables) != 2:
            raise ValueError("MCI verification takes exactly two observables")
        lhs = covariance_from_values(values[:, 0], values[:, 1])
        rhs = mci_rhs_from_cube(model.box, weight, cube, x_spacing, 0, 1)
        reports.append(MfiReport("MCI", model_id,
                                 tuple(o.name for o in observables), lhs, rhs,
                                 _best_constant(lhs.value, rhs.value),
                                 tuple(float(l) for l in scale_grid), spacings, K, n,
                                 n_rhs, rng.seed, derivative, glue))
        return reports
    for j, obs in enumerate(observables):
        if inequality == "MSG":
            lhs = variance_from_values(values[:, j])
        else:
            lhs = entropy_from_values(values[:, j])
        rhs = rhs_est[j]
        reports.append(MfiReport(inequality, model_id, (obs.name,), lhs, rhs,
                                 _best_constant(lhs.value, rhs.value),
                                 tuple(float(l) for l in scale_grid), spacings, K, n,
                                 n_rhs, rng.seed, derivative, glue))
    return reports
