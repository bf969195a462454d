"""Derivative estimators and empirical action radii.

The oscillation derivative is approximated by K conditional resamples of the
hidden structure on a ball; the functional derivative by central finite
differences (or the observable's analytic gradient); the sup variant takes
the largest functional derivative over K resamples.
"""

from __future__ import annotations

import numpy as np

from .core import BoxSpec, FieldSample, RngStream, lattice_sites
from .models import Region, UnsupportedGenerator
from .observables import NonSmoothObservable, Observable

__all__ = [
    "BoundaryHit",
    "osc_derivative",
    "osc_from_realization",
    "fct_derivative",
    "sup_derivative",
    "empirical_action_radius",
    "action_radius_trial",
]


class BoundaryHit(RuntimeError):
    """Difference support touches the padded boundary; margin too small."""


def _require_resampling(model):
    if not hasattr(model, "osc_values_batch"):
        raise UnsupportedGenerator(f"{type(model).__name__} exposes no block resampling")


def osc_from_realization(model, real, support, observable: Observable, x, ell: float,
                         K: int, rng: RngStream, glue: bool = False,
                         obs_slice=None) -> float:
    """max - min of the observable over the base field plus K block resamples."""
    region = Region.ball(x, ell + 1.0)
    vals = model.osc_values_batch(real, support, region, rng, K)
    base_vals = support["base_vals"] if obs_slice is None else support["base_vals"][obs_slice]
    if vals is None:
        return 0.0
    if obs_slice is not None:
        vals = vals[:, obs_slice]
    if glue:
        sites = support["sites"] if obs_slice is None else support["sites"][obs_slice]
        inside = region.contains(sites, model.box)
        if not inside.any():
            return 0.0
        vals = np.where(inside[None, :], vals, base_vals[None, :])
    zs = observable.evaluate_batch(np.vstack([base_vals[None, :], vals]))
    return _snap_tiny(float(zs.max() - zs.min()), zs)


def _snap_tiny(osc: float, zs: np.ndarray) -> float:
    """Oscillations below float resolution of the values are exact zeros."""
    if osc <= 64.0 * np.finfo(float).eps * max(1.0, float(np.abs(zs).max())):
        return 0.0
    return osc


def osc_derivative(model, observable: Observable, x, ell: float, K: int,
                   rng: RngStream, glue: bool = False) -> float:
    """Oscillation estimate at one site and scale from a fresh realization.

    The K resampled fields share everything outside the resampled block's
    influence; larger K can only widen the max - min envelope.
    """
    if K < 2:
        raise ValueError("need at least 2 resamples")
    _require_resampling(model)
    real = model.realize(rng.child("realization"))
    support = model.prepare_support(real, lattice_sites(model.box)[observable.support_idx])
    return osc_from_realization(model, real, support, observable, x, ell, K,
                                rng.child("resamples"), glue=glue)


def fct_derivative(field: FieldSample, observable: Observable, region_idx,
                   step: float | None = None, method: str = "fd") -> float:
    """Integrated absolute field derivative of the observable over a site set.

    'fd' probes each region site with a central difference; 'gradient' uses
    the observable's analytic density (they agree for the smooth kinds).
    """
    if not observable.differentiable:
        raise NonSmoothObservable(observable.kind)
    region_idx = np.asarray(region_idx)
    flat = field.flat
    hd = field.box.spacing ** field.box.dimension
    if method == "gradient":
        density = observable.gradient_density(flat)
        sel = np.isin(observable.support_idx, region_idx)
        return float(np.abs(density[sel]).sum() * hd)
    if step is None:
        step = 1e-3 * max(flat.std(), 1.0)
    probe_idx = region_idx[np.isin(region_idx, observable.support_idx)]
    total = 0.0
    work = flat.copy()
    for i in probe_idx:
        old = work[i]
        work[i] = old + step
        up = observable.evaluate(work)
        work[i] = old - step
        down = observable.evaluate(work)
        work[i] = old
        total += abs(up - down) / (2.0 * step)
    return float(total)


def sup_derivative(model, observable: Observable, x, ell: float, K: int,
                   rng: RngStream, region_idx=None, step: float | None = None) -> float:
    """Largest functional derivative over K block resamples (approximation of
    the sup-derivative; flagged as such in reports)."""
    _require_resampling(model)
    real = model.realize(rng.child("realization"))
    region = Region.ball(x, ell + 1.0)
    if region_idx is None:
        sites = lattice_sites(model.box)
        region_idx = np.flatnonzero(region.contains(sites, model.box))
    best = fct_derivative(model.observe(real), observable, region_idx, step=step)
    for k in range(K):
        real2 = model.resample_realization(real, region, rng.child(f"sup{k}"))
        best = max(best, fct_derivative(model.observe(real2), observable, region_idx,
                                        step=step))
    return float(best)


def action_radius_trial(model, x, ell: float, rng: RngStream):
    """One resampling trial: (measured radius, certified overbound or None).

    Resamples the cube block of half-width ell and measures how far the field
    difference extends beyond it; raises BoundaryHit when the difference
    reaches the padded boundary.
    """
    box: BoxSpec = model.box
    real = model.realize(rng.child("realization"))
    region = Region.cube(x, 2.0 * ell + 1.0)
    real2 = model.resample_realization(real, region, rng.child("resample"))
    certified = model.certified_radius(real, real2, region)
    sites = model.diff_sites()
    v1 = model.values_at(real, sites)
    v2 = model.values_at(real2, sites)
    changed = v1 != v2
    if not changed.any():
        return 0.0, certified
    if box.periodic:
        limit = box.side / 2.0 - box.spacing
        rho = float(region.distance(sites[changed], box).max())
        if rho >= limit:
            raise BoundaryHit("difference wraps the periodic box")
        return rho, certified
    hull_low = sites.min(axis=0)
    hull_high = sites.max(axis=0)
    csites = sites[changed]
    on_hull = np.any((np.abs(csites - hull_low) < 1e-9)
                     | (np.abs(csites - hull_high) < 1e-9), axis=1)
    if on_hull.any():
        raise BoundaryHit("difference support reaches the padded boundary")
    return float(region.distance(csites, box).max()), certified


def empirical_action_radius(model, x, ell: float, rng: RngStream) -> float:
    """Measured support radius of the field difference under one block resample."""
    _require_resampling(model)
    rho, _ = action_radius_trial(model, x, ell, rng)
    return rho
