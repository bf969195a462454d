"""Poisson spherical-inclusion fields with random radii.

Three value schemes on overlapping balls: two-phase paint, a clipped sum of
per-inclusion values, and priority paint where the highest-priority inclusion
wins each site.  Dependent colorings reuse the same machinery with values
read off an external color field at the generating points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .core import BoxSpec, FieldSample, lattice_sites
from .laws import RadiusLaw, ScalarLaw
from .pointproc import PointConfiguration
from .tessellation import nearest_values
from .weights import radius_law_weight

__all__ = [
    "ClippedMap",
    "InclusionModelSpec",
    "MissingDecoration",
    "inclusion_field",
    "inclusion_values_at",
    "dependent_color_field",
    "gamma_weight",
]


class MissingDecoration(KeyError):
    pass


@dataclass(frozen=True)
class ClippedMap:
    """Map u -> clip(u, lo, hi); identity when the bounds are infinite."""

    lo: float = -np.inf
    hi: float = np.inf

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(u, dtype=float), self.lo, self.hi)

    @staticmethod
    def identity() -> "ClippedMap":
        return ClippedMap()


def _priority_values(kind: str, radii, w, u):
    if kind == "value":
        return radii
    if kind == "neg-value":
        return -np.asarray(radii)
    if kind == "w":
        return w
    if kind == "random":
        return np.zeros_like(u)
    raise ValueError(f"unknown priority functional {kind!r}")


@dataclass(frozen=True)
class InclusionModelSpec:
    """Scheme + parameters for a spherical-inclusion field.

    Schemes: 'A1-two-phase' (alpha inside the union, beta outside),
    'A2-sum' (f of the sum of covering W values, beta outside),
    'A3-priority' (the highest-priority covering inclusion's W value,
    priority by the named functional then by the uniform tiebreak U).
    """

    scheme: str
    radius_law: RadiusLaw
    intensity: float
    alpha: float = 1.0
    beta: float = 0.0
    f: ClippedMap = ClippedMap.identity()
    w_law: ScalarLaw = ScalarLaw.const(1.0)
    priority: str = "value"

    def __post_init__(self):
        if self.scheme not in ("A1-two-phase", "A2-sum", "A3-priority"):
            raise ValueError(f"unknown inclusion scheme {self.scheme!r}")
        if self.intensity <= 0:
            raise ValueError("intensity must be positive")
        _priority_values(self.priority, np.zeros(1), np.zeros(1), np.zeros(1))

    @property
    def required_decorations(self) -> tuple[str, ...]:
        if self.scheme == "A1-two-phase":
            return ("V",)
        if self.scheme == "A2-sum":
            return ("V", "W")
        return ("V", "W", "U")


def _cover_lists(sites: np.ndarray, positions: np.ndarray, radii: np.ndarray):
    """Per-point lists of covered site indices (closed balls)."""
    if len(positions) == 0:
        return []
    tree = cKDTree(sites)
    return tree.query_ball_point(positions, np.asarray(radii, dtype=float) + 1e-12)


def inclusion_values_at(spec: InclusionModelSpec, positions: np.ndarray,
                        decorations: dict, sites: np.ndarray) -> np.ndarray:
    """Field values of the scheme at arbitrary sites."""
    n_sites = len(sites)
    radii = decorations["V"]
    covers = _cover_lists(sites, positions, radii)
    if spec.scheme == "A1-two-phase":
        covered = np.zeros(n_sites, dtype=bool)
        for hit in covers:
            covered[hit] = True
        return np.where(covered, spec.alpha, spec.beta)
    if spec.scheme == "A2-sum":
        w = decorations["W"]
        total = np.zeros(n_sites)
        covered = np.zeros(n_sites, dtype=bool)
        for j, hit in enumerate(covers):
            total[hit] += w[j]
            covered[hit] = True
        return np.where(covered, spec.beta + (spec.f(total) - spec.beta), spec.beta)
    w, u = decorations["W"], decorations["U"]
    prio = _priority_values(spec.priority, radii, w, u)
    order = np.lexsort((u, prio))
    rank = np.full(n_sites, len(positions), dtype=int)
    winner = np.full(n_sites, -1, dtype=int)
    for r, j in enumerate(order):
        hit = covers[j]
        if not hit:
            continue
        hit = np.asarray(hit)
        better = r < rank[hit]
        rank[hit] = np.where(better, r, rank[hit])
        winner[hit] = np.where(better, j, winner[hit])
    values = np.full(n_sites, spec.beta, dtype=float)
    hitmask = winner >= 0
    values[hitmask] = w[winner[hitmask]]
    return values


def inclusion_field(config: PointConfiguration, spec: InclusionModelSpec,
                    box: BoxSpec) -> FieldSample:
    """Rasterize the scheme on the observation lattice."""
    for name in spec.required_decorations:
        if name not in config.decorations:
            raise MissingDecoration(name)
    sites = lattice_sites(box)
    values = inclusion_values_at(spec, config.positions, config.decorations, sites)
    return FieldSample(box, values.reshape((box.sites_per_side,) * box.dimension))


def gamma_weight(radius_law: RadiusLaw, intensity: float, dimension: int):
    """Scale weight mu*(l+1)^d * running-sup band mass of the radius law."""
    return radius_law_weight(radius_law, intensity, dimension)


def color_at_points(color_field: FieldSample, positions: np.ndarray) -> np.ndarray:
    """Color-field value at the lattice site nearest to each point."""
    box = color_field.box
    n = box.sites_per_side
    idx = np.floor(np.asarray(positions) / box.spacing).astype(int)
    if box.periodic:
        idx = np.mod(idx, n)
    else:
        idx = np.clip(idx, 0, n - 1)
    flat = np.ravel_multi_index(idx.T, (n,) * box.dimension)
    return color_field.flat[flat]


def dependent_color_field(config: PointConfiguration, base: str,
                          color_field: FieldSample, box: BoxSpec,
                          beta: float = 0.0, priority: str = "value") -> FieldSample:
    """Geometric pattern colored by an external field at the generating points.

    base 'voronoi': cells take the color at their nucleus; base
    'inclusions-A3-style': priority-painted balls take the color at their
    center (requires V and U decorations).
    """
    colors = color_at_points(color_field, config.positions)
    if base == "voronoi":
        sites = lattice_sites(box)
        vals = nearest_values(config, sites, colors)
        return FieldSample(box, vals.reshape((box.sites_per_side,) * box.dimension))
    if base != "inclusions-A3-style":
        raise ValueError(f"unknown base {base!r}")
    for name in ("V", "U"):
        if name not in config.decorations:
            raise MissingDecoration(name)
    spec = InclusionModelSpec("A3-priority", RadiusLaw.bounded_uniform(1.0), 1.0,
                              beta=beta, priority=priority)
    decorations = dict(config.decorations)
    decorations["W"] = colors
    sites = lattice_sites(box)
    values = inclusion_values_at(spec, config.positions, decorations, sites)
    return FieldSample(box, values.reshape((box.sites_per_side,) * box.dimension))
