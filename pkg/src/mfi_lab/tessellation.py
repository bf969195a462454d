"""Voronoi tessellation fields and their exact geometric action radius.

The influence region of a cube is the set of lattice sites that some point
of the cube could still claim against all generating points outside the
cube; its boundary gives a certified radius beyond which resampling the
cube's content cannot change the field.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .core import BoxSpec, FieldSample, lattice_sites, padded_lattice_sites
from .laws import ScalarLaw
from .pointproc import PointConfiguration, cube_distance

__all__ = [
    "VoronoiFieldSpec",
    "EmptyConfiguration",
    "UnboundedGSet",
    "voronoi_field",
    "nearest_values",
    "influence_region",
    "voronoi_action_radius",
]


class EmptyConfiguration(ValueError):
    pass


class UnboundedGSet(RuntimeError):
    """The influence region reaches the padded boundary (margin too small)."""


@dataclass(frozen=True)
class VoronoiFieldSpec:
    intensity: float = 1.0
    value_law: ScalarLaw = ScalarLaw.uniform(0.0, 1.0)

    def __post_init__(self):
        if self.intensity <= 0:
            raise ValueError("intensity must be positive")


def nearest_values(config: PointConfiguration, sites: np.ndarray,
                   values: np.ndarray) -> np.ndarray:
    """Value of the nearest generating point at each site (ties: lowest index)."""
    if config.count == 0:
        raise EmptyConfiguration("voronoi field needs at least one point")
    box = config.box
    if box.periodic:
        pos = np.mod(config.positions, box.side)
        tree = cKDTree(pos, boxsize=box.side)
        sites = np.mod(sites, box.side)
    else:
        tree = cKDTree(config.positions)
    _, idx = tree.query(sites, k=1)
    return values[idx]


def voronoi_field(config: PointConfiguration, box: BoxSpec,
                  value_name: str = "V") -> FieldSample:
    """Field taking each point's value decoration on its Voronoi cell."""
    if value_name not in config.decorations:
        raise KeyError(f"configuration lacks decoration {value_name!r}")
    sites = lattice_sites(box)
    vals = nearest_values(config, sites, config.decorations[value_name])
    return FieldSample(box, vals.reshape((box.sites_per_side,) * box.dimension))


def _padded_grid_shape(box: BoxSpec) -> tuple[int, ...]:
    sites = padded_lattice_sites(box)
    m = round(len(sites) ** (1.0 / box.dimension))
    return (m,) * box.dimension


def influence_region(config: PointConfiguration, x, ell: int, box: BoxSpec):
    """Sites a cube-content change could claim, found by flood fill.

    Returns (region_idx, boundary_idx, padded_sites): indices into the padded
    lattice of the region and of its inner lattice boundary.  Raises
    UnboundedGSet when no generating point lies outside the cube or when the
    region reaches the padded boundary.
    """
    if box.periodic:
        raise ValueError("influence_region requires a padded (non-periodic) box")
    center = np.asarray(x, dtype=float)
    side = 2.0 * ell + 1.0
    sites = padded_lattice_sites(box)
    shape = _padded_grid_shape(box)
    point_cube_dist = cube_distance(config.positions, center, side)
    outside = config.positions[point_cube_dist > 0]
    if len(outside) == 0:
        raise UnboundedGSet("no generating points outside the cube")
    site_cube_dist = cube_distance(sites, center, side)
    nearest_out, _ = cKDTree(outside).query(sites, k=1)
    eligible = (site_cube_dist <= nearest_out + 1e-12).reshape(shape)
    structure = ndimage.generate_binary_structure(box.dimension, 1)
    labels, _ = ndimage.label(eligible, structure=structure)
    seed_mask = (site_cube_dist == 0).reshape(shape)
    if not seed_mask.any():
        raise ValueError("cube contains no lattice site; refine the lattice")
    seed_labels = np.unique(labels[seed_mask & eligible])
    region = np.isin(labels, seed_labels[seed_labels > 0])
    hull = np.zeros(shape, dtype=bool)
    for axis in range(box.dimension):
        sl = [slice(None)] * box.dimension
        sl[axis] = 0
        hull[tuple(sl)] = True
        sl[axis] = -1
        hull[tuple(sl)] = True
    if (region & hull).any():
        raise UnboundedGSet("influence region reaches the padded boundary")
    interior = ndimage.binary_erosion(region, structure=structure, border_value=0)
    boundary = region & ~interior
    return np.flatnonzero(region.reshape(-1)), np.flatnonzero(boundary.reshape(-1)), sites


def voronoi_action_radius(config: PointConfiguration, x, ell: int, box: BoxSpec) -> float:
    """Certified resampling radius 1 + 2 * max boundary distance to the cube."""
    _, boundary_idx, sites = influence_region(config, x, ell, box)
    side = 2.0 * ell + 1.0
    dist = cube_distance(sites[boundary_idx], np.asarray(x, dtype=float), side)
    return float(1.0 + 2.0 * dist.max())
