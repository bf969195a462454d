"""Field models with block-resampling of their hidden product structure.

Every model exposes: realize (hidden structure + field), values_at
(field values at arbitrary sites), osc_values_batch (K resamples of a
spatial region, returning field values at the observable's support sites),
resample_realization (one full resample, for action-radius measurement),
and certified_radius (the model's overbounding action radius, when it has
one).  Resampling replaces points-with-decorations in the region's cylinder
for point models, and the white-noise block for noise-driven models.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ._kernels import accept_sweep_fast, build_grid, replay_cover_batch
from .core import (BoxSpec, FieldSample, RngStream, lattice_sites,
                   padded_lattice_sites, periodic_delta)
from .gaussian import CovarianceModel, LipschitzClamp, field_from_noise
from .inclusions import InclusionModelSpec, inclusion_values_at
from .laws import ScalarLaw
from .pointproc import (HardcoreSpec, PointConfiguration, causal_chain_radius,
                        _time_order)

__all__ = [
    "Region",
    "GaussianModel",
    "VoronoiModel",
    "PoissonInclusionModel",
    "ParkingInclusionModel",
    "HardcorePoissonModel",
    "MovingAverageModel",
    "DependentColorVoronoiModel",
    "UnsupportedGenerator",
]


class UnsupportedGenerator(TypeError):
    """The generator does not expose block resampling."""


@dataclass(frozen=True)
class Region:
    """A resampling block: ball of given radius or cube of given side."""

    kind: str
    center: tuple
    size: float

    @staticmethod
    def ball(center, radius: float) -> "Region":
        return Region("ball", tuple(np.asarray(center, dtype=float)), float(radius))

    @staticmethod
    def cube(center, side: float) -> "Region":
        return Region("cube", tuple(np.asarray(center, dtype=float)), float(side))

    def distance(self, points: np.ndarray, box: BoxSpec) -> np.ndarray:
        delta = periodic_delta(box, np.atleast_2d(points) - np.asarray(self.center))
        if self.kind == "ball":
            return np.maximum(np.sqrt(np.einsum("ij,ij->i", delta, delta)) - self.size, 0.0)
        excess = np.maximum(np.abs(delta) - self.size / 2.0, 0.0)
        return np.sqrt(np.einsum("ij,ij->i", excess, excess))

    def contains(self, points: np.ndarray, box: BoxSpec) -> np.ndarray:
        return self.distance(points, box) <= 0.0

    def draw_points(self, box: BoxSpec, rate: float, time_horizon: float,
                    gen: np.random.Generator, k: int):
        """K independent Poisson draws on (region x [0, T]), concatenated.

        Rejection from the bounding box intersected with the simulation box;
        returns (positions, times, offsets) with offsets of length k + 1.
        """
        center = np.asarray(self.center)
        half = self.size if self.kind == "ball" else self.size / 2.0
        lo = center - half
        hi = center + half
        if not box.periodic:
            lo = np.maximum(lo, box.padded_low)
            hi = np.minimum(hi, box.padded_high)
        side = np.maximum(hi - lo, 0.0)
        vol = float(np.prod(side)) * max(time_horizon, 1.0)
        counts = gen.poisson(rate * vol, size=k)
        total = int(counts.sum())
        pos = gen.uniform(lo, hi, size=(total, box.dimension))
        if box.periodic:
            pos = np.mod(pos, box.side)
        keep = self.contains(pos, box)
        times = (gen.uniform(0.0, time_horizon, size=total) if time_horizon > 0
                 else np.zeros(total))
        segment = np.repeat(np.arange(k), counts)
        kept_per_segment = np.bincount(segment[keep], minlength=k)
        new_offs = np.zeros(k + 1, dtype=np.int64)
        np.cumsum(kept_per_segment, out=new_offs[1:])
        return pos[keep], times[keep], new_offs


def _as_flat(values: np.ndarray, box: BoxSpec) -> FieldSample:
    return FieldSample(box, values.reshape((box.sites_per_side,) * box.dimension))


# -- Gaussian ----------------------------------------------------------------


@dataclass
class _GaussianRealization:
    noise: np.ndarray
    values: np.ndarray  # flat, observation lattice


@dataclass(frozen=True)
class GaussianModel:
    """Clamped stationary Gaussian field; hidden structure = lattice noise."""

    box: BoxSpec
    cov: CovarianceModel
    clamp: LipschitzClamp

    def realize(self, rng: RngStream) -> _GaussianRealization:
        shape = (self.box.sites_per_side,) * self.box.dimension
        noise = rng.generator().standard_normal(shape)
        return _GaussianRealization(noise, field_from_noise(self.box, self.cov,
                                                            self.clamp, noise).reshape(-1))

    def observe(self, real) -> FieldSample:
        return _as_flat(real.values, self.box)

    def values_at(self, real, sites: np.ndarray) -> np.ndarray:
        return real.values[self._site_index(sites)]

    def _site_index(self, sites: np.ndarray) -> np.ndarray:
        n = self.box.sites_per_side
        idx = np.floor(np.asarray(sites) / self.box.spacing).astype(int)
        idx = np.mod(idx, n)
        return np.ravel_multi_index(idx.T, (n,) * self.box.dimension)

    def prepare_support(self, real, sites: np.ndarray):
        idx = self._site_index(sites)
        return {"sites": np.asarray(sites, dtype=float), "idx": idx,
                "base_vals": real.values[idx]}

    def osc_values_batch(self, real, support, region: Region, rng: RngStream,
                         K: int) -> np.ndarray | None:
        all_sites = lattice_sites(self.box)
        block = np.flatnonzero(region.contains(all_sites, self.box))
        if len(block) == 0:
            return None
        gen = rng.generator()
        out = np.empty((K, len(support["idx"])))
        flat_noise = real.noise.reshape(-1)
        for k in range(K):
            noise = flat_noise.copy()
            noise[block] = gen.standard_normal(len(block))
            vals = field_from_noise(self.box, self.cov, self.clamp,
                                    noise.reshape(real.noise.shape)).reshape(-1)
            out[k] = vals[support["idx"]]
        return out

    def resample_realization(self, real, region: Region, rng: RngStream):
        all_sites = lattice_sites(self.box)
        block = np.flatnonzero(region.contains(all_sites, self.box))
        noise = real.noise.reshape(-1).copy()
        noise[block] = rng.generator().standard_normal(len(block))
        noise = noise.reshape(real.noise.shape)
        return _GaussianRealization(noise, field_from_noise(self.box, self.cov,
                                                            self.clamp, noise).reshape(-1))

    def certified_radius(self, real, real2, region: Region):
        return None

    def diff_sites(self) -> np.ndarray:
        return lattice_sites(self.box)


# -- Voronoi -----------------------------------------------------------------


@dataclass
class _VoronoiRealization:
    config: PointConfiguration
    tree: cKDTree
    caches: dict = field(default_factory=dict)


def _voronoi_tree(box: BoxSpec, positions: np.ndarray) -> cKDTree:
    if box.periodic:
        return cKDTree(np.mod(positions, box.side), boxsize=box.side)
    return cKDTree(positions)


@dataclass(frozen=True)
class VoronoiModel:
    """Cells of a Poisson process painted with i.i.d. values."""

    box: BoxSpec
    intensity: float = 1.0
    value_law: ScalarLaw = ScalarLaw.uniform(0.0, 1.0)

    @staticmethod
    def from_spec(box: BoxSpec, spec) -> "VoronoiModel":
        return VoronoiModel(box, spec.intensity, spec.value_law)

    def _sample_config(self, rng: RngStream) -> PointConfiguration:
        from .pointproc import decorate, sample_poisson

        cfg = sample_poisson(self.box, self.intensity, 0.0, rng.child("points"))
        while cfg.count == 0:  # nearest-point field needs at least one point
            rng = rng.child("retry")
            cfg = sample_poisson(self.box, self.intensity, 0.0, rng.child("points"))
        return decorate(cfg, "V", self.value_law, rng.child("values"))

    def realize(self, rng: RngStream) -> _VoronoiRealization:
        cfg = self._sample_config(rng)
        return _VoronoiRealization(cfg, _voronoi_tree(self.box, cfg.positions))

    def observe(self, real) -> FieldSample:
        return _as_flat(self.values_at(real, lattice_sites(self.box)), self.box)

    def values_at(self, real, sites: np.ndarray) -> np.ndarray:
        q = np.mod(sites, self.box.side) if self.box.periodic else sites
        _, idx = real.tree.query(q, k=1)
        return real.config.decorations["V"][idx]

    def prepare_support(self, real, sites: np.ndarray):
        sites = np.asarray(sites, dtype=float)
        q = np.mod(sites, self.box.side) if self.box.periodic else sites
        dist, idx = real.tree.query(q, k=1)
        return {"sites": sites, "query": q, "nn_dist": dist,
                "nn_idx": idx, "nn_pos": real.config.positions[idx],
                "base_vals": real.config.decorations["V"][idx],
                "lo": sites.min(axis=0), "hi": sites.max(axis=0)}

    def osc_values_batch(self, real, support, region: Region, rng: RngStream,
                         K: int) -> np.ndarray | None:
        box = self.box
        nn_in_region = region.contains(support["nn_pos"], box)
        reachable = region.distance(support["sites"], box) < support["nn_dist"] - 1e-12
        if not nn_in_region.any() and not reachable.any():
            return None  # no resample content can win any support site
        gen = rng.generator()
        new_pos, _, offs = region.draw_points(box, self.intensity, 0.0, gen, K)
        new_vals = self.value_law.sample_gen(gen, len(new_pos))
        outside_mask = ~region.contains(real.config.positions, box)
        if not outside_mask.any() and len(new_pos) == 0:
            return np.tile(support["base_vals"], (K, 1))  # degenerate: nothing left
        if nn_in_region.any():
            if not outside_mask.any():
                out_dist = np.full(len(support["query"]), np.inf)
                out_vals = np.zeros(len(support["query"]))
            else:
                out_tree = _voronoi_tree(box, real.config.positions[outside_mask])
                out_dist, oidx = out_tree.query(support["query"], k=1)
                out_vals = real.config.decorations["V"][outside_mask][oidx]
        else:
            out_dist, out_vals = support["nn_dist"], support["base_vals"]
        if len(new_pos) and not box.periodic:
            # points farther from the support box than any current nearest
            # distance cannot win a site
            excess = np.maximum(np.maximum(support["lo"] - new_pos,
                                           new_pos - support["hi"]), 0.0)
            bboxd = np.sqrt(np.einsum("ij,ij->i", excess, excess))
            contender = bboxd <= out_dist.max() + 1e-9
        else:
            contender = np.ones(len(new_pos), dtype=bool)
        out = np.empty((K, len(out_dist)))
        for k in range(K):
            sel = np.flatnonzero(contender[offs[k]:offs[k + 1]]) + offs[k]
            best_v = out_vals
            if len(sel):
                delta = periodic_delta(box, support["sites"][:, None, :]
                                       - new_pos[sel][None, :, :])
                dmat = np.sqrt(np.einsum("ijk,ijk->ij", delta, delta))
                jbest = dmat.argmin(axis=1)
                dnew = dmat[np.arange(len(jbest)), jbest]
                better = dnew < out_dist
                best_v = np.where(better, new_vals[sel][jbest], best_v)
            out[k] = best_v
        return out

    def resample_realization(self, real, region: Region, rng: RngStream):
        gen = rng.generator()
        new_pos, _, _ = region.draw_points(self.box, self.intensity, 0.0, gen, 1)
        new_vals = self.value_law.sample_gen(gen, len(new_pos))
        keep = ~region.contains(real.config.positions, self.box)
        pos = np.vstack([real.config.positions[keep], new_pos])
        vals = np.concatenate([real.config.decorations["V"][keep], new_vals])
        if len(pos) == 0:
            raise ValueError("resample removed every generating point")
        cfg = PointConfiguration(self.box, pos, np.zeros(len(pos)), {"V": vals})
        return _VoronoiRealization(cfg, _voronoi_tree(self.box, cfg.positions))

    def certified_radius(self, real, real2, region: Region):
        from .tessellation import UnboundedGSet, voronoi_action_radius

        if region.kind != "cube" or self.box.periodic:
            return None
        ell = int(round((region.size - 1) / 2))
        try:
            return voronoi_action_radius(real.config, region.center, ell, self.box)
        except UnboundedGSet:
            return None

    def diff_sites(self) -> np.ndarray:
        return (lattice_sites(self.box) if self.box.periodic
                else padded_lattice_sites(self.box))


# -- Poisson inclusions ------------------------------------------------------


@dataclass
class _InclusionRealization:
    config: PointConfiguration
    caches: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PoissonInclusionModel:
    """Spherical inclusions with random radii at Poisson centers."""

    box: BoxSpec
    spec: InclusionModelSpec

    def _decorations(self, rng: RngStream, n: int) -> dict:
        return self._decorations_gen(rng.generator(), n)

    def _decorations_gen(self, gen, n: int) -> dict:
        dec = {"V": self.spec.radius_law.sample_gen(gen, n)}
        if "W" in self.spec.required_decorations:
            dec["W"] = self.spec.w_law.sample_gen(gen, n)
        if "U" in self.spec.required_decorations:
            dec["U"] = gen.random(n)
        return dec

    def realize(self, rng: RngStream) -> _InclusionRealization:
        from .pointproc import sample_poisson

        cfg = sample_poisson(self.box, self.spec.intensity, 0.0, rng.child("points"))
        cfg = PointConfiguration(self.box, cfg.positions, cfg.times,
                                 self._decorations(rng, cfg.count))
        return _InclusionRealization(cfg)

    def observe(self, real) -> FieldSample:
        return _as_flat(self.values_at(real, lattice_sites(self.box)), self.box)

    def values_at(self, real, sites: np.ndarray) -> np.ndarray:
        return inclusion_values_at(self.spec, real.config.positions,
                                   real.config.decorations, np.asarray(sites, float))

    def prepare_support(self, real, sites: np.ndarray):
        sites = np.asarray(sites, dtype=float)
        pos = real.config.positions
        radii = real.config.decorations["V"]
        lo, hi = sites.min(axis=0), sites.max(axis=0)
        excess = np.maximum(np.maximum(lo - pos, pos - hi), 0.0)
        bbox_dist = np.sqrt(np.einsum("ij,ij->i", excess, excess))
        relevant = np.flatnonzero(bbox_dist <= radii + 1e-12)
        prep = {"sites": sites, "relevant": relevant, "lo": lo, "hi": hi,
                "base_vals": self.values_at(real, sites)}
        if self.spec.scheme in ("A1-two-phase", "A2-sum"):
            # cover geometry of the reachable points, computed once
            delta = real.config.positions[relevant][:, None, :] - sites[None, :, :]
            d2 = np.einsum("ijk,ijk->ij", delta, delta)
            cover = d2 <= (radii[relevant][:, None] + 1e-12) ** 2
            prep["cover"] = cover
            prep["count"] = cover.sum(axis=0)
            if self.spec.scheme == "A2-sum":
                w = real.config.decorations["W"][relevant]
                prep["wsum"] = (cover * w[:, None]).sum(axis=0)
        return prep

    def _paint(self, covered: np.ndarray, sums: np.ndarray | None) -> np.ndarray:
        if self.spec.scheme == "A1-two-phase":
            return np.where(covered, self.spec.alpha, self.spec.beta)
        return np.where(covered, self.spec.f(sums), self.spec.beta)

    def osc_values_batch(self, real, support, region: Region, rng: RngStream,
                         K: int) -> np.ndarray | None:
        box = self.box
        cfg = real.config
        sites = support["sites"]
        in_region = region.contains(cfg.positions, box)
        rel_in = in_region[support["relevant"]]
        removed_relevant = rel_in.any()
        gen = rng.generator()
        new_pos, _, offs = region.draw_points(box, self.spec.intensity, 0.0, gen, K)
        new_dec = self._decorations_gen(gen, len(new_pos))
        excess = np.maximum(np.maximum(support["lo"] - new_pos, new_pos - support["hi"]), 0.0)
        new_reach = np.sqrt(np.einsum("ij,ij->i", excess, excess)) <= new_dec["V"] + 1e-12
        if not removed_relevant and not new_reach.any():
            return None
        if self.spec.scheme in ("A1-two-phase", "A2-sum"):
            out_count = support["count"] - support["cover"][rel_in].sum(axis=0)
            out_wsum = None
            if self.spec.scheme == "A2-sum":
                w_rel = cfg.decorations["W"][support["relevant"]]
                out_wsum = support["wsum"] - (support["cover"][rel_in]
                                              * w_rel[rel_in, None]).sum(axis=0)
            reach_idx = np.flatnonzero(new_reach)
            if len(reach_idx):
                delta = new_pos[reach_idx][:, None, :] - sites[None, :, :]
                d2 = np.einsum("ijk,ijk->ij", delta, delta)
                new_cover = d2 <= (new_dec["V"][reach_idx][:, None] + 1e-12) ** 2
            out = np.empty((K, len(sites)))
            for k in range(K):
                sel = (reach_idx >= offs[k]) & (reach_idx < offs[k + 1]) if len(reach_idx) else None
                count_k = out_count.copy()
                wsum_k = None if out_wsum is None else out_wsum.copy()
                if len(reach_idx) and sel.any():
                    rows = new_cover[sel]
                    count_k = count_k + rows.sum(axis=0)
                    if wsum_k is not None:
                        w_new = new_dec["W"][reach_idx[sel]]
                        wsum_k = wsum_k + (rows * w_new[:, None]).sum(axis=0)
                out[k] = self._paint(count_k > 0, wsum_k)
            return out
        # priority scheme: recompute from the reachable candidates per resample
        keep = ~in_region
        out = np.empty((K, len(sites)))
        kept_pos = cfg.positions[keep]
        kept_dec = {k: v[keep] for k, v in cfg.decorations.items()}
        for k in range(K):
            sl = slice(offs[k], offs[k + 1])
            if not removed_relevant and not new_reach[sl].any():
                out[k] = support["base_vals"]
                continue
            pos_k = np.vstack([kept_pos, new_pos[sl]])
            dec_k = {name: np.concatenate([kept_dec[name], new_dec[name][sl]])
                     for name in kept_dec}
            out[k] = inclusion_values_at(self.spec, pos_k, dec_k, sites)
        return out

    def resample_realization(self, real, region: Region, rng: RngStream):
        gen = rng.generator()
        new_pos, _, _ = region.draw_points(self.box, self.spec.intensity, 0.0, gen, 1)
        new_dec = self._decorations_gen(gen, len(new_pos))
        keep = ~region.contains(real.config.positions, self.box)
        pos = np.vstack([real.config.positions[keep], new_pos])
        dec = {name: np.concatenate([real.config.decorations[name][keep], new_dec[name]])
               for name in real.config.decorations}
        cfg = PointConfiguration(self.box, pos, np.zeros(len(pos)), dec)
        return _InclusionRealization(cfg)

    def certified_radius(self, real, real2, region: Region):
        in_region = region.contains(real.config.positions, self.box)
        changed = [real.config.decorations["V"][in_region]]
        n_old = int((~in_region).sum())
        changed.append(real2.config.decorations["V"][n_old:])
        radii = np.concatenate(changed)
        return float(radii.max()) if len(radii) else 0.0

    def diff_sites(self) -> np.ndarray:
        return (lattice_sites(self.box) if self.box.periodic
                else padded_lattice_sites(self.box))


# -- graphical hardcore constructions ----------------------------------------


@dataclass
class _HardcoreRealization:
    config: PointConfiguration
    accepted: np.ndarray
    grid: object
    caches: dict = field(default_factory=dict)

    def accepted_positions(self) -> np.ndarray:
        return self.config.positions[self.accepted]


class _GraphicalHardcoreBase:
    """Shared machinery: space-time Poisson input, jitted sweep, replay."""

    def _realize_input(self, rng: RngStream) -> PointConfiguration:
        from .pointproc import sample_poisson

        return sample_poisson(self.box, self.input_intensity, self.horizon,
                              rng.child("points"))

    def realize(self, rng: RngStream) -> _HardcoreRealization:
        cfg = self._realize_input(rng)
        order = _time_order(cfg.positions, cfg.times)
        accepted = accept_sweep_fast(cfg.positions, cfg.times, order, self.R)
        grid = build_grid(cfg.positions, cfg.times, order, self.R)
        return _HardcoreRealization(cfg, accepted, grid)

    def observe(self, real) -> FieldSample:
        return _as_flat(self.values_at(real, lattice_sites(self.box)), self.box)

    def values_at(self, real, sites: np.ndarray) -> np.ndarray:
        sites = np.asarray(sites, dtype=float)
        acc = real.accepted_positions()
        if len(acc) == 0:
            return np.full(len(sites), self.beta)
        tree = cKDTree(acc)
        dist, _ = tree.query(sites, k=1)
        return np.where(dist <= self.ball_radius + 1e-12, self.alpha, self.beta)

    def _cover_counts(self, real, sites: np.ndarray) -> np.ndarray:
        acc = real.accepted_positions()
        if len(acc) == 0:
            return np.zeros(len(sites), dtype=np.int64)
        delta = sites[:, None, :] - acc[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", delta, delta)
        return (d2 <= self.ball_radius**2 + 1e-12).sum(axis=1).astype(np.int64)

    def prepare_support(self, real, sites: np.ndarray):
        sites = np.asarray(sites, dtype=float)
        return {"sites": sites, "counts": self._cover_counts(real, sites),
                "base_vals": self.values_at(real, sites)}

    def osc_values_batch(self, real, support, region: Region, rng: RngStream,
                         K: int) -> np.ndarray | None:
        gen = rng.generator()
        new_pos, new_times, offs = region.draw_points(self.box, self.input_intensity,
                                                      self.horizon, gen, K)
        keep = ~region.contains(real.config.positions, self.box)
        covered, _ = replay_cover_batch(real.grid, real.accepted, keep, new_pos,
                                        new_times, offs, support["sites"],
                                        self.ball_radius, support["counts"])
        return np.where(covered, self.alpha, self.beta)

    def resample_realization(self, real, region: Region, rng: RngStream):
        gen = rng.generator()
        new_pos, new_times, _ = region.draw_points(self.box, self.input_intensity,
                                                   self.horizon, gen, 1)
        keep = ~region.contains(real.config.positions, self.box)
        pos = np.vstack([real.config.positions[keep], new_pos])
        times = np.concatenate([real.config.times[keep], new_times])
        cfg = PointConfiguration(self.box, pos, times)
        order = _time_order(pos, times)
        accepted = accept_sweep_fast(pos, times, order, self.R)
        grid = build_grid(pos, times, order, self.R)
        return _HardcoreRealization(cfg, accepted, grid)

    def certified_radius(self, real, real2, region: Region):
        """Causal-chain overbound (cube blocks only), floored at the paint
        radius to absorb in-block spill."""
        if region.kind != "cube":
            return None
        chain = causal_chain_radius(real.config, self.R, region.center, region.size)
        return max(chain, self.ball_radius)

    def point_chain_radius(self, real, region: Region) -> float:
        return causal_chain_radius(real.config, self.R, region.center, region.size)

    def diff_sites(self) -> np.ndarray:
        return (lattice_sites(self.box) if self.box.periodic
                else padded_lattice_sites(self.box))


@dataclass(frozen=True)
class ParkingInclusionModel(_GraphicalHardcoreBase):
    """Two-phase paint over balls at parking-process points (fixed horizon)."""

    box: BoxSpec
    R: float = 1.0
    horizon: float = 2.0
    alpha: float = 1.0
    beta: float = 0.0
    ball_radius: float = 1.0
    input_intensity: float = 1.0


@dataclass(frozen=True)
class HardcorePoissonModel(_GraphicalHardcoreBase):
    """Two-phase paint over balls at hardcore-Poisson points (unit slab)."""

    box: BoxSpec
    hardcore: HardcoreSpec = HardcoreSpec(1.0, 1.0)
    alpha: float = 1.0
    beta: float = 0.0
    ball_radius: float = 0.5

    @property
    def R(self) -> float:
        return self.hardcore.R

    @property
    def horizon(self) -> float:
        return self.hardcore.T

    @property
    def input_intensity(self) -> float:
        return self.hardcore.lam


# -- R-local oracle model ------------------------------------------------------


@dataclass
class _NoiseRealization:
    noise: np.ndarray  # values on the padded lattice
    caches: dict = field(default_factory=dict)


@dataclass(frozen=True)
class MovingAverageModel:
    """Deterministically local transformation: mean of lattice noise over a
    ball of fixed radius (an R-local map, so the action radius is <= R + h)."""

    box: BoxSpec
    window_radius: float = 0.0

    def _padded(self) -> np.ndarray:
        return padded_lattice_sites(self.box)

    def realize(self, rng: RngStream) -> _NoiseRealization:
        return _NoiseRealization(rng.generator().standard_normal(len(self._padded())))

    def _values(self, noise: np.ndarray, sites: np.ndarray) -> np.ndarray:
        padded = self._padded()
        if self.window_radius == 0.0:
            tree = cKDTree(padded)
            _, idx = tree.query(np.asarray(sites, float), k=1)
            return noise[idx]
        tree = cKDTree(padded)
        hits = tree.query_ball_point(np.asarray(sites, float),
                                     self.window_radius + 1e-12)
        return np.array([noise[h].mean() for h in hits])

    def observe(self, real) -> FieldSample:
        return _as_flat(self.values_at(real, lattice_sites(self.box)), self.box)

    def values_at(self, real, sites: np.ndarray) -> np.ndarray:
        return self._values(real.noise, sites)

    def prepare_support(self, real, sites: np.ndarray):
        sites = np.asarray(sites, dtype=float)
        return {"sites": sites, "base_vals": self.values_at(real, sites)}

    def osc_values_batch(self, real, support, region: Region, rng: RngStream,
                         K: int) -> np.ndarray | None:
        padded = self._padded()
        block = np.flatnonzero(region.contains(padded, self.box))
        if len(block) == 0:
            return None
        gen = rng.generator()
        out = np.empty((K, len(support["sites"])))
        for k in range(K):
            noise = real.noise.copy()
            noise[block] = gen.standard_normal(len(block))
            out[k] = self._values(noise, support["sites"])
        return out

    def resample_realization(self, real, region: Region, rng: RngStream):
        padded = self._padded()
        block = np.flatnonzero(region.contains(padded, self.box))
        noise = real.noise.copy()
        noise[block] = rng.generator().standard_normal(len(block))
        return _NoiseRealization(noise)

    def certified_radius(self, real, real2, region: Region):
        return self.window_radius + self.box.spacing

    def diff_sites(self) -> np.ndarray:
        return padded_lattice_sites(self.box)


# -- dependent coloring --------------------------------------------------------


@dataclass
class _ColoredRealization:
    config: PointConfiguration
    tree: cKDTree
    color_noise: np.ndarray
    color_flat: np.ndarray
    caches: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DependentColorVoronoiModel:
    """Voronoi cells valued by an independent Gaussian color field at their
    nuclei; hidden structure = (points, color noise) over space."""

    box: BoxSpec
    cov: CovarianceModel
    clamp: LipschitzClamp
    intensity: float = 1.0

    def realize(self, rng: RngStream) -> _ColoredRealization:
        from .pointproc import sample_poisson

        cfg = sample_poisson(self.box, self.intensity, 0.0, rng.child("points"))
        while cfg.count == 0:
            rng = rng.child("retry")
            cfg = sample_poisson(self.box, self.intensity, 0.0, rng.child("points"))
        shape = (self.box.sites_per_side,) * self.box.dimension
        noise = rng.child("color").generator().standard_normal(shape)
        color = field_from_noise(self.box, self.cov, self.clamp, noise).reshape(-1)
        return _ColoredRealization(cfg, _voronoi_tree(self.box, cfg.positions),
                                   noise, color)

    def _nucleus_colors(self, real, positions: np.ndarray,
                        color_flat: np.ndarray) -> np.ndarray:
        n = self.box.sites_per_side
        idx = np.floor(positions / self.box.spacing).astype(int)
        idx = np.mod(idx, n) if self.box.periodic else np.clip(idx, 0, n - 1)
        return color_flat[np.ravel_multi_index(idx.T, (n,) * self.box.dimension)]

    def observe(self, real) -> FieldSample:
        return _as_flat(self.values_at(real, lattice_sites(self.box)), self.box)

    def values_at(self, real, sites: np.ndarray) -> np.ndarray:
        q = np.mod(sites, self.box.side) if self.box.periodic else np.asarray(sites, float)
        _, idx = real.tree.query(q, k=1)
        colors = self._nucleus_colors(real, real.config.positions, real.color_flat)
        return colors[idx]

    def prepare_support(self, real, sites: np.ndarray):
        sites = np.asarray(sites, dtype=float)
        return {"sites": sites, "base_vals": self.values_at(real, sites)}

    def osc_values_batch(self, real, support, region: Region, rng: RngStream,
                         K: int) -> np.ndarray | None:
        out = np.empty((K, len(support["sites"])))
        for k in range(K):
            real2 = self.resample_realization(real, region, rng.child(str(k)))
            out[k] = self.values_at(real2, support["sites"])
        return out

    def resample_realization(self, real, region: Region, rng: RngStream):
        gen = rng.child("pts").generator()
        new_pos, _, _ = region.draw_points(self.box, self.intensity, 0.0, gen, 1)
        keep = ~region.contains(real.config.positions, self.box)
        pos = np.vstack([real.config.positions[keep], new_pos])
        if len(pos) == 0:
            raise ValueError("resample removed every generating point")
        cfg = PointConfiguration(self.box, pos, np.zeros(len(pos)))
        all_sites = lattice_sites(self.box)
        block = np.flatnonzero(region.contains(all_sites, self.box))
        noise = real.color_noise.reshape(-1).copy()
        noise[block] = rng.child("noise").generator().standard_normal(len(block))
        noise = noise.reshape(real.color_noise.shape)
        color = field_from_noise(self.box, self.cov, self.clamp, noise).reshape(-1)
        return _ColoredRealization(cfg, _voronoi_tree(self.box, pos), noise, color)

    def certified_radius(self, real, real2, region: Region):
        return None

    def diff_sites(self) -> np.ndarray:
        return lattice_sites(self.box)
