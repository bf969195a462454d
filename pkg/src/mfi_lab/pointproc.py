"""Poisson, parking, hardcore, decorated, and decimated point processes.

The parking-type processes use the graphical construction: orient conflicts
(balls of radius R overlap) from earlier to later time marks, accept roots,
delete their direct offspring, and iterate.  A time-ordered sequential scan
is kept as an independent oracle, and an incremental replay supports block
resampling without reconstructing from scratch.
"""

from __future__ import annotations

import heapq
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .core import BoxSpec, RngStream

__all__ = [
    "MarkedPoint",
    "PointConfiguration",
    "HardcoreSpec",
    "DuplicateDecoration",
    "SaturationBudgetExceeded",
    "sample_poisson",
    "decorate",
    "graphical_parking",
    "rsa_sweep_oracle",
    "parking_saturated",
    "hardcore_poisson",
    "decimate",
    "causal_chain_radius",
    "points_to_csv",
    "ParkingState",
    "parking_state",
    "replay_block_resample",
    "cube_distance",
]


class DuplicateDecoration(ValueError):
    pass


class SaturationBudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class MarkedPoint:
    position: tuple[float, ...]
    time: float = 0.0
    decorations: dict = field(default_factory=dict)


@dataclass
class PointConfiguration:
    """Finite marked point set on the padded box of ``box``.

    Stored columnar: positions (n, d), times (n,), decorations name -> (n,).
    """

    box: BoxSpec
    positions: np.ndarray
    times: np.ndarray
    decorations: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if self.positions.size == 0:
            self.positions = self.positions.reshape(0, self.box.dimension)
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        if self.positions.shape != (len(self.times), self.box.dimension):
            raise ValueError("positions and times are inconsistent")
        if np.any(self.times < 0):
            raise ValueError("time marks must be nonnegative")
        self.decorations = {k: np.asarray(v, dtype=float).reshape(-1)
                            for k, v in self.decorations.items()}
        for k, v in self.decorations.items():
            if len(v) != len(self.times):
                raise ValueError(f"decoration {k!r} has wrong length")

    @property
    def count(self) -> int:
        return len(self.times)

    def subset(self, mask) -> "PointConfiguration":
        mask = np.asarray(mask)
        return PointConfiguration(self.box, self.positions[mask], self.times[mask],
                                  {k: v[mask] for k, v in self.decorations.items()})

    def point(self, i: int) -> MarkedPoint:
        return MarkedPoint(tuple(self.positions[i]), float(self.times[i]),
                           {k: float(v[i]) for k, v in self.decorations.items()})


@dataclass(frozen=True)
class HardcoreSpec:
    """Hardcore radius R, input intensity lambda, and time horizon."""

    R: float
    lam: float
    T: float = 1.0

    def __post_init__(self):
        if self.R <= 0 or self.lam <= 0:
            raise ValueError("R and lambda must be positive")


def sample_poisson(box: BoxSpec, intensity: float, time_horizon: float,
                   rng: RngStream) -> PointConfiguration:
    """Homogeneous Poisson points on the padded box with uniform time marks.

    Expected count = intensity * padded volume * max(time_horizon, 1); time
    marks are uniform on [0, time_horizon] (all zero for horizon 0).
    """
    if intensity <= 0:
        raise ValueError("intensity must be positive")
    gen = rng.generator()
    mean = intensity * box.padded_volume * max(time_horizon, 1.0)
    n = int(gen.poisson(mean)) if mean > 0 else 0
    lo, hi = box.padded_low, box.padded_high
    positions = gen.uniform(lo, hi, size=(n, box.dimension))
    times = gen.uniform(0.0, time_horizon, size=n) if time_horizon > 0 else np.zeros(n)
    return PointConfiguration(box, positions, times)


def decorate(config: PointConfiguration, name: str, law, rng: RngStream) -> PointConfiguration:
    """Attach one i.i.d. draw of ``law`` per point under the given name."""
    if name in config.decorations:
        raise DuplicateDecoration(name)
    values = law.sample(rng, config.count)
    decorations = dict(config.decorations)
    decorations[name] = np.asarray(values, dtype=float)
    return PointConfiguration(config.box, config.positions.copy(), config.times.copy(),
                              decorations)


def _time_order(positions: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Time-ascending order, ties broken by lexicographic position."""
    keys = tuple(positions[:, k] for k in range(positions.shape[1] - 1, -1, -1)) + (times,)
    return np.lexsort(keys)


def graphical_parking(config: PointConfiguration, R: float) -> PointConfiguration:
    """Accepted subset of the conflict digraph: roots, minus their offspring,
    iterated on the remainder until exhaustion."""
    n = config.count
    if n == 0:
        return config.subset(np.zeros(0, dtype=bool))
    order = _time_order(config.positions, config.times)
    rank = np.empty(n, dtype=int)
    rank[order] = np.arange(n)
    pairs = cKDTree(config.positions).query_pairs(2.0 * R, output_type="ndarray")
    if len(pairs):
        swap = rank[pairs[:, 0]] > rank[pairs[:, 1]]
        eu = np.where(swap, pairs[:, 1], pairs[:, 0])
        ev = np.where(swap, pairs[:, 0], pairs[:, 1])
    else:
        eu = ev = np.zeros(0, dtype=int)
    alive = np.ones(n, dtype=bool)
    accepted = np.zeros(n, dtype=bool)
    while alive.any():
        active = alive[eu] & alive[ev]
        has_ancestor = np.zeros(n, dtype=bool)
        has_ancestor[ev[active]] = True
        roots = alive & ~has_ancestor
        offspring = np.zeros(n, dtype=bool)
        sel = active & roots[eu]
        offspring[ev[sel]] = True
        accepted |= roots
        alive &= ~(roots | offspring)
    return config.subset(accepted)


def _accept_sweep(positions: np.ndarray, times: np.ndarray, R: float,
                  pre_accepted: np.ndarray | None = None) -> np.ndarray:
    """Time-ordered hardcore acceptance; optionally against a fixed prior set."""
    n = len(times)
    accepted = np.zeros(n, dtype=bool)
    if n == 0:
        return accepted
    d = positions.shape[1]
    cell = 2.0 * R
    grid: dict[tuple, list[int]] = {}
    pts = positions
    if pre_accepted is not None and len(pre_accepted):
        for j, p in enumerate(pre_accepted):
            grid.setdefault(tuple((p // cell).astype(int)), []).append(-j - 1)
    order = _time_order(positions, times)
    r2 = (2.0 * R) ** 2
    offsets = np.array(np.meshgrid(*([[-1, 0, 1]] * d), indexing="ij")).reshape(d, -1).T
    for i in order:
        p = pts[i]
        base = (p // cell).astype(int)
        ok = True
        for off in offsets:
            bucket = grid.get(tuple(base + off))
            if not bucket:
                continue
            for j in bucket:
                q = pre_accepted[-j - 1] if j < 0 else pts[j]
                delta = p - q
                if delta @ delta <= r2:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            accepted[i] = True
            grid.setdefault(tuple(base), []).append(i)
    return accepted


def rsa_sweep_oracle(config: PointConfiguration, R: float) -> PointConfiguration:
    """Independent oracle: scan in time order, accept iff no accepted point
    within 2R.  Must agree with graphical_parking on every configuration."""
    return config.subset(_accept_sweep(config.positions, config.times, R))


def parking_saturated(box: BoxSpec, R: float, rng: RngStream,
                      horizon_cap: float = 2.0 ** 16) -> PointConfiguration:
    """Unit-rate space-time parking, doubling the horizon until one full
    doubling adds no accepted point (a nonempty set, unless the padded box
    has zero volume)."""
    if box.padded_volume == 0:
        return PointConfiguration(box, np.zeros((0, box.dimension)), np.zeros(0))
    T = 1.0
    gen_count = 0
    config = sample_poisson(box, 1.0, T, rng.child("slab0"))
    accepted = _accept_sweep(config.positions, config.times, R)
    while True:
        if T > horizon_cap:
            raise SaturationBudgetExceeded(f"time horizon exceeded {horizon_cap}")
        gen_count += 1
        extra = sample_poisson(box, 1.0, T, rng.child(f"slab{gen_count}"))
        extra_times = extra.times + T
        # Earlier decisions are final: new, later points only fill gaps.
        new_accepted = _accept_sweep(extra.positions, extra_times, R,
                                     pre_accepted=config.positions[accepted])
        grew = bool(new_accepted.any())
        config = PointConfiguration(
            box, np.vstack([config.positions, extra.positions]),
            np.concatenate([config.times, extra_times]))
        accepted = np.concatenate([accepted, new_accepted])
        T *= 2.0
        if not grew and accepted.any():
            return config.subset(accepted)


def hardcore_poisson(box: BoxSpec, spec: HardcoreSpec, rng: RngStream) -> PointConfiguration:
    """Graphical construction restricted to the time slab [0, T] (default 1)."""
    if spec.lam * spec.R ** box.dimension > 1.0 + 1e-12:
        warnings.warn("lambda * R^d > 1: outside the dilute regime the intensity "
                      "expansion degrades", UserWarning)
    config = sample_poisson(box, spec.lam, spec.T, rng)
    return config.subset(_accept_sweep(config.positions, config.times, spec.R))


def decimate(config: PointConfiguration, lam: float, rng: RngStream) -> PointConfiguration:
    """Keep each point independently with probability lam."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("decimation probability must lie in [0, 1]")
    keep = rng.generator().random(config.count) < lam
    return config.subset(keep)


def cube_distance(points: np.ndarray, center, side: float) -> np.ndarray:
    """Euclidean distance from each point to the cube of given side at center."""
    points = np.atleast_2d(points)
    excess = np.maximum(np.abs(points - np.asarray(center, dtype=float)) - side / 2.0, 0.0)
    return np.sqrt(np.sum(excess * excess, axis=1))


def causal_chain_radius(config: PointConfiguration, R: float, center,
                        side: float) -> float:
    """Reach of time-increasing conflict chains seeded just outside the cube.

    Chains hop between points at spatial distance <= 2R with strictly
    increasing time marks (ties broken lexicographically), starting from
    points in (cube + B_{2R}) minus the cube; the radius is the largest
    2R + distance-to-cube over reachable points, 0 if no seed exists.
    """
    n = config.count
    if n == 0:
        return 0.0
    dist = cube_distance(config.positions, center, side)
    seeds = (dist > 0) & (dist <= 2.0 * R)
    if not seeds.any():
        return 0.0
    order = _time_order(config.positions, config.times)
    rank = np.empty(n, dtype=int)
    rank[order] = np.arange(n)
    pairs = cKDTree(config.positions).query_pairs(2.0 * R, output_type="ndarray")
    succ: list[list[int]] = [[] for _ in range(n)]
    for a, b in pairs:
        if rank[a] < rank[b]:
            succ[a].append(b)
        else:
            succ[b].append(a)
    reached = seeds.copy()
    stack = list(np.flatnonzero(seeds))
    while stack:
        u = stack.pop()
        for v in succ[u]:
            if not reached[v]:
                reached[v] = True
                stack.append(v)
    return float(2.0 * R + dist[reached].max())


def points_to_csv(config: PointConfiguration, path) -> None:
    """CSV export: x1..xd, t, then one column per decoration (header row)."""
    d = config.box.dimension
    names = list(config.decorations)
    header = ",".join([f"x{i + 1}" for i in range(d)] + ["t"] + names)
    lines = [header]
    for i in range(config.count):
        cells = [format(c, ".17g") for c in config.positions[i]]
        cells.append(format(config.times[i], ".17g"))
        cells.extend(format(config.decorations[k][i], ".17g") for k in names)
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- incremental replay for block resampling --------------------------------


@dataclass
class ParkingState:
    """Cached graphical-construction state for incremental replays."""

    box: BoxSpec
    R: float
    positions: np.ndarray
    times: np.ndarray
    accepted: np.ndarray
    grid: dict
    cell: float

    def accepted_positions(self) -> np.ndarray:
        return self.positions[self.accepted]


def _grid_of(positions: np.ndarray, cell: float) -> dict:
    grid: dict[tuple, list[int]] = {}
    cells = np.floor(positions / cell).astype(int)
    for i, c in enumerate(map(tuple, cells)):
        grid.setdefault(c, []).append(i)
    return grid


def parking_state(config: PointConfiguration, R: float) -> ParkingState:
    accepted = _accept_sweep(config.positions, config.times, R)
    cell = 2.0 * R
    return ParkingState(config.box, R, config.positions.copy(), config.times.copy(),
                        accepted, _grid_of(config.positions, cell), cell)


def _point_key(t: float, pos) -> tuple:
    return (t,) + tuple(pos)


def replay_block_resample(state: ParkingState, removed: np.ndarray,
                          new_positions: np.ndarray, new_times: np.ndarray):
    """Re-decide acceptance after replacing the points flagged ``removed`` by
    the given fresh points, touching only the causal future of the change.

    Returns (lost, gained): positions of base-accepted points that are gone
    (removed or flipped) and newly accepted positions (new points or flips).
    """
    R, cell = state.R, state.cell
    r2 = (2.0 * R) ** 2
    pts, times, base_acc = state.positions, state.times, state.accepted
    d = pts.shape[1]
    offsets = np.array(np.meshgrid(*([[-1, 0, 1]] * d), indexing="ij")).reshape(d, -1).T
    removed_idx = np.flatnonzero(removed)
    removed_set = set(removed_idx.tolist())

    status: dict[int, bool] = {}
    new_status = np.zeros(len(new_times), dtype=bool)
    finalized: set = set()
    heap: list = []

    def old_neighbors(p):
        base = np.floor(p / cell).astype(int)
        for off in offsets:
            bucket = state.grid.get(tuple(base + off))
            if bucket:
                for j in bucket:
                    delta = p - pts[j]
                    if delta @ delta <= r2:
                        yield j

    def push_later_old_neighbors(p, key):
        for j in old_neighbors(p):
            if j in removed_set or ("o", j) in finalized:
                continue
            jkey = _point_key(times[j], pts[j])
            if jkey > key:
                heapq.heappush(heap, (jkey, "o", j))

    for i in removed_idx:
        if base_acc[i]:
            push_later_old_neighbors(pts[i], _point_key(times[i], pts[i]))
    for k in range(len(new_times)):
        heapq.heappush(heap, (_point_key(new_times[k], new_positions[k]), "n", k))

    def decided(j) -> bool:
        return status.get(j, bool(base_acc[j]))

    while heap:
        key, kind, idx = heapq.heappop(heap)
        if (kind, idx) in finalized:
            continue
        finalized.add((kind, idx))
        p = new_positions[idx] if kind == "n" else pts[idx]
        ok = True
        for j in old_neighbors(p):
            if j in removed_set or (kind == "o" and j == idx):
                continue
            if _point_key(times[j], pts[j]) < key and decided(j):
                ok = False
                break
        if ok:
            for k in range(len(new_times)):
                if kind == "n" and k == idx:
                    continue
                if new_status[k] and _point_key(new_times[k], new_positions[k]) < key:
                    delta = p - new_positions[k]
                    if delta @ delta <= r2:
                        ok = False
                        break
        if kind == "n":
            new_status[idx] = ok
            changed = ok
        else:
            changed = ok != bool(base_acc[idx])
            if changed:
                status[idx] = ok
        if changed:
            push_later_old_neighbors(p, key)

    lost, gained = [], []
    for i in removed_idx:
        if base_acc[i]:
            lost.append(pts[i])
    for j, ok in status.items():
        if ok and not base_acc[j]:
            gained.append(pts[j])
        elif not ok and base_acc[j]:
            lost.append(pts[j])
    for k in np.flatnonzero(new_status):
        gained.append(new_positions[k])
    lost_arr = np.array(lost).reshape(-1, d) if lost else np.zeros((0, d))
    gained_arr = np.array(gained).reshape(-1, d) if gained else np.zeros((0, d))
    return lost_arr, gained_arr
