"""Geometry, lattices, and reproducible random-number streams.

Everything downstream is a pure function of an immutable spec plus an
:class:`RngStream`, so Monte Carlo results do not depend on scheduling or
worker count.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

__all__ = [
    "BoxSpec",
    "RngStream",
    "FieldSample",
    "substream",
    "lattice_sites",
    "padded_lattice_sites",
    "ball_restriction",
    "periodic_delta",
    "field_to_csv",
    "field_to_binary",
    "dumps_17g",
]


@dataclass(frozen=True)
class BoxSpec:
    """A finite observation box [0, side)^dimension on a regular lattice.

    ``margin`` is simulation padding: point processes are generated on
    [-margin, side + margin)^d while fields are observed on the inner box.
    Periodic boxes carry no padding.
    """

    dimension: int
    side: float
    spacing: float
    margin: float = 0.0
    boundary: str = "padded-free"

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.side <= 0 or self.spacing <= 0:
            raise ValueError("side and spacing must be positive")
        ratio = self.side / self.spacing
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("side/spacing must be a positive integer")
        if self.margin < 0:
            raise ValueError("margin must be nonnegative")
        if self.boundary not in ("padded-free", "periodic"):
            raise ValueError("boundary must be 'padded-free' or 'periodic'")
        if self.boundary == "periodic" and self.margin != 0:
            raise ValueError("periodic boxes have margin 0")

    @property
    def sites_per_side(self) -> int:
        return int(round(self.side / self.spacing))

    @property
    def site_count(self) -> int:
        return self.sites_per_side ** self.dimension

    @property
    def periodic(self) -> bool:
        return self.boundary == "periodic"

    @property
    def padded_low(self) -> float:
        return -self.margin

    @property
    def padded_high(self) -> float:
        return self.side + self.margin

    @property
    def padded_volume(self) -> float:
        return (self.padded_high - self.padded_low) ** self.dimension

    def with_margin(self, margin: float) -> "BoxSpec":
        return replace(self, margin=margin)


def _stream_key(seed: int, path: tuple[str, ...]) -> int:
    # Length-prefixed encoding keeps distinct paths collision-free.
    h = hashlib.sha256()
    h.update(struct.pack("<q", seed))
    for label in path:
        raw = label.encode("utf-8")
        h.update(struct.pack("<Q", len(raw)))
        h.update(raw)
    return int.from_bytes(h.digest()[:16], "little")


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream addressed by (seed, substream path).

    Distinct paths give statistically independent Philox streams; identical
    (seed, path) reproduces the identical sequence on any worker count.
    """

    seed: int
    path: tuple[str, ...] = field(default_factory=tuple)

    def child(self, label: str) -> "RngStream":
        return RngStream(self.seed, self.path + (str(label),))

    def generator(self) -> np.random.Generator:
        key = _stream_key(self.seed, self.path)
        return np.random.Generator(np.random.Philox(counter=0, key=key))


def substream(stream: RngStream, label: str) -> RngStream:
    """Derive the deterministic substream of ``stream`` named ``label``."""
    return stream.child(label)


@dataclass(frozen=True)
class FieldSample:
    """A scalar field realization on the observation lattice of ``box``."""

    box: BoxSpec
    values: np.ndarray

    def __post_init__(self):
        n = self.box.sites_per_side
        expected = (n,) * self.box.dimension
        values = np.asarray(self.values, dtype=float)
        if values.shape != expected:
            if values.size == self.box.site_count:
                values = values.reshape(expected)
            else:
                raise ValueError(f"values shape {values.shape} != lattice shape {expected}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def flat(self) -> np.ndarray:
        """Values in lexicographic site order (matches lattice_sites)."""
        return self.values.reshape(-1)


def _grid(box: BoxSpec, k_lo: int, k_hi: int) -> np.ndarray:
    """Sites h*k + h/2 for k in [k_lo, k_hi)^d, lexicographic order."""
    h = box.spacing
    axis = (np.arange(k_lo, k_hi) + 0.5) * h
    grids = np.meshgrid(*([axis] * box.dimension), indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=-1)


def lattice_sites(box: BoxSpec) -> np.ndarray:
    """Observation-lattice site coordinates, shape (site_count, d)."""
    return _grid(box, 0, box.sites_per_side)


def padded_cells(box: BoxSpec) -> int:
    """Lattice cells of padding per side (whole cells covering the margin)."""
    if box.periodic:
        return 0
    return int(np.ceil(box.margin / box.spacing - 1e-12))


def padded_lattice_sites(box: BoxSpec) -> np.ndarray:
    """Lattice extended over the simulation padding, same pitch and offsets."""
    k = padded_cells(box)
    return _grid(box, -k, box.sites_per_side + k)


def periodic_delta(box: BoxSpec, delta: np.ndarray) -> np.ndarray:
    """Minimum-image displacement on a periodic box (identity otherwise)."""
    if not box.periodic:
        return delta
    L = box.side
    return delta - L * np.round(delta / L)


def ball_restriction(box: BoxSpec, center, radius: float) -> np.ndarray:
    """Indices of observation sites within Euclidean ``radius`` of ``center``."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    sites = lattice_sites(box)
    delta = periodic_delta(box, sites - np.asarray(center, dtype=float))
    dist = np.sqrt(np.sum(delta * delta, axis=1))
    return np.flatnonzero(dist <= radius + 1e-12)


def field_to_csv(sample: FieldSample, path) -> None:
    """Flat CSV export: one row per site, coordinates then value."""
    sites = lattice_sites(sample.box)
    d = sample.box.dimension
    header = ",".join(f"x{i + 1}" for i in range(d)) + ",value"
    rows = [header]
    flat = sample.flat
    for i in range(sites.shape[0]):
        coords = ",".join(format(c, ".17g") for c in sites[i])
        rows.append(f"{coords},{format(flat[i], '.17g')}")
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def field_to_binary(sample: FieldSample, path) -> None:
    """Row-major float64 dump plus a JSON sidecar describing the lattice."""
    path = Path(path)
    sample.values.astype("<f8").tofile(path)
    sidecar = {
        "dimension": sample.box.dimension,
        "side": sample.box.side,
        "spacing": sample.box.spacing,
        "margin": sample.box.margin,
        "boundary": sample.box.boundary,
        "shape": list(sample.values.shape),
        "dtype": "<f8",
        "order": "C",
    }
    path.with_suffix(path.suffix + ".json").write_text(dumps_17g(sidecar), encoding="utf-8")


def _format_17g(obj):
    if isinstance(obj, float):
        if obj != obj or obj in (float("inf"), float("-inf")):
            return {float("inf"): "Infinity", float("-inf"): "-Infinity"}.get(obj, "NaN")
        return format(obj, ".17g")
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, np.floating):
        return _format_17g(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        inner = ",".join(f"{json.dumps(str(k))}:{_format_17g(v)}" for k, v in obj.items())
        return "{" + inner + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ",".join(_format_17g(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj)!r}")


def dumps_17g(obj) -> str:
    """Deterministic JSON with floats at 17 significant digits."""
    return _format_17g(obj)
