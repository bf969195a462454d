"""Named scalar laws used for point decorations, cell values, and radii."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RngStream

__all__ = ["ScalarLaw", "RadiusLaw"]


@dataclass(frozen=True)
class ScalarLaw:
    """A named one-dimensional law: const, uniform, two-point, normal,
    exponential, or pareto."""

    kind: str
    params: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in ("const", "uniform", "two-point", "normal", "exponential", "pareto"):
            raise ValueError(f"unknown law kind {self.kind!r}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))

    @staticmethod
    def const(v: float) -> "ScalarLaw":
        return ScalarLaw("const", (v,))

    @staticmethod
    def uniform(lo: float, hi: float) -> "ScalarLaw":
        return ScalarLaw("uniform", (lo, hi))

    @staticmethod
    def two_point(a: float, b: float, p_b: float = 0.5) -> "ScalarLaw":
        return ScalarLaw("two-point", (a, b, p_b))

    @staticmethod
    def normal(mu: float, sigma: float) -> "ScalarLaw":
        return ScalarLaw("normal", (mu, sigma))

    @staticmethod
    def exponential(rate: float) -> "ScalarLaw":
        return ScalarLaw("exponential", (rate,))

    @staticmethod
    def pareto(exponent: float, scale: float) -> "ScalarLaw":
        return ScalarLaw("pareto", (exponent, scale))

    def sample(self, rng: RngStream, n: int) -> np.ndarray:
        return self.sample_gen(rng.generator(), n)

    def sample_gen(self, gen: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "const":
            return np.full(n, self.params[0])
        if self.kind == "uniform":
            lo, hi = self.params
            return gen.uniform(lo, hi, size=n)
        if self.kind == "two-point":
            a, b, p_b = self.params
            return np.where(gen.random(n) < p_b, b, a)
        if self.kind == "normal":
            mu, sigma = self.params
            return gen.normal(mu, sigma, size=n)
        if self.kind == "exponential":
            (rate,) = self.params
            return gen.exponential(1.0 / rate, size=n)
        exponent, scale = self.params
        return scale * (1.0 - gen.random(n)) ** (-1.0 / exponent)

    def survival(self, v: np.ndarray) -> np.ndarray:
        """P[V >= v] (right-continuous complement up to null sets)."""
        v = np.asarray(v, dtype=float)
        if self.kind == "const":
            return np.where(v <= self.params[0], 1.0, 0.0)
        if self.kind == "uniform":
            lo, hi = self.params
            return np.clip((hi - v) / (hi - lo), 0.0, 1.0)
        if self.kind == "two-point":
            a, b, p_b = self.params
            lo, hi = min(a, b), max(a, b)
            p_hi = p_b if b >= a else 1.0 - p_b
            return np.where(v <= lo, 1.0, np.where(v <= hi, p_hi, 0.0))
        if self.kind == "normal":
            from scipy.stats import norm

            mu, sigma = self.params
            return norm.sf(v, loc=mu, scale=sigma)
        if self.kind == "exponential":
            (rate,) = self.params
            return np.where(v <= 0, 1.0, np.exp(-rate * np.maximum(v, 0.0)))
        exponent, scale = self.params
        return np.where(v <= scale, 1.0, (scale / np.maximum(v, scale)) ** exponent)

    @property
    def mean(self) -> float:
        if self.kind == "const":
            return self.params[0]
        if self.kind == "uniform":
            return 0.5 * (self.params[0] + self.params[1])
        if self.kind == "two-point":
            a, b, p_b = self.params
            return a * (1 - p_b) + b * p_b
        if self.kind == "normal":
            return self.params[0]
        if self.kind == "exponential":
            return 1.0 / self.params[0]
        exponent, scale = self.params
        if exponent <= 1:
            return float("inf")
        return scale * exponent / (exponent - 1)

    @property
    def upper_bound(self) -> float:
        """Deterministic upper bound of the support (inf if unbounded)."""
        if self.kind == "const":
            return self.params[0]
        if self.kind == "uniform":
            return self.params[1]
        if self.kind == "two-point":
            return max(self.params[0], self.params[1])
        return float("inf")

    def quantile(self, q: float) -> float:
        if self.kind == "const":
            return self.params[0]
        if self.kind == "uniform":
            lo, hi = self.params
            return lo + q * (hi - lo)
        if self.kind == "two-point":
            a, b, p_b = self.params
            lo, hi = min(a, b), max(a, b)
            p_lo = (1.0 - p_b) if b >= a else p_b
            return lo if q <= p_lo else hi
        if self.kind == "normal":
            from scipy.stats import norm

            return float(norm.ppf(q, loc=self.params[0], scale=self.params[1]))
        if self.kind == "exponential":
            return float(-np.log1p(-q) / self.params[0])
        exponent, scale = self.params
        return float(scale * (1.0 - q) ** (-1.0 / exponent))


@dataclass(frozen=True)
class RadiusLaw:
    """Nonnegative inclusion-radius law: bounded-uniform, exponential, or pareto.

    ``band_mass(v)`` is the unit-interval mass P[v-1/2 <= V < v+1/2]; the decay
    of its running supremum from the right drives the inclusion-model weight.
    A pareto exponent <= d makes that weight non-integrable (flagged, not
    rejected).
    """

    law: ScalarLaw

    def __post_init__(self):
        if self.law.kind not in ("uniform", "exponential", "pareto", "const"):
            raise ValueError("radius law must be bounded-uniform, exponential, pareto, or const")
        if self.law.kind == "uniform" and self.law.params[0] != 0.0:
            raise ValueError("bounded-uniform radius law is supported on [0, r_max]")
        if self.law.kind in ("uniform", "const") and self.law.upper_bound < 0:
            raise ValueError("radius law must have nonnegative support")

    @staticmethod
    def bounded_uniform(r_max: float) -> "RadiusLaw":
        return RadiusLaw(ScalarLaw.uniform(0.0, r_max))

    @staticmethod
    def exponential(rate: float) -> "RadiusLaw":
        return RadiusLaw(ScalarLaw.exponential(rate))

    @staticmethod
    def pareto(exponent: float, scale: float) -> "RadiusLaw":
        return RadiusLaw(ScalarLaw.pareto(exponent, scale))

    def sample(self, rng: RngStream, n: int) -> np.ndarray:
        return np.maximum(self.law.sample(rng, n), 0.0)

    def sample_gen(self, gen, n: int) -> np.ndarray:
        return np.maximum(self.law.sample_gen(gen, n), 0.0)

    def band_mass(self, v: np.ndarray) -> np.ndarray:
        """P[v - 1/2 <= V < v + 1/2]."""
        v = np.asarray(v, dtype=float)
        lo = np.maximum(v - 0.5, 0.0)
        hi = np.maximum(v + 0.5, 0.0)
        return np.clip(self.law.survival(lo) - self.law.survival(hi), 0.0, 1.0)

    def sup_band_mass_table(self, v_max: float, step: float = 0.02):
        """(grid, running sup of band_mass from the right) on [0, v_max]."""
        grid = np.arange(0.0, v_max + step, step)
        gamma = self.band_mass(grid)
        sup = np.maximum.accumulate(gamma[::-1])[::-1]
        return grid, sup

    def integrable_weight(self, dimension: int) -> bool:
        if self.law.kind == "pareto":
            return self.law.params[0] > dimension
        return True
