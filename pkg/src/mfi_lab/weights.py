"""Scale weights for multiscale functional inequalities.

A weight is an integrable density over ball radii; its decay encodes how
fast the model's long-range influence dies off.  Closed-form families cover
the models in this lab; tabulated weights come from measured tails.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from math import gamma as gamma_fn
from typing import Callable

import numpy as np
from scipy import integrate

from .laws import RadiusLaw

__all__ = [
    "WeightFunction",
    "InfluenceViolation",
    "QuarterConditionViolated",
    "NonIntegrableWeight",
    "radius_law_weight",
    "action_radius_weight",
    "iterated_radius_weight",
    "geometric_scale_grid",
]


class InfluenceViolation(ValueError):
    """The influence function dropped below the identity somewhere."""


class QuarterConditionViolated(ValueError):
    """Measured tail probability at the pivot scale exceeds 1/4."""

    def __init__(self, measured: float):
        super().__init__(f"sup tail probability {measured:.4f} > 1/4")
        self.measured = measured


class NonIntegrableWeight(UserWarning):
    """The constructed weight has a divergent scale integral."""


_CLOSED_FAMILIES = ("exp", "stretched-exp", "exp-log", "compact",
                    "gaussian-exp", "gaussian-bump", "gaussian-poly")


@dataclass(frozen=True)
class WeightFunction:
    """Nonnegative weight over scales, closed-form or tabulated.

    ``normalization`` is a plain multiplier; the model-matched families are
    returned with constant 1 and the verification engine estimates the best
    empirical constant instead.
    """

    family: str
    params: dict = field(default_factory=dict)
    normalization: float = 1.0
    table: tuple | None = None
    fn: Callable | None = None
    integrable: bool = True

    def __post_init__(self):
        if self.family not in _CLOSED_FAMILIES + ("tabulated", "custom"):
            raise ValueError(f"unknown weight family {self.family!r}")
        if self.family == "tabulated":
            ell, val = self.table
            ell = np.asarray(ell, dtype=float)
            val = np.asarray(val, dtype=float)
            if ell.ndim != 1 or ell.shape != val.shape or np.any(np.diff(ell) <= 0):
                raise ValueError("tabulated weight needs increasing scales")
            if np.any(val < 0):
                raise ValueError("weight values must be nonnegative")
            object.__setattr__(self, "table", (ell, val))
        if self.family == "custom" and self.fn is None:
            raise ValueError("custom weight needs a callable")

    # -- evaluation ---------------------------------------------------------

    def _raw(self, ell: np.ndarray) -> np.ndarray:
        p = self.params
        if self.family == "exp":
            return np.exp(-ell / p["C"])
        if self.family == "stretched-exp":
            return np.exp(-(ell ** p["dim"]) / p["C"])
        if self.family == "exp-log":
            C = p["C"]
            with np.errstate(divide="ignore", invalid="ignore"):
                expo = np.where(ell > 0, (ell / C) * np.log(ell / C), 0.0)
            return np.exp(-expo)
        if self.family == "compact":
            return np.where(ell <= p["R0"], 1.0, 0.0)
        if self.family == "gaussian-exp":
            s2, xi = p["sigma2"], p["xi"]
            return (s2 / xi) * np.exp(-ell / xi)
        if self.family == "gaussian-bump":
            s2, xi = p["sigma2"], p["xi"]
            return s2 * (2 * ell / xi**2) * np.exp(-((ell / xi) ** 2))
        if self.family == "gaussian-poly":
            s2, xi, alpha = p["sigma2"], p["xi"], p["alpha"]
            return s2 * (alpha / xi) * (1 + ell / xi) ** (-alpha - 1)
        if self.family == "tabulated":
            grid, val = self.table
            return np.interp(ell, grid, val, left=val[0], right=0.0)
        return np.asarray(self.fn(ell), dtype=float)

    def __call__(self, ell) -> np.ndarray:
        ell = np.asarray(ell, dtype=float)
        out = self.normalization * np.maximum(self._raw(ell), 0.0)
        return out if out.shape else float(out)

    # -- integrals ----------------------------------------------------------

    def integral(self) -> float:
        """Total mass on [0, inf)."""
        p = self.params
        if self.family == "exp":
            total = p["C"]
        elif self.family == "stretched-exp":
            total = p["C"] ** (1.0 / p["dim"]) * gamma_fn(1.0 + 1.0 / p["dim"])
        elif self.family == "compact":
            total = p["R0"]
        elif self.family in ("gaussian-exp", "gaussian-bump", "gaussian-poly"):
            total = p["sigma2"]
        elif self.family == "tabulated":
            grid, val = self.table
            total = float(np.trapezoid(val, grid))
        else:
            total, _ = integrate.quad(lambda u: float(self._raw(np.asarray(u))), 0.0,
                                      np.inf, limit=400)
        return self.normalization * total

    def mass_beyond(self, ell_max: float) -> float:
        if self.family == "exp":
            tail = self.params["C"] * np.exp(-ell_max / self.params["C"])
        elif self.family == "compact":
            tail = max(self.params["R0"] - ell_max, 0.0)
        elif self.family == "tabulated":
            grid, val = self.table
            if ell_max >= grid[-1]:
                return 0.0
            keep = grid >= ell_max
            gg = np.concatenate(([ell_max], grid[keep]))
            vv = np.concatenate(([np.interp(ell_max, grid, val)], val[keep]))
            tail = float(np.trapezoid(vv, gg))
        else:
            tail, _ = integrate.quad(lambda u: float(self._raw(np.asarray(u))), ell_max,
                                     np.inf, limit=400)
        return self.normalization * tail

    def support_quantile(self, mass: float = 0.99) -> float:
        """Smallest scale containing the given fraction of the total mass."""
        total = self.integral()
        if not np.isfinite(total) or total <= 0:
            raise ValueError("weight must have positive finite mass")
        lo, hi = 0.0, 1.0
        while self.mass_beyond(hi) > (1 - mass) * total and hi < 1e9:
            hi *= 2
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if self.mass_beyond(mid) > (1 - mass) * total:
                lo = mid
            else:
                hi = mid
        return hi


def radius_law_weight(radius_law: RadiusLaw, intensity: float, dimension: int,
                      ell_max: float | None = None) -> WeightFunction:
    """Weight mu*(l+1)^d * sup-band-mass(l/sqrt(d) - 3) for inclusion models.

    The running supremum of the radius band mass is evaluated from the right
    on a fine grid.  A pareto exponent <= d yields a divergent weight, which
    is flagged (NonIntegrableWeight warning + integrable=False), not raised.
    """
    if intensity <= 0:
        raise ValueError("intensity must be positive")
    integrable = radius_law.integrable_weight(dimension)
    if not integrable:
        warnings.warn("radius-law weight is non-integrable (pareto exponent <= d)",
                      NonIntegrableWeight)
    sqrt_d = float(np.sqrt(dimension))
    if ell_max is None:
        ub = radius_law.law.upper_bound
        if np.isfinite(ub):
            ell_max = sqrt_d * (ub + 3.5) + 1.0
        else:
            ell_max = sqrt_d * (radius_law.law.quantile(1 - 1e-9) + 3.5) + 1.0
    v_max = ell_max / sqrt_d - 3.0 + 1.0
    v_grid, sup_gamma = radius_law.sup_band_mass_table(max(v_max, 1.0))
    ell_grid = np.linspace(0.0, ell_max, max(int(ell_max * 8), 64))
    v = ell_grid / sqrt_d - 3.0
    gamma_tilde = np.where(v <= v_grid[0], sup_gamma[0], np.interp(v, v_grid, sup_gamma,
                                                                   right=0.0))
    values = intensity * (ell_grid + 1.0) ** dimension * gamma_tilde
    return WeightFunction("tabulated",
                          params={"intensity": intensity, "dim": dimension,
                                  "law": radius_law.law.kind},
                          table=(ell_grid, values), integrable=integrable)


def action_radius_weight(slots, influence: Callable[[float], float],
                         dimension: int, ell_grid=None) -> WeightFunction:
    """Weight built from per-slot perturbation probabilities and radius tails.

    ``slots`` is a sequence of (perturbation_prob, conditional_survival)
    pairs, one per time slot; conditional_survival(l) = P[radius >= l given
    the slot content actually changed].  Per slot and scale the contribution
    is  p * (S(l-1) - S(l)) / P[radius < l],  with the convention 0/0 = 0,
    and the total weight is (l+1)^d times the slot sum.  The scale axis is
    mapped through the influence function, which must dominate the identity.
    """
    if ell_grid is None:
        ell_grid = np.concatenate(([0.0], np.geomspace(0.25, 64.0, 161)))
    ell_grid = np.asarray(ell_grid, dtype=float)
    f_vals = np.array([float(influence(u)) for u in ell_grid])
    bad = f_vals < ell_grid - 1e-12
    if np.any(bad):
        raise InfluenceViolation(
            f"influence function below identity at u={ell_grid[np.argmax(bad)]:g}")
    total = np.zeros_like(ell_grid)
    for p_t, survival in slots:
        if p_t < 0 or p_t > 1:
            raise ValueError("perturbation probability must lie in [0, 1]")
        s_hi = np.array([float(survival(max(l - 1.0, 0.0))) for l in ell_grid])
        s_lo = np.array([float(survival(l)) for l in ell_grid])
        band = p_t * np.clip(s_hi - s_lo, 0.0, 1.0)
        below = 1.0 - p_t * s_lo  # unconditional P[radius < l]; radius 0 when unperturbed
        contrib = np.divide(band, below, out=np.zeros_like(band), where=below > 0)
        total += contrib
    values = (ell_grid + 1.0) ** dimension * total
    order = np.argsort(f_vals, kind="stable")
    f_sorted = f_vals[order]
    v_sorted = values[order]
    keep = np.concatenate(([True], np.diff(f_sorted) > 0))
    return WeightFunction("tabulated", params={"dim": dimension, "kind": "action-radius"},
                          table=(f_sorted[keep], v_sorted[keep]))


def _measured_sup_probability(tail_data, pivot: float) -> float:
    if isinstance(tail_data, (int, float)):
        return float(tail_data)
    if isinstance(tail_data, dict):
        worst = 0.0
        for block_scale, samples in tail_data.items():
            samples = np.asarray(samples, dtype=float)
            level = max(float(block_scale), pivot)
            worst = max(worst, float(np.mean(samples >= level)))
        return worst
    samples = np.asarray(tail_data, dtype=float)
    return float(np.mean(samples >= pivot))


def iterated_radius_weight(pi0: Callable[[float], float], R: float, dimension: int,
                           tail_data=None) -> WeightFunction:
    """Piecewise weight from a nonincreasing radius-tail envelope.

    (l+1)^d below the pivot scale 4R, and (l+1)^d * 8 * pi0(l/2) / l above.
    ``pi0`` must be nonincreasing (checked on a tabulation).  When tail data
    are supplied, the construction requires the measured probability of the
    radius exceeding its block scale to stay <= 1/4 from the pivot on.
    """
    if R < 1:
        raise ValueError("pivot scale R must be >= 1")
    probe = np.linspace(0.0, max(16.0 * R, 64.0), 257)
    pv = np.array([float(pi0(u)) for u in probe])
    if np.any(np.diff(pv) > 1e-12):
        raise ValueError("pi0 must be nonincreasing")
    if np.any(pv < 0):
        raise ValueError("pi0 must be nonnegative")
    if tail_data is not None:
        measured = _measured_sup_probability(tail_data, R)
        if measured > 0.25:
            raise QuarterConditionViolated(measured)

    def weight(ell):
        ell = np.asarray(ell, dtype=float)
        head = (ell + 1.0) ** dimension
        with np.errstate(divide="ignore"):
            tail = np.where(ell > 0,
                            8.0 / np.maximum(ell, 1e-300)
                            * np.array([float(pi0(u)) for u in np.atleast_1d(ell / 2.0)]
                                       ).reshape(np.shape(ell)),
                            1.0)
        return head * np.where(ell <= 4.0 * R, 1.0, tail)

    return WeightFunction("custom", params={"R": float(R), "dim": dimension,
                                            "kind": "iterated-radius"}, fn=weight)


def geometric_scale_grid(weight: WeightFunction, refine: int = 0) -> np.ndarray:
    """Default scale grid {0, 1, 2, 4, ...} out to the weight's 99% mass point.

    Each refinement level halves the geometric step (and adds 0.5), doubling
    the grid resolution for convergence checks.
    """
    ell99 = weight.support_quantile(0.99)
    grid = [0.0, 1.0]
    while grid[-1] < ell99:
        grid.append(grid[-1] * 2.0)
    grid = np.asarray(grid)
    for _ in range(refine):
        mids = np.sqrt(grid[1:-1] * grid[2:])
        grid = np.unique(np.concatenate((grid, [grid[1] / 2.0], mids)))
    return grid
