"""Survival-function estimation and decay fits for action-radius samples."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import RngStream

__all__ = ["TailEstimate", "DegenerateSamples", "tail_fit", "survival_table",
           "radii_to_csv"]


class DegenerateSamples(ValueError):
    pass


_LINKS = {
    "exponential": lambda ell, _: ell,
    "weibull": lambda ell, shape: ell**shape,
    "exp-log": lambda ell, _: ell * np.log(np.maximum(ell, 1e-12)),
}


@dataclass(frozen=True)
class TailEstimate:
    """Least-squares decay fit of an empirical survival function.

    log S(l) is regressed on the family's link over the fit window; ``rate``
    is the negated slope, so S(l) ~ exp(-rate * link(l)) there.
    """

    family: str
    shape: float
    rate: float
    intercept: float
    r_squared: float
    fit_window: tuple[float, float]
    n_samples: int
    rate_ci: tuple[float, float]
    levels: np.ndarray
    survival: np.ndarray

    def survival_at(self, ell) -> np.ndarray:
        return np.interp(np.asarray(ell, dtype=float), self.levels, self.survival,
                         left=1.0, right=0.0)


def survival_table(samples: np.ndarray):
    """Empirical S(l) = P[rho >= l] at the sorted sample levels."""
    samples = np.sort(np.asarray(samples, dtype=float))
    n = len(samples)
    levels, first = np.unique(samples, return_index=True)
    surv = (n - first) / n
    return levels, surv


def _fit_once(levels, surv, family, shape):
    link = _LINKS[family](levels, shape)
    coeff = np.polyfit(link, np.log(surv), 1)
    pred = np.polyval(coeff, link)
    resid = np.log(surv) - pred
    total = np.log(surv) - np.log(surv).mean()
    r2 = 1.0 - (resid @ resid) / max(total @ total, 1e-300)
    return -coeff[0], coeff[1], r2


def tail_fit(samples, family: str, shape: float | None = None,
             window: tuple[float, float] | None = None, n_boot: int = 200,
             seed: int = 0) -> TailEstimate:
    """Fit log-survival against the family link on the central tail window.

    Window defaults to the [50%, 99.5%] sample quantiles.  Bootstrap
    confidence interval on the rate (percentile, 90%).
    """
    samples = np.asarray(samples, dtype=float)
    if len(samples) < 200:
        raise ValueError("need at least 200 samples")
    if np.all(samples == samples[0]):
        raise DegenerateSamples("all samples equal")
    if family not in _LINKS:
        raise ValueError(f"unknown fit family {family!r}")
    if family == "weibull" and (shape is None or shape <= 0):
        raise ValueError("weibull fit needs a positive shape")
    shape = 1.0 if shape is None else float(shape)
    if window is None:
        window = (float(np.quantile(samples, 0.5)), float(np.quantile(samples, 0.995)))
    levels, surv = survival_table(samples)
    sel = (levels >= window[0]) & (levels <= window[1]) & (surv > 0)
    if sel.sum() < 3:
        raise DegenerateSamples("fewer than 3 distinct levels in the fit window")
    rate, intercept, r2 = _fit_once(levels[sel], surv[sel], family, shape)
    rng = RngStream(seed, ("tail-boot",))
    gen = rng.generator()
    rates = []
    for _ in range(n_boot):
        boot = gen.choice(samples, size=len(samples), replace=True)
        if np.all(boot == boot[0]):
            continue
        lv, sv = survival_table(boot)
        s = (lv >= window[0]) & (lv <= window[1]) & (sv > 0)
        if s.sum() < 3:
            continue
        rates.append(_fit_once(lv[s], sv[s], family, shape)[0])
    if rates:
        ci = (float(np.quantile(rates, 0.05)), float(np.quantile(rates, 0.95)))
    else:
        ci = (rate, rate)
    return TailEstimate(family, shape, float(rate), float(intercept), float(r2),
                        window, len(samples), ci, levels, surv)


def radii_to_csv(rows, path) -> None:
    """CSV export of action-radius samples: x, ell, rho, realization_id."""
    lines = ["x,ell,rho,realization_id"]
    for x, ell, rho, rid in rows:
        xs = ";".join(format(c, ".17g") for c in np.atleast_1d(x))
        lines.append(f"{xs},{format(float(ell), '.17g')},{format(float(rho), '.17g')},{rid}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
