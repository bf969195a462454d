"""Frozen desk-scale experiment definitions.

One place for the model/weight/observable combinations used by the
verification matrix, the tail studies, and the standard-inequality failure
signal, so the scripts and the acceptance suite run identical setups.  The
weight constants come from tail fits of the measured action radii at these
box sizes (see scripts/calibrate_weights.py).
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import BoxSpec
from .gaussian import CovarianceModel, LipschitzClamp, gaussian_weight
from .inclusions import ClippedMap, InclusionModelSpec
from .laws import RadiusLaw, ScalarLaw
from .models import (GaussianModel, HardcorePoissonModel, ParkingInclusionModel,
                     PoissonInclusionModel, VoronoiModel)
from .observables import make_observable
from .pointproc import HardcoreSpec
from .weights import WeightFunction, radius_law_weight

__all__ = ["VerifyCase", "verification_matrix", "failure_signal_case",
           "tail_cases", "INCLUSION_RADIUS_LAW"]

INCLUSION_RADIUS_LAW = RadiusLaw.exponential(1.0)


@dataclass(frozen=True)
class VerifyCase:
    """One (model, weight, observables) row of the verification matrix."""

    model_id: str
    model: object
    weight: WeightFunction
    observables: tuple
    derivative: str
    n_rhs: int


def verification_matrix() -> list[VerifyCase]:
    """The five model-matched (model, weight) pairs with three observables each.

    Observables are tuned to stay non-degenerate and resample-saturating on
    each model's value range: site maxima saturate on densely covered
    two-phase fields (replaced by a two-point product for parking), and the
    clipped exponential's cap must sit inside the bulk of the window-average
    distribution for its oscillation to stabilize in K.
    """
    cases = []

    gbox = BoxSpec(2, 32.0, 1.0, 0.0, "periodic")
    gcov = CovarianceModel("exponential", 1.0, 2.0)
    cases.append(VerifyCase(
        "gaussian", GaussianModel(gbox, gcov, LipschitzClamp("tanh", 1.0, 3.0)),
        gaussian_weight(gcov),
        (make_observable(gbox, "window-average", "window-average", radius=4.0),
         make_observable(gbox, "clipped-exp", "clipped-exp", radius=4.0,
                         scale=1.0, cap=4.0),
         make_observable(gbox, "two-point", "two-point",
                         points=[[8.0, 8.0], [14.0, 14.0]])),
        "fct", 48))

    vbox = BoxSpec(2, 12.0, 1.0, margin=6.0)
    cases.append(VerifyCase(
        "voronoi", VoronoiModel(vbox, 1.0, ScalarLaw.uniform(0.0, 1.0)),
        WeightFunction("stretched-exp", {"C": 1.87, "dim": 2}),
        (make_observable(vbox, "window-average", "window-average", radius=3.0),
         make_observable(vbox, "clipped-exp", "clipped-exp", radius=3.0,
                         scale=1.0, cap=4.0),
         make_observable(vbox, "site-max", "site-max", radius=3.0)),
        "osc", 48))

    pbox = BoxSpec(2, 8.0, 1.0, margin=8.0)
    cases.append(VerifyCase(
        "parking-inclusions",
        ParkingInclusionModel(pbox, R=1.0, horizon=2.0, alpha=1.0, beta=0.0,
                              ball_radius=1.0),
        WeightFunction("exp", {"C": 1.13}),
        (make_observable(pbox, "window-average", "window-average", radius=1.8),
         make_observable(pbox, "clipped-exp", "clipped-exp", radius=1.8,
                         scale=4.0, cap=20.0),
         make_observable(pbox, "two-point", "two-point",
                         points=[[2.5, 2.5], [5.5, 5.5]])),
        "osc", 32))

    hbox = BoxSpec(2, 8.0, 1.0, margin=8.0)
    cases.append(VerifyCase(
        "hardcore-poisson",
        HardcorePoissonModel(hbox, HardcoreSpec(1.0, 1.0), alpha=1.0, beta=0.0,
                             ball_radius=0.5),
        WeightFunction("exp-log", {"C": 1.5}),
        (make_observable(hbox, "window-average", "window-average", radius=1.8),
         make_observable(hbox, "clipped-exp", "clipped-exp", radius=1.8,
                         scale=4.0, cap=2.0),
         make_observable(hbox, "site-max", "site-max", radius=1.2)),
        "osc", 32))

    # two-phase inclusions at low coverage keep all three observables alive
    ibox = BoxSpec(2, 12.0, 1.0, margin=10.0)
    ispec = InclusionModelSpec("A1-two-phase", INCLUSION_RADIUS_LAW, 0.15,
                               alpha=1.0, beta=0.0)
    cases.append(VerifyCase(
        "poisson-inclusions", PoissonInclusionModel(ibox, ispec),
        radius_law_weight(INCLUSION_RADIUS_LAW, 0.15, 2),
        (make_observable(ibox, "window-average", "window-average", radius=3.0),
         make_observable(ibox, "clipped-exp", "clipped-exp", radius=3.0,
                         scale=1.0, cap=4.0),
         make_observable(ibox, "site-max", "site-max", radius=3.0)),
        "osc", 48))
    return cases


def failure_signal_case():
    """Sparse periodic Voronoi with a compact weight: the standard inequality
    degrades as the observable window grows past the weight's radius."""
    box = BoxSpec(2, 64.0, 1.0, 0.0, "periodic")
    model = VoronoiModel(box, 10.0 / 64.0**2, ScalarLaw.uniform(0.0, 1.0))
    weight = WeightFunction("compact", {"R0": 1.0})
    windows = (2.0, 4.0, 8.0)
    observables = {w: make_observable(box, "window-average", f"window{int(w)}",
                                      radius=w) for w in windows}
    return model, weight, windows, observables


def tail_cases() -> dict:
    """Models and fit families for the action-radius tail studies."""
    return {
        "voronoi": {
            "box": BoxSpec(2, 8.0, 0.25, margin=8.0),
            "family": "weibull", "shape": 2.0,
        },
        "parking": {
            "model": ParkingInclusionModel(BoxSpec(2, 8.0, 1.0, margin=8.0), R=1.0,
                                           horizon=2.0, ball_radius=1.0),
            "family": "exponential",
        },
        "inclusions": {
            "model": PoissonInclusionModel(
                BoxSpec(2, 8.0, 1.0, margin=10.0),
                InclusionModelSpec("A2-sum", INCLUSION_RADIUS_LAW, 1.0, beta=0.0,
                                   f=ClippedMap.identity(),
                                   w_law=ScalarLaw.const(1.0))),
            "law": INCLUSION_RADIUS_LAW,
        },
    }
