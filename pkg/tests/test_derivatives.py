import numpy as np
import pytest

from mfi_lab.core import BoxSpec, RngStream, lattice_sites
from mfi_lab.derivatives import (BoundaryHit, action_radius_trial,
                                 empirical_action_radius, fct_derivative,
                                 osc_derivative, osc_from_realization, sup_derivative)
from mfi_lab.gaussian import CovarianceModel, LipschitzClamp
from mfi_lab.inclusions import InclusionModelSpec
from mfi_lab.laws import RadiusLaw, ScalarLaw
from mfi_lab.models import (GaussianModel, HardcorePoissonModel, MovingAverageModel,
                            ParkingInclusionModel, PoissonInclusionModel, Region,
                            VoronoiModel)
from mfi_lab.observables import NonSmoothObservable, make_observable
from mfi_lab.pointproc import HardcoreSpec


def test_osc_zero_for_constant_observable():
    box = BoxSpec(2, 8.0, 1.0, margin=4.0)
    model = VoronoiModel(box, 1.0, ScalarLaw.const(5.0))
    obs = make_observable(box, "window-average", radius=2.5)
    for ell in (0.0, 2.0):
        assert osc_derivative(model, obs, [4.0, 4.0], ell, 8, RngStream(1)) == 0.0


def test_osc_two_phase_reaches_full_contrast():
    # both phases reachable inside the ball: the oscillation approaches
    # |alpha - beta| as K grows
    box = BoxSpec(2, 8.0, 1.0, margin=4.0)
    spec = InclusionModelSpec("A1-two-phase", RadiusLaw.bounded_uniform(1.5), 1.0,
                              alpha=2.0, beta=0.0)
    model = PoissonInclusionModel(box, spec)
    obs = make_observable(box, "site-max", radius=0.4, center=[4.5, 4.5])
    assert len(obs.support_idx) == 1
    rng = RngStream(7)
    oscs = [osc_derivative(model, obs, [4.5, 4.5], 1.0, 64, rng.child(str(i)))
            for i in range(50)]
    assert abs(np.mean(oscs) - 2.0) < 0.05 * 2.0


def test_osc_zero_when_ball_cannot_reach_window():
    # bounded radii, ball far from the support: exact locality zero
    box = BoxSpec(2, 16.0, 1.0, margin=4.0)
    spec = InclusionModelSpec("A1-two-phase", RadiusLaw.bounded_uniform(1.0), 1.0)
    model = PoissonInclusionModel(box, spec)
    obs = make_observable(box, "window-average", center=[3.0, 3.0], radius=2.0)
    osc = osc_derivative(model, obs, [13.0, 13.0], 0.0, 16, RngStream(3))
    assert osc == 0.0


def test_osc_nondecreasing_in_K_on_fixed_draws():
    box = BoxSpec(2, 8.0, 1.0, margin=4.0)
    model = VoronoiModel(box, 1.0, ScalarLaw.uniform(0, 1))
    obs = make_observable(box, "window-average", radius=2.5)
    rng = RngStream(9)
    real = model.realize(rng.child("m"))
    sites = lattice_sites(box)[obs.support_idx]
    support = model.prepare_support(real, sites)
    region = Region.ball([4.0, 4.0], 2.0)
    vals = model.osc_values_batch(real, support, region, rng.child("o"), 16)
    z0 = obs.evaluate_support(support["base_vals"])
    zk = obs.evaluate_batch(vals)
    for K in (2, 4, 8, 16):
        sub = zk[:K]
        osc_k = max(sub.max(), z0) - min(sub.min(), z0)
        full = max(zk.max(), z0) - min(zk.min(), z0)
        assert osc_k <= full + 1e-15


def test_fct_window_average_linear_exact():
    box = BoxSpec(2, 16.0, 1.0, 0.0, "periodic")
    cov = CovarianceModel("exponential", 1.0, 2.0)
    model = GaussianModel(box, cov, LipschitzClamp())
    obs = make_observable(box, "window-average", radius=3.0)
    field = model.observe(model.realize(RngStream(5)))
    region = np.arange(box.site_count)
    fd = fct_derivative(field, obs, region, method="fd")
    grad = fct_derivative(field, obs, region, method="gradient")
    exact = np.abs(obs.weights).sum()  # unit-sum bump weights
    assert fd == pytest.approx(exact, rel=1e-9)
    assert grad == pytest.approx(exact, rel=1e-12)


def test_fct_clipped_exp_matches_chain_rule():
    box = BoxSpec(2, 16.0, 1.0, 0.0, "periodic")
    cov = CovarianceModel("exponential", 1.0, 2.0)
    model = GaussianModel(box, cov, LipschitzClamp("tanh", 1.0, 2.0))
    obs = make_observable(box, "clipped-exp", radius=3.0, scale=0.7, cap=10.0)
    rng = RngStream(8)
    region = np.arange(box.site_count)
    for i in range(100):
        field = model.observe(model.realize(rng.child(str(i))))
        fd = fct_derivative(field, obs, region, method="fd")
        analytic = fct_derivative(field, obs, region, method="gradient")
        assert fd == pytest.approx(analytic, rel=1e-4)


def test_fct_constant_observable_zero():
    box = BoxSpec(1, 8.0, 1.0, 0.0, "periodic")
    model = GaussianModel(box, CovarianceModel("exponential", 1.0, 1.0),
                          LipschitzClamp())
    field = model.observe(model.realize(RngStream(2)))
    obs = make_observable(box, "window-average", radius=2.0, center=[4.0])
    outside = np.flatnonzero(np.abs(lattice_sites(box).reshape(-1) - 4.0) > 3.0)
    assert fct_derivative(field, obs, outside) == 0.0


def test_fct_site_max_not_smooth():
    box = BoxSpec(1, 8.0, 1.0, 0.0, "periodic")
    model = GaussianModel(box, CovarianceModel("exponential", 1.0, 1.0),
                          LipschitzClamp())
    field = model.observe(model.realize(RngStream(2)))
    obs = make_observable(box, "site-max", radius=2.0)
    with pytest.raises(NonSmoothObservable):
        fct_derivative(field, obs, np.arange(8))


def test_empirical_radius_zero_when_nothing_changes():
    box = BoxSpec(2, 8.0, 1.0, margin=2.0)
    spec = InclusionModelSpec("A1-two-phase", RadiusLaw.bounded_uniform(1.0), 1e-8)
    model = PoissonInclusionModel(box, spec)
    assert empirical_action_radius(model, [4.0, 4.0], 0.0, RngStream(4)) == 0.0


def test_empirical_radius_local_model_bounded():
    box = BoxSpec(2, 8.0, 1.0, margin=3.0)
    model = MovingAverageModel(box, window_radius=1.5)
    rng = RngStream(11)
    for i in range(40):
        rho, certified = action_radius_trial(model, [4.0, 4.0], 0.0, rng.child(str(i)))
        assert rho <= 1.5 + box.spacing + 1e-9
        assert certified == 1.5 + box.spacing


def test_empirical_radius_voronoi_below_certified():
    box = BoxSpec(2, 8.0, 1.0, margin=6.0)
    model = VoronoiModel(box, 1.0, ScalarLaw.uniform(0, 1))
    rng = RngStream(13)
    checked = 0
    for i in range(100):
        try:
            rho, certified = action_radius_trial(model, [4.0, 4.0], 0.0, rng.child(str(i)))
        except BoundaryHit:
            continue
        if certified is not None:
            assert rho <= certified + 1e-9
            checked += 1
    assert checked >= 80


def test_empirical_radius_parking_below_chain_bound():
    box = BoxSpec(2, 8.0, 1.0, margin=8.0)
    model = ParkingInclusionModel(box, R=1.0, horizon=2.0, ball_radius=1.0)
    rng = RngStream(17)
    for i in range(60):
        rho, certified = action_radius_trial(model, [4.0, 4.0], 0.0, rng.child(str(i)))
        assert rho <= certified + 1e-9


def test_empirical_radius_hardcore_poisson_below_chain_bound():
    box = BoxSpec(2, 10.0, 1.0, margin=6.0)
    model = HardcorePoissonModel(box, HardcoreSpec(1.0, 1.0), ball_radius=0.5)
    rng = RngStream(19)
    for i in range(60):
        rho, certified = action_radius_trial(model, [5.0, 5.0], 0.0, rng.child(str(i)))
        assert rho <= certified + 1e-9


def test_boundary_hit_for_global_kernel():
    box = BoxSpec(1, 32.0, 1.0, 0.0, "periodic")
    model = GaussianModel(box, CovarianceModel("exponential", 1.0, 3.0),
                          LipschitzClamp())
    with pytest.raises(BoundaryHit):
        empirical_action_radius(model, [16.0], 0.0, RngStream(21))


def test_sup_derivative_dominates_base_fct():
    box = BoxSpec(1, 16.0, 1.0, 0.0, "periodic")
    model = GaussianModel(box, CovarianceModel("exponential", 1.0, 2.0),
                          LipschitzClamp())
    obs = make_observable(box, "clipped-exp", radius=3.0, scale=0.5, cap=6.0)
    rng = RngStream(23)
    real = model.realize(rng.child("realization"))
    region_idx = np.arange(box.site_count)
    base = fct_derivative(model.observe(real), obs, region_idx, method="fd")
    sup = sup_derivative(model, obs, [8.0], 2.0, 4, rng)
    assert sup >= base - 1e-12
