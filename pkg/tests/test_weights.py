import numpy as np
import pytest
from scipy import integrate

from mfi_lab.laws import RadiusLaw
from mfi_lab.weights import (InfluenceViolation, NonIntegrableWeight,
                             QuarterConditionViolated, WeightFunction,
                             action_radius_weight, geometric_scale_grid,
                             iterated_radius_weight, radius_law_weight)


def test_exp_family_values_and_integral():
    w = WeightFunction("exp", {"C": 1.0})
    ell = np.array([0.0, 1.0, 3.0])
    np.testing.assert_allclose(w(ell), np.exp(-ell))
    assert w.integral() == pytest.approx(1.0, rel=1e-12)


def test_stretched_exp_integral():
    from math import gamma

    w = WeightFunction("stretched-exp", {"C": 2.0, "dim": 2})
    quad, _ = integrate.quad(lambda u: np.exp(-(u**2) / 2.0), 0, np.inf)
    assert w.integral() == pytest.approx(quad, rel=1e-10)
    assert w.integral() == pytest.approx(2.0**0.5 * gamma(1.5), rel=1e-12)


def test_exp_log_weight_is_integrable_and_unit_at_zero():
    w = WeightFunction("exp-log", {"C": 2.0})
    assert w(0.0) == pytest.approx(1.0)
    assert np.isfinite(w.integral())
    # numeric total agrees with direct quadrature
    quad, _ = integrate.quad(lambda u: np.exp(-(u / 2.0) * np.log(u / 2.0)) if u > 0 else 1.0,
                             0, np.inf, limit=400)
    assert w.integral() == pytest.approx(quad, rel=1e-8)


def test_gaussian_families_integrate_to_sigma2():
    # fundamental theorem of calculus on -c': total mass is c(0) - c(inf)
    for fam, params in [("gaussian-exp", {"sigma2": 2.0, "xi": 3.0}),
                        ("gaussian-bump", {"sigma2": 0.5, "xi": 1.5}),
                        ("gaussian-poly", {"sigma2": 1.2, "xi": 2.0, "alpha": 3.0})]:
        w = WeightFunction(fam, params)
        assert w.integral() == pytest.approx(params["sigma2"], rel=1e-12)
        quad, _ = integrate.quad(lambda u: float(w(u)), 0, np.inf, limit=400)
        assert quad == pytest.approx(params["sigma2"], rel=1e-6)


def test_compact_weight():
    w = WeightFunction("compact", {"R0": 2.0})
    assert w(1.9) == 1.0 and w(2.1) == 0.0
    assert w.integral() == pytest.approx(2.0)


def test_tabulated_weight_interpolation():
    w = WeightFunction("tabulated", table=([0.0, 1.0, 2.0], [1.0, 0.5, 0.0]))
    assert w(0.5) == pytest.approx(0.75)
    assert w(5.0) == 0.0
    assert w.integral() == pytest.approx(1.0)


def test_plateau_derivative_weight_is_zero():
    # piecewise-constant covariance has zero weight on the plateau
    w = WeightFunction("tabulated", table=([0.0, 1.0, 2.0], [0.3, 0.0, 0.0]))
    assert w(1.5) == 0.0


def test_radius_law_weight_bounded_support():
    d = 2
    w = radius_law_weight(RadiusLaw.bounded_uniform(2.0), 1.0, d)
    cutoff = np.sqrt(d) * (2.0 + 3.0 + 0.5)
    assert w(cutoff + 0.5) == 0.0
    assert w(1.0) > 0.0


def test_radius_law_weight_exponential_closed_form():
    d, mu, rate = 2, 1.5, 1.0
    law = RadiusLaw.exponential(rate)
    w = radius_law_weight(law, mu, d)
    for ell in [8.0, 10.0, 14.0]:
        v = ell / np.sqrt(d) - 3.0
        assert v >= 0.5  # monotone tail region: running sup equals the band mass
        expected = mu * (ell + 1.0) ** d * np.exp(-(v - 0.5)) * (1 - np.exp(-1.0))
        assert float(w(ell)) == pytest.approx(expected, rel=0.02)


def test_radius_law_weight_pareto_flag():
    with pytest.warns(NonIntegrableWeight):
        w = radius_law_weight(RadiusLaw.pareto(1.5, 1.0), 1.0, 2)
    assert not w.integrable


def test_action_radius_weight_exponential_example():
    # single slot, perturbation prob 1, identity influence, Exp(1) radius
    d = 2
    grid = np.array([0.0, 0.5, 1.0, 2.0, 3.0, 5.0, 8.0])
    w = action_radius_weight([(1.0, lambda l: np.exp(-l))], lambda u: u, d, ell_grid=grid)
    for ell in [1.0, 2.0, 5.0]:
        expected = (ell + 1.0) ** d * (np.exp(-(ell - 1)) - np.exp(-ell)) / (1 - np.exp(-ell))
        assert float(w(ell)) == pytest.approx(expected, rel=1e-9)


def test_action_radius_weight_zero_perturbation():
    w = action_radius_weight([(0.0, lambda l: np.exp(-l))], lambda u: u, 2)
    ell = np.linspace(0, 20, 50)
    assert np.all(w(ell) == 0.0)


def test_action_radius_weight_deterministic_radius_support():
    R0 = 3.0
    surv = lambda l: 1.0 if l <= R0 else 0.0
    grid = np.linspace(0.0, 8.0, 161)
    w = action_radius_weight([(0.5, surv)], lambda u: u, 1, ell_grid=grid)
    inside = (grid > R0 + 0.05) & (grid <= R0 + 1.0)
    outside = (grid < R0 - 0.05) | (grid > R0 + 1.05)
    assert np.all(w(grid[inside]) > 0)
    assert np.all(w(grid[outside]) == 0)


def test_action_radius_weight_influence_violation():
    with pytest.raises(InfluenceViolation):
        action_radius_weight([(1.0, lambda l: np.exp(-l))], lambda u: 0.5 * u, 2)


def test_iterated_radius_weight_hand_values():
    w = iterated_radius_weight(lambda l: np.exp(-l), R=1.0, dimension=2)
    assert float(w(5.0)) == pytest.approx(36.0 * (8.0 / 5.0) * np.exp(-2.5), rel=1e-12)
    for ell in [0.0, 1.0, 3.0, 4.0]:
        assert float(w(ell)) == pytest.approx((ell + 1.0) ** 2, rel=1e-12)


def test_iterated_radius_weight_quarter_condition():
    samples_bad = np.array([1.0] * 4 + [5.0] * 6)  # P[rho >= 1] = 1 > 1/4 at pivot 1
    with pytest.raises(QuarterConditionViolated):
        iterated_radius_weight(lambda l: np.exp(-l), 1.0, 2, tail_data=0.4)
    with pytest.raises(QuarterConditionViolated):
        iterated_radius_weight(lambda l: np.exp(-l), 1.0, 2, tail_data=samples_bad)
    ok = iterated_radius_weight(lambda l: np.exp(-l), 1.0, 2, tail_data=0.2)
    assert float(ok(0.0)) == 1.0


def test_iterated_radius_weight_rejects_increasing_pi0():
    with pytest.raises(ValueError):
        iterated_radius_weight(lambda l: l, 1.0, 2)


def test_support_quantile():
    w = WeightFunction("exp", {"C": 2.0})
    q = w.support_quantile(0.99)
    assert w.mass_beyond(q) / w.integral() == pytest.approx(0.01, rel=1e-3)


def test_geometric_scale_grid_covers_support():
    w = WeightFunction("exp", {"C": 2.0})
    grid = geometric_scale_grid(w)
    assert grid[0] == 0.0
    assert w.mass_beyond(grid[-1]) < 0.01 * w.integral()
    fine = geometric_scale_grid(w, refine=1)
    assert len(fine) > len(grid)
    assert set(grid).issubset(set(fine))
