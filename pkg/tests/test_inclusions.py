import numpy as np
import pytest

from mfi_lab.core import BoxSpec, FieldSample, RngStream, lattice_sites
from mfi_lab.inclusions import (ClippedMap, InclusionModelSpec, MissingDecoration,
                                dependent_color_field, inclusion_field)
from mfi_lab.laws import RadiusLaw, ScalarLaw
from mfi_lab.pointproc import PointConfiguration, decorate, sample_poisson


def spec_a1(alpha=2.0, beta=-1.0):
    return InclusionModelSpec("A1-two-phase", RadiusLaw.bounded_uniform(2.0), 1.0,
                              alpha=alpha, beta=beta)


def test_no_points_constant_beta_all_schemes():
    box = BoxSpec(2, 4.0, 1.0, margin=1.0)
    empty = PointConfiguration(box, np.zeros((0, 2)), np.zeros(0),
                               {"V": np.zeros(0), "W": np.zeros(0), "U": np.zeros(0)})
    for scheme in ("A1-two-phase", "A2-sum", "A3-priority"):
        spec = InclusionModelSpec(scheme, RadiusLaw.bounded_uniform(1.0), 1.0, beta=-3.0)
        field = inclusion_field(empty, spec, box)
        np.testing.assert_array_equal(field.values, -3.0)


def test_a1_single_ball_indicator():
    box = BoxSpec(2, 6.0, 1.0, margin=1.0)
    cfg = PointConfiguration(box, [[3.0, 3.0]], [0.0], {"V": [1.0]})
    field = inclusion_field(cfg, spec_a1(), box)
    sites = lattice_sites(box)
    inside = np.linalg.norm(sites - [3.0, 3.0], axis=1) <= 1.0 + 1e-12
    np.testing.assert_array_equal(field.flat, np.where(inside, 2.0, -1.0))


def test_a3_priority_smaller_p_wins_overlap():
    box = BoxSpec(1, 6.0, 1.0, margin=1.0)
    spec = InclusionModelSpec("A3-priority", RadiusLaw.bounded_uniform(3.0), 1.0,
                              beta=0.0, priority="value")
    cfg = PointConfiguration(box, [[2.0], [4.0]], [0, 0],
                             {"V": [1.6, 2.2], "W": [5.0, 9.0], "U": [0.4, 0.9]})
    field = inclusion_field(cfg, spec, box)
    # site 3.5 is covered by both; the smaller radius (priority value) wins
    sites = lattice_sites(box).reshape(-1)
    overlap = (np.abs(sites - 2.0) <= 1.6) & (np.abs(sites - 4.0) <= 2.2)
    assert overlap.any()
    np.testing.assert_array_equal(field.flat[overlap], 5.0)


def test_a2_sum_hand_case():
    box = BoxSpec(1, 8.0, 1.0, margin=1.0)
    spec = InclusionModelSpec("A2-sum", RadiusLaw.bounded_uniform(3.0), 1.0,
                              beta=-7.0, f=ClippedMap.identity())
    cfg = PointConfiguration(box, [[3.0], [5.0]], [0, 0],
                             {"V": [1.5, 1.5], "W": [1.0, 2.0]})
    field = inclusion_field(cfg, spec, box)
    sites = lattice_sites(box).reshape(-1)
    in1 = np.abs(sites - 3.0) <= 1.5
    in2 = np.abs(sites - 5.0) <= 1.5
    expected = np.full_like(sites, -7.0)
    expected[in1 & ~in2] = 1.0
    expected[in2 & ~in1] = 2.0
    expected[in1 & in2] = 3.0
    np.testing.assert_array_equal(field.flat, expected)


def test_a2_clipping_map():
    box = BoxSpec(1, 4.0, 1.0, margin=0.0)
    spec = InclusionModelSpec("A2-sum", RadiusLaw.bounded_uniform(3.0), 1.0,
                              beta=0.0, f=ClippedMap(0.0, 2.5))
    cfg = PointConfiguration(box, [[2.0], [2.0]], [0, 1], {"V": [3.0, 3.0], "W": [2.0, 2.0]})
    field = inclusion_field(cfg, spec, box)
    assert field.values.max() == 2.5


def test_a1_range_invariant():
    box = BoxSpec(2, 8.0, 1.0, margin=2.0)
    rng = RngStream(5)
    cfg = sample_poisson(box, 0.5, 0.0, rng.child("p"))
    cfg = decorate(cfg, "V", ScalarLaw.uniform(0, 2), rng.child("v"))
    field = inclusion_field(cfg, spec_a1(), box)
    assert set(np.unique(field.values)) <= {2.0, -1.0}


def test_a3_partition_and_cover():
    box = BoxSpec(2, 8.0, 1.0, margin=2.0)
    rng = RngStream(9)
    spec = InclusionModelSpec("A3-priority", RadiusLaw.bounded_uniform(2.0), 0.5,
                              beta=np.nan if False else -5.0, priority="random")
    cfg = sample_poisson(box, 0.5, 0.0, rng.child("p"))
    for name, law in [("V", ScalarLaw.uniform(0.2, 2.0)), ("W", ScalarLaw.uniform(3, 4)),
                      ("U", ScalarLaw.uniform(0, 1))]:
        cfg = decorate(cfg, name, law, rng.child(name))
    field = inclusion_field(cfg, spec, box)
    sites = lattice_sites(box)
    covered = np.zeros(len(sites), dtype=bool)
    for j in range(cfg.count):
        covered |= np.linalg.norm(sites - cfg.positions[j], axis=1) <= cfg.decorations["V"][j] + 1e-12
    painted = field.flat != -5.0
    # the painted sites are exactly the covered union (painted values in W's range)
    np.testing.assert_array_equal(painted, covered)
    assert np.all((field.flat[painted] >= 3.0) & (field.flat[painted] <= 4.0))


def test_a3_priority_invariant_under_relabeling():
    box = BoxSpec(2, 6.0, 1.0, margin=1.0)
    rng = RngStream(13)
    spec = InclusionModelSpec("A3-priority", RadiusLaw.bounded_uniform(2.0), 1.0,
                              beta=0.0, priority="value")
    cfg = sample_poisson(box, 1.0, 0.0, rng.child("p"))
    for name, law in [("V", ScalarLaw.uniform(0.2, 2.0)), ("W", ScalarLaw.uniform(3, 4)),
                      ("U", ScalarLaw.uniform(0, 1))]:
        cfg = decorate(cfg, name, law, rng.child(name))
    field = inclusion_field(cfg, spec, box)
    perm = rng.child("perm").generator().permutation(cfg.count)
    shuffled = PointConfiguration(box, cfg.positions[perm], cfg.times[perm],
                                  {k: v[perm] for k, v in cfg.decorations.items()})
    field2 = inclusion_field(shuffled, spec, box)
    np.testing.assert_array_equal(field.values, field2.values)


def test_missing_decoration():
    box = BoxSpec(1, 4.0, 1.0)
    cfg = PointConfiguration(box, [[1.0]], [0.0])
    with pytest.raises(MissingDecoration):
        inclusion_field(cfg, spec_a1(), box)


def test_dependent_color_constant_color():
    box = BoxSpec(2, 6.0, 1.0, margin=1.0)
    rng = RngStream(17)
    cfg = sample_poisson(box, 0.5, 0.0, rng.child("p"))
    cfg = decorate(cfg, "V", ScalarLaw.uniform(0.2, 1.5), rng.child("v"))
    cfg = decorate(cfg, "U", ScalarLaw.uniform(0, 1), rng.child("u"))
    color = FieldSample(box, np.full((6, 6), 4.5))
    field = dependent_color_field(cfg, "inclusions-A3-style", color, box, beta=0.0)
    assert set(np.unique(field.values)) <= {0.0, 4.5}


def test_dependent_color_voronoi_single_point():
    box = BoxSpec(2, 4.0, 1.0, margin=1.0)
    color_vals = np.arange(16, dtype=float).reshape(4, 4)
    color = FieldSample(box, color_vals)
    cfg = PointConfiguration(box, [[1.2, 2.7]], [0.0])
    field = dependent_color_field(cfg, "voronoi", color, box)
    # nearest site to (1.2, 2.7) is (1.5, 2.5) -> index (1, 2)
    np.testing.assert_array_equal(field.values, color_vals[1, 2])


def test_dependent_color_matches_a3_with_color_values():
    from mfi_lab.inclusions import color_at_points, inclusion_values_at

    box = BoxSpec(2, 6.0, 1.0, margin=1.0)
    rng = RngStream(19)
    cfg = sample_poisson(box, 0.8, 0.0, rng.child("p"))
    cfg = decorate(cfg, "V", ScalarLaw.uniform(0.2, 1.5), rng.child("v"))
    cfg = decorate(cfg, "U", ScalarLaw.uniform(0, 1), rng.child("u"))
    color = FieldSample(box, rng.child("c").generator().standard_normal((6, 6)))
    field = dependent_color_field(cfg, "inclusions-A3-style", color, box, beta=0.5)
    spec = InclusionModelSpec("A3-priority", RadiusLaw.bounded_uniform(1.5), 0.8,
                              beta=0.5, priority="value")
    dec = dict(cfg.decorations)
    dec["W"] = color_at_points(color, cfg.positions)
    expected = inclusion_values_at(spec, cfg.positions, dec, lattice_sites(box))
    np.testing.assert_array_equal(field.flat, expected)
