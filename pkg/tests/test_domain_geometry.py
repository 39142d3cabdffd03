from fractions import Fraction

import numpy as np
import pytest

from wavescope.core.entities.domain import SigmaPortion
from wavescope.modules.domain_geometry_module import bump_profile
from wavescope.util.errors import (ChartViolation, ConeAngleOrder, DegenerateDomain, EmptyAccessiblePortion,
                                   NotConnected, NotRelativeGraphs, ValidationError)

RHO0 = 0.25


def test_flat_chart_has_zero_norm(geometry):
    chart = geometry.make_chart("flat", 1, -1, [0.5], 0.25, 1.0 / 128.0)
    terms = geometry.check_chart(chart, RHO0, 1.0)
    assert terms == {"sup": 0.0, "gradient": 0.0, "hessian": 0.0}


def test_steep_chart_reports_the_violating_term(geometry):
    chart = geometry.make_chart("steep", 1, -1, [0.5], 0.25, 1.0 / 128.0,
                                profile=lambda u: bump_profile(u, 0.2, 0.0, 0.1))
    with pytest.raises(ChartViolation) as caught:
        geometry.check_chart(chart, RHO0, 1.0, require_normalized=False)
    assert caught.value.context["chart_id"] == "steep"
    assert caught.value.context["term"] in ("sup", "gradient", "hessian")


def test_off_center_bump_is_not_normalized(geometry):
    chart = geometry.make_chart("shifted", 1, -1, [0.5], 0.25, 1.0 / 128.0,
                                profile=lambda u: bump_profile(u, 0.002, 0.05, 0.15))
    geometry.check_chart(chart, RHO0, 1.0, require_normalized=False)
    with pytest.raises(ChartViolation) as caught:
        geometry.check_chart(chart, RHO0, 1.0)
    assert caught.value.context["term"] == "normalization"


def test_rim_check_is_opt_in(geometry):
    chart = geometry.make_chart("cup", 1, -1, [0.5], 0.25, 1.0 / 128.0, profile=lambda u: 0.1 * u ** 2)
    terms = geometry.check_chart(chart, RHO0, 1.0)
    assert terms["sup"] == pytest.approx(0.1 * 0.25 ** 2)
    with pytest.raises(ChartViolation) as caught:
        geometry.check_chart(chart, RHO0, 1.0, require_rim=True)
    assert caught.value.context["term"] == "rim"


def test_level_function_of_charted_box(charted_square):
    points = np.array([[0.5, 0.5], [0.5, 1.0], [0.5, 1.1], [-0.2, 0.5]])
    level = charted_square.level(points)
    assert level[0] == pytest.approx(-0.5)
    assert level[1] == pytest.approx(0.0)
    assert level[2] > 0.0 and level[3] > 0.0


def test_positive_chart_profile_pushes_the_face_inward(geometry, charted_square):
    bumped = geometry.perturb_chart(charted_square, "bottom", 0.01, center=0.0, width=0.2)
    assert charted_square.contains(np.array([[0.5, 0.005]]))[0]
    assert not bumped.contains(np.array([[0.5, 0.005]]))[0]
    assert bumped.contains(np.array([[0.5, 0.011]]))[0]


def test_sigma_is_selected_away_from_inaccessible_charts(charted_square):
    sigma = charted_square.sigma
    assert (sigma.axis, sigma.side) == (1, 1)
    assert sigma.upper[0] - sigma.lower[0] == pytest.approx(2.0 * RHO0)


def test_sigma_over_an_inaccessible_chart_is_rejected(geometry):
    chart = geometry.make_chart("bottom", 1, -1, [0.5], 0.25, 1.0 / 128.0)
    sigma = SigmaPortion("bad", 1, -1, (0.2,), (0.8,))
    with pytest.raises(EmptyAccessiblePortion):
        geometry.build_graph_domain([chart], RHO0, 1.0, box=((0.0, 0.0), (1.0, 1.0)), sigma=sigma)


def test_unordered_box_is_degenerate(geometry):
    with pytest.raises(DegenerateDomain):
        geometry.build_graph_domain([], RHO0, 1.0, box=((0.0, 0.0), (0.0, 1.0)))


def test_hausdorff_distance_of_nested_boxes(geometry):
    small = geometry.box_domain((0.0, 0.0), (1.0, 1.0), rho0=RHO0)
    large = geometry.box_domain((0.0, 0.0), (1.1, 1.0), rho0=RHO0)
    resolution = 0.01
    assert geometry.hausdorff_distance(small, small, resolution) == 0.0
    assert abs(geometry.hausdorff_distance(small, large, resolution) - 0.1) <= 2.0 * resolution
    assert abs(geometry.modified_distance(small, large, resolution) - 0.1) <= 2.0 * resolution


def test_hausdorff_distance_is_symmetric(geometry, charted_square):
    bumped = geometry.perturb_chart(charted_square, "bottom", 0.02, width=0.2)
    resolution = 1.0 / 256.0
    forward = geometry.hausdorff_distance(charted_square, bumped, resolution)
    backward = geometry.hausdorff_distance(bumped, charted_square, resolution)
    assert forward == pytest.approx(backward)
    assert abs(forward - 0.02) <= 2.0 * resolution


def test_distances_need_a_positive_resolution(geometry, charted_square):
    with pytest.raises(ValidationError):
        geometry.hausdorff_distance(charted_square, charted_square, 0.0)
    with pytest.raises(ValidationError):
        geometry.modified_distance(charted_square, charted_square, -1.0)


def test_relative_graph_report_of_a_small_bump(geometry, charted_square):
    amplitude = 0.01
    bumped = geometry.perturb_chart(charted_square, "bottom", amplitude, width=0.2)
    report = geometry.relative_graph_report(charted_square, bumped, resolution=1.0 / 256.0)
    assert report.gamma0 == pytest.approx(amplitude, rel=1e-9)
    assert report.gamma1_alpha >= report.gamma0
    assert report.r0 == pytest.approx(RHO0)
    assert report.within_d0
    assert report.d_hausdorff <= amplitude + 2.0 / 256.0


def test_large_profile_difference_is_not_a_relative_graph(geometry, charted_square):
    bumped = geometry.perturb_chart(charted_square, "bottom", 0.2, width=0.2)
    with pytest.raises(NotRelativeGraphs):
        geometry.relative_graph_report(charted_square, bumped)


def test_cone_chain_balls_are_nested_for_random_parameters(geometry):
    rng = np.random.default_rng(3)
    for _ in range(200):
        varsigma = float(rng.uniform(1e-4, 0.25))
        s = float(rng.uniform(0.1, 1.0))
        L_s = geometry.cone_slope_for(varsigma) * float(rng.uniform(0.2, 1.0))
        chain = geometry.cone_ball_chain(s, L_s, 1.0, varsigma, count=8)
        cone = chain.cone
        # exact nesting of B_{r_{k+1}}(w_{k+1}) in B_{rho_k}(w_k)
        chi = (1 - (1 - Fraction(cone.a) * Fraction(varsigma))) / Fraction(varsigma)
        sin1 = 1 - Fraction(varsigma)
        sin2 = 1 - Fraction(cone.a) * Fraction(varsigma)
        assert (1 - chi) + chi * sin1 <= sin2
        gaps = chain.mid_radii[:-1] - chain.step_distances - chain.small_radii[1:]
        assert np.all(gaps >= -1e-12)
        assert np.all(np.diff(chain.large_radii) < 0.0)


def test_cone_chain_rejects_bad_angles(geometry):
    with pytest.raises(ConeAngleOrder):
        geometry.cone_ball_chain(0.5, 1.0, 1.0, 0.3)
    with pytest.raises(ConeAngleOrder):
        geometry.cone_ball_chain(0.5, 10.0, 1.0, 0.01)


def test_cone_chain_d1(geometry):
    chain = geometry.cone_ball_chain(0.5, geometry.cone_slope_for(0.05), 1.0, 0.05)
    cone = chain.cone
    assert cone.chain_d1 == pytest.approx(cone.l1 * (1.0 - np.sin(cone.gamma1)))


def test_path_chain_along_a_corridor(geometry):
    corridor = geometry.box_domain((0.0, 0.0), (1.6, 0.6), rho0=0.6)
    chain = geometry.path_ball_chain(corridor, (0.3, 0.3), (1.3, 0.3), 0.2)
    assert len(chain) == 11
    assert np.allclose(chain.centers[0], (0.3, 0.3))
    assert np.allclose(chain.centers[-1], (1.3, 0.3))
    assert np.all(chain.step_distances <= 0.1 + 1e-12)
    assert np.allclose(chain.small_radii, 0.05) and np.allclose(chain.large_radii, 0.2)
    assert chain.within_length_bound


def test_path_chain_outside_the_inset_region(geometry):
    corridor = geometry.box_domain((0.0, 0.0), (1.6, 0.6), rho0=0.6)
    with pytest.raises(NotConnected):
        geometry.path_ball_chain(corridor, (0.1, 0.3), (1.3, 0.3), 0.2)


def test_path_chain_between_separated_pockets(geometry):
    first = geometry.box_domain((0.0, 0.0), (2.0, 1.0), rho0=1.0)
    chart = geometry.make_chart("wall", 1, -1, [1.0], 0.5, 1.0 / 128.0,
                                profile=lambda u: bump_profile(u, 0.9, 0.0, 0.5))
    walled = first.with_charts([chart])
    with pytest.raises(NotConnected):
        geometry.path_ball_chain(walled, (0.4, 0.5), (1.6, 0.5), 0.2)


def test_export_domain_lists_constants(geometry, charted_square):
    payload = geometry.export_domain(charted_square)
    assert payload["rho0"] == RHO0 and payload["kind"] == "box"
    assert payload["charts"][0]["chart_id"] == "bottom"
    assert payload["sigma"]["axis"] == 1
