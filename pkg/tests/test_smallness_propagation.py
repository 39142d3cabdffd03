import math

import numpy as np
import pytest

from wavescope.core.entities.records import Calibration, ThreeSphereParams
from wavescope.modules.smallness_propagation_module import BallField, SmallnessPropagationModule
from wavescope.util.errors import (ContractionViolated, DegenerateRadii, DeltaOutOfRange, NotASolution,
                                   ThetaNonpositive, ValidationError)


def test_three_sphere_exponent_example(smallness):
    constants = smallness.three_sphere_exponent(ThreeSphereParams(1.0, 2.0, 4.0, 0.25, 2.0), C_carleman=1.0)
    assert constants.theta0 == pytest.approx(0.0357142857, abs=1e-10)
    assert constants.C0 == pytest.approx(math.exp(4.0 - 0.75 ** -2) / 0.25 ** 4)


def test_three_sphere_parameter_errors(smallness):
    with pytest.raises(DeltaOutOfRange):
        smallness.three_sphere_exponent(ThreeSphereParams(1.0, 2.0, 4.0, 0.3, 2.0))
    with pytest.raises(DegenerateRadii):
        smallness.three_sphere_exponent(ThreeSphereParams(3.0, 2.0, 4.0, 0.1, 2.0))


def test_harmonic_corpus_passes_the_three_sphere_check(smallness):
    params = ThreeSphereParams(0.25, 0.5, 1.0, 0.2, 4.0)
    corpus = smallness.harmonic_corpus(20, max_degree=6, dim=2, seed=11)
    records = [smallness.verify_three_sphere(field_, params) for field_ in corpus]
    assert all(record.passed for record in records)
    assert all(0.0 < record.implied_C0 <= record.cap for record in records)
    assert all(record.lhs <= record.rhs_large for record in records)


def test_harmonic_corpus_is_seeded(smallness):
    points = np.random.default_rng(0).uniform(-0.5, 0.5, size=(10, 2))
    first = smallness.harmonic_corpus(3, seed=5)
    second = smallness.harmonic_corpus(3, seed=5)
    for a, b in zip(first, second):
        assert np.array_equal(a.u(points), b.u(points))


def test_constant_field_gives_the_volume_ratio(smallness):
    params = ThreeSphereParams(0.25, 0.5, 1.0, 0.2, 4.0)
    field_ = BallField(np.zeros(2), 2, lambda p: np.ones(p.shape[:-1]), field_id="one")
    record = smallness.verify_three_sphere(field_, params)
    expected = SmallnessPropagationModule.ball_volume_ratio(params, record.theta0, 2)
    assert record.implied_C0 == pytest.approx(expected, rel=1e-9)


def test_three_dimensional_harmonic_fields(smallness):
    params = ThreeSphereParams(0.25, 0.5, 1.0, 0.2, 4.0)
    for field_ in smallness.harmonic_corpus(3, max_degree=3, dim=3, seed=2):
        assert smallness.verify_three_sphere(field_, params).passed


def test_non_solution_is_rejected(smallness):
    params = ThreeSphereParams(0.25, 0.5, 1.0, 0.2, 4.0)
    paraboloid = BallField(np.zeros(2), 2, lambda p: np.sum(p ** 2, axis=-1), field_id="paraboloid")
    with pytest.raises(NotASolution) as caught:
        smallness.verify_three_sphere(paraboloid, params)
    assert caught.value.context["field_id"] == "paraboloid"

    with_source = BallField(np.zeros(2), 2, paraboloid.u, lambda p: np.full(p.shape[:-1], 4.0), field_id="poisson")
    record = smallness.verify_three_sphere(with_source, params)
    assert record.residual < 1e-4


def test_propagation_example(smallness):
    state = smallness.propagate_smallness(None, 1e-4, 0.5, 2.0, steps=3)
    assert state.final == pytest.approx(1.0637, abs=1e-4)
    assert state.closed_form == pytest.approx(state.final, rel=1e-12)
    assert state.bound >= state.closed_form


def test_propagation_along_a_chain(smallness, geometry):
    chain = geometry.cone_ball_chain(0.5, geometry.cone_slope_for(0.05), 1.0, 0.05, count=6)
    state = smallness.propagate_smallness(chain, 1e-6, 0.3, 1.5)
    assert state.steps == 5 and len(state.alpha) == 6
    assert state.closed_form == pytest.approx(1.5 ** ((1 - 0.3 ** 5) / 0.7) * 1e-6 ** (0.3 ** 5))


def test_propagation_of_zero_and_bad_inputs(smallness):
    state = smallness.propagate_smallness(None, 0.0, 0.5, 2.0, steps=4)
    assert np.all(state.alpha == 0.0) and state.final == 0.0
    with pytest.raises(ValidationError):
        smallness.propagate_smallness(None, 1e-3, 1.0, 2.0, steps=2)
    with pytest.raises(ValidationError):
        smallness.propagate_smallness(None, -1e-3, 0.5, 2.0, steps=2)
    with pytest.raises(ValidationError):
        smallness.propagate_smallness(None, 1e-3, 0.5, 0.5, steps=2)


def test_cone_contraction_limit():
    contraction = 0.25 ** 2 / SmallnessPropagationModule.theta_tilde_for(1e-4, 4.0)
    assert contraction == pytest.approx(23.0 / 48.0, abs=1e-3)


def test_cone_schedule_on_a_thin_cone(smallness, geometry):
    chain = geometry.cone_ball_chain(0.5, geometry.cone_slope_for(1e-4), 1.0, 1e-4, count=11)
    schedule = smallness.cone_decay_schedule(chain, 1.0, 10.0, 1.0)
    assert schedule.contraction == pytest.approx(23.0 / 48.0, abs=1e-3)
    assert np.all(np.diff(schedule.A) > 0.0)
    assert np.all(schedule.A <= (chain.cone.chi ** -2 - 1.0) * schedule.contraction
                  / (1.0 - schedule.contraction) * (1.0 + 1e-12))


def test_cone_schedule_decays_beyond_the_minimal_time(smallness, geometry):
    chain = geometry.cone_ball_chain(1.0, geometry.cone_slope_for(0.25), 1.0, 0.25, count=11)
    minimal = smallness.cone_decay_schedule(chain, 1.0, 1.0, 1.0)
    assert math.isfinite(minimal.T_min)
    T = 2.0 * minimal.T_min
    schedule = smallness.cone_decay_schedule(chain, 1.0, T, 1.0)
    assert np.all(schedule.A2 <= -T ** 2 * schedule.delta3 / 20.0)


def test_contraction_violation(smallness, geometry):
    chain = geometry.cone_ball_chain(1.0, geometry.cone_slope_for(0.25), 1.0, 0.25, count=5)
    assert 0.25 ** 2 / SmallnessPropagationModule.theta_tilde_for(0.25, 20.0) > 1.0
    with pytest.raises(ContractionViolated):
        smallness.cone_decay_schedule(chain, 1.0, 10.0, 1.0, beta=20.0)


def test_cone_schedule_needs_a_cone_chain(smallness, geometry):
    corridor = geometry.box_domain((0.0, 0.0), (1.6, 0.6), rho0=0.6)
    chain = geometry.path_ball_chain(corridor, (0.3, 0.3), (0.8, 0.3), 0.2)
    with pytest.raises(ValidationError):
        smallness.cone_decay_schedule(chain, 1.0, 10.0, 1.0)


def test_small_helpers(smallness):
    assert SmallnessPropagationModule.delta_bar(0.1) == pytest.approx(0.1 / 23.8)
    assert SmallnessPropagationModule.vartheta2(0.4, 0.9, 2.0, 3.0) == pytest.approx(min(0.4, 0.9 ** 6))
    assert SmallnessPropagationModule.theta_interior(0.1, 0.01, 1.0, 2.0) == pytest.approx(
        math.log(5.0) / math.log(100.0))


def test_continuation_bound(smallness):
    bound = smallness.sucp_bound(0.1, 0.01, 1.0, 1e-6, 1.0, 2.0)
    smaller = smallness.sucp_bound(0.1, 0.01, 1.0, 1e-9, 1.0, 2.0)
    assert 0.0 < smaller < bound
    assert smallness.sucp_bound(0.1, 0.01, 1.0, 0.0, 1.0, 2.0) == 0.0
    with pytest.raises(ThetaNonpositive):
        smallness.sucp_bound(0.5, 0.01, 1.0, 1e-6, 1.0, 2.5)


def test_continuation_radius_stops_at_s0_rho0(smallness):
    assert smallness.calibration.s0 == pytest.approx(0.5)
    smallness.sucp_bound(0.5, 0.01, 1.0, 1e-6, 1.0, 1.5)
    with pytest.raises(ValidationError) as caught:
        smallness.sucp_bound(0.6, 0.01, 1.0, 1e-6, 1.0, 1.5)
    assert caught.value.context["s0"] == pytest.approx(0.5)
    wide = SmallnessPropagationModule(Calibration(s0=0.8))
    assert wide.sucp_bound(0.6, 0.01, 1.0, 1e-6, 1.0, 1.5) > 0.0


def test_boundary_exponent_shares_the_interior_expression():
    args = (0.1, 0.01, 1.0, 2.0)
    assert SmallnessPropagationModule.theta_boundary(*args) == SmallnessPropagationModule.theta_interior(*args)


def test_continuation_constant_fit(smallness):
    measured = smallness.sucp_bound(0.1, 0.01, 1.0, 1e-6, 1.0, 1.5)
    assert smallness.fit_sucp_constant(measured, 0.1, 0.01, 1.0, 1e-6, 1.0) == pytest.approx(1.5, rel=1e-8)
    assert smallness.fit_sucp_constant(1e-12, 0.1, 0.01, 1.0, 1e-6, 1.0) == 1.0


def test_cauchy_exponent_recovers_theta(smallness):
    rng = np.random.default_rng(1)
    outer = rng.uniform(1.0, 10.0, 12)
    data = rng.uniform(1e-6, 1e-2, 12)
    inner = outer ** 0.7 * data ** 0.3
    assert smallness.cauchy_exponent(inner, outer, data) == pytest.approx(0.3, abs=1e-10)
