import math

import numpy as np
import pytest
from numpy.polynomial import Polynomial
from scipy.integrate import trapezoid

from wavescope.core.entities.domain import SigmaPortion
from wavescope.core.entities.fields import AnisotropyField, BoundaryData, GridSpec, SeparableTerm
from wavescope.util.constants import ENERGY_DRIFT_TOLERANCE
from wavescope.util.errors import (CflViolation, FlatData, GridMismatch, NonconformingBoundary, TimeTooShort,
                                   ValidationError)

RHO0 = 0.25


def mode(points):
    return np.sin(math.pi * points[..., 0]) * np.sin(math.pi * points[..., 1])


def test_time_step_divides_the_horizon(wave, identity):
    dt, steps = wave.time_step(identity, GridSpec(1.0 / 32.0), 1.0)
    assert steps == 64 and dt == pytest.approx(1.0 / 64.0)
    dt, steps = wave.time_step(identity, GridSpec(0.1), 1.0)
    assert dt * steps == pytest.approx(1.0) and dt <= 0.05 + 1e-15


def test_explicit_time_step_above_the_cfl_limit(wave, identity):
    with pytest.raises(CflViolation):
        wave.time_step(identity, GridSpec(1.0 / 32.0, dt=0.02), 1.0)


def test_box_faces_must_lie_on_grid_lines(wave, unit_square):
    with pytest.raises(NonconformingBoundary):
        wave.build_grid(unit_square, GridSpec(0.3))


def test_node_classes_of_a_flat_box(wave, unit_square):
    geometry, _ = wave.build_grid(unit_square, GridSpec(0.125))
    assert np.count_nonzero(geometry.active) == 7 * 7
    assert np.count_nonzero(geometry.dirichlet) == 4 * 8
    assert not np.any(geometry.imposed) and not np.any(geometry.ghost)


def test_bumped_chart_needs_ghost_nodes(wave, geometry, charted_square):
    bumped = geometry.perturb_chart(charted_square, "bottom", 0.02, width=0.2)
    grid, _ = wave.build_grid(bumped, GridSpec(1.0 / 32.0))
    assert np.any(grid.ghost)
    assert not np.any(grid.active & grid.ghost)


def test_homogeneous_energy_is_conserved(wave, unit_square, zero_data, identity):
    h = 1.0 / 64.0
    dt_max = wave.c_cfl * h
    u = wave.solve_ibvp(unit_square, identity, zero_data, 1000 * dt_max, GridSpec(h), initial=(mode, None))
    assert len(u.times) == 1001
    assert wave.energy(u, float(u.times[1])) > 0.0
    assert wave.energy_drift(u, stride=37) < ENERGY_DRIFT_TOLERANCE


def test_forced_energy_stays_below_the_gronwall_bound(wave, unit_square, zero_data, identity):
    def unit_source(points, t):
        return np.ones(np.shape(points)[:-1])

    u = wave.solve_ibvp(unit_square, identity, zero_data, 1.0, GridSpec(1.0 / 32.0), source=unit_source)
    bound = wave.forced_energy_bound(u, unit_source)
    assert bound == pytest.approx(math.e, rel=0.05)
    energies = [wave.energy(u, float(t)) for t in u.times]
    assert max(energies) > 0.0
    assert max(energies) <= 1.1 * bound


def test_random_forcings_stay_below_the_gronwall_bound(wave, unit_square, zero_data, identity):
    rng = np.random.default_rng(7)
    for _ in range(10):
        a, b = rng.uniform(-1.0, 1.0, 2)
        k, l = rng.integers(1, 4, 2)
        omega, phase = rng.uniform(0.0, 2.0 * math.pi, 2)

        def source(points, t, a=a, b=b, k=k, l=l, omega=omega, phase=phase):
            x, y = points[..., 0], points[..., 1]
            return a + b * np.sin(k * math.pi * x + phase) * np.cos(l * math.pi * y) * np.cos(omega * t)

        u = wave.solve_ibvp(unit_square, identity, zero_data, 1.0, GridSpec(1.0 / 16.0), source=source)
        bound = wave.forced_energy_bound(u, source)
        assert max(wave.energy(u, float(t)) for t in u.times) <= 1.1 * bound


def test_zero_data_gives_zero_solution(wave, unit_square, zero_data, identity):
    u = wave.solve_ibvp(unit_square, identity, zero_data, 0.25, GridSpec(1.0 / 16.0))
    assert not np.any(u.values)
    assert wave.energy(u, u.T) == 0.0
    assert wave.energy_drift(u) == 0.0


def test_horizon_shorter_than_one_step(wave, unit_square, zero_data, identity):
    with pytest.raises(TimeTooShort):
        wave.time_step(identity, GridSpec(0.0625), 1e-4)
    u = wave.solve_ibvp(unit_square, identity, zero_data, 0.25, GridSpec(1.0 / 16.0))
    with pytest.raises(ValidationError):
        u.time_index(0.01)
    with pytest.raises(ValidationError):
        SeparableTerm(mode, np.cos).time_factor(0.5, order=1)


def l2_error(u, exact):
    free = u.grid.free
    difference = u.values[-1] - exact(u.grid.points(), u.T)
    return math.sqrt(u.grid.h ** 2 * np.sum(difference[free] ** 2))


def fitted_order(steps, errors):
    slope, _ = np.polyfit(np.log(steps), np.log(errors), 1)
    return slope


@pytest.mark.parametrize("matrix, speed", [([[1.0, 0.0], [0.0, 1.0]], 1.0), ([[4.0, 0.0], [0.0, 1.0]], 2.0)])
def test_traveling_front_converges_at_second_order(wave, unit_square, front, matrix, speed):
    A = AnisotropyField.constant(matrix, RHO0)
    exact = front(speed)
    data = BoundaryData(unit_square, func=exact, label="front")
    steps = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0]
    errors = [l2_error(wave.solve_ibvp(unit_square, A, data, 0.5, GridSpec(h)), exact) for h in steps]
    ratios = [coarse / fine for coarse, fine in zip(errors, errors[1:])]
    assert all(3.2 <= ratio <= 4.8 for ratio in ratios)
    assert fitted_order(steps, errors) >= 1.8


def test_flux_of_the_traveling_front_converges(wave, geometry, identity, front):
    sigma = SigmaPortion("left", 0, -1, (0.25,), (0.75,))
    domain = geometry.box_domain((0.0, 0.0), (1.0, 1.0), rho0=RHO0, sigma=sigma)
    exact = front(1.0)
    data = BoundaryData(domain, func=exact, label="front")
    steps = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0]
    errors = []
    for h in steps:
        trace = wave.boundary_flux(wave.solve_ibvp(domain, identity, data, 0.5, GridSpec(h)))
        expected = 6.0 * trace.times[:, None] ** 5
        in_space = np.sum((trace.values - expected) ** 2 * trace.weights, axis=1)
        errors.append(math.sqrt(trapezoid(in_space, trace.times)))
    assert fitted_order(steps, errors) >= 1.8


def test_flux_of_a_static_linear_solution(wave, geometry, identity):
    sigma = SigmaPortion("top", 1, 1, (0.25,), (0.75,))
    domain = geometry.box_domain((0.0, 0.0), (1.0, 1.0), rho0=RHO0, sigma=sigma)

    def linear(points, t=0.0):
        return np.asarray(points, dtype=float)[..., 1].copy()

    data = BoundaryData(domain, func=linear, label="linear")
    u = wave.solve_ibvp(domain, identity, data, 0.25, GridSpec(1.0 / 16.0), initial=(linear, None))
    trace = wave.boundary_flux(u)
    assert trace.values.shape == (len(u.times), 9)
    assert np.allclose(trace.values, 1.0, atol=1e-10)
    assert trace.measure == pytest.approx(0.5)


def test_flux_mismatch_of_identical_traces(wave, geometry, identity):
    sigma = SigmaPortion("top", 1, 1, (0.25,), (0.75,))
    domain = geometry.box_domain((0.0, 0.0), (1.0, 1.0), rho0=RHO0, sigma=sigma)
    data = BoundaryData(domain, func=lambda p, t: np.asarray(p)[..., 1] * t ** 3, label="ramp")
    u = wave.solve_ibvp(domain, identity, data, 0.25, GridSpec(1.0 / 16.0))
    trace = wave.boundary_flux(u)
    assert wave.flux_mismatch_epsilon(trace, trace, rho0=RHO0) == 0.0

    coarse = wave.solve_ibvp(domain, identity, data, 0.25, GridSpec(1.0 / 8.0))
    with pytest.raises(GridMismatch):
        wave.flux_mismatch_epsilon(trace, wave.boundary_flux(coarse), rho0=RHO0)


def test_anisotropy_checks(wave, unit_square):
    points = np.stack(np.meshgrid(np.linspace(0, 1, 9), np.linspace(0, 1, 9), indexing="ij"), axis=-1)
    good = AnisotropyField.constant([[1.2, 0.1], [0.1, 0.9]], RHO0)
    wave.check_anisotropy(good, points, 0.125)
    squeezed = AnisotropyField.constant([[4.0, 0.0], [0.0, 1.0]], RHO0, lam=0.5)
    with pytest.raises(ValidationError):
        wave.check_anisotropy(squeezed, points, 0.125)


def test_data_must_vanish_on_the_inaccessible_part(wave, charted_square, top_data):
    wave.check_boundary_data(top_data, 1.0)
    everywhere = wave.make_separable_data(charted_square, lambda p: np.ones(np.shape(p)[:-1]),
                                          Polynomial([0.0, 1.0]), 1.0)
    with pytest.raises(ValidationError):
        wave.check_boundary_data(everywhere, 1.0)


def test_compatibility_at_time_zero(wave, charted_square, top_data):
    assert wave.compatibility_report(top_data)["compatible"]
    ramp = wave.make_separable_data(charted_square, top_data.terms[0].spatial, Polynomial([0.0, 0.0, 1.0]), 1.0)
    report = wave.compatibility_report(ramp)
    assert not report["compatible"]
    assert report["orders"][2] > 0.0


def test_data_norm_grows_with_time(wave, top_data):
    early = wave.H_of_t(top_data, 0.5)
    late = wave.H_of_t(top_data, 1.0)
    assert 0.0 < early < late
    norm = wave.boundary_data_norm(top_data, 1.0)
    assert norm.H == pytest.approx(late)
    assert norm.F_ratio >= 1.0


def test_flat_data_has_no_frequency_ratio(wave, charted_square):
    with pytest.raises(FlatData):
        wave.boundary_data_norm(BoundaryData.zero(charted_square), 1.0)


def test_data_norm_of_a_pure_power_in_time(wave, unit_square):
    data = wave.make_separable_data(unit_square, lambda p: np.ones(np.shape(p)[:-1]),
                                    Polynomial([0.0] * 7 + [1.0]), 1.0, label="t7")
    for t in (0.5, 1.0):
        expected = sum(RHO0 ** j * math.factorial(7) / math.factorial(7 - j) * t ** (7 - j) for j in range(7))
        assert wave.H_of_t(data, t) == pytest.approx(expected, rel=1e-12)
