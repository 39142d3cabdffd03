import dataclasses
import math

import numpy as np
import pytest

from wavescope.core.entities.fields import GridSpec
from wavescope.modules.fbi_transform_module import FbiTransformModule
from wavescope.util.errors import GridTooCoarse, QuadratureUnderResolved, ValidationError


def mode(points):
    return np.sin(math.pi * points[..., 0]) * np.sin(math.pi * points[..., 1])


@pytest.fixture(scope="module")
def standing_wave():
    from wavescope.core.entities.fields import AnisotropyField, BoundaryData
    from wavescope.modules.domain_geometry_module import DomainGeometryModule
    from wavescope.modules.wave_forward_module import WaveForwardModule

    domain = DomainGeometryModule().build_graph_domain([], 0.25, 1.0, box=((0.0, 0.0), (1.0, 1.0)))
    A = AnisotropyField.identity(2, 0.25)
    u = WaveForwardModule().solve_ibvp(domain, A, BoundaryData.zero(domain), 2.0, GridSpec(1.0 / 32.0),
                                       initial=(mode, None))
    return u, A


def test_window_integrates_to_one(fbi):
    value = fbi.fbi_transform_signal(lambda t: np.ones_like(t), 2.0, 100.0, 1.0, [0.0])[0]
    assert value == pytest.approx(1.0, abs=1e-12)


def test_transform_of_an_exponential_signal(fbi):
    # int K(t) e^{a t} dt = e^{a (tau + i y) + a^2 / (2 mu)} over the real line
    mu, tau, a = 400.0, 1.0, 0.7
    y = np.array([-0.1, 0.0, 0.1])
    values = fbi.fbi_transform_signal(lambda t: np.exp(a * t), 2.0, mu, tau, y)
    expected = np.exp(a * (tau + 1j * y) + a * a / (2.0 * mu))
    assert np.allclose(values, expected, rtol=1e-10)


def test_kinked_signal_concentrates_at_rate_one_half(fbi):
    tau = 1.0

    def kink(t):
        return np.abs(np.asarray(t) - tau)

    assert fbi.concentration_error(kink, 2.0, 100.0, tau) == pytest.approx(math.sqrt(2.0 / (math.pi * 100.0)),
                                                                            rel=1e-9)
    slope = fbi.concentration_slope(kink, 2.0, tau, [100.0, 400.0, 1600.0, 6400.0])
    assert -0.6 <= slope <= -0.4


def test_smooth_signal_concentrates_faster(fbi):
    tau = 1.0
    slope = fbi.concentration_slope(lambda t: (np.asarray(t) - tau) ** 2 + 1.0, 2.0, tau, [100.0, 400.0, 1600.0])
    assert slope == pytest.approx(-1.0, abs=0.05)


def test_parameter_ranges(fbi):
    with pytest.raises(ValidationError):
        fbi.fbi_transform_signal(np.cos, 0.5, 2.0, 0.25, [0.0])
    with pytest.raises(ValidationError):
        fbi.fbi_transform_signal(np.cos, 2.0, 100.0, 1.5, [0.0])


def test_node_cap_is_enforced():
    small = FbiTransformModule(node_cap=200)
    with pytest.raises(QuadratureUnderResolved):
        small.quadrature(1.0e4, 1.0, 2.0, 0.5)


def test_kernel_second_derivative_matches_differences(fbi):
    mu, tau, step = 50.0, 0.8, 1e-4
    t = np.linspace(0.0, 1.6, 7)
    y = np.array([0.05])
    differences = (fbi.kernel(mu, tau, y + step, t) - 2.0 * fbi.kernel(mu, tau, y, t)
                   + fbi.kernel(mu, tau, y - step, t)) / step ** 2
    assert np.allclose(fbi.kernel_d2y(mu, tau, y, t), differences, rtol=1e-5, atol=1e-6)


def test_transform_shape_and_support(fbi, standing_wave):
    u, _ = standing_wave
    y = np.linspace(-0.2, 0.2, 5)
    U = fbi.fbi_transform(u, 100.0, 1.0, y)
    assert U.values.shape == (5,) + u.grid.shape
    assert np.iscomplexobj(U.values)
    assert not np.any(U.values[:, ~u.grid.support])
    assert U.quadrature_nodes > 0


def test_elliptic_identity_on_a_standing_wave(fbi, standing_wave):
    u, A = standing_wave
    mu, tau = 100.0, 1.0
    y = np.linspace(-0.2, 0.2, 5)
    U = fbi.fbi_transform(u, mu, tau, y)
    u_T, du_T = fbi.final_slices(u)
    f = fbi.fbi_source(u_T, du_T, mu, tau, y, u.T)
    residual = fbi.elliptic_residual(U, A, f)
    # doubling d2y leaves a residual of the size of the d2y term itself
    scale = fbi.elliptic_residual(dataclasses.replace(U, d2y_values=2.0 * U.d2y_values), A, f)
    assert scale > 0.0
    assert residual < 0.05 * scale
    differences = fbi.elliptic_residual(U, A, f, d2y="differences")
    assert differences < 0.2 * scale


def test_residual_needs_three_y_samples(fbi, standing_wave):
    u, A = standing_wave
    U = fbi.fbi_transform(u, 100.0, 1.0, [0.0, 0.1], with_d2y=False)
    f = np.zeros_like(U.values)
    with pytest.raises(GridTooCoarse):
        fbi.elliptic_residual(U, A, f, d2y="differences")


def test_growth_constants_are_finite(fbi, standing_wave):
    u, _ = standing_wave
    U = fbi.fbi_transform(u, 100.0, 1.0, np.linspace(-0.2, 0.2, 3))
    report = fbi.fbi_growth_check(U, u)
    assert len(report.c_by_order) == 3
    assert all(math.isfinite(c) and c >= 0.0 for c in report.c_by_order)
    assert report.c_max > 0.0


def test_source_bound_of_a_vanishing_source(fbi):
    assert fbi.fbi_source_bound(np.zeros((3, 4, 4)), 2.0, 0.25, 1.0, 100.0, 0.6) == 0.0


def test_source_bound_of_a_nonzero_source(fbi, standing_wave):
    u, _ = standing_wave
    mu, tau, R = 100.0, 1.0, 0.2
    y = np.linspace(-R, R, 3)
    u_T, du_T = fbi.final_slices(u)
    f = fbi.fbi_source(u_T, du_T, mu, tau, y, u.T)
    scale = u.T * 0.25 ** -3 * 1.5 * math.exp(mu * (R * R / 2.0 - u.T ** 2 / 10.0))
    C = fbi.fbi_source_bound(f, u.T, 0.25, 1.5, mu, R)
    assert np.max(np.abs(f)) > 0.0
    assert C == pytest.approx(np.max(np.abs(f)) / scale, rel=1e-12)
    assert fbi.fbi_source_bound(f, u.T, 0.25, 3.0, mu, R) == pytest.approx(C / 2.0, rel=1e-12)


def test_transform_is_linear(fbi, standing_wave):
    u, _ = standing_wave
    mu, tau = 100.0, 1.0
    y = np.linspace(-0.2, 0.2, 3)
    squared = dataclasses.replace(u, values=u.values ** 2)
    mixed = dataclasses.replace(u, values=2.0 * u.values - 3.0 * u.values ** 2)
    U, V, W = (fbi.fbi_transform(field_, mu, tau, y) for field_ in (u, squared, mixed))
    assert np.allclose(W.values, 2.0 * U.values - 3.0 * V.values, rtol=1e-12, atol=1e-12)
    assert np.allclose(W.d2y_values, 2.0 * U.d2y_values - 3.0 * V.d2y_values, rtol=1e-12, atol=1e-9)

    signals = fbi.fbi_transform_signal(lambda t: 2.0 * np.cos(t) - 3.0 * t ** 2, 2.0, mu, tau, y)
    expected = (2.0 * fbi.fbi_transform_signal(np.cos, 2.0, mu, tau, y)
                - 3.0 * fbi.fbi_transform_signal(lambda t: t ** 2, 2.0, mu, tau, y))
    assert np.allclose(signals, expected, rtol=1e-12, atol=1e-12)


def test_growth_constant_stays_bounded_across_decades_of_mu(fbi, standing_wave):
    u, _ = standing_wave
    constants = [fbi.fbi_growth_check(fbi.fbi_transform(u, mu, 1.0, [0.0]), u).c_max
                 for mu in (1.0e2, 1.0e3, 1.0e4)]
    assert all(0.0 < c <= 2.0 for c in constants)
    assert all(max(a, b) / min(a, b) < 2.0 for a, b in zip(constants, constants[1:]))


@pytest.fixture
def front_run(wave, unit_square, identity, front_data):
    steps = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0]
    return steps, [wave.solve_ibvp(unit_square, identity, front_data, 1.0, GridSpec(h)) for h in steps], identity


def transform_and_source(fbi, u, mu, tau, y):
    U = fbi.fbi_transform(u, mu, tau, y)
    u_T, du_T = fbi.final_slices(u)
    return U, fbi.fbi_source(u_T, du_T, mu, tau, y, u.T)


def test_elliptic_residual_falls_at_second_order(fbi, front_run):
    steps, runs, A = front_run
    mu, tau = 16.0, 0.5
    y = np.array([-0.1, 0.0, 0.1])
    residuals = []
    for u in runs:
        U, f = transform_and_source(fbi, u, mu, tau, y)
        residuals.append(fbi.elliptic_residual(U, A, f))
    slope, _ = np.polyfit(np.log(steps), np.log(residuals), 1)
    assert slope >= 1.8

    # the source term at T dominates the discretization residual
    without_source = fbi.elliptic_residual(U, A, np.zeros_like(f))
    assert without_source >= 10.0 * residuals[-1]
