import math

import pytest

from wavescope.core.entities.fields import GridSpec
from wavescope.core.entities.records import Calibration, StabilityRecord
from wavescope.modules.stability_harness_module import DataNormCurve, StabilityExperiment, StabilityHarnessModule
from wavescope.util.errors import EpsilonTooLarge, FlatData, InsufficientData, TimeTooShort, ValidationError

LADDER_OFFSETS = (1.0, 5.0, 10.0, 20.0, 40.0)


@pytest.fixture
def unit_sigma_harness(geometry, wave):
    return StabilityHarnessModule(geometry, wave, Calibration(sigma1=1.0))


def test_schedule_time_example(harness):
    times = harness.schedule_times(0.5, 1.0, 1.0, 0.5, DataNormCurve.constant(1.0))
    assert times.T_sigma == pytest.approx(50.596, abs=1e-3)
    assert not times.overflow


def test_schedule_time_never_below_twice_t0(harness):
    times = harness.schedule_times(10.0, 40.0, 1.0, 0.5, DataNormCurve.constant(1.0))
    assert times.T_sigma == pytest.approx(80.0)


def test_tiny_sigma_is_carried_in_log_form(harness):
    times = harness.schedule_times(0.01, 1.0, 1.0, 0.5, DataNormCurve.constant(1.0))
    assert times.overflow and math.isinf(times.T_sigma)
    assert math.isfinite(times.log_T_sigma) and times.log_T_sigma > 700.0


def test_frequency_ratio_constant(harness):
    assert harness.F_script(1.0, 1.0, 1.0, lambda t: 1.0, 2.0) == pytest.approx(4.0)


def test_modulus_needs_a_late_enough_time(harness):
    with pytest.raises(TimeTooShort):
        harness.theoretical_modulus(2.5, 1.0, 1.0, lambda t: 1.0, lam=1.0)
    modulus = harness.theoretical_modulus(3.0, 1.0, 1.0, lambda t: 1.0, lam=1.0)
    assert modulus.t0_bar == pytest.approx(2.0)
    assert modulus.F_script == pytest.approx((2.0 * 8.0) ** 2)
    assert math.isfinite(modulus.K0)
    assert modulus.K0 == pytest.approx(math.exp(256.0))


def test_modulus_of_data_silent_up_to_t1(harness):
    with pytest.raises(FlatData):
        harness.theoretical_modulus(3.0, 1.0, 1.0, lambda t: max(t - 1.0, 0.0), lam=1.0)
    with pytest.raises(FlatData):
        harness.F_script(2.0, 1.0, 1.0, lambda t: 0.0, 2.0)


def test_sigma_bar_uses_the_calibrated_sigma1(unit_sigma_harness, harness):
    assert unit_sigma_harness.sigma_bar(2, 1.0) == pytest.approx(1.0)
    assert harness.sigma_bar(2, 1.0) == pytest.approx(1.0 / (4.0 * math.sqrt(2.0)))


def test_sigma_of_epsilon_is_monotone(unit_sigma_harness):
    H = DataNormCurve.constant(1.0)
    limit = unit_sigma_harness.log_abs_log_epsilon_bar(1.0, 1.0, 1.0, 0.5, H)
    assert limit == pytest.approx(8.0 * (5.5 * math.log(math.sqrt(10.0 * 2.0)) + 2.0 * math.log(2.0)))
    schedules = [unit_sigma_harness.sigma_of_epsilon(math.exp(limit + offset), 1.0, 1.0, 1.0, 0.5, H)
                 for offset in LADDER_OFFSETS]
    sigmas = [s.sigma for s in schedules]
    times = [s.T_epsilon for s in schedules]
    omegas = [s.omega for s in schedules]
    assert all(0.0 < sigma <= 1.0 for sigma in sigmas)
    assert all(a > b for a, b in zip(sigmas, sigmas[1:]))
    assert all(a < b for a, b in zip(times, times[1:]))
    assert all(a > b for a, b in zip(omegas, omegas[1:]))


def test_sigma_of_epsilon_meets_the_threshold(unit_sigma_harness):
    H = DataNormCurve.constant(1.0)
    limit = unit_sigma_harness.log_abs_log_epsilon_bar(1.0, 1.0, 1.0, 0.5, H)
    abs_log_epsilon = math.exp(limit + 10.0)
    schedule = unit_sigma_harness.sigma_of_epsilon(abs_log_epsilon, 1.0, 1.0, 1.0, 0.5, H)
    target = math.log(abs_log_epsilon) / 8.0
    at_sigma = unit_sigma_harness.schedule_times(schedule.sigma, 1.0, 1.0, 0.5, H).log_Phi
    below = unit_sigma_harness.schedule_times(schedule.sigma * 0.999, 1.0, 1.0, 0.5, H).log_Phi
    assert at_sigma <= target + 1e-9
    assert below > target


def test_epsilon_above_the_threshold_is_rejected(unit_sigma_harness):
    H = DataNormCurve.constant(1.0)
    limit = unit_sigma_harness.log_abs_log_epsilon_bar(1.0, 1.0, 1.0, 0.5, H)
    with pytest.raises(EpsilonTooLarge):
        unit_sigma_harness.sigma_of_epsilon(math.exp(limit - 1.0), 1.0, 1.0, 1.0, 0.5, H)
    with pytest.raises(EpsilonTooLarge):
        unit_sigma_harness.sigma_of_epsilon(0.0, 1.0, 1.0, 1.0, 0.5, H)


def test_select_mu(harness):
    assert harness.select_mu(50.0, 1.0).mu == pytest.approx(10.0)
    assert not harness.select_mu(50.0, 1.0).capped
    with pytest.raises(EpsilonTooLarge):
        harness.select_mu(4.0, 1.0)
    capped = harness.select_mu(1.0e9, 1.0)
    assert capped.capped and capped.mu == pytest.approx(harness.calibration.mu_cap)


def test_fit_recovers_a_log_modulus(harness):
    rho0 = 0.5
    records = []
    for k in range(2, 9):
        epsilon = 10.0 ** -k
        d = 2.0 * rho0 * abs(math.log(epsilon)) ** -0.5
        records.append(StabilityRecord(f"rung_{k}", 0.0, epsilon, d, d, rho0=rho0))
    fit = harness.fit_log_modulus(records)
    assert fit.a == pytest.approx(2.0, rel=1e-9)
    assert fit.b == pytest.approx(0.5, rel=1e-9)
    assert fit.records == 7
    assert fit.residual_log < 1e-10
    assert fit.residual_power > fit.residual_log


def test_fit_needs_usable_records(harness):
    records = [StabilityRecord("zero", 0.0, 0.0, 0.0, 0.0)]
    records += [StabilityRecord(f"r{k}", 0.01 * k, 10.0 ** -k, 0.01 * k, 0.01 * k) for k in range(1, 5)]
    with pytest.raises(InsufficientData):
        harness.fit_log_modulus(records)


def test_polynomial_envelope_bounds_the_data_norm(wave, top_data):
    curve = DataNormCurve.from_boundary_data(wave, top_data, 1.0)
    assert curve.powers.size > 0
    assert curve(0.5) == pytest.approx(wave.H_of_t(top_data, 0.5))
    assert curve(2.0) >= wave.H_of_t(top_data, 2.0) * (1.0 - 1e-9)
    assert math.isfinite(curve.log_H(math.log(1.0e30)))


def test_stability_ladder_on_a_charted_square(harness, charted_square, top_data, identity, tmp_path):
    spec = StabilityExperiment(
        base=charted_square, anisotropy=identity, boundary_data=top_data, T=2.5,
        grid=GridSpec(1.0 / 16.0), chart_id="bottom", amplitudes=[0.0, 0.01, 0.02],
        bump_center=0.0, distance_resolution=1.0 / 512.0, threads=2, label="ladder")
    records = harness.run_stability_experiment(spec)
    assert [r.perturbation_id for r in records] == ["ladder_00", "ladder_01", "ladder_02"]
    assert records[0].epsilon == 0.0 and records[0].d_hausdorff == 0.0
    assert records[0].mu_capped
    assert all(r.epsilon > 0.0 for r in records[1:])
    assert 0.0 < records[1].d_hausdorff < records[2].d_hausdorff
    assert all(r.rho0 == charted_square.rho0 and r.T_used == 2.5 for r in records)

    path = harness.write_records(str(tmp_path / "ladder.csv"), records, spec)
    lines = open(path, encoding="utf-8").read().splitlines()
    header = [line for line in lines if line.startswith("#")]
    assert any("desk-scale" in line for line in header)
    columns = next(line for line in lines if not line.startswith("#"))
    assert columns.split(",") == list(StabilityRecord.CSV_COLUMNS)


def test_perturbing_an_accessible_chart_is_rejected(harness, geometry, identity, top_data):
    chart = geometry.make_chart("open", 1, -1, [0.5], 0.25, 1.0 / 128.0, accessible=True)
    domain = geometry.build_graph_domain([chart], 0.25, 1.0, box=((0.0, 0.0), (1.0, 1.0)))
    spec = StabilityExperiment(domain, identity, top_data, 1.0, GridSpec(1.0 / 16.0), "open", [0.0])
    with pytest.raises(ValidationError):
        harness.run_stability_experiment(spec)


def test_zero_epsilon_records_stay_out_of_the_fit(harness):
    records = [StabilityRecord(f"r{k}", 0.0, 0.0, 0.01, 0.01) for k in range(6)]
    with pytest.raises(InsufficientData):
        harness.fit_log_modulus(records)
