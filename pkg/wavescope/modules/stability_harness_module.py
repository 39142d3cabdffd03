# wavescope/modules/stability_harness_module.py

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.special import logsumexp

from ..core.entities.domain import Domain
from ..core.entities.fields import AnisotropyField, BoundaryData, GridSpec, SeparableTerm
from ..core.entities.records import (Calibration, LogModulusFit, MuSchedule, ScheduleTimes, SigmaSchedule,
                                     StabilityRecord, TheoreticalModulus)
from ..util.artifacts import append_csv_footer, format_value, write_csv
from ..util.constants import FIT_MIN_RECORDS
from ..util.errors import (EpsilonTooLarge, FlatData, InsufficientData, TimeTooShort, ValidationError,
                           WavescopeError)
from .domain_geometry_module import DomainGeometryModule
from .wave_forward_module import WaveForwardModule

logger = logging.getLogger(__name__)

LOG_FLOAT_MAX = math.log(np.finfo(float).max)


def _exp_or_inf(value: float) -> float:
    return math.exp(value) if value < LOG_FLOAT_MAX else math.inf


class DataNormCurve:
    """
    H(t) usable at any t, including times far beyond anything a solver can
    reach. Up to t_sampled the numerical norm is used; beyond it the curve is
    the larger of H(t_sampled) and a polynomial envelope sum_k a_k t^p_k,
    evaluated in log space.
    """
    def __init__(self, sampled: Callable[[float], float], t_sampled: float,
                 log_coefficients=(), powers=()):
        self.sampled = sampled
        self.t_sampled = float(t_sampled)
        self.log_coefficients = np.asarray(log_coefficients, dtype=float)
        self.powers = np.asarray(powers, dtype=float)
        self._H_sampled = float(sampled(self.t_sampled))

    @classmethod
    def constant(cls, value: float) -> "DataNormCurve":
        return cls(lambda t: value, 1.0)

    @classmethod
    def from_boundary_data(cls, wave: WaveForwardModule, bdata: BoundaryData, t_sampled: float,
                           resolution: Optional[float] = None) -> "DataNormCurve":
        """
        Polynomial time factors give the envelope
        sum_j rho0^j sum_terms ||S||_{C^{1,1}} sum_k |c^(j)_k| t^k, which bounds H(t) for every t.
        Other data keep the value at t_sampled beyond it.
        """
        def sampled(t):
            return wave.H_of_t(bdata, t, resolution)

        if bdata.is_zero or bdata.func is not None or not all(term.is_polynomial for term in bdata.terms):
            return cls(sampled, t_sampled)

        rho0 = bdata.domain.rho0
        log_coefficients, powers = [], []
        for term in bdata.terms:
            unit = BoundaryData(bdata.domain, (SeparableTerm(term.spatial, Polynomial([1.0])),), t1=bdata.t1)
            spatial_norm = wave.H_of_t(unit, 0.0, resolution)
            if spatial_norm == 0.0:
                continue
            for j in range(bdata.derivative_order + 1):
                derivative = term.temporal.deriv(j) if j else term.temporal
                for k, c in enumerate(derivative.convert().coef):
                    if c != 0.0:
                        log_coefficients.append(j * math.log(rho0) + math.log(spatial_norm) + math.log(abs(c)))
                        powers.append(k)
        return cls(sampled, t_sampled, log_coefficients, powers)

    def log_H(self, log_t: float) -> float:
        """log H(e^log_t); -inf for vanishing data."""
        if log_t <= math.log(self.t_sampled):
            value = float(self.sampled(math.exp(log_t)))
            return math.log(value) if value > 0.0 else -math.inf
        floor = math.log(self._H_sampled) if self._H_sampled > 0.0 else -math.inf
        if self.powers.size == 0:
            return floor
        return max(floor, float(logsumexp(self.log_coefficients + self.powers * log_t)))

    def __call__(self, t: float) -> float:
        if t <= 0.0:
            return float(self.sampled(0.0))
        return _exp_or_inf(self.log_H(math.log(t)))


@dataclass
class StabilityExperiment:
    """
    One perturbation ladder: the base domain, its data, and the bump
    amplitudes applied to the inaccessible chart `chart_id`.
    """
    base: Domain
    anisotropy: AnisotropyField
    boundary_data: BoundaryData
    T: float
    grid: GridSpec
    chart_id: str
    amplitudes: Sequence[float]
    bump_center: Optional[float] = None
    bump_width: Optional[float] = None
    distance_resolution: Optional[float] = None
    t0: Optional[float] = None
    threads: int = 1
    seed: int = 0
    schedules: bool = True
    label: str = "stability"
    extras: dict = field(default_factory=dict)


class StabilityHarnessModule:
    """
    End-to-end stability experiments and the schedule functions that
    accompany them.
    """
    def __init__(self, geometry: DomainGeometryModule, wave: WaveForwardModule,
                 calibration: Optional[Calibration] = None):
        self.geometry = geometry
        self.wave = wave
        self.calibration = calibration or Calibration()
        logger.info("StabilityHarnessModule initialized.")

    # ------------------------------------------------------------------
    # Schedules
    # ------------------------------------------------------------------

    def sigma1(self, E: float) -> float:
        if self.calibration.sigma1 is not None:
            return self.calibration.sigma1
        return 1.0 / (4.0 * E * math.sqrt(1.0 + E * E))

    def sigma_bar(self, dim: int, E: float, vartheta2: Optional[float] = None) -> float:
        """min{sigma1, (2 n |log vartheta2|)^(1/(n+1))}."""
        vartheta2 = self.calibration.vartheta2 if vartheta2 is None else vartheta2
        if vartheta2 >= 1.0:
            return self.sigma1(E)
        return min(self.sigma1(E), (2.0 * dim * abs(math.log(vartheta2))) ** (1.0 / (dim + 1)))

    def schedule_times(self, sigma: float, t0: float, rho0: float, vartheta2: float, H: DataNormCurve,
                       dim: int = 2) -> ScheduleTimes:
        """
        T_sigma = max{2 t0, sqrt(10) rho0 vartheta2^(-sigma^-(n+1) / 2)}
        Phi(sigma) = sigma^(-(n+1)/4) (T_sigma / rho0)^(11/2) (H(T_sigma) + 1)^2

        Both are carried in log form; overflow is flagged, not raised.
        """
        if sigma <= 0.0:
            raise ValidationError("sigma must be positive", sigma=sigma)
        if not 0.0 < vartheta2 <= 1.0:
            raise ValidationError("vartheta2 must lie in (0, 1]", vartheta2=vartheta2)
        log_T = math.log(math.sqrt(10.0) * rho0) + 0.5 * sigma ** -(dim + 1) * abs(math.log(vartheta2))
        log_T = max(math.log(2.0 * t0), log_T)
        log_H = H.log_H(log_T)
        log_H_plus_one = float(np.logaddexp(log_H, 0.0))
        log_Phi = -(dim + 1) / 4.0 * math.log(sigma) + 5.5 * (log_T - math.log(rho0)) + 2.0 * log_H_plus_one
        overflow = log_T >= LOG_FLOAT_MAX or log_Phi >= LOG_FLOAT_MAX
        return ScheduleTimes(sigma, _exp_or_inf(log_T), log_T, _exp_or_inf(log_Phi), log_Phi, overflow)

    def log_abs_log_epsilon_bar(self, sigma_bar: float, t0: float, rho0: float, vartheta2: float,
                                H: DataNormCurve, dim: int = 2) -> float:
        """log |log eps_bar| with eps_bar = min{e^-5, e^(-Phi(sigma_bar)^8)}."""
        times = self.schedule_times(sigma_bar, t0, rho0, vartheta2, H, dim)
        return max(math.log(5.0), 8.0 * times.log_Phi)

    def sigma_of_epsilon(self, abs_log_epsilon: float, sigma_bar: float, t0: float, rho0: float,
                         vartheta2: float, H: DataNormCurve, dim: int = 2, iterations: int = 200) -> SigmaSchedule:
        """
        sigma(eps) = inf{sigma in (0, sigma_bar] : Phi(sigma) <= |log eps|^(1/8)}, by bisection
        in log sigma on the decreasing Phi, with T(eps) and omega(eps, t0).

        Takes |log eps| rather than eps: the thresholds lie far below the
        smallest positive double.

        Raises:
            EpsilonTooLarge: eps > eps_bar.
        """
        if abs_log_epsilon <= 0.0:
            raise EpsilonTooLarge("epsilon must be below 1", abs_log_epsilon=abs_log_epsilon)
        target = math.log(abs_log_epsilon) / 8.0
        limit = self.log_abs_log_epsilon_bar(sigma_bar, t0, rho0, vartheta2, H, dim)
        if math.log(abs_log_epsilon) < limit * (1.0 - 1e-12):
            raise EpsilonTooLarge(f"|log eps| = {abs_log_epsilon:.6g} below |log eps_bar| = e^{limit:.6g}",
                                  abs_log_epsilon=abs_log_epsilon)

        def log_Phi(log_sigma):
            return self.schedule_times(math.exp(log_sigma), t0, rho0, vartheta2, H, dim).log_Phi

        hi = math.log(sigma_bar)
        if log_Phi(hi) > target:
            # Phi(sigma_bar) above the threshold only through rounding at eps = eps_bar
            sigma = sigma_bar
        else:
            lo = hi - 1.0
            while log_Phi(lo) <= target:
                lo -= 1.0
            for _ in range(iterations):
                mid = 0.5 * (lo + hi)
                if log_Phi(mid) <= target:
                    hi = mid
                else:
                    lo = mid
                if hi - lo < 1e-14:
                    break
            sigma = math.exp(hi)
        times = self.schedule_times(sigma, t0, rho0, vartheta2, H, dim)
        return SigmaSchedule(abs_log_epsilon, sigma, times.T_sigma, times.log_T_sigma,
                             self.omega(abs_log_epsilon, sigma, t0, rho0, H))

    @staticmethod
    def omega(abs_log_epsilon: float, sigma: float, t0: float, rho0: float, H: Callable[[float], float]) -> float:
        """omega(eps, t0) = (t0 / rho0)^6 H(t0)^2 sigma(eps)^(1/4) + |log eps|^(-1/8)."""
        return (t0 / rho0) ** 6 * H(t0) ** 2 * sigma ** 0.25 + abs_log_epsilon ** -0.125

    @staticmethod
    def omega1(omega: float, modulus: TheoreticalModulus) -> float:
        """omega1 = C (omega / (t0_bar rho0^-1 H(t0_bar)))^(1/K0)."""
        return float(modulus.predicted_bound(omega)) / modulus.rho0

    @staticmethod
    def F_script(t0_bar: float, t1: float, rho0: float, H: Callable[[float], float], C_F: float) -> float:
        """
        (C_F (t0_bar / rho0)^3 H(t0_bar) / H(t1))^2.

        Raises:
            FlatData: H(t1) = 0, so the data carry no scale on [0, t1].
        """
        H_t1 = H(t1)
        if H_t1 <= 0.0:
            raise FlatData("H(t1) vanishes; the frequency ratio is undefined", t1=t1)
        return (C_F * (t0_bar / rho0) ** 3 * H(t0_bar) / H_t1) ** 2

    def theoretical_modulus(self, t0: float, t1: float, rho0: float, H: Callable[[float], float],
                            lam: float, C_F: Optional[float] = None, C_K: Optional[float] = None) -> TheoreticalModulus:
        """
        F(t0_bar), K0 = exp(C_K F(t0_bar)) and the bound
        eta -> C rho0 (eta / (t0_bar rho0^-1 H(t0_bar)))^(1/K0), t0_bar = t0 - lambda rho0.

        Raises:
            TimeTooShort: t0 < t_star + lambda rho0, t_star = max{C_F rho0, 2 t1}.
            FlatData: H(t1) = 0.
        """
        C_F = self.calibration.C_F if C_F is None else C_F
        C_K = self.calibration.C_K if C_K is None else C_K
        t_star = max(C_F * rho0, 2.0 * t1)
        if t0 < t_star + lam * rho0 - 1e-12 * max(1.0, t0):
            raise TimeTooShort(f"t0 = {t0:g} below t_star + lambda rho0 = {t_star + lam * rho0:g}",
                               t0=t0, t_star=t_star)
        t0_bar = t0 - lam * rho0
        F_value = self.F_script(t0_bar, t1, rho0, H, C_F)
        log_K0 = C_K * F_value
        return TheoreticalModulus(t0, t0_bar, t_star, F_value, _exp_or_inf(log_K0), log_K0,
                                  H(t0_bar), rho0, self.calibration.C_modulus)

    def default_t0(self, t1: float, rho0: float, lam: float) -> float:
        return max(self.calibration.C_F * rho0, 2.0 * t1) + lam * rho0

    def select_mu(self, abs_log_epsilon: float, T: float) -> MuSchedule:
        """
        mu T^2 = |log eps| / 5, capped.

        Raises:
            EpsilonTooLarge: eps > e^-5, where mu T^2 would fall below one.
        """
        if abs_log_epsilon < 5.0:
            raise EpsilonTooLarge("mu selection needs eps <= e^-5", abs_log_epsilon=abs_log_epsilon)
        mu = abs_log_epsilon / (5.0 * T * T)
        cap = self.calibration.mu_cap
        if mu > cap:
            return MuSchedule(cap, True)
        return MuSchedule(mu, False)

    # ------------------------------------------------------------------
    # Fit
    # ------------------------------------------------------------------

    def fit_log_modulus(self, records: Sequence[StabilityRecord], rho0: Optional[float] = None) -> LogModulusFit:
        """
        Least squares of log d_H = log(a rho0) - b log|log eps| and of the
        competing power law log d_H = log a' + b' log eps.

        Raises:
            InsufficientData: fewer than five records with eps in (0, 1/e) and d_H > 0.
        """
        usable = [r for r in records if 0.0 < r.epsilon < math.exp(-1.0) and r.d_hausdorff > 0.0]
        if len(usable) < FIT_MIN_RECORDS:
            raise InsufficientData(f"{len(usable)} usable records, need {FIT_MIN_RECORDS}",
                                   records=len(records))
        rho0 = usable[0].rho0 if rho0 is None else rho0
        log_eps = np.log([r.epsilon for r in usable])
        log_d = np.log([r.d_hausdorff for r in usable])

        x = np.log(-log_eps)
        design = np.stack([np.ones_like(x), x], axis=1)
        (intercept, slope), *_ = np.linalg.lstsq(design, log_d, rcond=None)
        residual_log = float(np.sqrt(np.mean((design @ np.array([intercept, slope]) - log_d) ** 2)))

        design_power = np.stack([np.ones_like(log_eps), log_eps], axis=1)
        (intercept_p, slope_p), *_ = np.linalg.lstsq(design_power, log_d, rcond=None)
        residual_power = float(np.sqrt(np.mean((design_power @ np.array([intercept_p, slope_p]) - log_d) ** 2)))

        return LogModulusFit(float(math.exp(intercept) / rho0), float(-slope), residual_log,
                             float(math.exp(intercept_p)), float(slope_p), residual_power, len(usable), rho0)

    # ------------------------------------------------------------------
    # Experiment
    # ------------------------------------------------------------------

    def _bump_center(self, spec: StabilityExperiment) -> float:
        if spec.bump_center is not None:
            return spec.bump_center
        chart = spec.base.chart(spec.chart_id)
        rng = np.random.default_rng(spec.seed)
        return float(rng.uniform(-0.25, 0.25) * chart.radius)

    def run_stability_experiment(self, spec: StabilityExperiment) -> list[StabilityRecord]:
        """
        Solves the base problem once, then every rung of the amplitude ladder
        (in parallel), and returns the records in ladder order.
        """
        base = spec.base
        rho0 = base.rho0
        chart = base.chart(spec.chart_id)
        if chart.accessible:
            raise ValidationError("perturbations must act on the inaccessible boundary", chart_id=spec.chart_id)
        self.wave.check_boundary_data(spec.boundary_data, spec.T)
        resolution = spec.distance_resolution or spec.grid.h / 2.0
        center = self._bump_center(spec)
        bbox = spec.grid.bbox or base.bounding_box()
        grid = GridSpec(spec.grid.h, spec.grid.dt, (tuple(bbox[0]), tuple(bbox[1])))

        u1 = self.wave.solve_ibvp(base, spec.anisotropy, spec.boundary_data, spec.T, grid)
        flux1 = self.wave.boundary_flux(u1, base.sigma)
        lam = spec.anisotropy.lam
        diagnostics = self._shared_diagnostics(spec, lam) if spec.schedules else {}

        def run(index_amplitude):
            index, amplitude = index_amplitude
            perturbation_id = f"{spec.label}_{index:02d}"
            try:
                return self._run_rung(spec, perturbation_id, amplitude, center, grid, flux1, resolution,
                                      diagnostics)
            except WavescopeError as error:
                raise error.with_context(perturbation_id=perturbation_id, amplitude=amplitude)

        jobs = list(enumerate(spec.amplitudes))
        if spec.threads > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=spec.threads) as pool:
                records = list(pool.map(run, jobs))
        else:
            records = [run(job) for job in jobs]
        logger.info("Stability ladder '%s': %d rungs done.", spec.label, len(records))
        return records

    def _shared_diagnostics(self, spec: StabilityExperiment, lam: float) -> dict:
        """Quantities independent of the rung: H(T), the modulus and the schedule curve."""
        base = spec.base
        rho0 = base.rho0
        bdata = spec.boundary_data
        out = {"H_T": None, "modulus": None, "curve": None, "t0": None}
        if bdata.is_zero:
            return out
        curve = DataNormCurve.from_boundary_data(self.wave, bdata, max(spec.T, bdata.t1))
        out["curve"] = curve
        out["H_T"] = curve(spec.T)
        t0 = spec.t0 if spec.t0 is not None else self.default_t0(bdata.t1, rho0, lam)
        out["t0"] = t0
        try:
            out["modulus"] = self.theoretical_modulus(t0, bdata.t1, rho0, curve, lam)
        except (TimeTooShort, FlatData) as error:
            logger.warning("No theoretical modulus: %s", error)
        return out

    def _run_rung(self, spec: StabilityExperiment, perturbation_id: str, amplitude: float, center: float,
                  grid: GridSpec, flux1, resolution: float, diagnostics: dict) -> StabilityRecord:
        base = spec.base
        rho0 = base.rho0
        if amplitude == 0.0:
            perturbed = base
        else:
            perturbed = self.geometry.perturb_chart(base, spec.chart_id, amplitude, center, spec.bump_width,
                                                    name=perturbation_id)
            self.geometry.check_chart(perturbed.chart(spec.chart_id), rho0, base.E, require_normalized=False)
        u2 = self.wave.solve_ibvp(perturbed, spec.anisotropy, spec.boundary_data, spec.T, grid)
        flux2 = self.wave.boundary_flux(u2, base.sigma)
        epsilon = self.wave.flux_mismatch_epsilon(flux1, flux2, spec.T, rho0)
        if perturbed is base:
            d_h = d_m = 0.0
        else:
            d_h = self.geometry.hausdorff_distance(base, perturbed, resolution)
            d_m = self.geometry.modified_distance(base, perturbed, resolution)

        values = {}
        if spec.schedules:
            values = self._rung_schedules(spec, epsilon, diagnostics)
        logger.debug("%s: amplitude=%g eps=%.6g d_H=%.6g", perturbation_id, amplitude, epsilon, d_h)
        return StabilityRecord(perturbation_id, float(amplitude), float(epsilon), float(d_h), float(d_m),
                               rho0=rho0, T_used=spec.T, **values)

    def _rung_schedules(self, spec: StabilityExperiment, epsilon: float, diagnostics: dict) -> dict:
        base = spec.base
        rho0 = base.rho0
        abs_log_epsilon = math.inf if epsilon == 0.0 else abs(math.log(epsilon)) if epsilon < 1.0 else 0.0
        values = {"H_T": diagnostics.get("H_T")}
        modulus = diagnostics.get("modulus")
        if modulus is not None:
            values["K0"] = modulus.K0
        try:
            mu = self.select_mu(abs_log_epsilon, spec.T)
            values["mu_used"], values["mu_capped"] = mu.mu, mu.capped
        except EpsilonTooLarge:
            pass

        curve = diagnostics.get("curve")
        if curve is None or not math.isfinite(abs_log_epsilon):
            return values
        sigma_bar = self.sigma_bar(base.dim, base.E)
        try:
            schedule = self.sigma_of_epsilon(abs_log_epsilon, sigma_bar, diagnostics["t0"], rho0,
                                             self.calibration.vartheta2, curve, base.dim)
        except EpsilonTooLarge:
            return values
        values.update(sigma_eps=schedule.sigma, T_eps=schedule.T_epsilon, omega=schedule.omega)
        if modulus is not None:
            values["omega1"] = self.omega1(schedule.omega, modulus)
        return values

    # ------------------------------------------------------------------
    # Output
    # ------------------------------------------------------------------

    def header_lines(self, spec: StabilityExperiment) -> list[str]:
        return [
            f"stability ladder {spec.label}: chart {spec.chart_id}, T = {format_value(spec.T)}, "
            f"h = {format_value(spec.grid.h)}",
            "T is the desk-scale horizon of the runs; the schedule T(eps) is reported per rung and is "
            "not the horizon used",
            "the fit below is exploratory",
            "calibration " + " ".join(f"{k}={format_value(v)}" for k, v in sorted(self.calibration.to_dict().items())),
        ]

    def write_records(self, path: str, records: Sequence[StabilityRecord], spec: StabilityExperiment) -> str:
        return write_csv(path, StabilityRecord.CSV_COLUMNS, [r.to_row() for r in records], self.header_lines(spec))

    @staticmethod
    def append_fit(path: str, fit: LogModulusFit) -> None:
        append_csv_footer(path, [
            f"fit log-modulus a={format_value(fit.a)} b={format_value(fit.b)} residual={format_value(fit.residual_log)}",
            f"fit power-law a={format_value(fit.a_power)} b={format_value(fit.b_power)} "
            f"residual={format_value(fit.residual_power)}",
            f"fit residual ratio={format_value(fit.residual_ratio)} records={fit.records}",
        ])
