# wavescope/core/entities/records.py

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from ...util import constants


@dataclass(frozen=True)
class Calibration:
    """Calibration constants every report is tagged with."""
    beta: float = constants.BETA_1
    C_carleman: float = constants.C_CARLEMAN
    C_F: float = constants.C_F
    C_K: float = constants.C_K
    vartheta2: float = constants.VARTHETA_2
    sigma1: Optional[float] = None
    c_cfl: float = constants.C_CFL
    theta_min: float = constants.THETA_MIN
    mu_cap: float = constants.MU_CAP
    C_modulus: float = 1.0
    s0: float = constants.SUCP_S0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ThreeSphereParams:
    r1: float
    r2: float
    r3: float
    delta: float
    beta: float


@dataclass(frozen=True)
class ThreeSphereConstants:
    theta0: float
    C0: float
    params: ThreeSphereParams


@dataclass(frozen=True)
class VerificationRecord:
    """Outcome of checking the three-sphere inequality on one solution."""
    field_id: str
    params: ThreeSphereParams
    lhs: float
    rhs_small: float
    rhs_large: float
    theta0: float
    implied_C0: float
    cap: float
    passed: bool
    residual: float
    calibration: dict = field(default_factory=dict)

    def to_row(self) -> dict:
        return {
            "field_id": self.field_id,
            "r1": self.params.r1, "r2": self.params.r2, "r3": self.params.r3,
            "delta": self.params.delta, "beta": self.params.beta,
            "lhs": self.lhs, "rhs_small": self.rhs_small, "rhs_large": self.rhs_large,
            "theta0": self.theta0, "implied_C0": self.implied_C0, "cap": self.cap,
            "passed": self.passed, "residual": self.residual,
        }


@dataclass(frozen=True)
class PropagationState:
    """Iterates alpha_k of the recursion alpha_{k+1} = C alpha_k^theta."""
    alpha: np.ndarray
    theta_star: float
    C_step: float
    steps: int
    closed_form: float
    bound: float

    @property
    def final(self) -> float:
        return float(self.alpha[-1])


@dataclass(frozen=True)
class ConeSchedule:
    """Decay exponents along a cone chain."""
    theta_tilde0: float
    contraction: float
    A: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    A1_limit: float
    T_min: float
    T: float
    mu: float
    delta3: float


@dataclass(frozen=True)
class ScheduleTimes:
    sigma: float
    T_sigma: float
    log_T_sigma: float
    Phi: float
    log_Phi: float
    overflow: bool


@dataclass(frozen=True)
class SigmaSchedule:
    epsilon_log_abs: float
    sigma: float
    T_epsilon: float
    log_T_epsilon: float
    omega: float


@dataclass(frozen=True)
class MuSchedule:
    mu: float
    capped: bool


@dataclass(frozen=True)
class TheoreticalModulus:
    """
    omega_bar(eta) = C rho0 (eta / (t0_bar rho0^-1 H(t0_bar)))^(1 / K0).
    """
    t0: float
    t0_bar: float
    t_star: float
    F_script: float
    K0: float
    log_K0: float
    H_t0_bar: float
    rho0: float
    C: float = 1.0

    def predicted_bound(self, eta):
        eta = np.asarray(eta, dtype=float)
        scale = self.t0_bar / self.rho0 * self.H_t0_bar
        exponent = 0.0 if not np.isfinite(self.K0) else 1.0 / self.K0
        with np.errstate(divide="ignore"):
            return self.C * self.rho0 * np.power(eta / scale, exponent)


@dataclass(frozen=True)
class LogModulusFit:
    """Least-squares fits of d_H against epsilon."""
    a: float
    b: float
    residual_log: float
    a_power: float
    b_power: float
    residual_power: float
    records: int
    rho0: float

    @property
    def residual_ratio(self) -> float:
        if self.residual_power == 0.0:
            return np.inf if self.residual_log > 0.0 else 1.0
        return self.residual_log / self.residual_power


@dataclass(frozen=True)
class StabilityRecord:
    """One rung of the perturbation ladder."""
    perturbation_id: str
    amplitude: float
    epsilon: float
    d_hausdorff: float
    d_modified: float
    rho0: float = 1.0
    T_used: float = 0.0
    mu_used: Optional[float] = None
    mu_capped: bool = False
    sigma_eps: Optional[float] = None
    T_eps: Optional[float] = None
    omega: Optional[float] = None
    omega1: Optional[float] = None
    K0: Optional[float] = None
    H_T: Optional[float] = None

    CSV_COLUMNS = ("perturbation_id", "amplitude", "epsilon", "d_hausdorff", "d_modified",
                   "rho0", "T_used", "mu_used", "mu_capped", "sigma_eps", "T_eps", "omega",
                   "omega1", "K0", "H_T")

    def to_row(self) -> dict:
        return {name: getattr(self, name) for name in self.CSV_COLUMNS}
