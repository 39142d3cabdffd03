# wavescope/modules/smallness_propagation_module.py

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import brentq

from ..core.entities.domain import BallChain
from ..core.entities.fields import AnisotropyField, WaveField
from ..core.entities.records import (Calibration, ConeSchedule, PropagationState, ThreeSphereConstants,
                                     ThreeSphereParams, VerificationRecord)
from ..util.constants import SOLUTION_RESIDUAL_TOLERANCE
from ..util.errors import (ContractionViolated, DegenerateRadii, DeltaOutOfRange, NotASolution,
                           ThetaNonpositive, ValidationError)
from ..util.helpers import ball_volume

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class BallField:
    """
    A field u on the ball B_{r3}(center) together with its source f of
    div(A grad u) = f. u and f map points (..., dim) to values (...).
    """
    center: np.ndarray
    dim: int
    u: Callable[[np.ndarray], np.ndarray]
    f: Optional[Callable[[np.ndarray], np.ndarray]] = None
    A: Optional[AnisotropyField] = None
    field_id: str = "field"


class HarmonicPolynomial:
    """
    Sum of c_k Re((x_a + i x_b)^d) and s_k Im((x_a + i x_b)^d) over coordinate
    pairs (a, b). Every term is harmonic, so the sum is.
    """
    def __init__(self, terms: list, dim: int = 2, constant: float = 0.0):
        self.terms = terms  # (a, b, degree, cos_coefficient, sin_coefficient)
        self.dim = dim
        self.constant = constant

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        out = np.full(points.shape[:-1], self.constant)
        for a, b, degree, c, s in self.terms:
            z = (points[..., a] + 1j * points[..., b]) ** degree
            out = out + c * z.real + s * z.imag
        return out

    @property
    def degree(self) -> int:
        return max((t[2] for t in self.terms), default=0)


class SmallnessPropagationModule:
    """
    Three-sphere inequality constants and their empirical verification,
    iterated propagation along ball chains, decay schedules along cone
    chains, and the strong unique continuation bounds.
    """
    def __init__(self, calibration: Optional[Calibration] = None,
                 residual_tolerance: float = SOLUTION_RESIDUAL_TOLERANCE,
                 radial_nodes: int = 24, angular_nodes: int = 64):
        self.calibration = calibration or Calibration()
        self.residual_tolerance = residual_tolerance
        self.radial_nodes = radial_nodes
        self.angular_nodes = angular_nodes
        logger.info("SmallnessPropagationModule initialized (beta=%g, C=%g).",
                    self.calibration.beta, self.calibration.C_carleman)

    # ------------------------------------------------------------------
    # Three-sphere inequality
    # ------------------------------------------------------------------

    def three_sphere_exponent(self, p: ThreeSphereParams, C_carleman: Optional[float] = None) -> ThreeSphereConstants:
        """
        theta0 = (r2^-b - ((1-d) r3)^-b) / (((1-2d) r1)^-b - ((1-d) r3)^-b)
        C0 = exp(C ((r2/r3)^-b - (1-d)^-b)) / d^4

        Raises:
            DeltaOutOfRange: delta outside (0, (r3 - r2) / (2 r3)].
            DegenerateRadii: radii out of order or a vanishing denominator.
        """
        C = self.calibration.C_carleman if C_carleman is None else C_carleman
        if not 0.0 < p.r1 <= p.r2 < p.r3:
            raise DegenerateRadii(f"need 0 < r1 <= r2 < r3, got ({p.r1}, {p.r2}, {p.r3})")
        delta_max = (p.r3 - p.r2) / (2.0 * p.r3)
        if not 0.0 < p.delta <= delta_max * (1.0 + 1e-12):
            raise DeltaOutOfRange(f"delta = {p.delta:g} outside (0, {delta_max:g}]", delta=p.delta)
        outer = ((1.0 - p.delta) * p.r3) ** -p.beta
        numerator = p.r2 ** -p.beta - outer
        denominator = ((1.0 - 2.0 * p.delta) * p.r1) ** -p.beta - outer
        if denominator <= 0.0:
            raise DegenerateRadii("theta0 denominator is not positive", r1=p.r1, delta=p.delta)
        theta0 = numerator / denominator
        log_C0 = C * ((p.r2 / p.r3) ** -p.beta - (1.0 - p.delta) ** -p.beta) - 4.0 * math.log(p.delta)
        C0 = math.exp(log_C0) if log_C0 < 709.0 else math.inf
        return ThreeSphereConstants(theta0, C0, p)

    def _ball_quadrature(self, center: np.ndarray, radius: float, dim: int) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights integrating polynomials over B_radius(center)."""
        t, w = leggauss(self.radial_nodes)
        rho = 0.5 * radius * (t + 1.0)
        w_rho = 0.5 * radius * w * rho ** (dim - 1)
        phi = 2.0 * math.pi * np.arange(self.angular_nodes) / self.angular_nodes
        w_phi = np.full(self.angular_nodes, 2.0 * math.pi / self.angular_nodes)
        if dim == 2:
            directions = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
            w_dir = w_phi
        elif dim == 3:
            cos_theta, w_cos = leggauss(self.radial_nodes)
            sin_theta = np.sqrt(1.0 - cos_theta ** 2)
            directions = np.stack([
                (sin_theta[:, None] * np.cos(phi)[None, :]).ravel(),
                (sin_theta[:, None] * np.sin(phi)[None, :]).ravel(),
                np.repeat(cos_theta, self.angular_nodes),
            ], axis=-1)
            w_dir = (w_cos[:, None] * w_phi[None, :]).ravel()
        else:
            raise ValidationError("ball quadrature is available in dimensions 2 and 3", dim=dim)
        points = center + rho[:, None, None] * directions[None, :, :]
        weights = w_rho[:, None] * w_dir[None, :]
        return points.reshape(-1, dim), weights.ravel()

    def integrate_square(self, func: Callable, center, radius: float, dim: int) -> float:
        points, weights = self._ball_quadrature(np.asarray(center, dtype=float), radius, dim)
        return float(np.sum(weights * np.asarray(func(points), dtype=float) ** 2))

    def elliptic_residual(self, field_: BallField, radius: float, step: Optional[float] = None) -> tuple[float, float]:
        """
        Relative L^2 residual of div(A grad u) - f over B_radius by central
        differences of the callable field. Returns (residual, scale).
        """
        dim = field_.dim
        step = 1e-4 * radius if step is None else step
        points, weights = self._ball_quadrature(np.asarray(field_.center, dtype=float), radius, dim)
        eye = np.eye(dim) * step
        A = field_.A or AnisotropyField.identity(dim)

        def flux(x: np.ndarray, i: int) -> np.ndarray:
            a = A.sample(x)
            total = np.zeros(x.shape[0])
            for j in range(dim):
                total += a[:, i, j] * (field_.u(x + eye[j]) - field_.u(x - eye[j])) / (2.0 * step)
            return total

        divergence = sum((flux(points + eye[i], i) - flux(points - eye[i], i)) / (2.0 * step) for i in range(dim))
        source = np.zeros(points.shape[0]) if field_.f is None else np.asarray(field_.f(points), dtype=float)
        residual = math.sqrt(float(np.sum(weights * (divergence - source) ** 2)))
        u_norm = math.sqrt(float(np.sum(weights * field_.u(points) ** 2)))
        scale = max(u_norm / radius ** 2, math.sqrt(float(np.sum(weights * source ** 2))))
        return residual, scale

    def verify_three_sphere(self, field_: BallField, p: ThreeSphereParams, cap: Optional[float] = None) -> VerificationRecord:
        """
        Evaluates both sides of the three-sphere inequality on one field.

        Returns:
            VerificationRecord: lhs, the two bracketed factors, theta0 and the
            smallest C0 for which the inequality holds; passed if it is <= cap
            (the calibrated C0 by default).

        Raises:
            NotASolution: div(A grad u) = f fails above the residual tolerance.
        """
        constants = self.three_sphere_exponent(p)
        residual, scale = self.elliptic_residual(field_, p.r3)
        relative = residual / scale if scale > 0.0 else residual
        if relative > self.residual_tolerance:
            raise NotASolution(f"elliptic residual {relative:.3e} above {self.residual_tolerance:g}",
                               field_id=field_.field_id)

        center, dim = field_.center, field_.dim
        source_term = 0.0
        if field_.f is not None:
            source_term = p.r3 ** 2 * self.integrate_square(field_.f, center, p.r3, dim)
        lhs = self.integrate_square(field_.u, center, p.r2, dim)
        small = self.integrate_square(field_.u, center, p.r1, dim) + source_term
        large = self.integrate_square(field_.u, center, p.r3, dim) + source_term
        theta0 = constants.theta0

        if lhs == 0.0:
            implied = 0.0
        elif small == 0.0:
            implied = math.inf
        else:
            implied = lhs / (small ** theta0 * large ** (1.0 - theta0))
        cap = constants.C0 if cap is None else cap
        record = VerificationRecord(field_.field_id, p, lhs, small, large, theta0, implied, cap,
                                    bool(implied <= cap), relative, self.calibration.to_dict())
        logger.debug("Three-sphere check %s: implied C0 = %.4g (cap %.4g).", field_.field_id, implied, cap)
        return record

    def harmonic_corpus(self, count: int, max_degree: int = 6, dim: int = 2, seed: int = 0,
                        center=None) -> list[BallField]:
        """Random harmonic polynomials of degree <= max_degree, deterministic in the seed."""
        rng = np.random.default_rng(seed)
        center = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
        pairs = [(a, b) for a in range(dim) for b in range(a + 1, dim)]
        corpus = []
        for index in range(count):
            terms = []
            for degree in range(1, max_degree + 1):
                for a, b in pairs:
                    c, s = rng.normal(size=2)
                    terms.append((a, b, degree, float(c), float(s)))
            polynomial = HarmonicPolynomial(terms, dim, float(rng.normal()))

            def shifted(points, polynomial=polynomial):
                return polynomial(np.asarray(points, dtype=float) - center)
            corpus.append(BallField(center, dim, shifted, None, None, f"harmonic_{index:03d}"))
        return corpus

    # ------------------------------------------------------------------
    # Propagation along chains
    # ------------------------------------------------------------------

    @staticmethod
    def propagate_smallness(chain: Optional[BallChain], alpha0: float, theta_star: float, C_step: float,
                            steps: Optional[int] = None) -> PropagationState:
        """
        Iterates alpha_{k+1} = C alpha_k^theta, one step per chain transition.

        The exact value after N steps is C^((1 - theta^N)/(1 - theta)) alpha0^(theta^N);
        the bound C^(1/(1 - theta)) alpha0^(theta^N) dominates it for C >= 1.
        """
        if alpha0 < 0.0:
            raise ValidationError("alpha0 must be nonnegative", alpha0=alpha0)
        if not 0.0 < theta_star < 1.0:
            raise ValidationError("theta must lie in (0, 1)", theta=theta_star)
        if C_step < 1.0:
            raise ValidationError("step constant must be >= 1", C_step=C_step)
        if steps is None:
            steps = max(len(chain) - 1, 0) if chain is not None else 0

        if alpha0 == 0.0:
            return PropagationState(np.zeros(steps + 1), theta_star, C_step, steps, 0.0, 0.0)

        log_C = math.log(C_step)
        logs = np.empty(steps + 1)
        logs[0] = math.log(alpha0)
        for k in range(steps):
            logs[k + 1] = log_C + theta_star * logs[k]
        power = theta_star ** steps
        closed_form = math.exp((1.0 - power) / (1.0 - theta_star) * log_C + power * logs[0])
        bound = math.exp(log_C / (1.0 - theta_star) + power * logs[0])
        return PropagationState(np.exp(logs), theta_star, C_step, steps, closed_form, bound)

    @staticmethod
    def vartheta2(theta1: float, theta_star: float, c_n: float, M: float) -> float:
        """min{theta1, theta_star^(c_n M)}."""
        return min(theta1, theta_star ** (c_n * M))

    # ------------------------------------------------------------------
    # Cone chains
    # ------------------------------------------------------------------

    def cone_theta_tilde(self, chain: BallChain, beta: Optional[float] = None) -> float:
        """Three-sphere exponent on the first balls (r_1, rho_1, R_1) of a cone chain."""
        beta = self.calibration.beta if beta is None else beta
        p = ThreeSphereParams(float(chain.small_radii[0]), float(chain.mid_radii[0]),
                              float(chain.large_radii[0]), chain.cone.delta, beta)
        return self.three_sphere_exponent(p).theta0

    @staticmethod
    def theta_tilde_for(varsigma: float, beta: float, q: float = 0.5, a: float = 0.25, b: float = 1.0 / 3.0) -> float:
        """theta~0 from the sines alone (sin g1 = 1 - v, sin g2 = 1 - a v, sin g = 1 - a b v)."""
        sin1, sin2, sin = 1.0 - varsigma, 1.0 - a * varsigma, 1.0 - a * b * varsigma
        delta = 0.5 * q * (sin - sin2) / sin
        outer = (1.0 - delta) ** -beta
        return ((sin2 / sin) ** -beta - outer) / (((1.0 - 2.0 * delta) * sin1 / sin) ** -beta - outer)

    @staticmethod
    def delta_bar(varsigma_bar: float) -> float:
        return varsigma_bar / (24.0 - 2.0 * varsigma_bar)

    def cone_decay_schedule(self, chain: BallChain, mu: float, T: float, rho0: float,
                            vartheta2: Optional[float] = None, beta: Optional[float] = None) -> ConeSchedule:
        """
        Decay exponents along a cone chain.

        A_k = (chi^-2 - 1) c (1 - c^k) / (1 - c), c = chi^2 / theta~0
        A1_k = (A_k + c) R_1^2 / 2 + rho0^2
        A2_k = A1_k - T^2 delta3 / 10, delta3 = vartheta2^(1 + (s h / 2)^-n)

        T_min is the smallest T with A2_k <= -T^2 delta3 / 20 for every k.

        Raises:
            ContractionViolated: chi^2 / theta~0 >= 1.
        """
        if chain.kind != "cone_chain" or chain.cone is None:
            raise ValidationError("decay schedules need a cone chain", kind=chain.kind)
        vartheta2 = self.calibration.vartheta2 if vartheta2 is None else vartheta2
        cone = chain.cone
        theta_tilde = self.cone_theta_tilde(chain, beta)
        chi = cone.chi
        contraction = chi ** 2 / theta_tilde
        if contraction >= 1.0:
            raise ContractionViolated(f"chi^2 / theta~0 = {contraction:.6g} >= 1",
                                      chi=chi, theta_tilde0=theta_tilde)

        k = np.arange(1, len(chain) + 1)
        A = (chi ** -2 - 1.0) * contraction * (1.0 - contraction ** k) / (1.0 - contraction)
        R1 = float(chain.large_radii[0])
        A1 = 0.5 * (A + contraction) * R1 ** 2 + rho0 ** 2
        A_limit = (chi ** -2 - 1.0) * contraction / (1.0 - contraction)
        A1_limit = 0.5 * (A_limit + contraction) * R1 ** 2 + rho0 ** 2

        log_delta3 = (1.0 + (cone.s * cone.h / 2.0) ** -cone.dim) * math.log(vartheta2)
        delta3 = math.exp(log_delta3) if log_delta3 > -745.0 else 0.0
        A2 = A1 - T ** 2 * delta3 / 10.0
        T_min = math.sqrt(20.0 * A1_limit / delta3) if delta3 > 0.0 else math.inf
        return ConeSchedule(theta_tilde, contraction, A, A1, A2, A1_limit, T_min, T, mu, delta3)

    # ------------------------------------------------------------------
    # Strong unique continuation
    # ------------------------------------------------------------------

    @staticmethod
    def theta_interior(rho: float, r0: float, rho0: float, C: float) -> float:
        return math.log(rho0 / (C * rho)) / math.log(rho0 / r0)

    @classmethod
    def theta_boundary(cls, rho: float, r0: float, rho0: float, C: float) -> float:
        # interior expression; only its constant C also depends on E
        return cls.theta_interior(rho, r0, rho0, C)

    def sucp_bound(self, rho: float, r0: float, rho0: float, eps0: float, H0: float,
                   C_sucp: float, boundary: bool = False) -> float:
        """
        C (rho0/rho)^C (H0 + e eps0) / (theta log((H0 + e eps0) / eps0))^(1/6).

        Raises:
            ValidationError: rho outside [r0, s0 rho0].
            ThetaNonpositive: rho >= rho0 / C.
        """
        s0 = self.calibration.s0
        if not 0.0 < r0 <= rho <= s0 * rho0 * (1.0 + 1e-12):
            raise ValidationError("need 0 < r0 <= rho <= s0 rho0", r0=r0, rho=rho, rho0=rho0, s0=s0)
        theta = (self.theta_boundary if boundary else self.theta_interior)(rho, r0, rho0, C_sucp)
        if theta <= 0.0:
            raise ThetaNonpositive(f"theta = {theta:.4g} for rho = {rho:g}, C = {C_sucp:g}", rho=rho)
        if eps0 <= 0.0:
            return 0.0
        numerator = H0 + math.e * eps0
        return C_sucp * (rho0 / rho) ** C_sucp * numerator / (theta * math.log(numerator / eps0)) ** (1.0 / 6.0)

    def fit_sucp_constant(self, measured: float, rho: float, r0: float, rho0: float, eps0: float,
                          H0: float, boundary: bool = False) -> float:
        """Smallest C >= 1 for which the bound dominates the measured norm (inf if none)."""
        C_max = rho0 / rho
        if C_max <= 1.0:
            return math.inf

        def gap(C):
            return self.sucp_bound(rho, r0, rho0, eps0, H0, C, boundary) - measured
        if gap(1.0) >= 0.0:
            return 1.0
        upper = 1.0 + (C_max - 1.0) * (1.0 - 1e-9)
        if gap(upper) < 0.0:
            return math.inf
        return float(brentq(gap, 1.0, upper, xtol=1e-12))

    def sucp_measurements(self, u: WaveField, center, rho: float, r0: float, rho0: float,
                          t_center: float, lam: float) -> dict:
        """
        Measured quantities of the continuation bound on a solver run: the
        norm of u(., t_center) on B_rho, eps0 (sup over |t - t_center| < lam rho0
        of the scaled norm on B_r0) and H0 (the C^2 norm of u(., t_center) on B_rho0).
        """
        grid = u.grid
        h = grid.h
        points = grid.points()
        distance = np.linalg.norm(points - np.asarray(center, dtype=float), axis=-1)
        inside = grid.closure
        n = u.dim
        cell = h ** n

        index = int(np.argmin(np.abs(u.times - t_center)))
        snapshot = u.values[index]
        measured = math.sqrt(cell * float(np.sum(snapshot[inside & (distance <= rho)] ** 2)))

        window = np.abs(u.times - t_center) < lam * rho0
        small_ball = inside & (distance <= r0)
        per_time = [rho0 ** -n * cell * float(np.sum(u.values[k][small_ball] ** 2)) for k in np.flatnonzero(window)]
        eps0 = math.sqrt(max(per_time)) if per_time else 0.0

        big_ball = inside & (distance <= rho0)
        gradients = np.gradient(snapshot, h)
        first = sum(g ** 2 for g in gradients)
        second = sum(s ** 2 for g in gradients for s in np.gradient(g, h))
        H0 = math.sqrt(sum(rho0 ** (j - n) * cell * float(np.sum(term[big_ball]))
                           for j, term in enumerate((snapshot ** 2, first, second))))
        return {"measured": measured, "eps0": eps0, "H0": H0}

    def cauchy_exponent(self, inner: np.ndarray, outer: np.ndarray, data: np.ndarray) -> float:
        """
        Empirical exponent theta1 of a Cauchy estimate inner <= outer^(1-theta) data^theta,
        fitted by least squares in log space over paired samples (all positive).
        """
        inner, outer, data = (np.asarray(v, dtype=float) for v in (inner, outer, data))
        usable = (inner > 0) & (outer > 0) & (data > 0) & (data != outer)
        if np.count_nonzero(usable) < 2:
            raise ValidationError("need two usable samples to fit the exponent")
        x = np.log(data[usable]) - np.log(outer[usable])
        y = np.log(inner[usable]) - np.log(outer[usable])
        theta = float(np.dot(x, y) / np.dot(x, x))
        return min(max(theta, 0.0), 1.0)

    @staticmethod
    def ball_volume_ratio(p: ThreeSphereParams, theta0: float, dim: int) -> float:
        """Implied C0 for u = 1: |B_r2| / (|B_r1|^theta0 |B_r3|^(1 - theta0))."""
        return ball_volume(p.r2, dim) / (ball_volume(p.r1, dim) ** theta0 * ball_volume(p.r3, dim) ** (1.0 - theta0))
