# wavescope/modules/fbi_transform_module.py

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline

from ..core.entities.fields import AnisotropyField, FbiField, WaveField
from ..util.constants import FBI_NODE_CAP, FBI_NODES_PER_PANEL, FBI_WINDOW_EXPONENT, KAPPA_Y
from ..util.errors import GridTooCoarse, QuadratureUnderResolved, ValidationError
from .wave_forward_module import apply_operator, operator_coefficients

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GrowthReport:
    """Largest constants c observed in |D^j U| <= c mu^(1/4) e^(mu y^2 / 2) ||D^j u||_{L^2(0,T)}."""
    mu: float
    c_by_order: tuple
    samples: int

    @property
    def c_max(self) -> float:
        return max(self.c_by_order)


class FbiTransformModule:
    """
    FBI transform in time of wave histories and scalar signals, with the
    checks of its concentration, growth and elliptic structure.
    """
    def __init__(self, nodes_per_panel: int = FBI_NODES_PER_PANEL, node_cap: int = FBI_NODE_CAP,
                 window_exponent: float = FBI_WINDOW_EXPONENT, kappa_y: float = KAPPA_Y):
        self.nodes_per_panel = nodes_per_panel
        self.node_cap = node_cap
        self.window_exponent = window_exponent
        self.kappa_y = kappa_y
        self._reference_nodes, self._reference_weights = leggauss(nodes_per_panel)
        logger.info("FbiTransformModule initialized (%d nodes per panel).", nodes_per_panel)

    def default_y_grid(self, T: float, count: int = 5) -> np.ndarray:
        R = self.kappa_y * T
        return np.linspace(-R, R, count)

    # ------------------------------------------------------------------
    # Quadrature
    # ------------------------------------------------------------------

    def _check_parameters(self, mu: float, tau: float, T: float) -> None:
        if mu * T * T < 1.0:
            raise ValidationError(f"mu T^2 = {mu * T * T:g} < 1", mu=mu, T=T)
        if not 0.0 < tau <= T / 2.0 + 1e-12:
            raise ValidationError(f"tau = {tau:g} outside (0, T/2]", tau=tau, T=T)

    def quadrature(self, mu: float, tau: float, T: float, y_max: float) -> tuple[np.ndarray, np.ndarray]:
        """
        Composite Gauss-Legendre rule on the window where the kernel is not
        negligible, split at tau. Panel count scales with sqrt(mu) (Gaussian
        width) and mu |y| (oscillation).

        Raises:
            QuadratureUnderResolved: The node estimate exceeds the cap.
        """
        half_width = math.sqrt(2.0 * self.window_exponent / mu)
        a, b = max(0.0, tau - half_width), min(T, tau + half_width)
        density = math.sqrt(mu) + mu * abs(y_max) / math.pi
        nodes, weights = [], []
        total = 0
        for left, right in ((a, tau), (tau, b)):
            if right <= left:
                continue
            panels = max(1, int(math.ceil((right - left) * density)))
            total += panels * self.nodes_per_panel
            if total > self.node_cap:
                raise QuadratureUnderResolved(f"{total} quadrature nodes needed (cap {self.node_cap})",
                                              mu=mu, y_max=y_max)
            edges = np.linspace(left, right, panels + 1)
            half = 0.5 * np.diff(edges)
            middle = 0.5 * (edges[1:] + edges[:-1])
            nodes.append((middle[:, None] + half[:, None] * self._reference_nodes).ravel())
            weights.append((half[:, None] * self._reference_weights).ravel())
        return np.concatenate(nodes), np.concatenate(weights)

    @staticmethod
    def kernel(mu: float, tau: float, y: np.ndarray, t: np.ndarray) -> np.ndarray:
        """sqrt(mu / 2 pi) e^{-mu (iy + tau - t)^2 / 2}, shape (len(y), len(t))."""
        z = 1j * np.asarray(y, dtype=float)[:, None] + tau - np.asarray(t, dtype=float)[None, :]
        return math.sqrt(mu / (2.0 * math.pi)) * np.exp(-0.5 * mu * z * z)

    @staticmethod
    def kernel_d2y(mu: float, tau: float, y: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Second y-derivative of the kernel: (mu - mu^2 z^2) K."""
        z = 1j * np.asarray(y, dtype=float)[:, None] + tau - np.asarray(t, dtype=float)[None, :]
        return math.sqrt(mu / (2.0 * math.pi)) * (mu - mu * mu * z * z) * np.exp(-0.5 * mu * z * z)

    # ------------------------------------------------------------------
    # Transforms
    # ------------------------------------------------------------------

    def fbi_transform_signal(self, signal: Callable[[np.ndarray], np.ndarray], T: float, mu: float,
                             tau: float, y) -> np.ndarray:
        """U(y) for a scalar signal u(t) on [0, T]."""
        self._check_parameters(mu, tau, T)
        y = np.atleast_1d(np.asarray(y, dtype=float))
        t, w = self.quadrature(mu, tau, T, float(np.max(np.abs(y))))
        samples = np.asarray(signal(t), dtype=float)
        return (self.kernel(mu, tau, y, t) * w) @ samples

    def history_spline(self, u: WaveField) -> tuple[CubicSpline, np.ndarray]:
        """Cubic spline in t of the history on the support nodes of the grid."""
        mask = u.grid.support
        return CubicSpline(u.times, u.values[:, mask], axis=0), mask

    def fbi_transform(self, u: WaveField, mu: float, tau: float, y_grid=None,
                      with_d2y: bool = True) -> FbiField:
        """
        U(x, y) on every support node of the grid of u.

        Args:
            u (WaveField): History on [0, T].
            mu (float): Frequency parameter, mu T^2 >= 1.
            tau (float): Center time in (0, T/2].
            y_grid: y samples (default: uniform on [-kappa T, kappa T]).
            with_d2y (bool): Also transform against the second y-derivative of the kernel.
        """
        T = u.T
        self._check_parameters(mu, tau, T)
        y = self.default_y_grid(T) if y_grid is None else np.atleast_1d(np.asarray(y_grid, dtype=float))
        t, w = self.quadrature(mu, tau, T, float(np.max(np.abs(y))))
        spline, mask = self.history_spline(u)
        samples = spline(t)  # (nq, n_support)
        shape = (len(y),) + u.grid.shape

        values = np.zeros(shape, dtype=complex)
        values[:, mask] = (self.kernel(mu, tau, y, t) * w) @ samples
        d2y = None
        if with_d2y:
            d2y = np.zeros(shape, dtype=complex)
            d2y[:, mask] = (self.kernel_d2y(mu, tau, y, t) * w) @ samples
        logger.debug("FBI transform: mu=%g tau=%g, %d nodes, %d y-samples.", mu, tau, len(t), len(y))
        return FbiField(values, y, mu, tau, T, u.grid, d2y, len(t))

    def final_slices(self, u: WaveField) -> tuple[np.ndarray, np.ndarray]:
        """(u(., T), u_t(., T)) from the same spline the transform integrates."""
        spline, mask = self.history_spline(u)
        u_T = np.zeros(u.grid.shape)
        du_T = np.zeros(u.grid.shape)
        u_T[mask] = spline(u.T)
        du_T[mask] = spline(u.T, 1)
        return u_T, du_T

    def fbi_source(self, u_T: np.ndarray, du_T: np.ndarray, mu: float, tau: float, y, T: float) -> np.ndarray:
        """
        f(x, y) = sqrt(mu / 2 pi) e^{-mu z_T^2 / 2} (u_t(x, T) - mu z_T u(x, T)),
        z_T = iy + tau - T; shape (len(y), *u_T.shape).
        """
        y = np.atleast_1d(np.asarray(y, dtype=float))
        z = 1j * y + tau - T
        factor = math.sqrt(mu / (2.0 * math.pi)) * np.exp(-0.5 * mu * z * z)
        expand = (slice(None),) + (None,) * np.ndim(u_T)
        return factor[expand] * (np.asarray(du_T)[None, ...] - mu * z[expand] * np.asarray(u_T)[None, ...])

    def fbi_source_bound(self, f: np.ndarray, T: float, rho0: float, H_T: float, mu: float, R: float) -> float:
        """Fitted C in |f| <= C T rho0^-3 H(T) e^{mu (R^2/2 - T^2/10)}."""
        scale = T * rho0 ** -3 * H_T * math.exp(mu * (R * R / 2.0 - T * T / 10.0))
        if scale == 0.0:
            return 0.0 if not np.any(f) else math.inf
        return float(np.max(np.abs(f)) / scale)

    # ------------------------------------------------------------------
    # Checks
    # ------------------------------------------------------------------

    def interior_mask(self, U: FbiField) -> np.ndarray:
        """Free nodes whose 3x3 stencil lies in the support of the grid."""
        grid = U.grid
        support = grid.support
        mask = np.zeros(grid.shape, dtype=bool)
        inner = grid.free[1:-1, 1:-1].copy()
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                inner &= support[1 + di:grid.shape[0] - 1 + di, 1 + dj:grid.shape[1] - 1 + dj]
        mask[1:-1, 1:-1] = inner
        return mask

    def elliptic_residual(self, U: FbiField, A: AnisotropyField, f: np.ndarray,
                          d2y: str = "kernel") -> float:
        """
        Discrete L^2 norm of d^2_y U + div(A grad_x U) - f over the interior
        subgrid (and the y samples).

        Args:
            d2y (str): "kernel" uses the transformed kernel derivative,
                       "differences" uses second differences in y.

        Raises:
            GridTooCoarse: No interior node, or too few y samples for differences.
        """
        if U.grid is None:
            raise GridTooCoarse("FBI field carries no spatial grid")
        mask = self.interior_mask(U)
        if np.count_nonzero(mask) == 0:
            raise GridTooCoarse("interior subgrid is empty")
        h = U.grid.h
        coefficients = operator_coefficients(A, U.grid.points())

        if d2y == "kernel" and U.d2y_values is not None:
            second = U.d2y_values
            rows = np.arange(len(U.y))
        else:
            if len(U.y) < 3:
                raise GridTooCoarse("second differences in y need three samples", y_samples=len(U.y))
            dy = np.diff(U.y)
            if not np.allclose(dy, dy[0]):
                raise GridTooCoarse("second differences need a uniform y grid")
            second = np.zeros_like(U.values)
            second[1:-1] = (U.values[2:] - 2.0 * U.values[1:-1] + U.values[:-2]) / dy[0] ** 2
            rows = np.arange(1, len(U.y) - 1)

        per_y = []
        for k in rows:
            residual = second[k] + apply_operator(U.values[k], coefficients, h) - f[k]
            per_y.append(h ** 2 * np.sum(np.abs(residual[mask]) ** 2))
        per_y = np.asarray(per_y)
        y = U.y[rows]
        total = trapezoid(per_y, y) if len(y) > 1 else per_y[0]
        return math.sqrt(max(float(total), 0.0))

    @staticmethod
    def _derivative_magnitudes(array: np.ndarray, h: float, axes: tuple) -> tuple:
        """|D^0|, |D^1|, |D^2| over the given spatial axes (Frobenius norms)."""
        gradients = np.gradient(array, h, axis=axes)
        gradients = list(gradients) if isinstance(gradients, (list, tuple)) else [gradients]
        first = np.sqrt(sum(np.abs(g) ** 2 for g in gradients))
        second = 0.0
        for g in gradients:
            seconds = np.gradient(g, h, axis=axes)
            seconds = list(seconds) if isinstance(seconds, (list, tuple)) else [seconds]
            second = second + sum(np.abs(s) ** 2 for s in seconds)
        return np.abs(array), first, np.sqrt(second)

    def fbi_growth_check(self, U: FbiField, u: WaveField) -> GrowthReport:
        """
        Largest c with |D^j_x U(x,y)| <= c mu^(1/4) e^(mu y^2/2) (int_0^T |D^j_x u|^2 dt)^(1/2),
        j = 0, 1, 2, over interior nodes and the y samples.
        """
        if U.grid is not u.grid and U.grid.shape != u.grid.shape:
            raise GridTooCoarse("FBI field and wave field do not share the x-grid")
        h = u.grid.h
        mask = self.interior_mask(U)
        history = self._derivative_magnitudes(u.values, h, (1, 2))
        l2_in_time = [np.sqrt(trapezoid(m ** 2, u.times, axis=0)) for m in history]
        transformed = self._derivative_magnitudes(U.values, h, (1, 2))

        constants = []
        for order in range(3):
            envelope = U.mu ** 0.25 * np.exp(0.5 * U.mu * U.y ** 2)[:, None, None] * l2_in_time[order][None, ...]
            scale = np.max(envelope[:, mask]) if np.any(mask) else 0.0
            usable = mask[None, ...] & (envelope > 1e-12 * scale)
            if not np.any(usable):
                constants.append(0.0)
                continue
            constants.append(float(np.max(transformed[order][usable] / envelope[usable])))
        return GrowthReport(U.mu, tuple(constants), int(np.count_nonzero(mask)) * len(U.y))

    def concentration_error(self, signal: Callable, T: float, mu: float, tau: float) -> float:
        """|U(0) - u(tau)| for a scalar signal."""
        value = self.fbi_transform_signal(signal, T, mu, tau, [0.0])[0]
        return float(abs(value - float(np.asarray(signal(np.array([tau])))[0])))

    def concentration_slope(self, signal: Callable, T: float, tau: float, mus) -> float:
        """Log-log slope of the concentration error against mu (least squares)."""
        mus = np.asarray(mus, dtype=float)
        errors = np.array([self.concentration_error(signal, T, mu, tau) for mu in mus])
        slope, _ = np.polyfit(np.log(mus), np.log(errors), 1)
        return float(slope)
