# wavescope/modules/wave_forward_module.py

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import chebyshev
from scipy.integrate import trapezoid

from ..core.entities.domain import Domain, SigmaPortion
from ..core.entities.fields import (AnisotropyField, BoundaryData, FluxTrace, GridGeometry,
                                    GridSpec, SeparableTerm, WaveField)
from ..util.constants import BOUNDARY_TOLERANCE, C_CFL, ENERGY_DRIFT_TOLERANCE, SMOOTHNESS_BLOWUP, THETA_MIN
from ..util.errors import (CflViolation, FlatData, GridMismatch, InsufficientSmoothness,
                           NonconformingBoundary, StencilOutOfDomain, TimeTooShort, ValidationError)

logger = logging.getLogger(__name__)

AXIS_DIRECTIONS = ((1, 0), (-1, 0), (0, 1), (0, -1))
ALL_DIRECTIONS = AXIS_DIRECTIONS + ((1, 1), (-1, -1), (1, -1), (-1, 1))


def operator_coefficients(A: AnisotropyField, points: np.ndarray) -> tuple:
    """(a11, a12, a22) sampled on a 2-D node array of points (nx, ny, 2)."""
    matrices = A.sample(points)
    a12 = 0.5 * (matrices[..., 0, 1] + matrices[..., 1, 0])
    return np.ascontiguousarray(matrices[..., 0, 0]), np.ascontiguousarray(a12), \
        np.ascontiguousarray(matrices[..., 1, 1])


def apply_operator(u: np.ndarray, coefficients: tuple, h: float) -> np.ndarray:
    """
    Discrete div(A grad u) on a 2-D node array: flux form with face averages
    for the diagonal entries, centered differences for the cross terms.
    Edge rows and columns of the result are left at zero. Works for complex u.
    """
    a11, a12, a22 = coefficients
    out = np.zeros_like(u)
    h2 = h * h

    flux_x = 0.5 * (a11[1:, :] + a11[:-1, :]) * (u[1:, :] - u[:-1, :])
    out[1:-1, :] += (flux_x[1:, :] - flux_x[:-1, :]) / h2
    flux_y = 0.5 * (a22[:, 1:] + a22[:, :-1]) * (u[:, 1:] - u[:, :-1])
    out[:, 1:-1] += (flux_y[:, 1:] - flux_y[:, :-1]) / h2

    if np.any(a12):
        q_y = a12[:, 1:-1] * (u[:, 2:] - u[:, :-2]) / (2.0 * h)
        out[1:-1, 1:-1] += (q_y[2:, :] - q_y[:-2, :]) / (2.0 * h)
        q_x = a12[1:-1, :] * (u[2:, :] - u[:-2, :]) / (2.0 * h)
        out[1:-1, 1:-1] += (q_x[:, 2:] - q_x[:, :-2]) / (2.0 * h)
    out[0, :] = 0.0
    out[-1, :] = 0.0
    out[:, 0] = 0.0
    out[:, -1] = 0.0
    return out


@dataclass(frozen=True)
class BoundaryPlan:
    """Index arrays (flat node indices) of the boundary treatment of a grid."""
    dirichlet_idx: np.ndarray
    dirichlet_points: np.ndarray
    imposed_idx: np.ndarray
    imposed_opposite: np.ndarray
    imposed_theta: np.ndarray
    imposed_points: np.ndarray
    ghost_idx: np.ndarray
    ghost_source: np.ndarray
    ghost_theta: np.ndarray
    ghost_points: np.ndarray

    def apply(self, flat: np.ndarray, psi: Callable[[np.ndarray], np.ndarray]) -> None:
        """Writes boundary, interpolated and ghost values for one time level in place."""
        if self.dirichlet_idx.size:
            flat[self.dirichlet_idx] = psi(self.dirichlet_points)
        if self.imposed_idx.size:
            boundary = psi(self.imposed_points)
            has_opposite = self.imposed_opposite >= 0
            for _ in range(2):
                opposite = np.where(has_opposite, flat[np.maximum(self.imposed_opposite, 0)], 0.0)
                theta = np.where(has_opposite, self.imposed_theta, 0.0)
                flat[self.imposed_idx] = (boundary + theta * opposite) / (1.0 + theta)
        if self.ghost_idx.size:
            source = flat[self.ghost_source]
            flat[self.ghost_idx] = source + (psi(self.ghost_points) - source) / self.ghost_theta


class WaveForwardModule:
    """
    Solves the anisotropic wave IBVP on an embedded-boundary Cartesian grid
    and provides the fluxes, energies and data norms built on its solutions.
    """
    def __init__(self, c_cfl: float = C_CFL, theta_min: float = THETA_MIN, pad: int = 2):
        """
        Initializes the WaveForwardModule.

        Args:
            c_cfl (float): CFL constant, dt <= c_cfl h sqrt(lambda).
            theta_min (float): Cut-cell fraction below which a node is imposed
                               by interpolation.
            pad (int): Layers of grid nodes added around the domain.
        """
        self.c_cfl = c_cfl
        self.theta_min = theta_min
        self.pad = pad
        logger.info("WaveForwardModule initialized (c_cfl=%g, theta_min=%g).", c_cfl, theta_min)

    # ------------------------------------------------------------------
    # Coefficients
    # ------------------------------------------------------------------

    def check_anisotropy(self, A: AnisotropyField, points: np.ndarray, h: Optional[float] = None,
                         seed: int = 0) -> None:
        """
        Checks symmetry, ellipticity (basis plus 100 random directions) and,
        on adjacent samples of a node array, the Lipschitz bound.

        Raises:
            ValidationError: An invariant fails at some sample.
        """
        if not 0.0 < A.lam <= 1.0:
            raise ValidationError(f"lambda = {A.lam} outside (0, 1]")
        matrices = A.sample(points)
        flat = matrices.reshape(-1, A.dim, A.dim)
        if not np.allclose(flat, np.swapaxes(flat, 1, 2), atol=1e-12):
            raise ValidationError("A is not symmetric")
        rng = np.random.default_rng(seed)
        directions = np.vstack([np.eye(A.dim), rng.standard_normal((100, A.dim))])
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        quadratic = np.einsum("ki,nij,kj->nk", directions, flat, directions)
        tol = 1e-12
        if np.min(quadratic) < A.lam - tol or np.max(quadratic) > 1.0 / A.lam + tol:
            raise ValidationError(f"ellipticity fails: A xi.xi in [{np.min(quadratic):.6g}, "
                                  f"{np.max(quadratic):.6g}], lambda = {A.lam:g}")
        if h is not None and matrices.ndim == 4:
            bound = A.Lambda_lip / A.rho0 * h * (1.0 + 1e-9) + tol
            for axis in (0, 1):
                jumps = np.linalg.norm(np.diff(matrices, axis=axis), ord=2, axis=(-2, -1))
                if np.max(jumps) > bound:
                    raise ValidationError(f"Lipschitz bound fails: jump {np.max(jumps):.4g} > {bound:.4g}")

    # ------------------------------------------------------------------
    # Grid
    # ------------------------------------------------------------------

    def build_grid(self, domain: Domain, grid: GridSpec) -> tuple[GridGeometry, BoundaryPlan]:
        """
        Lays out the Cartesian grid and classifies its nodes.

        Raises:
            NonconformingBoundary: The box faces do not fall on grid lines, or
                                   the domain leaves the grid.
        """
        if domain.dim != 2:
            raise NonconformingBoundary("the solver runs on planar grids", dim=domain.dim)
        h = float(grid.h)
        lower, upper = domain.bounding_box()
        if grid.bbox is not None:
            lower = np.minimum(lower, np.asarray(grid.bbox[0], dtype=float))
            upper = np.maximum(upper, np.asarray(grid.bbox[1], dtype=float))
        if domain.kind == "box":
            anchor = np.asarray(domain.box_lower, dtype=float)
            spans = (np.asarray(domain.box_upper) - anchor) / h
            if np.any(np.abs(spans - np.round(spans)) > 1e-6):
                raise NonconformingBoundary(f"box faces are not on grid lines for h = {h:g}", h=h)
        else:
            anchor = lower
        below = np.ceil((anchor - lower) / h - 1e-9).astype(int) + self.pad
        above = np.ceil((upper - anchor) / h - 1e-9).astype(int) + self.pad
        axes = tuple(anchor[a] + h * np.arange(-below[a], above[a] + 1) for a in range(2))
        points = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        level = domain.level(points)
        tol = BOUNDARY_TOLERANCE * h
        active = level < -tol
        dirichlet = np.abs(level) <= tol
        outside = level > tol
        if np.any(active[[0, -1], :]) or np.any(active[:, [0, -1]]):
            raise NonconformingBoundary("domain reaches the edge of the grid")

        shape = level.shape
        flat_points = points.reshape(-1, 2)

        # imposed nodes: active nodes with a near cut along an axis
        imposed_rows = {}
        candidates = np.argwhere(active)
        pairs_a, pairs_b = [], []
        for di, dj in AXIS_DIRECTIONS:
            neighbour = candidates + (di, dj)
            cut = outside[neighbour[:, 0], neighbour[:, 1]]
            pairs_a.append(candidates[cut])
            pairs_b.append(neighbour[cut])
        if pairs_a:
            pa = np.concatenate(pairs_a)
            pb = np.concatenate(pairs_b)
        else:
            pa = pb = np.zeros((0, 2), dtype=int)
        theta_axis = self._crossing_fraction(domain, points[pa[:, 0], pa[:, 1]], points[pb[:, 0], pb[:, 1]])
        for k in np.argsort(theta_axis, kind="stable"):
            if theta_axis[k] >= self.theta_min:
                break
            node = tuple(pa[k])
            if node in imposed_rows:
                continue
            opposite = tuple(2 * pa[k] - pb[k])
            crossing = points[node] + theta_axis[k] * (points[tuple(pb[k])] - points[node])
            opposite_idx = np.ravel_multi_index(opposite, shape) if active[opposite] else -1
            imposed_rows[node] = (opposite_idx, theta_axis[k], crossing)
        imposed = np.zeros(shape, dtype=bool)
        for node in imposed_rows:
            imposed[node] = True
        free = active & ~imposed

        # ghost nodes: outside nodes read by the stencil of a free node
        ghost = np.zeros(shape, dtype=bool)
        for di, dj in ALL_DIRECTIONS:
            ghost[1:-1, 1:-1] |= free[1 - di:shape[0] - 1 - di, 1 - dj:shape[1] - 1 - dj] & outside[1:-1, 1:-1]
        ghost_nodes = np.argwhere(ghost)
        best_theta = np.full(len(ghost_nodes), -1.0)
        best_source = np.zeros((len(ghost_nodes), 2), dtype=int)
        for di, dj in ALL_DIRECTIONS:
            source = ghost_nodes + (di, dj)
            inside_grid = np.all((source >= 0) & (source < shape), axis=1)
            usable = np.zeros(len(ghost_nodes), dtype=bool)
            usable[inside_grid] = active[source[inside_grid, 0], source[inside_grid, 1]]
            if not np.any(usable):
                continue
            theta = np.full(len(ghost_nodes), -1.0)
            theta[usable] = self._crossing_fraction(
                domain, points[source[usable, 0], source[usable, 1]],
                points[ghost_nodes[usable, 0], ghost_nodes[usable, 1]])
            better = theta > best_theta
            best_theta[better] = theta[better]
            best_source[better] = source[better]
        if np.any(best_theta <= 0.0):
            raise NonconformingBoundary("ghost node without an interior neighbour")
        ghost_theta = np.maximum(best_theta, 1e-6)
        src_points = points[best_source[:, 0], best_source[:, 1]]
        ghost_points = points[ghost_nodes[:, 0], ghost_nodes[:, 1]]
        ghost_crossings = src_points + best_theta[:, None] * (ghost_points - src_points)

        imposed_keys = list(imposed_rows)
        plan = BoundaryPlan(
            dirichlet_idx=np.flatnonzero(dirichlet.ravel()),
            dirichlet_points=flat_points[dirichlet.ravel()],
            imposed_idx=np.array([np.ravel_multi_index(n, shape) for n in imposed_keys], dtype=int),
            imposed_opposite=np.array([imposed_rows[n][0] for n in imposed_keys], dtype=int),
            imposed_theta=np.array([imposed_rows[n][1] for n in imposed_keys], dtype=float),
            imposed_points=np.array([imposed_rows[n][2] for n in imposed_keys], dtype=float).reshape(-1, 2),
            ghost_idx=np.ravel_multi_index((ghost_nodes[:, 0], ghost_nodes[:, 1]), shape),
            ghost_source=np.ravel_multi_index((best_source[:, 0], best_source[:, 1]), shape),
            ghost_theta=ghost_theta,
            ghost_points=ghost_crossings,
        )
        geometry = GridGeometry(axes, h, level, active, dirichlet, imposed, ghost)
        logger.debug("Grid %s: %d free, %d imposed, %d boundary, %d ghost nodes.", shape,
                     int(free.sum()), len(imposed_keys), int(dirichlet.sum()), len(ghost_nodes))
        return geometry, plan

    @staticmethod
    def _crossing_fraction(domain: Domain, inner: np.ndarray, outer: np.ndarray, iterations: int = 60) -> np.ndarray:
        """Fraction s in (0, 1] with level(inner + s (outer - inner)) = 0, by bisection."""
        if inner.shape[0] == 0:
            return np.zeros(0)
        low = np.zeros(inner.shape[0])
        high = np.ones(inner.shape[0])
        for _ in range(iterations):
            middle = 0.5 * (low + high)
            values = domain.level(inner + middle[:, None] * (outer - inner))
            inside = values < 0.0
            low = np.where(inside, middle, low)
            high = np.where(inside, high, middle)
        return high

    # ------------------------------------------------------------------
    # Solver
    # ------------------------------------------------------------------

    def time_step(self, A: AnisotropyField, grid: GridSpec, T: float) -> tuple[float, int]:
        limit = self.c_cfl * grid.h * math.sqrt(A.lam)
        if grid.dt is not None:
            if grid.dt > limit * (1.0 + 1e-12):
                raise CflViolation(f"dt = {grid.dt:g} exceeds c_cfl h sqrt(lambda) = {limit:g}",
                                   dt=grid.dt, limit=limit)
            dt = float(grid.dt)
        else:
            dt = limit
        if T < dt:
            raise TimeTooShort(f"T = {T:g} is shorter than one time step {dt:g}", T=T, dt=dt)
        steps = int(math.ceil(T / dt - 1e-9))
        return T / steps, steps

    def solve_ibvp(self, domain: Domain, A: AnisotropyField, bdata: BoundaryData, T: float,
                   grid: GridSpec, source: Optional[Callable] = None,
                   initial: Optional[tuple] = None) -> WaveField:
        """
        Leapfrog solution of u_tt = div(A grad u) + F, u = psi on the boundary.

        Args:
            domain (Domain): The domain.
            A (AnisotropyField): Coefficients.
            bdata (BoundaryData): Dirichlet data.
            T (float): Final time.
            grid (GridSpec): Resolution.
            source (Callable): F(points, t), test mode only.
            initial (tuple): (u0, v0) callables of points, test mode only;
                             zero Cauchy data otherwise.

        Returns:
            WaveField: The full history.
        """
        dt, steps = self.time_step(A, grid, T)
        geometry, plan = self.build_grid(domain, grid)
        points = geometry.points()
        coefficients = operator_coefficients(A, points)
        free = geometry.free
        shape = geometry.shape
        h = geometry.h

        def psi_at(t):
            if bdata is None or bdata.is_zero:
                return lambda p: np.zeros(p.shape[0])
            return lambda p: bdata.value(p, t)

        def forcing(t):
            if source is None:
                return 0.0
            return np.asarray(source(points, t), dtype=float)

        times = dt * np.arange(steps + 1)
        values = np.zeros((steps + 1,) + shape)

        u0 = np.zeros(shape)
        v0 = np.zeros(shape)
        if initial is not None:
            u0_func, v0_func = initial
            if u0_func is not None:
                u0[geometry.active] = np.asarray(u0_func(points), dtype=float)[geometry.active]
            if v0_func is not None:
                v0[geometry.active] = np.asarray(v0_func(points), dtype=float)[geometry.active]
        plan.apply(u0.reshape(-1), psi_at(0.0))
        values[0] = u0

        u1 = np.zeros(shape)
        update = u0 + dt * v0 + 0.5 * dt * dt * (apply_operator(u0, coefficients, h) + forcing(0.0))
        u1[free] = update[free]
        plan.apply(u1.reshape(-1), psi_at(times[1]))
        values[1] = u1

        for n in range(1, steps):
            current, previous = values[n], values[n - 1]
            update = 2.0 * current - previous + dt * dt * (apply_operator(current, coefficients, h)
                                                            + forcing(times[n]))
            nxt = values[n + 1]
            nxt[free] = update[free]
            plan.apply(nxt.reshape(-1), psi_at(times[n + 1]))

        if not np.all(np.isfinite(values[-1])):
            raise CflViolation("solution blew up", dt=dt, h=h)
        values.setflags(write=False)
        logger.info("Solved IBVP on '%s': h=%g, dt=%g, %d steps, grid %s.", domain.name, h, dt, steps, shape)
        return WaveField(values, times, geometry, domain, A, bdata, dt,
                         meta={"h": h, "dt": dt, "steps": steps, "c_cfl": self.c_cfl,
                               "theta_min": self.theta_min, "forced": source is not None})

    # ------------------------------------------------------------------
    # Flux
    # ------------------------------------------------------------------

    def boundary_flux(self, u: WaveField, sigma: Optional[SigmaPortion] = None) -> FluxTrace:
        """
        Conormal flux A grad u . nu on the grid nodes of Sigma, one-sided
        second-order normal differences.

        Raises:
            StencilOutOfDomain: The normal stencil leaves the domain.
            NonconformingBoundary: Sigma is not on a flat grid line.
        """
        sigma = sigma or u.domain.sigma
        if sigma is None:
            raise NonconformingBoundary("no measurement portion to sample")
        geometry = u.grid
        h = geometry.h
        axis, side = sigma.axis, sigma.side
        tangent_axis = 1 - axis
        domain = u.domain
        face = domain.box_lower[axis] if side < 0 else domain.box_upper[axis]
        f = geometry.index_of(axis, face)
        tangential = geometry.axes[tangent_axis]
        tol = 1e-9 * h
        columns = np.flatnonzero((tangential >= sigma.lower[0] - tol) & (tangential <= sigma.upper[0] + tol))
        if columns.size < 2:
            raise NonconformingBoundary("Sigma holds fewer than two grid nodes", sigma_id=sigma.sigma_id)

        def node(k, c):
            return (f - side * k, c) if axis == 0 else (c, f - side * k)

        grid_points = geometry.points()
        face_points = np.array([grid_points[node(0, c)] for c in columns])
        if np.any(np.abs(domain.face_displacement(axis, side, face_points[:, [tangent_axis]])) > tol):
            raise NonconformingBoundary("Sigma crosses a displaced chart", sigma_id=sigma.sigma_id)
        closure = geometry.closure
        for k in (0, 1, 2):
            if not all(closure[node(k, c)] for c in columns):
                raise StencilOutOfDomain(f"normal stencil layer {k} leaves the domain", sigma_id=sigma.sigma_id)

        line = np.take(u.values, f, axis=1 + axis)  # (Nt+1, n_tangential)
        inner1 = np.take(u.values, f - side, axis=1 + axis)
        inner2 = np.take(u.values, f - 2 * side, axis=1 + axis)
        # derivative along +e_axis at the face
        normal = side * (3.0 * line - 4.0 * inner1 + inner2) / (2.0 * h)
        valid = np.take(closure, f, axis=axis)
        span = np.flatnonzero(valid)
        tangent_derivative = np.zeros_like(line)
        tangent_derivative[:, span] = np.gradient(line[:, span], h, axis=1, edge_order=2)

        matrices = u.anisotropy.sample(face_points)
        a_nn = matrices[:, axis, axis]
        a_nt = matrices[:, axis, tangent_axis]
        values = side * (a_nn * normal[:, columns] + a_nt * tangent_derivative[:, columns])

        weights = np.full(columns.size, h)
        weights[[0, -1]] = 0.5 * h
        return FluxTrace(u.times.copy(), face_points, tangential[columns] - tangential[columns[0]],
                         values, weights, sigma, u.dim)

    def flux_mismatch_epsilon(self, f1: FluxTrace, f2: FluxTrace, T: Optional[float] = None,
                              rho0: float = 1.0) -> float:
        """
        eps = sqrt(1 / (T rho0^(n-3)) int_0^T int_Sigma |flux1 - flux2|^2 dS dt).

        Raises:
            GridMismatch: The traces are not sampled identically.
        """
        if f1.times.shape != f2.times.shape or not np.allclose(f1.times, f2.times, rtol=0, atol=1e-12) \
                or f1.points.shape != f2.points.shape or not np.allclose(f1.points, f2.points, rtol=0, atol=1e-12):
            raise GridMismatch("flux traces have different space-time samples")
        T = f1.T if T is None else T
        keep = f1.times <= T + 1e-9 * max(1.0, T)
        difference = f1.values[keep] - f2.values[keep]
        in_space = np.sum(np.abs(difference) ** 2 * f1.weights, axis=1)
        integral = trapezoid(in_space, f1.times[keep])
        return math.sqrt(integral / (T * rho0 ** (f1.dim - 3)))

    # ------------------------------------------------------------------
    # Energy
    # ------------------------------------------------------------------

    def energy(self, u: WaveField, t: float) -> float:
        """K(t) = int_Omega (A grad u . grad u + u_t^2) dx by midpoint quadrature."""
        k = u.time_index(t)
        geometry = u.grid
        h = geometry.h
        values = u.values
        if len(u.times) == 1:
            velocity = np.zeros(geometry.shape)
        elif k == 0:
            velocity = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * u.dt) if len(u.times) > 2 \
                else (values[1] - values[0]) / u.dt
        elif k == len(u.times) - 1:
            velocity = (3.0 * values[k] - 4.0 * values[k - 1] + values[k - 2]) / (2.0 * u.dt) if k > 1 \
                else (values[k] - values[k - 1]) / u.dt
        else:
            velocity = (values[k + 1] - values[k - 1]) / (2.0 * u.dt)
        current = values[k]

        a11, a12, a22 = operator_coefficients(u.anisotropy, geometry.points())
        closure = geometry.closure
        face_x = closure[1:, :] & closure[:-1, :]
        face_y = closure[:, 1:] & closure[:, :-1]
        gradient = np.sum((0.5 * (a11[1:, :] + a11[:-1, :]) * (current[1:, :] - current[:-1, :]) ** 2)[face_x])
        gradient += np.sum((0.5 * (a22[:, 1:] + a22[:, :-1]) * (current[:, 1:] - current[:, :-1]) ** 2)[face_y])
        if np.any(a12):
            dx = (current[2:, 1:-1] - current[:-2, 1:-1]) / (2.0 * h)
            dy = (current[1:-1, 2:] - current[1:-1, :-2]) / (2.0 * h)
            inner = geometry.active[1:-1, 1:-1]
            gradient += h * h * np.sum((2.0 * a12[1:-1, 1:-1] * dx * dy)[inner])
        kinetic = h * h * np.sum(self._cell_weights(geometry) * velocity ** 2)
        return float(gradient + kinetic)

    @staticmethod
    def _cell_weights(geometry: GridGeometry) -> np.ndarray:
        return np.where(geometry.active, 1.0, np.where(geometry.dirichlet, 0.5, 0.0))

    def energy_drift(self, u: WaveField, stride: int = 1) -> float:
        """
        Relative spread (max K - min K) / K of the energy over the interior
        time levels (every stride-th), measured against the first of them.
        A homogeneous run drifting beyond ENERGY_DRIFT_TOLERANCE is logged.
        """
        times = u.times[1:-1:stride]
        if times.size == 0:
            return 0.0
        energies = np.array([self.energy(u, float(t)) for t in times])
        if energies[0] == 0.0:
            return 0.0 if not np.any(energies) else math.inf
        drift = float((energies.max() - energies.min()) / energies[0])
        if drift > ENERGY_DRIFT_TOLERANCE and not u.meta.get("forced") and (
                u.boundary_data is None or u.boundary_data.is_zero):
            logger.warning("Energy drift %.3g above %.1g on a homogeneous run.", drift, ENERGY_DRIFT_TOLERANCE)
        return drift

    def forced_energy_bound(self, u: WaveField, source: Callable) -> float:
        """
        e T int_0^T int_Omega F^2 dx dt, the bound on K(t) of a run from zero
        Cauchy and boundary data driven by the source F(points, t).
        """
        geometry = u.grid
        points = geometry.points()
        weights = geometry.h ** 2 * self._cell_weights(geometry)
        in_space = [float(np.sum(weights * np.asarray(source(points, float(t)), dtype=float) ** 2))
                    for t in u.times]
        return math.e * u.T * float(trapezoid(in_space, u.times))

    # ------------------------------------------------------------------
    # Boundary data
    # ------------------------------------------------------------------

    def _boundary_frames(self, domain: Domain, resolution: float) -> list:
        """Boundary sample frames: (points, keep, accessible, spacings) per face or circle."""
        if domain.kind == "ball":
            if domain.dim != 2:
                raise InsufficientSmoothness("boundary norms on balls are planar only")
            points, accessible = domain.boundary_samples(resolution)
            arc = 2.0 * math.pi * domain.ball_radius / points.shape[0]
            return [(points, np.ones(points.shape[0], dtype=bool), accessible, (arc,), True)]
        frames = []
        for face in domain.face_grids(resolution):
            spacings = tuple(float(a[1] - a[0]) for a in face.axes)
            frames.append((face.points, face.keep, face.accessible, spacings, False))
        return frames

    def _c11_norm(self, values: np.ndarray, frames_meta: list, rho0: float) -> np.ndarray:
        """
        C^{1,1} norm along the boundary of sampled fields. values is a list
        (per frame) of arrays shaped (batch, *frame_shape).
        """
        total_sup = total_grad = total_hess = None
        for frame_values, (keep, spacings, periodic) in zip(values, frames_meta):
            batch = frame_values.shape[0]
            dims = frame_values.ndim - 1
            if periodic:
                step = spacings[0]
                first = (np.roll(frame_values, -1, axis=1) - np.roll(frame_values, 1, axis=1)) / (2.0 * step)
                second = (np.roll(frame_values, -1, axis=1) - 2.0 * frame_values + np.roll(frame_values, 1, axis=1)) / step ** 2
                grads, hessians = [first], [second]
            else:
                grads = np.gradient(frame_values, *spacings, axis=tuple(range(1, dims + 1)), edge_order=2)
                if dims == 1:
                    grads = [grads]
                hessians = []
                for g in grads:
                    seconds = np.gradient(g, *spacings, axis=tuple(range(1, dims + 1)), edge_order=2)
                    hessians.extend([seconds] if dims == 1 else seconds)
            mask = np.broadcast_to(keep, frame_values.shape)
            flat_mask = mask.reshape(batch, -1)

            def masked_max(array):
                return np.max(np.where(flat_mask, np.abs(array).reshape(batch, -1), 0.0), axis=1)

            sup = masked_max(frame_values)
            grad = masked_max(np.sqrt(sum(g ** 2 for g in grads)))
            hess = masked_max(np.sqrt(sum(s ** 2 for s in hessians)))
            total_sup = sup if total_sup is None else np.maximum(total_sup, sup)
            total_grad = grad if total_grad is None else np.maximum(total_grad, grad)
            total_hess = hess if total_hess is None else np.maximum(total_hess, hess)
        return total_sup + rho0 * total_grad + rho0 ** 2 * total_hess

    def _time_derivatives(self, bdata: BoundaryData, frames: list, xi: np.ndarray, order: int) -> list:
        """
        d^order/dt^order psi on each frame at the times xi, shaped (len(xi), *frame_shape).
        """
        out = []
        for points, _, _, _, _ in frames:
            frame_shape = points.shape[:-1]
            flat_points = points.reshape(-1, points.shape[-1])
            if bdata.terms and all(term.is_polynomial for term in bdata.terms):
                total = np.zeros((len(xi), flat_points.shape[0]))
                for term in bdata.terms:
                    spatial = np.asarray(term.spatial(flat_points), dtype=float)
                    total += np.outer(term.time_factor(xi, order), spatial)
            else:
                total = self._numeric_time_derivative(bdata, flat_points, xi, order)
            out.append(total.reshape((len(xi),) + frame_shape))
        return out

    def _numeric_time_derivative(self, bdata: BoundaryData, points: np.ndarray, xi: np.ndarray,
                                 order: int, degree: int = 40) -> np.ndarray:
        """Chebyshev fit in time of psi at the points; raises on poor fits or blow-up."""
        t_max = float(np.max(xi)) if np.max(xi) > 0.0 else 1.0
        nodes = np.cos(np.pi * (np.arange(2 * degree + 1) + 0.5) / (2 * degree + 1))
        times = 0.5 * t_max * (nodes + 1.0)
        samples = np.stack([bdata.value(points, t) for t in times])  # (nodes, points)
        coefficients = chebyshev.chebfit(nodes, samples, degree)
        residual = np.max(np.abs(chebyshev.chebval(nodes, coefficients).T - samples))
        scale = max(np.max(np.abs(samples)), 1e-300)
        if residual > 1e-8 * scale:
            raise InsufficientSmoothness(f"time profile is not resolved by a degree-{degree} fit "
                                         f"(residual {residual / scale:.2e})", order=order)
        derivative = chebyshev.chebder(coefficients, order) * (2.0 / t_max) ** order if order else coefficients
        mapped = 2.0 * np.asarray(xi) / t_max - 1.0
        values = chebyshev.chebval(mapped, derivative).T
        if np.max(np.abs(values)) > SMOOTHNESS_BLOWUP * scale / t_max ** order:
            raise InsufficientSmoothness(f"time derivative of order {order} blows up", order=order)
        return values

    def boundary_data_norm(self, bdata: BoundaryData, t: float, resolution: Optional[float] = None,
                           time_samples: int = 257) -> "DataNorm":
        """
        H(t) = sum_{j <= 2m+4} rho0^j sup_{xi <= t} ||d^j_t psi(., xi)||_{C^{1,1}(boundary)}
        and the frequency ratio F = H(t1) / ||psi||_{L^inf(Gamma^(a) x [0, t1])}.

        Raises:
            FlatData: psi vanishes identically.
            InsufficientSmoothness: Numerical time derivatives are unreliable.
        """
        H = self.H_of_t(bdata, t, resolution, time_samples)
        H_t1 = self.H_of_t(bdata, bdata.t1, resolution, time_samples)
        sup = self.data_sup(bdata, bdata.t1, resolution, time_samples)
        if sup == 0.0:
            raise FlatData("psi vanishes on Gamma^(a) x [0, t1]; F is undefined", t1=bdata.t1)
        return DataNorm(t=t, H=H, H_t1=H_t1, sup=sup, F_ratio=H_t1 / sup)

    def H_of_t(self, bdata: BoundaryData, t: float, resolution: Optional[float] = None,
               time_samples: int = 257) -> float:
        if bdata.is_zero:
            return 0.0
        key = ("H", float(t), resolution, time_samples)
        if key in bdata._norm_cache:
            return bdata._norm_cache[key]
        domain = bdata.domain
        resolution = resolution or domain.rho0 / 32.0
        frames = self._boundary_frames(domain, resolution)
        meta = [(keep, spacings, periodic) for _, keep, _, spacings, periodic in frames]
        xi = np.linspace(0.0, t, time_samples)
        total = 0.0
        for j in range(bdata.derivative_order + 1):
            derivatives = self._time_derivatives(bdata, frames, xi, j)
            norms = self._c11_norm(derivatives, meta, domain.rho0)
            total += domain.rho0 ** j * float(np.max(norms))
        bdata._norm_cache[key] = total
        return total

    def data_sup(self, bdata: BoundaryData, t: float, resolution: Optional[float] = None,
                 time_samples: int = 257) -> float:
        """sup of |psi| over Gamma^(a) x [0, t]."""
        if bdata.is_zero:
            return 0.0
        domain = bdata.domain
        resolution = resolution or domain.rho0 / 32.0
        points, accessible = domain.boundary_samples(resolution)
        points = points[accessible]
        xi = np.linspace(0.0, t, time_samples)
        return float(max(np.max(np.abs(bdata.value(points, s))) for s in xi))

    def compatibility_report(self, bdata: BoundaryData, tolerance: float = 1e-10,
                             resolution: Optional[float] = None) -> dict:
        """
        Checks d^j_t psi(., 0) = 0 for j = 0..2m+4 (compatibility at t = 0).

        Returns:
            dict: Per order the sup of |d^j_t psi(., 0)| and the overall verdict.
        """
        if bdata.is_zero:
            return {"compatible": True, "orders": {}}
        domain = bdata.domain
        frames = self._boundary_frames(domain, resolution or domain.rho0 / 16.0)
        scale_t = max(bdata.t1, domain.rho0)
        orders = {}
        for j in range(bdata.derivative_order + 1):
            values = self._time_derivatives(bdata, frames, np.array([0.0]), j)
            orders[j] = float(max(np.max(np.abs(v)) for v in values)) * scale_t ** j
        reference = max(self.data_sup(bdata, scale_t, resolution, 33), 1e-300)
        compatible = all(value <= tolerance * reference for value in orders.values())
        return {"compatible": compatible, "orders": orders}

    def check_boundary_data(self, bdata: BoundaryData, T: float, tolerance: float = 1e-12) -> None:
        """
        Raises:
            ValidationError: psi does not vanish on Gamma^(i).
        """
        if bdata.is_zero:
            return
        domain = bdata.domain
        points, accessible = domain.boundary_samples(domain.rho0 / 16.0)
        hidden = points[~accessible]
        if hidden.size == 0:
            return
        for s in np.linspace(0.0, T, 17):
            if np.max(np.abs(bdata.value(hidden, s))) > tolerance:
                raise ValidationError("psi does not vanish on Gamma^(i)", t=float(s))

    def make_separable_data(self, domain: Domain, spatial: Callable, temporal, t1: float,
                            label: str = "separable") -> BoundaryData:
        return BoundaryData(domain, (SeparableTerm(spatial, temporal),), t1=t1, label=label)


@dataclass(frozen=True)
class DataNorm:
    """H(t) with the frequency ratio F of the data."""
    t: float
    H: float
    H_t1: float
    sup: float
    F_ratio: float
