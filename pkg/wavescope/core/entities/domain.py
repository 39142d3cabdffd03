# wavescope/core/entities/domain.py

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline, RegularGridInterpolator


@dataclass(frozen=True, eq=False)
class BoundaryChart:
    """
    A local graph chart of the boundary, attached to one face of the host box.

    The chart frame is the rigid transform that puts the chart origin at 0,
    the tangential directions of the face on x' and the inward normal on x_n.
    Inside the chart the domain is {x_n > phi(x')}, so a positive profile
    pushes the boundary into the box.

    Args:
        chart_id (str): Identifier used in error reports.
        axis (int): Axis normal to the host face.
        side (int): -1 for the lower face of that axis, +1 for the upper one.
        center (tuple): Tangential coordinates of the chart origin on the face.
        radius (float): Radius of the disk carrying the samples.
        phi (np.ndarray): Profile samples on the uniform grid
                          linspace(-radius, radius, m) (per tangential axis).
        accessible (bool): True for charts of Gamma^(a), False for Gamma^(i).
    """
    chart_id: str
    axis: int
    side: int
    center: tuple
    radius: float
    phi: np.ndarray
    accessible: bool = False

    @property
    def tangential_dim(self) -> int:
        return np.ndim(self.phi)

    @property
    def coords(self) -> np.ndarray:
        return np.linspace(-self.radius, self.radius, np.shape(self.phi)[0])

    @property
    def spacing(self) -> float:
        return float(self.coords[1] - self.coords[0])

    def rigid_transform(self, dim: int, box_lower, box_upper) -> tuple[np.ndarray, np.ndarray]:
        """
        Returns (origin, rotation) of the chart frame. The columns of
        rotation are the tangential axes followed by the inward normal.
        """
        origin = np.zeros(dim)
        tangential_axes = [a for a in range(dim) if a != self.axis]
        origin[tangential_axes] = self.center
        origin[self.axis] = box_lower[self.axis] if self.side < 0 else box_upper[self.axis]
        rotation = np.zeros((dim, dim))
        for column, a in enumerate(tangential_axes):
            rotation[a, column] = 1.0
        rotation[self.axis, dim - 1] = -float(self.side)
        return origin, rotation

    def interpolant(self):
        """Cubic interpolant of the profile, zero outside the chart disk."""
        coords = self.coords
        samples = np.nan_to_num(np.asarray(self.phi, dtype=float))
        if self.tangential_dim == 1:
            spline = CubicSpline(coords, samples)

            def evaluate(u):
                u = np.asarray(u, dtype=float).reshape(-1)
                out = np.zeros(u.shape)
                inside = np.abs(u) <= self.radius
                out[inside] = spline(u[inside])
                return out
            return evaluate

        grid = RegularGridInterpolator((coords,) * self.tangential_dim, samples,
                                       method="cubic", bounds_error=False, fill_value=0.0)

        def evaluate(u):
            u = np.atleast_2d(np.asarray(u, dtype=float))
            out = np.zeros(u.shape[0])
            inside = np.linalg.norm(u, axis=1) <= self.radius
            if np.any(inside):
                out[inside] = grid(u[inside])
            return out
        return evaluate

    def with_profile(self, phi: np.ndarray, chart_id: Optional[str] = None) -> "BoundaryChart":
        return BoundaryChart(chart_id or self.chart_id, self.axis, self.side, tuple(self.center),
                             self.radius, np.asarray(phi, dtype=float), self.accessible)


@dataclass(frozen=True)
class SigmaPortion:
    """
    The measurement portion Sigma: a tangential window on one flat face of
    the host box.
    """
    sigma_id: str
    axis: int
    side: int
    lower: tuple
    upper: tuple


@dataclass(frozen=True, eq=False)
class FaceSamples:
    """Boundary points of one box face on its tangential tensor grid."""
    axis: int
    side: int
    axes: tuple
    points: np.ndarray
    keep: np.ndarray
    accessible: np.ndarray


@dataclass(frozen=True, eq=False)
class Domain:
    """
    A bounded domain with its a-priori constants.

    Two region kinds are supported: "box", an axis-aligned box whose faces
    are displaced by boundary charts, and "ball". Both expose a level
    function that is negative inside, zero on the boundary and positive
    outside.
    """
    dim: int
    rho0: float
    E: float
    M: float
    kind: str = "box"
    charts: tuple = ()
    box_lower: Optional[tuple] = None
    box_upper: Optional[tuple] = None
    ball_center: Optional[tuple] = None
    ball_radius: Optional[float] = None
    sigma: Optional[SigmaPortion] = None
    name: str = "domain"
    _face_cache: dict = field(default_factory=dict, repr=False, compare=False)

    # --- charts ---

    @property
    def accessible_mask(self) -> tuple:
        return tuple(chart.accessible for chart in self.charts)

    @property
    def sigma_patch(self) -> Optional[str]:
        return self.sigma.sigma_id if self.sigma is not None else None

    def chart(self, chart_id: str) -> BoundaryChart:
        for chart in self.charts:
            if chart.chart_id == chart_id:
                return chart
        raise KeyError(chart_id)

    def faces(self) -> list[tuple[int, int]]:
        return [(axis, side) for axis in range(self.dim) for side in (-1, 1)]

    def face_displacement(self, axis: int, side: int, tangential: np.ndarray) -> np.ndarray:
        """
        Inward displacement of a box face at the given tangential points, the
        sum of the profiles of the charts attached to that face.
        """
        tangential = np.asarray(tangential, dtype=float).reshape(-1, self.dim - 1)
        key = (axis, side)
        if key not in self._face_cache:
            self._face_cache[key] = [
                (np.asarray(c.center, dtype=float), c.interpolant())
                for c in self.charts if c.axis == axis and c.side == side
            ]
        out = np.zeros(tangential.shape[0])
        for center, evaluate in self._face_cache[key]:
            local = tangential - center
            out += evaluate(local[:, 0] if self.dim == 2 else local)
        return out

    # --- level set ---

    def level(self, points: np.ndarray) -> np.ndarray:
        """Level function of the domain at the given points (shape (..., dim))."""
        points = np.asarray(points, dtype=float)
        flat = points.reshape(-1, self.dim)
        if self.kind == "ball":
            values = np.linalg.norm(flat - np.asarray(self.ball_center), axis=1) - self.ball_radius
            return values.reshape(points.shape[:-1])

        lower = np.asarray(self.box_lower, dtype=float)
        upper = np.asarray(self.box_upper, dtype=float)
        values = np.full(flat.shape[0], -np.inf)
        for axis, side in self.faces():
            tangential = np.delete(flat, axis, axis=1)
            depth = flat[:, axis] - lower[axis] if side < 0 else upper[axis] - flat[:, axis]
            values = np.maximum(values, self.face_displacement(axis, side, tangential) - depth)
        return values.reshape(points.shape[:-1])

    def contains(self, points: np.ndarray, closed: bool = True) -> np.ndarray:
        values = self.level(points)
        return values <= 0.0 if closed else values < 0.0

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned box containing the closure."""
        if self.kind == "ball":
            center = np.asarray(self.ball_center, dtype=float)
            return center - self.ball_radius, center + self.ball_radius
        lower = np.asarray(self.box_lower, dtype=float).copy()
        upper = np.asarray(self.box_upper, dtype=float).copy()
        for chart in self.charts:
            outward = max(0.0, -float(np.nanmin(chart.phi)))
            if chart.side < 0:
                lower[chart.axis] -= outward
            else:
                upper[chart.axis] += outward
        return lower, upper

    # --- sampling ---

    def face_grids(self, resolution: float) -> list["FaceSamples"]:
        """
        Per-face tensor grids of boundary points (the face displaced by its
        charts), spacing at most `resolution` along the boundary.
        """
        lower = np.asarray(self.box_lower, dtype=float)
        upper = np.asarray(self.box_upper, dtype=float)
        grids = []
        for axis, side in self.faces():
            tangential_axes = [a for a in range(self.dim) if a != axis]
            slope = max([self._max_slope(c) for c in self.charts
                         if c.axis == axis and c.side == side] or [0.0])
            step = resolution / (1.0 + slope)
            axes = tuple(np.linspace(lower[a], upper[a], max(2, int(np.ceil((upper[a] - lower[a]) / step)) + 1))
                         for a in tangential_axes)
            mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
            flat = mesh.reshape(-1, self.dim - 1)
            displacement = self.face_displacement(axis, side, flat)
            points = np.empty((flat.shape[0], self.dim))
            points[:, tangential_axes] = flat
            base = lower[axis] if side < 0 else upper[axis]
            points[:, axis] = base - side * displacement
            keep = self.level(points) <= 1e-9 * max(1.0, self.rho0)
            accessible = np.ones(points.shape[0], dtype=bool)
            for chart in self.charts:
                if chart.accessible or chart.axis != axis or chart.side != side:
                    continue
                local = flat - np.asarray(chart.center)
                accessible &= np.linalg.norm(local, axis=1) > chart.radius
            shape = mesh.shape[:-1]
            grids.append(FaceSamples(axis, side, axes, points.reshape(shape + (self.dim,)),
                                     keep.reshape(shape), accessible.reshape(shape)))
        return grids

    def boundary_samples(self, resolution: float) -> tuple[np.ndarray, np.ndarray]:
        """
        Points on the boundary with spacing at most `resolution` along each
        tangential axis.

        Returns:
            tuple: (points, accessible) with accessible a boolean per point.
        """
        if self.kind == "ball":
            return self._ball_boundary_samples(resolution)
        all_points, all_access = [], []
        for face in self.face_grids(resolution):
            all_points.append(face.points[face.keep])
            all_access.append(face.accessible[face.keep])
        return np.concatenate(all_points), np.concatenate(all_access)

    def _ball_boundary_samples(self, resolution: float):
        center = np.asarray(self.ball_center, dtype=float)
        if self.dim == 2:
            count = max(8, int(np.ceil(2.0 * np.pi * self.ball_radius / resolution)))
            angles = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)
            points = center + self.ball_radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        else:
            count = max(8, int(np.ceil(np.pi * self.ball_radius / resolution)))
            polar = np.linspace(0.0, np.pi, count + 1)
            points = []
            for p in polar:
                ring = max(1, int(np.ceil(2.0 * np.pi * self.ball_radius * np.sin(p) / resolution)))
                az = np.linspace(0.0, 2.0 * np.pi, ring, endpoint=False)
                points.append(np.stack([np.sin(p) * np.cos(az), np.sin(p) * np.sin(az),
                                        np.full(ring, np.cos(p))], axis=1))
            points = center + self.ball_radius * np.concatenate(points)
        return points, np.ones(points.shape[0], dtype=bool)

    def closure_samples(self, resolution: float) -> np.ndarray:
        """Grid points of the closure at the given spacing plus boundary samples."""
        lower, upper = self.bounding_box()
        axes = [np.arange(lower[a], upper[a] + 0.5 * resolution, resolution) for a in range(self.dim)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        inner = mesh[self.level(mesh) <= 0.0]
        boundary, _ = self.boundary_samples(resolution)
        return np.concatenate([inner, boundary])

    def volume(self, resolution: float) -> float:
        lower, upper = self.bounding_box()
        axes = [np.arange(lower[a] + 0.5 * resolution, upper[a], resolution) for a in range(self.dim)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        return float(np.count_nonzero(self.level(mesh) < 0.0)) * resolution ** self.dim

    @staticmethod
    def _max_slope(chart: BoundaryChart) -> float:
        gradients = np.gradient(np.nan_to_num(np.asarray(chart.phi, dtype=float)), chart.spacing)
        if chart.tangential_dim == 1:
            return float(np.max(np.abs(gradients)))
        return float(np.max(np.sqrt(sum(g ** 2 for g in gradients))))

    def with_charts(self, charts, name: Optional[str] = None) -> "Domain":
        return Domain(self.dim, self.rho0, self.E, self.M, self.kind, tuple(charts),
                      self.box_lower, self.box_upper, self.ball_center, self.ball_radius,
                      self.sigma, name or self.name)

    def with_sigma(self, sigma: Optional[SigmaPortion]) -> "Domain":
        return Domain(self.dim, self.rho0, self.E, self.M, self.kind, self.charts,
                      self.box_lower, self.box_upper, self.ball_center, self.ball_radius,
                      sigma, self.name)


@dataclass(frozen=True)
class ConeParams:
    """Parameters of a cone chain (the cone {L_s|x'| <= x_n <= s L_s rho0 / 2})."""
    s: float
    L_s: float
    rho0: float
    varsigma: float
    gamma: float
    gamma1: float
    gamma2: float
    chi: float
    h: float
    l1: float
    delta: float
    dim: int
    q: float
    a: float
    b: float

    @property
    def chain_d1(self) -> float:
        # d1 = l1 (1 - sin gamma1); named apart from d1 = min{d0, r0}
        return self.l1 * (1.0 - np.sin(self.gamma1))


@dataclass(frozen=True, eq=False)
class BallChain:
    """
    A chain of balls B_{r_k}(w_k) within B_{rho_k}(w_k) within B_{R_k}(w_k).

    kind is "path_chain" (constant radii r/4, 3r/4, r along a path) or
    "cone_chain" (geometric radii inside a cone).
    """
    kind: str
    centers: np.ndarray
    small_radii: np.ndarray
    mid_radii: np.ndarray
    large_radii: np.ndarray
    cone: Optional[ConeParams] = None
    length_bound: Optional[float] = None
    within_length_bound: Optional[bool] = None

    def __len__(self) -> int:
        return int(np.shape(self.centers)[0])

    @property
    def step_distances(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.centers, axis=0), axis=1)


@dataclass(frozen=True)
class RelativeGraphReport:
    """Outcome of the relative-graph comparison of two domains."""
    gamma0: float
    gamma1_alpha: float
    alpha: float
    r0: float
    d_hausdorff: float
    d_modified: float
    d0: float
    within_d0: bool
    gamma0_over_hausdorff: float
