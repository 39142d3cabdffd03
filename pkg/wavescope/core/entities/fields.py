# wavescope/core/entities/fields.py

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import Polynomial

from ...util.errors import ValidationError
from .domain import Domain, SigmaPortion


@dataclass(frozen=True, eq=False)
class AnisotropyField:
    """
    The symmetric coefficient matrix A(x) of the operator div(A grad u).

    Args:
        matrix (Callable): Maps points (..., n) to matrices (..., n, n).
        lam (float): Ellipticity constant, lambda |xi|^2 <= A xi.xi <= |xi|^2 / lambda.
        Lambda_lip (float): Lipschitz constant, |A(x) - A(y)| <= Lambda |x - y| / rho0.
        rho0 (float): Length scale of the Lipschitz bound.
        dim (int): Ambient dimension.
        label (str): Short description for reports.
    """
    matrix: Callable[[np.ndarray], np.ndarray]
    lam: float
    Lambda_lip: float
    rho0: float
    dim: int = 2
    label: str = "custom"

    @classmethod
    def constant(cls, matrix, rho0: float = 1.0, lam: Optional[float] = None) -> "AnisotropyField":
        matrix = np.asarray(matrix, dtype=float)
        eigenvalues = np.linalg.eigvalsh(matrix)
        if lam is None:
            lam = float(min(eigenvalues.min(), 1.0 / eigenvalues.max()))

        def evaluate(points):
            points = np.asarray(points, dtype=float)
            return np.broadcast_to(matrix, points.shape[:-1] + matrix.shape)
        return cls(evaluate, lam, 0.0, rho0, matrix.shape[0], "constant")

    @classmethod
    def identity(cls, dim: int = 2, rho0: float = 1.0) -> "AnisotropyField":
        field_ = cls.constant(np.eye(dim), rho0, 1.0)
        return cls(field_.matrix, 1.0, 0.0, rho0, dim, "identity")

    def sample(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(self.matrix(np.asarray(points, dtype=float)), dtype=float)


@dataclass(frozen=True, eq=False)
class SeparableTerm:
    """One term S(x) g(t) of separable boundary data."""
    spatial: Callable[[np.ndarray], np.ndarray]
    temporal: object  # numpy Polynomial, or a callable of t

    @property
    def is_polynomial(self) -> bool:
        return isinstance(self.temporal, Polynomial)

    def time_factor(self, t, order: int = 0) -> np.ndarray:
        if self.is_polynomial:
            return self.temporal.deriv(order)(t) if order else self.temporal(t)
        if order:
            raise ValidationError("derivatives of callable time factors are taken numerically", order=order)
        return np.asarray(self.temporal(t), dtype=float)


@dataclass(frozen=True, eq=False)
class BoundaryData:
    """
    Dirichlet data psi on the boundary, supported away from Gamma^(i).

    Either a sum of separable terms S_k(x) g_k(t) or one general callable
    psi(points, t). Separable data with polynomial time factors gets exact
    time derivatives; everything else is differentiated numerically.

    Args:
        domain (Domain): Domain whose boundary carries the data.
        terms (tuple): Separable terms.
        func (Callable): General psi(points, t), used when terms is empty.
        t1 (float): End of the window used for the frequency ratio F.
    """
    domain: Domain
    terms: tuple = ()
    func: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    t1: float = 1.0
    label: str = "custom"
    _norm_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def m(self) -> int:
        return (self.dim + 2) // 4

    @property
    def derivative_order(self) -> int:
        """Number 2m + 4 of time derivatives entering H(t)."""
        return 2 * self.m + 4

    @property
    def is_zero(self) -> bool:
        return not self.terms and self.func is None

    def value(self, points: np.ndarray, t: float) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if self.func is not None:
            return np.asarray(self.func(points, t), dtype=float)
        out = np.zeros(points.shape[:-1])
        for term in self.terms:
            out = out + term.spatial(points) * term.time_factor(t)
        return out

    @classmethod
    def zero(cls, domain: Domain) -> "BoundaryData":
        return cls(domain, label="zero")


@dataclass(frozen=True)
class GridSpec:
    """
    Resolution of a solve: spatial step h, optional time step dt (CFL
    default otherwise) and optional bounding box shared between solves.
    """
    h: float
    dt: Optional[float] = None
    bbox: Optional[tuple] = None


@dataclass(frozen=True, eq=False)
class GridGeometry:
    """
    Cartesian grid of the wave solver and the classification of its nodes.

    Masks: `active` nodes are strictly inside, `dirichlet` nodes lie on the
    boundary, `imposed` is the subset of active nodes whose value is
    interpolated from the boundary, `ghost` nodes are outside nodes read by
    the stencils of free nodes.
    """
    axes: tuple
    h: float
    level: np.ndarray
    active: np.ndarray
    dirichlet: np.ndarray
    imposed: np.ndarray
    ghost: np.ndarray

    @property
    def shape(self) -> tuple:
        return self.level.shape

    @property
    def free(self) -> np.ndarray:
        return self.active & ~self.imposed

    @property
    def closure(self) -> np.ndarray:
        return self.active | self.dirichlet

    @property
    def support(self) -> np.ndarray:
        return self.active | self.dirichlet | self.ghost

    def points(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def index_of(self, axis: int, coordinate: float) -> int:
        return int(round((coordinate - self.axes[axis][0]) / self.h))


@dataclass(frozen=True, eq=False)
class WaveField:
    """
    Full space-time history of a discrete solution.

    values has shape (Nt + 1, *grid.shape); values[k] is the solution at
    times[k], including the boundary and ghost nodes used by the stencils.
    """
    values: np.ndarray
    times: np.ndarray
    grid: GridGeometry
    domain: Domain
    anisotropy: AnisotropyField
    boundary_data: Optional[BoundaryData] = None
    dt: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def dim(self) -> int:
        return self.domain.dim

    def time_index(self, t: float) -> int:
        index = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[index] - t) > 1e-9 * max(1.0, self.T):
            raise ValidationError(f"t={t} is not a time level of the field", t=t)
        return index

    def at(self, t: float) -> np.ndarray:
        return self.values[self.time_index(t)]


@dataclass(frozen=True, eq=False)
class FluxTrace:
    """
    Conormal flux A grad u . nu on the nodes of Sigma over time.

    values has shape (Nt + 1, m); weights are the surface quadrature
    weights dS of the m nodes.
    """
    times: np.ndarray
    points: np.ndarray
    arclength: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    sigma: SigmaPortion
    dim: int = 2

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def measure(self) -> float:
        return float(np.sum(self.weights))


@dataclass(frozen=True, eq=False)
class FbiField:
    """
    FBI transform U(x, y) = sqrt(mu / 2 pi) int e^{-mu (iy + tau - t)^2 / 2} u(x, t) dt.

    values has shape (len(y), *spatial_shape) and is complex. d2y_values, when
    present, holds the y-derivative taken through the kernel.
    """
    values: np.ndarray
    y: np.ndarray
    mu: float
    tau: float
    T: float
    grid: Optional[GridGeometry] = None
    d2y_values: Optional[np.ndarray] = None
    quadrature_nodes: int = 0

    @property
    def spatial_shape(self) -> tuple:
        return self.values.shape[1:]
