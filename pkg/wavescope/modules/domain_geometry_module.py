# wavescope/modules/domain_geometry_module.py

import logging
import math
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np
from scipy.spatial import cKDTree

from ..core.entities.domain import (BallChain, BoundaryChart, ConeParams, Domain,
                                    RelativeGraphReport, SigmaPortion)
from ..util.constants import (CHART_NORM_SLACK, CONE_A, CONE_B, CONE_Q, D0_FRACTION,
                              PATH_GRAPH_SPACING_FRACTION, RELATIVE_GRAPH_ALPHA)
from ..util.errors import (ChartViolation, ConeAngleOrder, DegenerateDomain,
                           EmptyAccessiblePortion, NotConnected, NotRelativeGraphs, ValidationError)
from ..util.helpers import packing_constant
from ..util.pathfinding import Pathfinding

logger = logging.getLogger(__name__)


def bump_profile(coords: np.ndarray, amplitude: float, center: float = 0.0, width: float = 1.0) -> np.ndarray:
    """
    Smooth compactly supported bump amplitude * exp(1 - 1 / (1 - s^2)),
    s = (u - center) / width. Peak value `amplitude` at the center.
    """
    coords = np.asarray(coords, dtype=float)
    s = (coords - center) / width
    if s.ndim > 1:
        s = np.sqrt(np.sum(s ** 2, axis=-1))
    out = np.zeros(s.shape)
    inside = np.abs(s) < 1.0
    out[inside] = amplitude * np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


class DomainGeometryModule:
    """
    Builds and validates graph domains, measures distances between them and
    constructs the ball chains used for smallness propagation.
    """
    def __init__(self, norm_slack: float = CHART_NORM_SLACK, d0_fraction: float = D0_FRACTION,
                 alpha: float = RELATIVE_GRAPH_ALPHA):
        """
        Initializes the DomainGeometryModule.

        Args:
            norm_slack (float): Relative slack on the chart norm bound E rho0.
            d0_fraction (float): d0 of the relative-graph comparison, as a fraction of rho0.
            alpha (float): Hoelder exponent for gamma_{1,alpha}.
        """
        self.norm_slack = norm_slack
        self.d0_fraction = d0_fraction
        self.alpha = alpha
        logger.info("DomainGeometryModule initialized.")

    # ------------------------------------------------------------------
    # Charts and domains
    # ------------------------------------------------------------------

    def chart_norm_terms(self, chart: BoundaryChart, rho0: float) -> dict:
        """
        The three terms of the scaled C^{1,1} norm
        sup|phi| + rho0 sup|grad phi| + rho0^2 sup|grad^2 phi|, by finite
        differences on the samples.
        """
        phi = np.nan_to_num(np.asarray(chart.phi, dtype=float))
        h = chart.spacing
        gradients = np.gradient(phi, h, edge_order=2) if phi.ndim == 1 else np.gradient(phi, h, h, edge_order=2)
        if phi.ndim == 1:
            gradients = [gradients]
        gradient_norm = np.sqrt(sum(g ** 2 for g in gradients))
        hessian_norm = np.zeros_like(phi)
        for g in gradients:
            seconds = np.gradient(g, h, edge_order=2) if phi.ndim == 1 else np.gradient(g, h, h, edge_order=2)
            if phi.ndim == 1:
                seconds = [seconds]
            hessian_norm = hessian_norm + sum(s ** 2 for s in seconds)
        hessian_norm = np.sqrt(hessian_norm)
        return {
            "sup": float(np.max(np.abs(phi))),
            "gradient": rho0 * float(np.max(gradient_norm)),
            "hessian": rho0 ** 2 * float(np.max(hessian_norm)),
        }

    def check_chart(self, chart: BoundaryChart, rho0: float, E: float,
                    require_normalized: bool = True, require_rim: bool = False) -> dict:
        """
        Validates one chart profile.

        Args:
            require_normalized (bool): Check phi(0) = 0 and grad phi(0) = 0.
            require_rim (bool): Also check that the profile vanishes at the
                                chart rim (seamless attachment to the box face).

        Raises:
            ChartViolation: The norm exceeds E rho0 (beyond the slack), a
                            normalized chart has phi(0) or grad phi(0)
                            nonzero, or require_rim is set and the profile
                            does not vanish at the rim.
        """
        terms = self.chart_norm_terms(chart, rho0)
        norm = sum(terms.values())
        bound = E * rho0
        if norm > bound * (1.0 + self.norm_slack):
            worst = max(terms, key=terms.get)
            raise ChartViolation(
                f"chart '{chart.chart_id}': C^(1,1) norm {norm:.6g} exceeds E rho0 = {bound:.6g} "
                f"(largest term: {worst} = {terms[worst]:.6g})",
                chart_id=chart.chart_id, norm=norm, bound=bound, term=worst, terms=terms,
            )

        phi = np.nan_to_num(np.asarray(chart.phi, dtype=float))
        rim_tolerance = 1e-6 * rho0
        if require_rim:
            rim = np.concatenate([phi[:2], phi[-2:]]) if phi.ndim == 1 else np.concatenate(
                [phi[:2].ravel(), phi[-2:].ravel(), phi[:, :2].ravel(), phi[:, -2:].ravel()])
            if np.max(np.abs(rim)) > rim_tolerance:
                raise ChartViolation(f"chart '{chart.chart_id}': profile does not vanish at the chart rim",
                                     chart_id=chart.chart_id, term="rim")

        if require_normalized:
            evaluate = chart.interpolant()
            h = chart.spacing
            if phi.ndim == 1:
                value = float(evaluate(np.array([0.0]))[0])
                slope = float((evaluate(np.array([h]))[0] - evaluate(np.array([-h]))[0]) / (2.0 * h))
            else:
                value = float(evaluate(np.zeros((1, 2)))[0])
                offsets = np.array([[h, 0.0], [-h, 0.0], [0.0, h], [0.0, -h]])
                p = evaluate(offsets)
                slope = float(math.hypot(p[0] - p[1], p[2] - p[3]) / (2.0 * h))
            if abs(value) > rim_tolerance or abs(slope) > 1e-6 + 1e-3 * h:
                raise ChartViolation(f"chart '{chart.chart_id}': phi(0) = {value:.3g}, |grad phi(0)| = {slope:.3g}; "
                                     "a normalized chart needs both zero",
                                     chart_id=chart.chart_id, term="normalization")
        return terms

    def build_graph_domain(self, charts: Sequence[BoundaryChart], rho0: float, E: float,
                           M: Optional[float] = None, box: Optional[tuple] = None,
                           sigma: Optional[SigmaPortion] = None, dim: Optional[int] = None,
                           require_normalized: bool = True, require_rim: bool = False,
                           name: str = "domain") -> Domain:
        """
        Builds a validated charted-box domain.

        Args:
            charts: Boundary charts; each attaches to a face of the box.
            rho0 (float): Length scale.
            E (float): C^{1,1} constant.
            M (float): Volume constant; when None it is taken as |box| / rho0^n.
            box (tuple): (lower, upper) corners. When None a box of side
                         4 max(rho0, radius) around the first chart is used.
            sigma (SigmaPortion): Measurement portion; selected automatically when None.
            require_normalized (bool): Check phi(0) = 0 and grad phi(0) = 0.
            require_rim (bool): Check that every profile vanishes at its rim.

        Returns:
            Domain: The validated domain.
        """
        charts = tuple(charts)
        if not charts and box is None:
            raise DegenerateDomain("a charted domain needs charts or a box")
        if dim is None:
            dim = (charts[0].tangential_dim + 1) if charts else len(box[0])
        for chart in charts:
            self.check_chart(chart, rho0, E, require_normalized, require_rim)

        if box is None:
            chart = charts[0]
            extent = 2.0 * max(rho0, chart.radius)
            lower, upper = np.zeros(dim), np.zeros(dim)
            tangential_axes = [a for a in range(dim) if a != chart.axis]
            lower[tangential_axes] = np.asarray(chart.center) - extent
            upper[tangential_axes] = np.asarray(chart.center) + extent
            lower[chart.axis], upper[chart.axis] = (0.0, extent) if chart.side < 0 else (-extent, 0.0)
            box = (tuple(lower), tuple(upper))

        lower, upper = (tuple(float(v) for v in corner) for corner in box)
        if any(hi <= lo for lo, hi in zip(lower, upper)):
            raise DegenerateDomain("box corners are not ordered", box=[lower, upper])
        if M is None:
            M = float(np.prod(np.subtract(upper, lower))) / rho0 ** dim

        domain = Domain(dim, rho0, E, M, "box", charts, lower, upper, sigma=sigma, name=name)
        resolution = rho0 / 16.0
        volume = domain.volume(min(resolution, min(np.subtract(upper, lower)) / 64.0))
        if volume <= 0.0:
            raise DegenerateDomain("domain has empty interior", name=name)
        if volume > M * rho0 ** dim * (1.0 + self.norm_slack):
            raise DegenerateDomain(f"|Omega| = {volume:.6g} exceeds M rho0^n = {M * rho0 ** dim:.6g}",
                                   name=name)

        if sigma is None:
            sigma = self.select_sigma(domain)
            domain = domain.with_sigma(sigma)
        else:
            self.check_sigma(domain)
        logger.info("Built domain '%s' (n=%d, rho0=%g, E=%g, %d charts, Sigma=%s).",
                    name, dim, rho0, E, len(charts), domain.sigma_patch)
        return domain

    def box_domain(self, lower, upper, rho0: float = 1.0, E: float = 1.0, M: Optional[float] = None,
                   charts: Sequence[BoundaryChart] = (), sigma: Optional[SigmaPortion] = None,
                   name: str = "box") -> Domain:
        """A box (optionally with charts) without the Sigma selection."""
        lower = tuple(float(v) for v in lower)
        upper = tuple(float(v) for v in upper)
        dim = len(lower)
        if M is None:
            M = float(np.prod(np.subtract(upper, lower))) / rho0 ** dim
        return Domain(dim, rho0, E, M, "box", tuple(charts), lower, upper, sigma=sigma, name=name)

    def ball_domain(self, center, radius: float, rho0: Optional[float] = None, E: float = 1.0,
                    M: Optional[float] = None, name: str = "ball") -> Domain:
        center = tuple(float(v) for v in center)
        dim = len(center)
        rho0 = radius if rho0 is None else rho0
        if M is None:
            M = (2.0 * radius) ** dim / rho0 ** dim
        return Domain(dim, rho0, E, M, "ball", ball_center=center, ball_radius=float(radius), name=name)

    def make_chart(self, chart_id: str, axis: int, side: int, center, radius: float, spacing: float,
                   profile=None, accessible: bool = False) -> BoundaryChart:
        """
        Samples a chart on the uniform grid of the given spacing. profile is
        None (flat), an array of samples, or a callable of the local coordinate.
        """
        center = tuple(np.atleast_1d(np.asarray(center, dtype=float)))
        count = int(round(2.0 * radius / spacing)) + 1
        coords = np.linspace(-radius, radius, count)
        if len(center) == 1:
            local = coords
        else:
            local = np.stack(np.meshgrid(*([coords] * len(center)), indexing="ij"), axis=-1)
        if profile is None:
            phi = np.zeros(local.shape[:len(center)])
        elif callable(profile):
            phi = np.asarray(profile(local), dtype=float)
        else:
            phi = np.asarray(profile, dtype=float)
        return BoundaryChart(chart_id, axis, side, center, float(radius), phi, accessible)

    def perturb_chart(self, domain: Domain, chart_id: str, amplitude: float, center: float = 0.0,
                      width: Optional[float] = None, name: Optional[str] = None) -> Domain:
        """
        Copy of the domain whose chart `chart_id` gets a bump of the given
        amplitude added to its profile.
        """
        chart = domain.chart(chart_id)
        width = chart.radius * 0.8 if width is None else width
        coords = chart.coords
        if chart.tangential_dim == 1:
            bump = bump_profile(coords, amplitude, center, width)
        else:
            mesh = np.stack(np.meshgrid(coords, coords, indexing="ij"), axis=-1)
            bump = bump_profile(mesh, amplitude, np.asarray(center), width)
        perturbed = chart.with_profile(np.asarray(chart.phi) + bump)
        charts = [perturbed if c.chart_id == chart_id else c for c in domain.charts]
        return domain.with_charts(charts, name or f"{domain.name}+{chart_id}:{amplitude:g}")

    # ------------------------------------------------------------------
    # Sigma
    # ------------------------------------------------------------------

    def _inaccessible_tree(self, domain: Domain, resolution: float):
        points, accessible = domain.boundary_samples(resolution)
        inaccessible = points[~accessible]
        tree = cKDTree(inaccessible) if inaccessible.size else None
        return points, accessible, tree

    def _face_membership(self, domain: Domain, points: np.ndarray, axis: int, side: int) -> np.ndarray:
        base = domain.box_lower[axis] if side < 0 else domain.box_upper[axis]
        return np.abs(points[:, axis] - base) <= 1e-12 * max(1.0, abs(base))

    def _sigma_mask(self, domain: Domain, points: np.ndarray, sigma: SigmaPortion) -> np.ndarray:
        on_face = self._face_membership(domain, points, sigma.axis, sigma.side)
        tangential = np.delete(points, sigma.axis, axis=1)
        lower, upper = np.asarray(sigma.lower), np.asarray(sigma.upper)
        tol = 1e-12 * max(1.0, domain.rho0)
        inside = np.all((tangential >= lower - tol) & (tangential <= upper + tol), axis=1)
        return on_face & inside

    def check_sigma(self, domain: Domain, resolution: Optional[float] = None) -> tuple:
        """
        Checks Sigma within Gamma^(a)_{rho0} and that it contains a boundary
        ball of radius rho0 around some P0.

        Returns:
            tuple: The center P0.

        Raises:
            EmptyAccessiblePortion: Either condition fails.
        """
        sigma = domain.sigma
        if sigma is None:
            raise EmptyAccessiblePortion("domain has no measurement portion", name=domain.name)
        resolution = resolution or domain.rho0 / 16.0
        points, _, tree = self._inaccessible_tree(domain, resolution)
        mask = self._sigma_mask(domain, points, sigma)
        if not np.any(mask):
            raise EmptyAccessiblePortion("Sigma contains no boundary point", sigma_id=sigma.sigma_id)
        if tree is not None:
            distances, _ = tree.query(points[mask])
            if np.min(distances) < domain.rho0 - resolution:
                raise EmptyAccessiblePortion(
                    f"Sigma comes within {np.min(distances):.4g} of Gamma^(i) (needs rho0 = {domain.rho0:g})",
                    sigma_id=sigma.sigma_id)
        center = self._ball_center_in(points, mask, domain.rho0)
        if center is None:
            raise EmptyAccessiblePortion("Sigma contains no boundary ball of radius rho0",
                                         sigma_id=sigma.sigma_id)
        return tuple(center)

    def _ball_center_in(self, points: np.ndarray, mask: np.ndarray, radius: float):
        all_tree = cKDTree(points)
        candidates = np.flatnonzero(mask)
        # Centers closest to the middle of Sigma first
        middle = points[mask].mean(axis=0)
        order = candidates[np.lexsort((np.linalg.norm(points[candidates] - middle, axis=1),))]
        for index in order:
            neighbours = all_tree.query_ball_point(points[index], radius * (1.0 - 1e-9))
            if np.all(mask[neighbours]):
                return points[index]
        return None

    def select_sigma(self, domain: Domain) -> SigmaPortion:
        """
        Picks Sigma as a tangential window of half width rho0 around the flat
        accessible boundary point farthest from Gamma^(i).

        Raises:
            EmptyAccessiblePortion: No face point qualifies.
        """
        resolution = domain.rho0 / 16.0
        points, accessible, tree = self._inaccessible_tree(domain, resolution)
        if tree is None:
            distances = np.full(points.shape[0], np.inf)
        else:
            distances, _ = tree.query(points)
        lower, upper = np.asarray(domain.box_lower), np.asarray(domain.box_upper)

        best = None
        for axis, side in domain.faces():
            on_face = self._face_membership(domain, points, axis, side) & accessible
            on_face &= distances >= 2.0 * domain.rho0 - resolution
            for index in np.flatnonzero(on_face):
                tangential = np.delete(points[index], axis)
                t_lower = np.delete(lower, axis)
                t_upper = np.delete(upper, axis)
                if np.any(tangential - domain.rho0 < t_lower - 1e-12) or np.any(tangential + domain.rho0 > t_upper + 1e-12):
                    continue
                key = (-min(distances[index], 1e300), tuple(points[index]))
                if best is None or key < best[0]:
                    best = (key, axis, side, tangential)
        if best is None:
            raise EmptyAccessiblePortion("no accessible face point is 2 rho0 away from Gamma^(i)",
                                         name=domain.name)
        _, axis, side, tangential = best
        sigma = SigmaPortion("sigma", axis, side, tuple(tangential - domain.rho0), tuple(tangential + domain.rho0))
        self.check_sigma(domain.with_sigma(sigma), resolution)
        logger.debug("Selected Sigma on face (%d, %+d) around %s.", axis, side, tangential)
        return sigma

    # ------------------------------------------------------------------
    # Distances
    # ------------------------------------------------------------------

    def _directed_distance(self, samples: np.ndarray, target: Domain, target_tree) -> float:
        if samples.size == 0:
            raise DegenerateDomain("empty sample set")
        outside = ~target.contains(samples)
        if not np.any(outside):
            return 0.0
        distances, _ = target_tree.query(samples[outside])
        return float(np.max(distances))

    def hausdorff_distance(self, om1: Domain, om2: Domain, resolution: float) -> float:
        """
        d_H of the closures: max of the two directed sup-inf distances,
        by dense sampling (error within 2 resolution).
        """
        if resolution <= 0.0:
            raise ValidationError("resolution must be positive", resolution=resolution)
        samples1, samples2 = om1.closure_samples(resolution), om2.closure_samples(resolution)
        tree1 = cKDTree(om1.boundary_samples(resolution)[0])
        tree2 = cKDTree(om2.boundary_samples(resolution)[0])
        return max(self._directed_distance(samples1, om2, tree2),
                   self._directed_distance(samples2, om1, tree1))

    def modified_distance(self, om1: Domain, om2: Domain, resolution: float) -> float:
        """As hausdorff_distance with the sup over boundary samples only."""
        if resolution <= 0.0:
            raise ValidationError("resolution must be positive", resolution=resolution)
        boundary1, boundary2 = om1.boundary_samples(resolution)[0], om2.boundary_samples(resolution)[0]
        return max(self._directed_distance(boundary1, om2, cKDTree(boundary2)),
                   self._directed_distance(boundary2, om1, cKDTree(boundary1)))

    # ------------------------------------------------------------------
    # Relative graphs
    # ------------------------------------------------------------------

    def _holder_seminorm(self, gradient: np.ndarray, coords: np.ndarray, alpha: float) -> float:
        gradient = gradient.reshape(gradient.shape[0], -1)
        coords = coords.reshape(coords.shape[0], -1)
        if gradient.shape[0] > 1500:
            keep = np.linspace(0, gradient.shape[0] - 1, 1500).astype(int)
            gradient, coords = gradient[keep], coords[keep]
        differences = np.linalg.norm(gradient[:, None, :] - gradient[None, :, :], axis=-1)
        distances = np.linalg.norm(coords[:, None, :] - coords[None, :, :], axis=-1)
        off_diagonal = distances > 0.0
        if not np.any(off_diagonal):
            return 0.0
        return float(np.max(differences[off_diagonal] / distances[off_diagonal] ** alpha))

    def relative_graph_report(self, om1: Domain, om2: Domain, alpha: Optional[float] = None,
                              resolution: Optional[float] = None) -> RelativeGraphReport:
        """
        Compares two charted domains in their common charts.

        Raises:
            NotRelativeGraphs: The domains do not share a chart atlas, or a
                               profile difference exceeds r0 / 2.
        """
        alpha = self.alpha if alpha is None else alpha
        if om1.kind != "box" or om2.kind != "box":
            raise NotRelativeGraphs("only charted-box domains carry a common chart atlas")
        if om1.dim != om2.dim or om1.box_lower != om2.box_lower or om1.box_upper != om2.box_upper:
            raise NotRelativeGraphs("domains are built on different boxes")
        if om1.rho0 != om2.rho0 or om1.E != om2.E:
            raise NotRelativeGraphs("domains have different a-priori constants")
        r0 = om1.rho0 / om1.E

        gamma0, gamma1 = 0.0, 0.0
        charts2 = {c.chart_id: c for c in om2.charts}
        if set(charts2) != {c.chart_id for c in om1.charts}:
            raise NotRelativeGraphs("chart sets differ")
        for chart1 in om1.charts:
            chart2 = charts2[chart1.chart_id]
            if (chart1.axis, chart1.side, tuple(chart1.center), chart1.radius, np.shape(chart1.phi)) != \
                    (chart2.axis, chart2.side, tuple(chart2.center), chart2.radius, np.shape(chart2.phi)):
                raise NotRelativeGraphs(f"chart '{chart1.chart_id}' is placed differently", chart_id=chart1.chart_id)
            difference = np.nan_to_num(np.asarray(chart1.phi) - np.asarray(chart2.phi))
            sup = float(np.max(np.abs(difference)))
            if sup > r0 / 2.0:
                raise NotRelativeGraphs(f"chart '{chart1.chart_id}': |phi1 - phi2| = {sup:.4g} > r0/2",
                                        chart_id=chart1.chart_id)
            h = chart1.spacing
            coords = chart1.coords
            if difference.ndim == 1:
                gradient = np.gradient(difference, h, edge_order=2)[:, None]
                points = coords[:, None]
            else:
                gradient = np.stack(np.gradient(difference, h, h, edge_order=2), axis=-1).reshape(-1, 2)
                points = np.stack(np.meshgrid(coords, coords, indexing="ij"), axis=-1).reshape(-1, 2)
            holder = self._holder_seminorm(gradient, points, alpha)
            norm = sup + r0 * float(np.max(np.linalg.norm(gradient, axis=1))) + r0 ** (1.0 + alpha) * holder
            gamma0 = max(gamma0, sup)
            gamma1 = max(gamma1, norm)

        resolution = resolution or om1.rho0 / 64.0
        d_h = self.hausdorff_distance(om1, om2, resolution)
        d_m = self.modified_distance(om1, om2, resolution)
        d0 = self.d0_fraction * om1.rho0
        ratio = gamma0 / d_h if d_h > 0.0 else (0.0 if gamma0 == 0.0 else math.inf)
        return RelativeGraphReport(gamma0, gamma1, alpha, r0, d_h, d_m, d0, d_h <= d0, ratio)

    # ------------------------------------------------------------------
    # Ball chains
    # ------------------------------------------------------------------

    @staticmethod
    def cone_slope_for(varsigma: float, a: float = CONE_A, b: float = CONE_B) -> float:
        """Slope L_s = cot(gamma) of the cone with sin(gamma) = 1 - a b varsigma."""
        sin_gamma = 1.0 - a * b * varsigma
        return math.sqrt(1.0 - sin_gamma ** 2) / sin_gamma

    def cone_ball_chain(self, s: float, L_s: float, rho0: float, varsigma: float, count: int = 11,
                        vertex=None, axis=None, dim: int = 2, q: float = CONE_Q, a: float = CONE_A,
                        b: float = CONE_B) -> BallChain:
        """
        Geometric chain of balls inside the cone {L_s |x'| <= x_n <= s L_s rho0 / 2}.

        Args:
            s (float): Height parameter of the cone.
            L_s (float): Slope; gamma = arctan(1 / L_s).
            rho0 (float): Length scale.
            varsigma (float): sin(gamma1) = 1 - varsigma, sin(gamma2) = 1 - a varsigma.
            count (int): Number of balls generated.
            vertex: Cone vertex (origin by default).
            axis: Unit cone axis (e_n by default).

        Raises:
            ConeAngleOrder: gamma1 < gamma2 < gamma fails or nesting does not hold.
        """
        if not 0.0 < varsigma <= 0.25:
            raise ConeAngleOrder(f"varsigma = {varsigma} outside (0, 1/4]")
        if L_s <= 0.0 or s <= 0.0:
            raise ConeAngleOrder("cone slope and height must be positive")

        sin1 = Fraction(1) - Fraction(varsigma)
        sin2 = Fraction(1) - Fraction(a) * Fraction(varsigma)
        sin_gamma_sq = Fraction(1) / (1 + Fraction(L_s) ** 2)
        if not (sin1 < sin2 and sin2 ** 2 < sin_gamma_sq):
            raise ConeAngleOrder(
                f"need gamma1 < gamma2 < gamma: sin gamma1={float(sin1):.8g}, sin gamma2={float(sin2):.8g}, "
                f"sin gamma={math.sqrt(float(sin_gamma_sq)):.8g} (L_s too large for varsigma)",
                L_s=L_s, varsigma=varsigma)
        chi = (1 - sin2) / (1 - sin1)
        # B_{r_{k+1}}(w_{k+1}) in B_{rho_k}(w_k) <=> 1 - chi + chi sin gamma1 <= sin gamma2
        if not 1 - chi + chi * sin1 <= sin2:
            raise ConeAngleOrder("ball nesting fails for this choice of a", chi=float(chi))

        gamma = math.atan(1.0 / L_s)
        gamma1, gamma2 = math.asin(float(sin1)), math.asin(float(sin2))
        sin_gamma = math.sin(gamma)
        l1 = (s * L_s * rho0 / 2.0) / (1.0 + sin_gamma)
        h = (sin_gamma - float(sin1)) / (1.0 + sin_gamma)
        delta = (q / 2.0) * (sin_gamma - float(sin2)) / sin_gamma

        vertex = np.zeros(dim) if vertex is None else np.asarray(vertex, dtype=float)
        axis = np.eye(dim)[-1] if axis is None else np.asarray(axis, dtype=float) / np.linalg.norm(axis)
        lengths = l1 * float(chi) ** np.arange(count)
        params = ConeParams(s, L_s, rho0, varsigma, gamma, gamma1, gamma2, float(chi), h, l1, delta,
                            dim, q, a, b)
        logger.debug("Cone chain: chi=%g, l1=%g, h=%g, %d balls.", float(chi), l1, h, count)
        return BallChain(
            kind="cone_chain",
            centers=vertex + lengths[:, None] * axis,
            small_radii=lengths * float(sin1),
            mid_radii=lengths * float(sin2),
            large_radii=lengths * sin_gamma,
            cone=params,
        )

    def interior_mask(self, domains: Union[Domain, Sequence[Domain]], points: np.ndarray, r: float) -> np.ndarray:
        """Points of the r-interior {x : dist(x, complement) > r} of the intersection."""
        domains = [domains] if isinstance(domains, Domain) else list(domains)
        points = np.asarray(points, dtype=float)
        mask = np.ones(points.shape[0], dtype=bool)
        for domain in domains:
            inside = domain.contains(points, closed=False)
            boundary, _ = domain.boundary_samples(r / 16.0)
            distances, _ = cKDTree(boundary).query(points)
            mask &= inside & (distances >= r)
        return mask

    def path_ball_chain(self, host: Union[Domain, Sequence[Domain]], start, end, r: float,
                        rho0: Optional[float] = None) -> BallChain:
        """
        Chain of balls along a shortest path of the r-interior of the host
        region (a domain or the intersection of several), one center every
        r/2 of arc length, end point included.

        Raises:
            NotConnected: start and end are not joined inside the r-interior.
        """
        domains = [host] if isinstance(host, Domain) else list(host)
        dim = domains[0].dim
        if dim != 2:
            raise NotConnected("path chains are built on planar connectivity graphs", dim=dim)
        rho0 = domains[0].rho0 if rho0 is None else rho0
        start = np.asarray(start, dtype=float)
        end = np.asarray(end, dtype=float)
        if not np.all(self.interior_mask(domains, np.stack([start, end]), r)):
            raise NotConnected("start or end lies outside the r-interior", r=r)

        if np.allclose(start, end):
            polyline = start[None, :]
        else:
            spacing = PATH_GRAPH_SPACING_FRACTION * r
            lower = np.max([d.bounding_box()[0] for d in domains], axis=0)
            upper = np.min([d.bounding_box()[1] for d in domains], axis=0)
            k_min = np.floor((lower - start) / spacing).astype(int)
            k_max = np.ceil((upper - start) / spacing).astype(int)
            axes = [start[a] + spacing * np.arange(k_min[a], k_max[a] + 1) for a in range(dim)]
            nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
            passable = self.interior_mask(domains, nodes.reshape(-1, dim), r).reshape(nodes.shape[:-1])

            start_node = tuple(-k_min)
            end_node = tuple(np.round((end - start) / spacing).astype(int) - k_min)
            path = Pathfinding(passable).find_path(start_node, end_node)
            if not path:
                raise NotConnected(f"no path at inset r = {r:g} between {start.tolist()} and {end.tolist()}", r=r)
            polyline = np.array([nodes[node] for node in path])
            polyline[0] = start
            if np.linalg.norm(polyline[-1] - end) > 1e-12 * max(1.0, r):
                polyline = np.vstack([polyline, end])

        segment = np.linalg.norm(np.diff(polyline, axis=0), axis=1)
        arclength = np.concatenate([[0.0], np.cumsum(segment)])
        total = float(arclength[-1])
        steps = int(math.ceil(total / (r / 2.0) - 1e-9)) if total > 0.0 else 0
        positions = np.minimum(np.arange(steps + 1) * (r / 2.0), total)
        centers = np.stack([np.interp(positions, arclength, polyline[:, a]) for a in range(dim)], axis=1)

        count = centers.shape[0]
        sigma = r / rho0
        M = max(d.M for d in domains)
        length_bound = packing_constant(dim) * M * sigma ** (-dim)
        logger.info("Path chain: %d centers over length %.4g (bound %.4g).", count, total, length_bound)
        return BallChain(
            kind="path_chain",
            centers=centers,
            small_radii=np.full(count, r / 4.0),
            mid_radii=np.full(count, 3.0 * r / 4.0),
            large_radii=np.full(count, r),
            length_bound=length_bound,
            within_length_bound=count <= length_bound,
        )

    # ------------------------------------------------------------------
    # Export
    # ------------------------------------------------------------------

    def export_domain(self, domain: Domain) -> dict:
        """Self-describing structure of a domain with all a-priori constants."""
        payload = {
            "name": domain.name, "kind": domain.kind, "dim": domain.dim,
            "rho0": domain.rho0, "E": domain.E, "M": domain.M,
        }
        if domain.kind == "ball":
            payload.update({"center": list(domain.ball_center), "radius": domain.ball_radius})
        else:
            payload["box"] = [list(domain.box_lower), list(domain.box_upper)]
            payload["charts"] = [{
                "chart_id": c.chart_id, "axis": c.axis, "side": c.side, "center": list(c.center),
                "radius": c.radius, "accessible": c.accessible,
                "phi": np.nan_to_num(np.asarray(c.phi)).tolist(),
            } for c in domain.charts]
        if domain.sigma is not None:
            s = domain.sigma
            payload["sigma"] = {"sigma_id": s.sigma_id, "axis": s.axis, "side": s.side,
                                "lower": list(s.lower), "upper": list(s.upper)}
        return payload
