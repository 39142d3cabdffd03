# wavescope/util/errors.py

class WavescopeError(Exception):
    """
    Base class of every error raised by the laboratory.

    Each subclass carries a machine-readable category so the runner can
    surface failures without parsing messages.

    Args:
        message (str): Human readable description.
        **context: Identifiers that locate the failure (chart_id,
                   perturbation_id, ...).
    """
    category = "wavescope_error"

    def __init__(self, message: str, **context):
        super().__init__(message)
        self.message = message
        self.context = dict(context)

    def to_dict(self) -> dict:
        return {"category": self.category, "message": self.message, "context": self.context}

    def with_context(self, **context) -> "WavescopeError":
        self.context.update(context)
        return self


# --- domain_geometry ---

class ChartViolation(WavescopeError):
    category = "chart_violation"


class EmptyAccessiblePortion(WavescopeError):
    category = "empty_accessible_portion"


class DegenerateDomain(WavescopeError):
    category = "degenerate_domain"


class NotRelativeGraphs(WavescopeError):
    category = "not_relative_graphs"


class ConeAngleOrder(WavescopeError):
    category = "cone_angle_order"


class NotConnected(WavescopeError):
    category = "not_connected"


# --- wave_forward ---

class CflViolation(WavescopeError):
    category = "cfl_violation"


class NonconformingBoundary(WavescopeError):
    category = "nonconforming_boundary"


class StencilOutOfDomain(WavescopeError):
    category = "stencil_out_of_domain"


class GridMismatch(WavescopeError):
    category = "grid_mismatch"


class InsufficientSmoothness(WavescopeError):
    category = "insufficient_smoothness"


class FlatData(WavescopeError):
    category = "flat_data"


# --- fbi_transform ---

class QuadratureUnderResolved(WavescopeError):
    category = "quadrature_under_resolved"


class GridTooCoarse(WavescopeError):
    category = "grid_too_coarse"


# --- smallness_propagation ---

class DeltaOutOfRange(WavescopeError):
    category = "delta_out_of_range"


class DegenerateRadii(WavescopeError):
    category = "degenerate_radii"


class NotASolution(WavescopeError):
    category = "not_a_solution"


class ContractionViolated(WavescopeError):
    category = "contraction_violated"


class ThetaNonpositive(WavescopeError):
    category = "theta_nonpositive"


# --- stability_harness ---

class EpsilonTooLarge(WavescopeError):
    category = "epsilon_too_large"


class TimeTooShort(WavescopeError):
    category = "time_too_short"


class InsufficientData(WavescopeError):
    category = "insufficient_data"


# --- runner ---

class ParseError(WavescopeError):
    category = "parse_error"


class ValidationError(WavescopeError):
    category = "validation_error"
