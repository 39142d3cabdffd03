import numpy as np
import pytest
from numpy.polynomial import Polynomial

from wavescope.core.entities.fields import AnisotropyField, BoundaryData
from wavescope.core.entities.records import Calibration
from wavescope.modules.domain_geometry_module import DomainGeometryModule
from wavescope.modules.fbi_transform_module import FbiTransformModule
from wavescope.modules.smallness_propagation_module import SmallnessPropagationModule
from wavescope.modules.stability_harness_module import StabilityHarnessModule
from wavescope.modules.wave_forward_module import WaveForwardModule

RHO0 = 0.25
T_SEVEN = Polynomial([0.0] * 7 + [1.0])


@pytest.fixture
def geometry():
    return DomainGeometryModule()


@pytest.fixture
def wave():
    return WaveForwardModule()


@pytest.fixture
def fbi():
    return FbiTransformModule()


@pytest.fixture
def smallness():
    return SmallnessPropagationModule(Calibration())


@pytest.fixture
def harness(geometry, wave):
    return StabilityHarnessModule(geometry, wave, Calibration())


@pytest.fixture
def identity():
    return AnisotropyField.identity(2, RHO0)


@pytest.fixture
def unit_square(geometry):
    """Unit square without charts; Sigma is chosen automatically."""
    return geometry.build_graph_domain([], RHO0, 1.0, box=((0.0, 0.0), (1.0, 1.0)), name="unit_square")


@pytest.fixture
def charted_square(geometry):
    """Unit square whose bottom face carries one flat inaccessible chart."""
    chart = geometry.make_chart("bottom", axis=1, side=-1, center=[0.5], radius=0.25, spacing=1.0 / 128.0)
    return geometry.build_graph_domain([chart], RHO0, 1.0, box=((0.0, 0.0), (1.0, 1.0)), name="charted_square")


def top_bump(center=0.5, width=0.2):
    """Smooth bump on the top face of the unit square."""
    def spatial(points):
        points = np.asarray(points, dtype=float)
        s = np.hypot(points[..., 0] - center, points[..., 1] - 1.0) / width
        out = np.zeros(s.shape)
        inside = s < 1.0
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
        return out
    return spatial


@pytest.fixture
def top_data(wave, charted_square):
    return wave.make_separable_data(charted_square, top_bump(), T_SEVEN, t1=1.0, label="top_t7")


@pytest.fixture
def zero_data(unit_square):
    return BoundaryData.zero(unit_square)


def traveling_front(speed=1.0):
    """max(t - x1 / speed, 0)^6: zero Cauchy data on x1 >= 0, C^5 across the front."""
    def exact(points, t):
        return np.maximum(t - np.asarray(points, dtype=float)[..., 0] / speed, 0.0) ** 6
    return exact


@pytest.fixture
def front():
    return traveling_front


@pytest.fixture
def front_data(unit_square):
    return BoundaryData(unit_square, func=traveling_front(), label="front")
