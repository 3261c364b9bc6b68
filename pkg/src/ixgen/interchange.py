"""Fully realized 3D interchange, ready for export."""

from __future__ import annotations

from dataclasses import dataclass, field

from .geometry import BezierSpline, CurveMetrics
from .sampling import InterchangeFeature
from .topology import EdgeLabel


@dataclass(frozen=True)
class RoadGeometry:
    centerline: BezierSpline
    lane_count: int
    lane_width: float


@dataclass(frozen=True)
class RampGeometry:
    spline: BezierSpline
    achieved: CurveMetrics
    target_radius: float
    target_slope: float
    success: bool
    penalty_total: float
    generations: int


@dataclass(frozen=True)
class Connection:
    """One topology edge realized in space.

    ``host`` names the vertex the attachment sits on, ``param`` the curve/line
    parameter of the attachment point, and ``point`` the attachment pose
    position the ramp endpoint coincides with.
    """

    source: str
    target: str
    label: EdgeLabel
    host: str
    param: float
    point: tuple[float, float, float]


@dataclass(frozen=True)
class ConcreteInterchange:
    id: str
    topology_class: int
    feature: InterchangeFeature
    roads: dict[str, RoadGeometry]
    ramps: dict[str, RampGeometry]
    connections: tuple[Connection, ...] = field(default_factory=tuple)

    @property
    def success(self) -> bool:
        return all(r.success for r in self.ramps.values())
