"""Cubic Bezier curves/splines, their road-design metrics, and road layout.

Curvature and minimum radius are plan-view (xy projection) quantities, as in
highway design rules; grade is handled separately as |dz/ds| against
horizontal arc length. Arc length is the true 3D length.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np

from .errors import IxgenError
from .topology import LabeledDigraph, VertexKind

C1_ANGLE_TOL = 1e-6  # rad, at spline joints
STRAIGHT_CURVATURE = 1e-9  # below this 1/m the radius is reported as infinite
DEFAULT_SAMPLES_PER_SEGMENT = 100


class SingularTangent(IxgenError):
    """Horizontal speed vanished at a sample: vertical tangent, invalid road."""


class UnsupportedRoadCount(IxgenError):
    """No layout template for this number of one-way roads."""


@dataclass(frozen=True)
class Point3:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (self.x, self.y, self.z)):
            raise ValueError(f"non-finite coordinates: {self}")

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @staticmethod
    def from_array(a) -> "Point3":
        return Point3(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class BezierCurve:
    """Cubic Bezier segment defined by four 3D control points."""

    p0: Point3
    p1: Point3
    p2: Point3
    p3: Point3

    @cached_property
    def matrix(self) -> np.ndarray:
        """Control points as a 4x3 array."""
        return np.stack([p.to_array() for p in (self.p0, self.p1, self.p2, self.p3)])

    def evaluate(self, t: float) -> Point3:
        """Bernstein evaluation B(t) = (1-t)^3 P0 + 3(1-t)^2 t P1 + 3(1-t) t^2 P2 + t^3 P3."""
        _check_t(t)
        u = 1.0 - t
        w = np.array([u**3, 3 * u**2 * t, 3 * u * t**2, t**3])
        return Point3.from_array(w @ self.matrix)

    def derivative(self, t: float) -> np.ndarray:
        _check_t(t)
        u = 1.0 - t
        w = np.array([-3 * u**2, 3 * u**2 - 6 * u * t, 6 * u * t - 3 * t**2, 3 * t**2])
        return w @ self.matrix

    def second_derivative(self, t: float) -> np.ndarray:
        _check_t(t)
        u = 1.0 - t
        w = np.array([6 * u, 6 * t - 12 * u, 6 * u - 12 * t, 6 * t])
        return w @ self.matrix


def _check_t(t: float) -> None:
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"curve parameter {t} outside [0, 1]")


@dataclass(frozen=True)
class BezierSpline:
    """C1 concatenation of cubic segments; joint continuity checked on construction."""

    segments: tuple[BezierCurve, ...]

    def __post_init__(self):
        if not self.segments:
            raise ValueError("spline needs at least one segment")
        for i in range(len(self.segments) - 1):
            a, b = self.segments[i], self.segments[i + 1]
            if a.p3 != b.p0:
                raise ValueError(f"C0 violation at joint {i}: {a.p3} != {b.p0}")
            t_in = a.p3.to_array() - a.p2.to_array()
            t_out = b.p1.to_array() - b.p0.to_array()
            n_in, n_out = np.linalg.norm(t_in), np.linalg.norm(t_out)
            if n_in < 1e-12 or n_out < 1e-12:
                raise ValueError(f"degenerate tangent at joint {i}")
            cosang = float(np.clip(t_in @ t_out / (n_in * n_out), -1.0, 1.0))
            if math.acos(cosang) > C1_ANGLE_TOL:
                raise ValueError(f"C1 violation at joint {i}: angle {math.acos(cosang):.2e} rad")

    @cached_property
    def matrices(self) -> tuple[np.ndarray, ...]:
        return tuple(seg.matrix for seg in self.segments)

    def evaluate(self, t: float) -> Point3:
        """Evaluate with the global parameter t in [0,1] spread evenly over segments."""
        _check_t(t)
        k = len(self.segments)
        i = min(int(t * k), k - 1)
        return self.segments[i].evaluate(t * k - i)

    @property
    def start(self) -> Point3:
        return self.segments[0].p0

    @property
    def end(self) -> Point3:
        return self.segments[-1].p3


@dataclass(frozen=True)
class CurveMetrics:
    min_radius: float  # meters, inf when the path is effectively straight
    max_abs_slope: float  # percent grade
    arc_length: float  # meters, 3D
    curvature_samples: tuple[tuple[float, float], ...]  # (global t, 1/m)


class _Basis:
    """Bernstein value/derivative bases on a fixed t-grid, cached per sample count."""

    _cache: dict[int, "_Basis"] = {}

    def __init__(self, n: int):
        t = np.linspace(0.0, 1.0, n)
        u = 1.0 - t
        self.t = t
        self.b = np.stack([u**3, 3 * u**2 * t, 3 * u * t**2, t**3], axis=1)
        self.db = np.stack(
            [-3 * u**2, 3 * u**2 - 6 * u * t, 6 * u * t - 3 * t**2, 3 * t**2], axis=1
        )
        self.d2b = np.stack([6 * u, 6 * t - 12 * u, 6 * u - 12 * t, 6 * t], axis=1)

    @classmethod
    def get(cls, n: int) -> "_Basis":
        if n not in cls._cache:
            cls._cache[n] = cls(n)
        return cls._cache[n]


def sample_path(matrices, samples_per_segment: int):
    """Sample points/derivatives of concatenated cubic segments.

    Returns (t_global, points, first derivatives, second derivatives) with
    per-segment parameterization in the derivative columns.
    """
    basis = _Basis.get(samples_per_segment)
    k = len(matrices)
    ts, pts, d1s, d2s = [], [], [], []
    for i, P in enumerate(matrices):
        P = np.asarray(P, dtype=float)
        ts.append((i + basis.t) / k)
        pts.append(basis.b @ P)
        d1s.append(basis.db @ P)
        d2s.append(basis.d2b @ P)
    return np.concatenate(ts), np.vstack(pts), np.vstack(d1s), np.vstack(d2s)


def path_metrics_arrays(matrices, samples_per_segment: int):
    """Curvature/slope/speed arrays for raw segment matrices (non-raising).

    Horizontal speed is floored to avoid division blowups; callers that need
    the strict vertical-tangent error use metrics() instead.
    """
    t, _, d1, d2 = sample_path(matrices, samples_per_segment)
    hs2 = d1[:, 0] ** 2 + d1[:, 1] ** 2
    hs2_safe = np.maximum(hs2, 1e-18)
    cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    curvature = np.abs(cross) / hs2_safe**1.5
    slope = 100.0 * np.abs(d1[:, 2]) / np.sqrt(hs2_safe)
    speed3 = np.sqrt(hs2 + d1[:, 2] ** 2)
    n = samples_per_segment
    seg_t = _Basis.get(n).t
    arc = sum(float(np.trapezoid(speed3[i * n : (i + 1) * n], seg_t)) for i in range(len(matrices)))
    return t, curvature, slope, np.sqrt(hs2), arc


def metrics(
    spline: BezierSpline, samples_per_segment: int = DEFAULT_SAMPLES_PER_SEGMENT
) -> CurveMetrics:
    """Minimum plan-view radius, maximum grade, and 3D arc length by sampling."""
    if samples_per_segment < 16:
        raise ValueError("samples_per_segment must be >= 16")
    t, curvature, slope, hspeed, arc = path_metrics_arrays(spline.matrices, samples_per_segment)
    if float(hspeed.min()) < 1e-9:
        i = int(hspeed.argmin())
        raise SingularTangent(f"vertical tangent at t={t[i]:.4f} (horizontal speed {hspeed[i]:.2e})")
    kmax = float(curvature.max())
    min_radius = math.inf if kmax < STRAIGHT_CURVATURE else 1.0 / kmax
    return CurveMetrics(
        min_radius=min_radius,
        max_abs_slope=float(slope.max()),
        arc_length=arc,
        curvature_samples=tuple(zip(t.tolist(), curvature.tolist())),
    )


def straight_spline(start: Point3, end: Point3) -> BezierSpline:
    """Single-segment spline tracing the straight line start -> end exactly."""
    a, b = start.to_array(), end.to_array()
    return BezierSpline(
        segments=(
            BezierCurve(
                start,
                Point3.from_array(a + (b - a) / 3.0),
                Point3.from_array(a + 2.0 * (b - a) / 3.0),
                end,
            ),
        )
    )


def spline_from_matrices(matrices) -> BezierSpline:
    segs = tuple(
        BezierCurve(*(Point3.from_array(row) for row in np.asarray(P, dtype=float)))
        for P in matrices
    )
    return BezierSpline(segments=segs)


# ---------------------------------------------------------------------------
# Road layout
# ---------------------------------------------------------------------------


class LayoutShape(Enum):
    T_SHAPE = "t-shape"
    CROSS_SHAPE = "cross-shape"
    SINGLE = "single"  # degenerate 1-road corpus entries


@dataclass(frozen=True)
class LayoutConfig:
    road_length: float = 1000.0
    median_separation: float = 30.0  # between opposite carriageway centerlines
    level_clearance: float = 8.0  # vertical gap between crossing expressways
    lane_width: float = 3.75
    heading_jitter_deg: float = 4.0  # per-expressway axis rotation range
    center_jitter: float = 25.0  # expressway axis offset range, meters
    length_jitter: float = 80.0


@dataclass(frozen=True)
class RoadLine:
    """Straight one-way road centerline with its cross-section."""

    start: Point3
    end: Point3
    lane_count: int
    lane_width: float

    @cached_property
    def length(self) -> float:
        return float(np.linalg.norm(self.end.to_array() - self.start.to_array()))

    @cached_property
    def direction(self) -> np.ndarray:
        d = self.end.to_array() - self.start.to_array()
        return d / np.linalg.norm(d)

    def point_at(self, t: float) -> np.ndarray:
        a = self.start.to_array()
        return a + t * (self.end.to_array() - a)

    def param_of_projection(self, point_xy) -> float:
        """Parameter of the closest centerline point to a plan-view location."""
        a = self.start.to_array()[:2]
        d = self.end.to_array()[:2] - a
        denom = float(d @ d)
        if denom < 1e-12:
            return 0.5
        return float(np.clip((np.asarray(point_xy) - a) @ d / denom, 0.0, 1.0))

    @property
    def half_width(self) -> float:
        return self.lane_count * self.lane_width / 2.0

    def centerline(self) -> BezierSpline:
        return straight_spline(self.start, self.end)


@dataclass(frozen=True)
class RoadLayout:
    roads: dict[str, RoadLine]
    shape: LayoutShape
    level_clearance: float
    expressways: tuple[tuple[str, ...], ...]


def group_expressways(topology: LabeledDigraph) -> tuple[tuple[str, ...], ...]:
    """Group one-way roads into expressways of at most two opposite roads.

    Roads directly linked by a single ramp are almost always on *different*
    expressways, so the pairing minimizing intra-pair ramp connections is
    chosen; ties resolve in declaration order.
    """
    roads = list(topology.roads)
    links: dict[frozenset, int] = {}
    for ramp in topology.ramps:
        starts = [e.source for e in topology.in_edges[ramp] if e.label.is_out]
        ends = [e.target for e in topology.out_edges[ramp] if not e.label.is_out]
        for s in starts:
            for t in ends:
                if (
                    s != t
                    and topology.kind_by_id.get(s) is VertexKind.ROAD
                    and topology.kind_by_id.get(t) is VertexKind.ROAD
                ):
                    links[frozenset((s, t))] = links.get(frozenset((s, t)), 0) + 1

    def intra(pairing) -> int:
        return sum(links.get(frozenset(p), 0) for p in pairing if len(p) == 2)

    n = len(roads)
    if n == 1:
        return ((roads[0],),)
    if n == 2:
        candidates = [((roads[0], roads[1]),), ((roads[0],), (roads[1],))]
    elif n == 3:
        candidates = []
        for i in range(3):
            pair = tuple(r for k, r in enumerate(roads) if k != i)
            candidates.append((pair, (roads[i],)))
    elif n == 4:
        a, b, c, d = roads
        candidates = [((a, b), (c, d)), ((a, c), (b, d)), ((a, d), (b, c))]
    else:
        raise UnsupportedRoadCount(f"no layout template for {n} one-way roads (supported: 1-4)")
    return min(candidates, key=intra)


def layout_roads(
    topology: LabeledDigraph,
    lanes: dict[str, int],
    config: LayoutConfig | None = None,
    seed: int = 0,
) -> RoadLayout:
    """Place one-way roads by shape template with seeded endpoint jitter.

    The first expressway runs along +x at z=0; a second runs along +y at
    z=level_clearance. Within an expressway the first-declared road takes the
    forward direction and the opposite road is offset so each keeps right.
    Endpoints are jittered per expressway (rotation/offset/length), which
    keeps opposite roads parallel while landing endpoints inside rectangular
    search areas around the template positions.
    """
    config = config or LayoutConfig()
    missing = [r for r in topology.roads if r not in lanes]
    if missing:
        raise ValueError(f"lane assignment missing for roads: {missing}")
    groups = group_expressways(topology)
    rng = random.Random(seed)

    if len(groups) == 1:
        shape = LayoutShape.SINGLE if len(groups[0]) == 1 else LayoutShape.T_SHAPE
    elif len(topology.roads) == 3:
        shape = LayoutShape.T_SHAPE
    else:
        shape = LayoutShape.CROSS_SHAPE

    axes = [(np.array([1.0, 0.0]), 0.0), (np.array([0.0, 1.0]), config.level_clearance)]
    half = config.road_length / 2.0
    roads: dict[str, RoadLine] = {}
    for gi, group in enumerate(groups):
        axis, z = axes[gi]
        ang = math.radians(rng.uniform(-config.heading_jitter_deg, config.heading_jitter_deg))
        cos_a, sin_a = math.cos(ang), math.sin(ang)
        rot = np.array([[cos_a, -sin_a], [sin_a, cos_a]])
        fwd = rot @ axis
        left = np.array([-fwd[1], fwd[0]])
        center = np.array(
            [
                rng.uniform(-config.center_jitter, config.center_jitter),
                rng.uniform(-config.center_jitter, config.center_jitter),
            ]
        )
        length = half + rng.uniform(-config.length_jitter, config.length_jitter)
        is_stem = shape is LayoutShape.T_SHAPE and gi == 1
        for ri, road in enumerate(group):
            sign = 1.0 if ri == 0 else -1.0
            direction = fwd * sign
            # keep-right: the carriageway sits right of the expressway median
            offset = left * (-sign * config.median_separation / 2.0) if len(group) == 2 else 0.0
            if is_stem:
                # stem occupies only the near half-plane, ending short of the main line
                a = center + offset - direction * length
                b = center + offset - direction * 60.0
            else:
                a = center + offset - direction * length
                b = center + offset + direction * length
            roads[road] = RoadLine(
                start=Point3(float(a[0]), float(a[1]), z),
                end=Point3(float(b[0]), float(b[1]), z),
                lane_count=int(lanes[road]),
                lane_width=config.lane_width,
            )

    ordered = {r: roads[r] for r in topology.roads}
    return RoadLayout(
        roads=ordered,
        shape=shape,
        level_clearance=config.level_clearance,
        expressways=groups,
    )
