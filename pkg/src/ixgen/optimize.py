"""Differential evolution and the ramp control-point search.

A ramp is fitted as a C1 Bezier spline between two attachment poses. The
endpoint constraints are structural, not penalized: the first and last
control points are the pose positions and the adjoining control legs are
aligned with the pose headings in plan view (interior control-point heights
stay free so the grade can develop). The penalty drives the minimum-radius
and maximum-slope targets plus a curvature-variance smoothing term:

    total = var(curvature) * arc_length^2 * CURVATURE_SCALE
          + ((r_min - r_target) / (RADIUS_BAND * r_target))^2
          + ((s_max - s_target) / SLOPE_BAND)^2

With the default tolerance of 1.0, a successful fit therefore always lands
within RADIUS_BAND of the radius target and SLOPE_BAND of the slope target.
For an infinite radius target the radius term is replaced by a hinge on the
maximum curvature so that success implies a minimum radius above 10 km.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import IxgenError
from .geometry import (
    DEFAULT_SAMPLES_PER_SEGMENT,
    BezierSpline,
    CurveMetrics,
    Point3,
    RoadLayout,
    metrics,
    path_metrics_arrays,
    spline_from_matrices,
)
from .interchange import ConcreteInterchange, Connection, RampGeometry, RoadGeometry
from .sampling import InterchangeFeature
from .topology import LabeledDigraph, VertexKind

RADIUS_BAND = 0.05  # success implies radius within 5% of target
SLOPE_BAND = 0.2  # success implies slope within 0.2 percentage points
CURVATURE_SCALE = 0.003  # weight of the curvature-variance smoothing term
STRAIGHT_KAPPA_ONSET = 5e-5  # 1/m; hinge start for infinite-radius targets
RADIUS_CAP = 1e7  # stand-in for an infinite achieved radius in penalty space


class InfeasiblePose(IxgenError):
    """Fit problem whose poses coincide or have degenerate tangents."""


class SynthesisFailed(IxgenError):
    """One or more ramps could not be fitted; carries the partial result."""

    def __init__(self, msg: str, interchange: ConcreteInterchange, failures: dict[str, float]):
        super().__init__(msg)
        self.interchange = interchange
        self.failures = failures


@dataclass(frozen=True)
class DEConfig:
    population_size: int | None = None  # None: 15 x dimension, capped at 120
    differential_weight: float = 0.8
    crossover_rate: float = 0.9
    max_generations: int = 200
    seed: int = 0
    tolerance: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.crossover_rate <= 1.0:
            raise ValueError("crossover_rate must be in (0, 1]")
        if not 0.0 < self.differential_weight < 2.0:
            raise ValueError("differential_weight must be in (0, 2)")
        if self.population_size is not None and self.population_size < 4:
            raise ValueError("population_size must be >= 4")

    def resolve_population(self, dim: int) -> int:
        if self.population_size is not None:
            return self.population_size
        return max(8, min(15 * dim, 120))


def differential_evolution(
    objective: Callable[[np.ndarray], float],
    bounds: Sequence[tuple[float, float]],
    config: DEConfig,
    init: Sequence[np.ndarray] | None = None,
) -> tuple[np.ndarray, float, int]:
    """DE/rand/1/bin minimization over a box.

    Mutation v = a + F*(b - c) over distinct random population members,
    binomial crossover with one forced dimension, greedy selection, candidates
    clipped to the box. Terminates once the best value drops below
    config.tolerance or the generation budget is exhausted. Fully
    deterministic for a fixed config; ``init`` vectors (clipped) replace the
    head of the otherwise uniform-random initial population.
    """
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    if lo.size == 0 or not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
        raise ValueError("bounds must be nonempty and finite")
    dim = lo.size
    rng = np.random.default_rng(config.seed)
    pop = config.resolve_population(dim)
    F = config.differential_weight
    CR = config.crossover_rate

    X = lo + rng.random((pop, dim)) * (hi - lo)
    if init:
        for i, vec in enumerate(init[: max(1, pop // 3)]):
            X[i] = np.clip(np.asarray(vec, dtype=float), lo, hi)
    values = np.array([objective(x) for x in X])

    generations = 0
    if float(values.min()) >= config.tolerance:
        for _ in range(config.max_generations):
            generations += 1
            for i in range(pop):
                picks = rng.choice(pop - 1, size=3, replace=False)
                picks = np.where(picks >= i, picks + 1, picks)
                a, b, c = X[picks]
                mutant = np.clip(a + F * (b - c), lo, hi)
                forced = rng.integers(dim)
                mask = rng.random(dim) < CR
                mask[forced] = True
                trial = np.where(mask, mutant, X[i])
                trial_value = objective(trial)
                if trial_value <= values[i]:
                    X[i] = trial
                    values[i] = trial_value
            if float(values.min()) < config.tolerance:
                break

    best = int(values.argmin())
    return X[best].copy(), float(values[best]), generations


# ---------------------------------------------------------------------------
# Ramp fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Pose:
    """Attachment point with a plan-view heading (radians)."""

    point: Point3
    heading: float

    @property
    def tangent_xy(self) -> np.ndarray:
        return np.array([math.cos(self.heading), math.sin(self.heading)])


@dataclass(frozen=True)
class RampFitProblem:
    start_pose: Pose
    end_pose: Pose
    target_radius: float  # meters, or inf for a straight ramp
    target_slope: float  # percent
    segment_count: int

    def __post_init__(self):
        if not 1 <= self.segment_count <= 3:
            raise ValueError("segment_count must be 1..3")


@dataclass(frozen=True)
class PenaltyBreakdown:
    """Raw penalty terms and their weighted total.

    p_curv is the population variance of the curvature samples; p_radius the
    squared radius error in m^2 (for an infinite target, the squared hinge on
    max curvature, already dimensionless); p_slope the squared slope error in
    percent^2. Weights: w_c = arc_length^2 * CURVATURE_SCALE,
    w_r = 1/(RADIUS_BAND * r_target)^2 (1.0 for infinite targets),
    w_s = 1/SLOPE_BAND^2.
    """

    p_curv: float
    p_radius: float
    p_slope: float
    total: float


@dataclass(frozen=True)
class FitResult:
    spline: BezierSpline
    penalty: PenaltyBreakdown
    achieved: CurveMetrics
    generations_used: int
    success: bool
    decision: np.ndarray = field(repr=False, default=None)


def estimate_turn(start: Pose, end: Pose) -> float:
    """Signed total turn, with loops disambiguated by which side the chord lies on."""
    direct = _wrap_angle(end.heading - start.heading)
    chord = end.point.to_array()[:2] - start.point.to_array()[:2]
    left = np.array([-math.sin(start.heading), math.cos(start.heading)])
    side = float(chord @ left)
    if abs(direct) > 0.2 and abs(side) > 1e-9 and (side > 0) != (direct > 0):
        return direct - math.copysign(2 * math.pi, direct)
    return direct


def pick_segment_count(start: Pose, end: Pose) -> int:
    """1 segment below 100 degrees of turn, 2 below 200, 3 for loop ramps."""
    turn = abs(math.degrees(estimate_turn(start, end)))
    if turn < 100.0:
        return 1
    if turn < 200.0:
        return 2
    return 3


def _wrap_angle(a: float) -> float:
    return (a + math.pi) % (2 * math.pi) - math.pi


def _decode(vec: np.ndarray, k: int, problem: RampFitProblem) -> list[np.ndarray]:
    """Decision vector -> control-point matrices (C0/C1 by construction).

    Layout: [start leg, start z] + per joint [Jx, Jy, Jz, turn, z-rate,
    leg in, leg out] + [end leg, end z]. Joint tangents are azimuths relative
    to the start heading, so loops avoid angle wrapping.
    """
    p0 = problem.start_pose.point.to_array()
    p3 = problem.end_pose.point.to_array()
    t0 = problem.start_pose.tangent_xy
    t3 = problem.end_pose.tangent_xy

    i = 0
    leg_s = vec[i]; i += 1
    z1 = vec[i]; i += 1
    cps = [p0, np.array([p0[0] + leg_s * t0[0], p0[1] + leg_s * t0[1], z1])]
    for _ in range(k - 1):
        joint = np.array(vec[i : i + 3]); i += 3
        theta = problem.start_pose.heading + vec[i]; i += 1
        zrate = vec[i]; i += 1
        leg_in = vec[i]; i += 1
        leg_out = vec[i]; i += 1
        d = np.array([math.cos(theta), math.sin(theta), zrate])
        d /= np.linalg.norm(d)
        cps.append(joint - leg_in * d)
        cps.append(joint)
        cps.append(joint + leg_out * d)
    leg_e = vec[i]; i += 1
    z2 = vec[i]; i += 1
    cps.append(np.array([p3[0] - leg_e * t3[0], p3[1] - leg_e * t3[1], z2]))
    cps.append(p3)

    return [np.stack(cps[3 * s : 3 * s + 4]) for s in range(k)]


def _dimension(k: int) -> int:
    return 4 + 7 * (k - 1)


def _bounds(problem: RampFitProblem, k: int) -> list[tuple[float, float]]:
    p0 = problem.start_pose.point.to_array()
    p3 = problem.end_pose.point.to_array()
    chord = float(np.hypot(p3[0] - p0[0], p3[1] - p0[1]))
    leg_lo = max(1.0, 0.05 * chord)
    leg_hi = max(30.0, 0.7 * chord)
    z_lo = min(p0[2], p3[2]) - 2.0
    z_hi = max(p0[2], p3[2]) + 2.0
    margin = max(0.8 * chord, 50.0)
    x_lo, x_hi = min(p0[0], p3[0]) - margin, max(p0[0], p3[0]) + margin
    y_lo, y_hi = min(p0[1], p3[1]) - margin, max(p0[1], p3[1]) + margin

    bounds = [(leg_lo, leg_hi), (z_lo, z_hi)]
    for _ in range(k - 1):
        bounds += [
            (x_lo, x_hi),
            (y_lo, y_hi),
            (z_lo, z_hi),
            (-6.5, 6.5),
            (-0.12, 0.12),
            (leg_lo, max(30.0, 0.6 * chord)),
            (leg_lo, max(30.0, 0.6 * chord)),
        ]
    bounds += [(leg_lo, leg_hi), (z_lo, z_hi)]
    return bounds


def _penalty_terms(
    matrices, problem: RampFitProblem, samples_per_segment: int
) -> PenaltyBreakdown:
    _, curvature, slope, _, arc = path_metrics_arrays(matrices, samples_per_segment)
    kmax = float(curvature.max())
    r_min = 1.0 / kmax if kmax > 1e-9 else math.inf
    s_max = float(slope.max())
    var = float(curvature.var())

    r_t = problem.target_radius
    if math.isinf(r_t):
        hinge = max(0.0, kmax - STRAIGHT_KAPPA_ONSET) / STRAIGHT_KAPPA_ONSET
        p_radius = hinge * hinge
        weighted_radius = p_radius
    else:
        err = min(r_min, RADIUS_CAP) - r_t
        p_radius = err * err
        weighted_radius = p_radius / (RADIUS_BAND * r_t) ** 2
    slope_err = s_max - problem.target_slope
    p_slope = slope_err * slope_err
    weighted = (
        var * arc * arc * CURVATURE_SCALE
        + weighted_radius
        + p_slope / SLOPE_BAND**2
    )
    return PenaltyBreakdown(p_curv=var, p_radius=p_radius, p_slope=p_slope, total=weighted)


def _arc_seeds(problem: RampFitProblem, k: int, seed: int) -> list[np.ndarray]:
    """Structured initial candidates: blended circular-arc paths with
    linear / climb-early / climb-late grade profiles, plus jittered copies."""
    p0 = problem.start_pose.point.to_array()
    p3 = problem.end_pose.point.to_array()
    h0, h3 = problem.start_pose.heading, problem.end_pose.heading
    turn = estimate_turn(problem.start_pose, problem.end_pose)
    chord = float(np.hypot(p3[0] - p0[0], p3[1] - p0[1]))

    if abs(turn) < 1e-3:
        radius = None
        arclen = chord
    else:
        s2 = abs(math.sin(turn / 2.0))
        radius = chord / max(2.0 * s2, 1e-6)
        arclen = abs(turn) * radius

    def fwd(f: float) -> np.ndarray:
        if radius is None:
            return p0[:2] + f * chord * np.array([math.cos(h0), math.sin(h0)])
        sgn = math.copysign(1.0, turn)
        center = p0[:2] + radius * sgn * np.array([-math.sin(h0), math.cos(h0)])
        ang = math.atan2(p0[1] - center[1], p0[0] - center[0]) + f * turn
        return center + radius * np.array([math.cos(ang), math.sin(ang)])

    def bwd(f: float) -> np.ndarray:
        if radius is None:
            return p3[:2] - (1 - f) * chord * np.array([math.cos(h3), math.sin(h3)])
        sgn = math.copysign(1.0, turn)
        center = p3[:2] + radius * sgn * np.array([-math.sin(h3), math.cos(h3)])
        ang = math.atan2(p3[1] - center[1], p3[0] - center[0]) - (1 - f) * turn
        return center + radius * np.array([math.cos(ang), math.sin(ang)])

    dz = p3[2] - p0[2]
    srate = problem.target_slope / 100.0
    span = min(abs(dz) / srate, arclen) if srate > 1e-9 else 0.0
    sgn_dz = math.copysign(1.0, dz) if dz != 0 else 1.0

    def z_profile(prof: str, f: float) -> tuple[float, float]:
        """(height, grade) along the path fraction f."""
        s = f * arclen
        if prof == "linear" or dz == 0.0:
            return p0[2] + f * dz, dz / max(arclen, 1.0)
        if prof == "early":
            climbing = s < span
            return p0[2] + sgn_dz * srate * min(s, span), sgn_dz * srate if climbing else 0.0
        climbing = (arclen - s) < span
        return p3[2] - sgn_dz * srate * min(arclen - s, span), sgn_dz * srate if climbing else 0.0

    if radius is not None and abs(turn) > 1e-3:
        base_leg = (4.0 / 3.0) * math.tan(abs(turn) / (4.0 * k)) * radius
    else:
        base_leg = arclen / (3.0 * k)
    base_leg = max(base_leg, 1.0)

    seeds = []
    for leg_scale in (1.0, 0.75, 1.3):
        leg = base_leg * leg_scale
        for prof in ("linear", "early", "late"):
            z0, g0 = z_profile(prof, 0.0)
            vec = [leg, z0 + g0 * leg]
            for j in range(1, k):
                f = j / k
                pos = (1 - f) * fwd(f) + f * bwd(f)
                zj, gj = z_profile(prof, f)
                vec += [pos[0], pos[1], zj, f * turn, gj, leg, leg]
            z1, g1 = z_profile(prof, 1.0)
            vec += [leg, z1 - g1 * leg]
            seeds.append(np.array(vec))

    rng = np.random.default_rng(seed ^ 0x5EED)
    base = seeds[0]
    for _ in range(11):
        seeds.append(base * (1 + 0.05 * rng.standard_normal(base.size)) + 0.01 * rng.standard_normal(base.size))
    return seeds


def fit_ramp(
    problem: RampFitProblem,
    config: DEConfig,
    samples_per_segment: int = DEFAULT_SAMPLES_PER_SEGMENT,
) -> FitResult:
    """Search control points meeting the ramp's radius/slope targets.

    The endpoints and plan-view tangent alignment hold for every candidate by
    construction; DE only shapes the interior. Success means the weighted
    penalty dropped below config.tolerance.
    """
    d3 = float(np.linalg.norm(problem.end_pose.point.to_array() - problem.start_pose.point.to_array()))
    if d3 < 1e-6:
        raise InfeasiblePose("start and end poses coincide")
    k = problem.segment_count
    bounds = _bounds(problem, k)

    def objective(vec: np.ndarray) -> float:
        return _penalty_terms(_decode(vec, k, problem), problem, samples_per_segment).total

    seeds = _arc_seeds(problem, k, config.seed)
    best, _, generations = differential_evolution(objective, bounds, config, init=seeds)

    matrices = _decode(best, k, problem)
    penalty = _penalty_terms(matrices, problem, samples_per_segment)
    spline = spline_from_matrices(matrices)
    achieved = metrics(spline, samples_per_segment)
    return FitResult(
        spline=spline,
        penalty=penalty,
        achieved=achieved,
        generations_used=generations,
        success=penalty.total < config.tolerance,
        decision=best,
    )


# ---------------------------------------------------------------------------
# Whole-interchange synthesis
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthesisConfig:
    de: DEConfig = field(default_factory=DEConfig)
    samples_per_segment: int = DEFAULT_SAMPLES_PER_SEGMENT
    retry_limit: int = 3
    min_attachment_spacing: float = 35.0  # along a host road, meters
    ramp_attachment_fraction: float = 0.5  # arc-length fraction on host ramps


def derive_seed(base: int, *parts: str) -> int:
    digest = hashlib.sha256((":".join((str(base),) + parts)).encode()).digest()
    return int.from_bytes(digest[:8], "big") % (2**62)


@dataclass
class _Attachment:
    host: str
    param: float
    pose: Pose


def _ramp_hosts(topology: LabeledDigraph, ramp: str) -> tuple[str, str]:
    """The unique host a ramp departs from and the unique host it merges into."""
    starts = [e.source for e in topology.in_edges[ramp] if e.label.is_out]
    ends = [e.target for e in topology.out_edges[ramp] if not e.label.is_out]
    if len(starts) != 1 or len(ends) != 1:
        raise IxgenError(
            f"ramp {ramp!r} needs exactly one departure host and one merge host "
            f"(found {len(starts)} / {len(ends)})"
        )
    return starts[0], ends[0]


def _side_sign(is_right: bool) -> float:
    # right of the travel direction = clockwise normal = negative left-normal
    return -1.0 if is_right else 1.0


def _road_pose(line, param: float, offset_side: float | None) -> Pose:
    point = line.point_at(param)
    heading = math.atan2(line.direction[1], line.direction[0])
    if offset_side is not None:
        left = np.array([-line.direction[1], line.direction[0], 0.0])
        point = point + offset_side * line.half_width * left
    return Pose(Point3.from_array(point), heading)


def _spline_pose(spline: BezierSpline, fraction: float, offset_side: float | None, lane_width: float) -> tuple[float, Pose]:
    """Pose at an arc-length fraction of a fitted ramp."""
    t_grid, pts, d1, _ = _spline_samples(spline)
    seg_len = np.linalg.norm(np.diff(pts[:, :2], axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    target = fraction * cum[-1]
    idx = int(np.searchsorted(cum, target))
    idx = min(max(idx, 1), len(t_grid) - 1)
    point = pts[idx].copy()
    heading = math.atan2(d1[idx, 1], d1[idx, 0])
    if offset_side is not None:
        left = np.array([-math.sin(heading), math.cos(heading), 0.0])
        point = point + offset_side * (lane_width / 2.0) * left
    return float(t_grid[idx]), Pose(Point3.from_array(point), heading)


def _spline_samples(spline: BezierSpline):
    from .geometry import sample_path

    return sample_path(spline.matrices, 64)


def _turn_kind(start_heading: float, end_heading: float, departs_right: bool) -> tuple[bool, float]:
    """(is_direct, |total turn|) from host headings and the departure side."""
    turn = _wrap_angle(end_heading - start_heading)
    if abs(turn) < 0.26 or abs(turn) > 2.9:
        return True, abs(turn)
    side = -1.0 if departs_right else 1.0
    if (turn > 0) == (side > 0):
        return True, abs(turn)
    return False, 2.0 * math.pi - abs(turn)


def synthesize_interchange(
    topology: LabeledDigraph,
    feature: InterchangeFeature,
    layout: RoadLayout,
    config: SynthesisConfig | None = None,
    interchange_id: str = "interchange",
    class_id: int = 0,
    base_seed: int | None = None,
) -> ConcreteInterchange:
    """Fit every ramp of a feature assignment against the laid-out roads.

    Ramps whose hosts are roads go first, then ramps attaching to fitted
    ramps. Attachment points are planned on each host so the target radius
    and grade length are geometrically reachable, offset to the side the
    edge label names (an out-r ramp physically departs from the right edge
    of its host). Failed fits are retried with fresh seeds up to
    config.retry_limit, then reported via SynthesisFailed.
    """
    config = config or SynthesisConfig()
    if feature.topology is not topology and feature.topology != topology:
        raise IxgenError("feature was sampled for a different topology")
    seed = config.de.seed if base_seed is None else base_seed

    roads = {
        vid: RoadGeometry(
            centerline=line.centerline(),
            lane_count=line.lane_count,
            lane_width=line.lane_width,
        )
        for vid, line in layout.roads.items()
    }

    ramp_order, blocked = _fit_order(topology)
    start_attach: dict[str, _Attachment] = {}
    end_attach: dict[str, _Attachment] = {}
    fitted: dict[str, RampGeometry] = {}
    failures: dict[str, float] = {vid: math.inf for vid in blocked}

    plan = _plan_road_attachments(topology, layout, feature, ramp_order, config)

    for ramp in ramp_order:
        start_host, end_host = _ramp_hosts(topology, ramp)
        try:
            sa = _attachment_for(ramp, start_host, True, topology, layout, fitted, plan, config)
            ea = _attachment_for(ramp, end_host, False, topology, layout, fitted, plan, config)
        except IxgenError:
            failures[ramp] = math.inf
            continue
        start_attach[ramp], end_attach[ramp] = sa, ea

        radius, slope = feature.ramp_geometry[ramp]
        problem = RampFitProblem(
            start_pose=sa.pose,
            end_pose=ea.pose,
            target_radius=radius,
            target_slope=slope,
            segment_count=_segment_count_for(sa.pose, ea.pose, radius),
        )
        best: FitResult | None = None
        for attempt in range(1 + config.retry_limit):
            attempt_cfg = replace(config.de, seed=derive_seed(seed, "fit", ramp, str(attempt)))
            result = fit_ramp(problem, attempt_cfg, config.samples_per_segment)
            if best is None or result.penalty.total < best.penalty.total:
                best = result
            if result.success:
                break
        fitted[ramp] = RampGeometry(
            spline=best.spline,
            achieved=best.achieved,
            target_radius=radius,
            target_slope=slope,
            success=best.success,
            penalty_total=best.penalty.total,
            generations=best.generations_used,
        )
        if not best.success:
            failures[ramp] = best.penalty.total

    connections = _collect_connections(topology, start_attach, end_attach)
    interchange = ConcreteInterchange(
        id=interchange_id,
        topology_class=class_id,
        feature=feature,
        roads=roads,
        ramps=fitted,
        connections=connections,
    )
    if failures:
        raise SynthesisFailed(
            f"{interchange_id}: {len(failures)} ramp(s) failed: "
            + ", ".join(f"{r} (penalty {p:.3g})" for r, p in sorted(failures.items())),
            interchange=interchange,
            failures=failures,
        )
    return interchange


def _segment_count_for(start: Pose, end: Pose, target_radius: float) -> int:
    """Turn-based segment count, bumped when long approach legs are needed.

    A single cubic cannot hold a tight minimum radius at the middle of long
    tangent legs, so when the pose separation dwarfs the turn arc an extra
    segment is added.
    """
    k = pick_segment_count(start, end)
    if math.isinf(target_radius) or k >= 3:
        return k
    turn = abs(estimate_turn(start, end))
    arc = max(turn * target_radius, 1.0)
    chord = float(
        np.hypot(
            end.point.x - start.point.x,
            end.point.y - start.point.y,
        )
    )
    if chord > 2.2 * arc:
        k += 1
    return min(k, 3)


def _fit_order(topology: LabeledDigraph) -> tuple[list[str], list[str]]:
    """Ramps ordered so every ramp follows its host ramps; unresolvable last."""
    pending = list(topology.ramps)
    hosts: dict[str, tuple[str, str]] = {}
    for ramp in pending:
        try:
            hosts[ramp] = _ramp_hosts(topology, ramp)
        except IxgenError:
            hosts[ramp] = None
    done: set[str] = set()
    order: list[str] = []
    while True:
        progressed = False
        for ramp in pending:
            if ramp in done or hosts[ramp] is None:
                continue
            ready = all(
                topology.kind_by_id[h] is VertexKind.ROAD or h in done for h in hosts[ramp]
            )
            if ready:
                order.append(ramp)
                done.add(ramp)
                progressed = True
        if not progressed:
            break
    blocked = [r for r in pending if r not in done]
    return order, blocked


def _plan_road_attachments(topology, layout, feature, ramp_order, config):
    """Choose where along each host road every ramp attaches.

    Direct-turn ramps exit upstream of the junction center and merge
    downstream; loop ramps do the opposite. The distance from the center
    combines the turn's arc radius with the extra length the grade target
    needs, and attachments sharing a road side are spaced apart.
    """
    plan: dict[tuple[str, str], float] = {}
    placed: dict[str, list[tuple[float, float]]] = {}  # host -> [(t, push direction)]

    def register(host: str, ramp: str, t: float, push: float):
        line = layout.roads[host]
        spacing_t = config.min_attachment_spacing / max(line.length, 1e-9)
        for _ in range(1 + len(placed.get(host, []))):
            if all(abs(t - p) >= spacing_t for p, _ in placed.get(host, [])):
                break
            t += push * spacing_t
        t = float(np.clip(t, 0.02, 0.98))
        placed.setdefault(host, []).append((t, push))
        plan[(host, ramp)] = t

    for ramp in ramp_order:
        start_host, end_host = _ramp_hosts(topology, ramp)
        radius, slope = feature.ramp_geometry[ramp]
        r_f = 0.0 if math.isinf(radius) else float(radius)
        out_label = next(e.label for e in topology.in_edges[ramp] if e.label.is_out)
        in_label = next(e.label for e in topology.out_edges[ramp] if not e.label.is_out)
        start_is_road = topology.kind_by_id[start_host] is VertexKind.ROAD
        end_is_road = topology.kind_by_id[end_host] is VertexKind.ROAD

        solved = None
        if start_is_road and end_is_road and r_f > 0.0:
            line_a, line_b = layout.roads[start_host], layout.roads[end_host]
            h_a = math.atan2(line_a.direction[1], line_a.direction[0])
            h_b = math.atan2(line_b.direction[1], line_b.direction[0])
            direct, turn_abs = _turn_kind(h_a, h_b, out_label.is_right)
            if direct:
                sigma = math.copysign(1.0, _wrap_angle(h_b - h_a)) if abs(_wrap_angle(h_b - h_a)) > 1e-9 else 1.0
            else:
                sigma = _side_sign(out_label.is_right)
            dz = abs(line_b.start.z - line_a.start.z)
            extra = max(0.0, 1.15 * 100.0 * dz / max(slope, 0.1) - turn_abs * r_f)
            solved = _solve_tangent_attachments(
                line_a, _side_sign(out_label.is_right),
                line_b, _side_sign(in_label.is_right),
                r_f, sigma, turn_abs, extra,
            )
        if solved is not None:
            t_start, t_end = solved
            register(start_host, ramp, t_start, -1.0)
            register(end_host, ramp, t_end, 1.0)
            continue

        # fallback: distance heuristic from the junction center
        for host, is_start in ((start_host, True), (end_host, False)):
            if topology.kind_by_id[host] is not VertexKind.ROAD:
                continue
            line = layout.roads[host]
            dz = layout.level_clearance
            dist = max(60.0, r_f) + max(0.0, 1.15 * 100.0 * dz / max(slope, 0.1) - math.pi * r_f) / 2.0
            t_ref = line.param_of_projection((0.0, 0.0))
            sign = -1.0 if is_start else 1.0
            register(host, ramp, t_ref + sign * dist / max(line.length, 1e-9), sign)
    return plan


def _offset_line(line, side: float) -> tuple[np.ndarray, np.ndarray]:
    """Plan-view host line shifted to the attachment side (gore line)."""
    d = line.direction[:2]
    left = np.array([-d[1], d[0]])
    origin = line.start.to_array()[:2] + side * line.half_width * left
    return origin, d


def _solve_tangent_attachments(line_a, side_a, line_b, side_b, radius, sigma, swept_expected, extra):
    """Attachment params such that a circle of the target radius runs tangent
    to both gore lines, with `extra` meters of straight leg split between the
    approach and the exit for the grade run. None when no consistent circle
    exists (near-parallel hosts, solution off the road span)."""
    a0, da = _offset_line(line_a, side_a)
    b0, db = _offset_line(line_b, side_b)
    left_a = np.array([-da[1], da[0]])
    left_b = np.array([-db[1], db[0]])

    # circle center as the touch point moves along A: c(u) = a0 + u*da + sigma*r*left_a
    base = a0 + sigma * radius * left_a - b0
    coef = float(da @ left_b)
    const = float(base @ left_b)
    if abs(coef) < 1e-6:
        return None

    for target in (sigma * radius, -sigma * radius):
        u = (target - const) / coef
        center = a0 + u * da + sigma * radius * left_a
        touch_a = a0 + u * da
        v = float((center - b0) @ db)
        touch_b = b0 + v * db
        # the arc must be entered along A's travel direction and left along B's
        ang_a = math.atan2(touch_a[1] - center[1], touch_a[0] - center[0])
        ang_b = math.atan2(touch_b[1] - center[1], touch_b[0] - center[0])
        tan_a = sigma * np.array([-math.sin(ang_a), math.cos(ang_a)])
        tan_b = sigma * np.array([-math.sin(ang_b), math.cos(ang_b)])
        if float(tan_a @ da) < 0.95 or float(tan_b @ db) < 0.95:
            continue
        swept = (sigma * (ang_b - ang_a)) % (2.0 * math.pi)
        if abs(swept - swept_expected) > 1.0:
            continue
        attach_a = touch_a - (extra / 2.0) * da
        attach_b = touch_b + (extra / 2.0) * db
        t_a = line_a.param_of_projection(attach_a)
        t_b = line_b.param_of_projection(attach_b)
        if not (0.02 <= t_a <= 0.98 and 0.02 <= t_b <= 0.98):
            # keep the circle but concede clipped legs; reject only absurd touches
            if not (0.0 < t_a < 1.0 and 0.0 < t_b < 1.0):
                continue
        return float(t_a), float(t_b)
    return None


def _attachment_for(ramp, host, is_start, topology, layout, fitted, plan, config) -> _Attachment:
    if is_start:
        label = next(e.label for e in topology.in_edges[ramp] if e.label.is_out)
    else:
        label = next(e.label for e in topology.out_edges[ramp] if not e.label.is_out)
    side = _side_sign(label.is_right)

    if topology.kind_by_id[host] is VertexKind.ROAD:
        line = layout.roads[host]
        param = plan.get((host, ramp), line.param_of_projection((0.0, 0.0)))
        return _Attachment(host=host, param=param, pose=_road_pose(line, param, side))

    if host not in fitted:
        raise IxgenError(f"host ramp {host!r} not fitted yet")
    attachments = [r for r in topology.ramps if _is_attached_to(topology, r, host)]
    fraction = config.ramp_attachment_fraction
    if len(attachments) > 1:
        rank = attachments.index(ramp)
        fraction = (rank + 1) / (len(attachments) + 1)
    lane_width = next(iter(layout.roads.values())).lane_width if layout.roads else 3.75
    param, pose = _spline_pose(fitted[host].spline, fraction, side, lane_width)
    return _Attachment(host=host, param=param, pose=pose)


def _is_attached_to(topology, ramp, host) -> bool:
    for e in topology.in_edges[ramp]:
        if e.label.is_out and e.source == host:
            return True
    for e in topology.out_edges[ramp]:
        if not e.label.is_out and e.target == host:
            return True
    return False


def _collect_connections(topology, start_attach, end_attach) -> tuple[Connection, ...]:
    connections = []
    for e in topology.edges:
        if e.label.is_out:
            att = start_attach.get(e.target)
        else:
            att = end_attach.get(e.source)
        if att is None:
            continue
        p = att.pose.point
        connections.append(
            Connection(
                source=e.source,
                target=e.target,
                label=e.label,
                host=att.host,
                param=att.param,
                point=(p.x, p.y, p.z),
            )
        )
    return tuple(connections)
