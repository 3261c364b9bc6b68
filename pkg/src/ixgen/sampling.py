"""Pairwise (2-way) covering-array sampling over geometric feature domains.

Per topology there is one lane-count parameter per road and a (minimum
radius, maximum slope) parameter pair per ramp. Arrays are built with a
seeded AETG-style greedy: each row is the best of k random candidates by
newly covered value pairs, so every unordered parameter pair exhibits every
value pair in some row.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import IxgenError
from .topology import LabeledDigraph

INF = math.inf

DEFAULT_LANE_COUNTS = (3, 4, 5)
DEFAULT_MIN_RADII = (INF, 280.0, 210.0, 150.0, 100.0, 60.0, 40.0, 30.0)
DEFAULT_MAX_SLOPES = (1.0, 2.0, 3.0, 4.0, 5.0)

CANDIDATES_PER_ROW = 50


class ParameterMismatch(IxgenError):
    """Covering-array parameters do not match the topology's roads/ramps."""


@dataclass(frozen=True)
class FeatureDomains:
    lane_counts: tuple = DEFAULT_LANE_COUNTS
    min_radii: tuple = DEFAULT_MIN_RADII
    max_slopes: tuple = DEFAULT_MAX_SLOPES

    def __post_init__(self):
        if not (self.lane_counts and self.min_radii and self.max_slopes):
            raise ValueError("all feature domains must be nonempty")
        if any(r <= 0 for r in self.min_radii):
            raise ValueError("radii must be positive (or inf for straight)")
        if any(s <= 0 for s in self.max_slopes):
            raise ValueError("slopes must be positive")


@dataclass(frozen=True)
class CoveringArray:
    parameters: tuple[tuple[str, tuple], ...]  # (name, domain values)
    rows: tuple[tuple, ...]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.parameters)


@dataclass(frozen=True)
class InterchangeFeature:
    topology: LabeledDigraph
    lanes: dict[str, int]
    ramp_geometry: dict[str, tuple[float, float]] = field(default_factory=dict)


def parameters_for(topology: LabeledDigraph, domains: FeatureDomains):
    """Lane parameter per road, then (radius, slope) per ramp, declaration order."""
    params: list[tuple[str, tuple]] = []
    for road in topology.roads:
        params.append((f"lanes:{road}", tuple(domains.lane_counts)))
    for ramp in topology.ramps:
        params.append((f"radius:{ramp}", tuple(domains.min_radii)))
        params.append((f"slope:{ramp}", tuple(domains.max_slopes)))
    return tuple(params)


def full_combination_count(topology: LabeledDigraph, domains: FeatureDomains) -> int:
    """|lanes|^n_roads * (|radii| * |slopes|)^n_ramps, exact (arbitrary precision)."""
    n, m = len(topology.roads), len(topology.ramps)
    return len(domains.lane_counts) ** n * (len(domains.min_radii) * len(domains.max_slopes)) ** m


def generate_covering_array(
    topology: LabeledDigraph, domains: FeatureDomains, seed: int
) -> CoveringArray:
    """Seeded greedy 2-way covering array over the topology's parameters."""
    params = parameters_for(topology, domains)
    sizes = [len(dom) for _, dom in params]
    nparams = len(params)
    rng = random.Random(seed)

    if nparams == 0:
        return CoveringArray(parameters=params, rows=())
    if nparams == 1:
        rows = tuple((v,) for v in params[0][1])
        return CoveringArray(parameters=params, rows=rows)

    uncovered: set[tuple[int, int, int, int]] = set()
    for i in range(nparams):
        for j in range(i + 1, nparams):
            for a in range(sizes[i]):
                for b in range(sizes[j]):
                    uncovered.add((i, j, a, b))

    rows_idx: list[list[int]] = []
    while uncovered:
        # how often each (param, value) appears among uncovered pairs
        involvement: dict[tuple[int, int], int] = {}
        for i, j, a, b in uncovered:
            involvement[(i, a)] = involvement.get((i, a), 0) + 1
            involvement[(j, b)] = involvement.get((j, b), 0) + 1
        top = max(involvement.values())
        first_choices = sorted(pv for pv, n in involvement.items() if n == top)

        best_row: list[int] | None = None
        best_gain = -1
        for _ in range(CANDIDATES_PER_ROW):
            fp, fv = rng.choice(first_choices)
            row: dict[int, int] = {fp: fv}
            order = [p for p in range(nparams) if p != fp]
            rng.shuffle(order)
            for p in order:
                gains = []
                for v in range(sizes[p]):
                    gain = 0
                    for q, qv in row.items():
                        key = (q, p, qv, v) if q < p else (p, q, v, qv)
                        if key in uncovered:
                            gain += 1
                    gains.append(gain)
                m = max(gains)
                row[p] = rng.choice([v for v, g in enumerate(gains) if g == m])
            full = [row[p] for p in range(nparams)]
            gain = sum(
                1
                for i in range(nparams)
                for j in range(i + 1, nparams)
                if (i, j, full[i], full[j]) in uncovered
            )
            if gain > best_gain:
                best_gain, best_row = gain, full
        rows_idx.append(best_row)
        for i in range(nparams):
            for j in range(i + 1, nparams):
                uncovered.discard((i, j, best_row[i], best_row[j]))

    rows = tuple(tuple(params[p][1][v] for p, v in enumerate(r)) for r in rows_idx)
    return CoveringArray(parameters=params, rows=rows)


def verify_pairwise_coverage(array: CoveringArray) -> list[str]:
    """Exhaustively scan all parameter/value pairs; return failure descriptions."""
    failures: list[str] = []
    params = array.parameters
    for row_no, row in enumerate(array.rows):
        if len(row) != len(params):
            failures.append(f"row {row_no}: has {len(row)} values, expected {len(params)}")
            continue
        for value, (name, dom) in zip(row, params):
            if value not in dom:
                failures.append(f"row {row_no}: value {value!r} not in domain of {name}")
    if failures:
        return failures
    for i in range(len(params)):
        for j in range(i + 1, len(params)):
            seen = {(row[i], row[j]) for row in array.rows}
            for a in params[i][1]:
                for b in params[j][1]:
                    if (a, b) not in seen:
                        failures.append(
                            f"pair ({params[i][0]}={a!r}, {params[j][0]}={b!r}) never covered"
                        )
    return failures


def features_from_array(
    topology: LabeledDigraph, array: CoveringArray
) -> list[InterchangeFeature]:
    """One feature per array row (bijective row <-> feature correspondence)."""
    expected = tuple(name for name, _ in parameters_for(topology, FeatureDomains()))
    got = array.names
    if got != expected:
        raise ParameterMismatch(f"array parameters {got} do not match topology parameters {expected}")
    features = []
    n_roads = len(topology.roads)
    for row in array.rows:
        lanes = {road: row[i] for i, road in enumerate(topology.roads)}
        ramp_geometry = {}
        for k, ramp in enumerate(topology.ramps):
            ramp_geometry[ramp] = (row[n_roads + 2 * k], row[n_roads + 2 * k + 1])
        features.append(InterchangeFeature(topology=topology, lanes=lanes, ramp_geometry=ramp_geometry))
    return features


def _format_value(v) -> str:
    if isinstance(v, float):
        if math.isinf(v):
            return "inf"
        return repr(v) if v != int(v) else str(int(v)) + ".0"
    return str(v)


def _parse_value(s: str):
    if s == "inf":
        return INF
    if "." in s or "e" in s or "E" in s:
        return float(s)
    return int(s)


def write_array(array: CoveringArray, path: str | Path) -> None:
    """Tab-separated text: header of parameter names, then one row per line."""
    lines = ["\t".join(array.names)]
    for row in array.rows:
        lines.append("\t".join(_format_value(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_array(path: str | Path, parameters: Sequence[tuple[str, tuple]]) -> CoveringArray:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise IxgenError(f"{path}: empty array file")
    header = tuple(lines[0].split("\t"))
    expected = tuple(name for name, _ in parameters)
    if header != expected:
        raise ParameterMismatch(f"{path}: header {header} does not match {expected}")
    rows = tuple(tuple(_parse_value(v) for v in line.split("\t")) for line in lines[1:] if line)
    return CoveringArray(parameters=tuple(parameters), rows=rows)
