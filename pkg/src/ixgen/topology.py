"""Interchange topology as a labeled digraph.

Vertices are one-way roads and ramps; a directed edge means traffic can move
from source to target, and its label records how the ramp attaches:
``OUT_R``/``OUT_L`` mark the target ramp departing from the source on its
right/left, ``IN_R``/``IN_L`` mark the source ramp merging into the target
from its right/left.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable, Mapping, Sequence

from .errors import IxgenError


class VertexKind(Enum):
    ROAD = "road"
    RAMP = "ramp"


class EdgeLabel(Enum):
    OUT_R = "out-r"
    OUT_L = "out-l"
    IN_R = "in-r"
    IN_L = "in-l"

    @property
    def is_out(self) -> bool:
        return self in (EdgeLabel.OUT_R, EdgeLabel.OUT_L)

    @property
    def is_right(self) -> bool:
        return self in (EdgeLabel.OUT_R, EdgeLabel.IN_R)


class TopologyError(IxgenError):
    """A graph violates the labeled-digraph invariants."""


class UnknownVertex(TopologyError):
    pass


class LabelKindMismatch(TopologyError):
    pass


class Disconnected(TopologyError):
    pass


class DanglingRamp(TopologyError):
    pass


class InvalidEdge(TopologyError):
    """Self-loop or duplicate (source, target) pair."""


@dataclass(frozen=True)
class Vertex:
    vid: str
    kind: VertexKind


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    label: EdgeLabel


@dataclass(frozen=True)
class LabeledDigraph:
    """Immutable labeled digraph; validates its invariants on construction."""

    vertices: tuple[Vertex, ...]
    edges: tuple[Edge, ...]

    def __post_init__(self):
        _validate(self.vertices, self.edges)

    @cached_property
    def kind_by_id(self) -> dict[str, VertexKind]:
        return {v.vid: v.kind for v in self.vertices}

    @cached_property
    def edge_map(self) -> dict[tuple[str, str], EdgeLabel]:
        return {(e.source, e.target): e.label for e in self.edges}

    @cached_property
    def out_edges(self) -> dict[str, tuple[Edge, ...]]:
        out: dict[str, list[Edge]] = {v.vid: [] for v in self.vertices}
        for e in self.edges:
            out[e.source].append(e)
        return {k: tuple(v) for k, v in out.items()}

    @cached_property
    def in_edges(self) -> dict[str, tuple[Edge, ...]]:
        inc: dict[str, list[Edge]] = {v.vid: [] for v in self.vertices}
        for e in self.edges:
            inc[e.target].append(e)
        return {k: tuple(v) for k, v in inc.items()}

    @property
    def roads(self) -> tuple[str, ...]:
        return tuple(v.vid for v in self.vertices if v.kind is VertexKind.ROAD)

    @property
    def ramps(self) -> tuple[str, ...]:
        return tuple(v.vid for v in self.vertices if v.kind is VertexKind.RAMP)

    def has_edge(self, source: str, target: str) -> bool:
        return (source, target) in self.edge_map


@dataclass(frozen=True)
class InterchangeRecord:
    """A named interchange topology, as read from a corpus."""

    id: str
    graph: LabeledDigraph
    metadata: Mapping[str, str] = field(default_factory=dict)


def _validate(vertices: Sequence[Vertex], edges: Sequence[Edge]) -> None:
    ids = [v.vid for v in vertices]
    if len(set(ids)) != len(ids):
        raise InvalidEdge(f"duplicate vertex ids: {ids}")
    kind = {v.vid: v.kind for v in vertices}

    seen: set[tuple[str, str]] = set()
    for e in edges:
        for vid in (e.source, e.target):
            if vid not in kind:
                raise UnknownVertex(f"edge ({e.source}, {e.target}) references unknown vertex {vid!r}")
        if e.source == e.target:
            raise InvalidEdge(f"self-loop on {e.source!r}")
        if (e.source, e.target) in seen:
            raise InvalidEdge(f"duplicate edge ({e.source}, {e.target})")
        seen.add((e.source, e.target))
        if e.label.is_out and kind[e.target] is not VertexKind.RAMP:
            raise LabelKindMismatch(
                f"edge ({e.source}, {e.target}) has {e.label.value} label but target is a road"
            )
        if not e.label.is_out and kind[e.source] is not VertexKind.RAMP:
            raise LabelKindMismatch(
                f"edge ({e.source}, {e.target}) has {e.label.value} label but source is a road"
            )

    for v in vertices:
        if v.kind is VertexKind.RAMP:
            if not any(e.target == v.vid for e in edges):
                raise DanglingRamp(f"ramp {v.vid!r} has no incoming edge")
            if not any(e.source == v.vid for e in edges):
                raise DanglingRamp(f"ramp {v.vid!r} has no outgoing edge")

    if len(vertices) > 1:
        adjacency: dict[str, set[str]] = {v.vid: set() for v in vertices}
        for e in edges:
            adjacency[e.source].add(e.target)
            adjacency[e.target].add(e.source)
        seen_v = {vertices[0].vid}
        stack = [vertices[0].vid]
        while stack:
            cur = stack.pop()
            for nxt in adjacency[cur]:
                if nxt not in seen_v:
                    seen_v.add(nxt)
                    stack.append(nxt)
        if len(seen_v) != len(vertices):
            missing = sorted(set(ids) - seen_v)
            raise Disconnected(f"graph is not weakly connected; unreachable: {missing}")


def build_graph(
    roads: Iterable[str],
    ramps: Iterable[str],
    connections: Iterable[tuple[str, str, EdgeLabel]],
) -> LabeledDigraph:
    """Construct a validated topology graph from declaration lists.

    Vertex order is the declaration order (roads first, then ramps), so
    identical inputs always produce identical graphs.
    """
    vertices = tuple(
        [Vertex(r, VertexKind.ROAD) for r in roads]
        + [Vertex(r, VertexKind.RAMP) for r in ramps]
    )
    edges = tuple(Edge(s, t, label) for s, t, label in connections)
    return LabeledDigraph(vertices, edges)


def degree_signature(g: LabeledDigraph):
    """Per-vertex (kind, in-degree, out-degree, in-labels, out-labels) multiset.

    Invariant under vertex relabeling; equal signatures are a necessary (not
    sufficient) condition for isomorphism, used as a cheap pre-filter.
    """
    rows = []
    for v in g.vertices:
        in_labels = tuple(sorted(e.label.value for e in g.in_edges[v.vid]))
        out_labels = tuple(sorted(e.label.value for e in g.out_edges[v.vid]))
        rows.append((v.kind.value, len(in_labels), len(out_labels), in_labels, out_labels))
    return tuple(sorted(rows))


def label_counts(g: LabeledDigraph) -> Counter:
    return Counter(e.label for e in g.edges)
