"""Labeled-digraph isomorphism and topology-class partitioning.

The matcher is a VF2-style backtracking search extended with vertex-kind
compatibility and exact edge-label equality. Candidates are tried in vertex
declaration order, so the witness mapping is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

from .topology import InterchangeRecord, LabeledDigraph, degree_signature, label_counts


@dataclass(frozen=True)
class TopologyClass:
    class_id: int
    representative: InterchangeRecord
    members: tuple[InterchangeRecord, ...]


def _local_profile(g: LabeledDigraph):
    """Per-vertex degree/label profile used for pair feasibility."""
    prof = {}
    for v in g.vertices:
        in_labels = sorted((e.label for e in g.in_edges[v.vid]), key=lambda l: l.value)
        out_labels = sorted((e.label for e in g.out_edges[v.vid]), key=lambda l: l.value)
        prof[v.vid] = (v.kind, tuple(in_labels), tuple(out_labels))
    return prof


def is_isomorphic(g1: LabeledDigraph, g2: LabeledDigraph) -> dict[str, str] | None:
    """Return a vertex mapping g1 -> g2 witnessing isomorphism, or None.

    A witness g satisfies: kinds preserved, (u,v) in E1 iff (g(u),g(v)) in E2,
    and every mapped edge carries an equal label.
    """
    if len(g1.vertices) != len(g2.vertices) or len(g1.edges) != len(g2.edges):
        return None
    if label_counts(g1) != label_counts(g2):
        return None

    prof1 = _local_profile(g1)
    prof2 = _local_profile(g2)

    order1 = [v.vid for v in g1.vertices]
    order2 = [v.vid for v in g2.vertices]
    fwd: dict[str, str] = {}
    rev: dict[str, str] = {}

    def feasible(u: str, v: str) -> bool:
        if prof1[u] != prof2[v]:
            return False
        # consistency with already-mapped vertices, both edge directions
        for e in g1.out_edges[u]:
            if e.target in fwd:
                lbl = g2.edge_map.get((v, fwd[e.target]))
                if lbl is not e.label:
                    return False
        for e in g1.in_edges[u]:
            if e.source in fwd:
                lbl = g2.edge_map.get((fwd[e.source], v))
                if lbl is not e.label:
                    return False
        for e in g2.out_edges[v]:
            if e.target in rev and not g1.has_edge(u, rev[e.target]):
                return False
        for e in g2.in_edges[v]:
            if e.source in rev and not g1.has_edge(rev[e.source], u):
                return False
        return True

    def extend() -> bool:
        if len(fwd) == len(order1):
            return True
        u = next(vid for vid in order1 if vid not in fwd)
        for v in order2:
            if v in rev:
                continue
            if feasible(u, v):
                fwd[u] = v
                rev[v] = u
                if extend():
                    return True
                del fwd[u]
                del rev[v]
        return False

    if extend():
        return dict(fwd)
    return None


def classify(corpus: list[InterchangeRecord]) -> list[TopologyClass]:
    """Partition records into topology-equivalence classes.

    Classes are numbered in order of first appearance; each new record is
    compared against one representative per class (isomorphism is
    transitive), with a degree-signature pre-filter.
    """
    classes: list[tuple[InterchangeRecord, list[InterchangeRecord]]] = []
    signatures: list[object] = []
    for record in corpus:
        sig = degree_signature(record.graph)
        for i, (rep, members) in enumerate(classes):
            if signatures[i] != sig:
                continue
            if is_isomorphic(record.graph, rep.graph) is not None:
                members.append(record)
                break
        else:
            classes.append((record, [record]))
            signatures.append(sig)
    return [
        TopologyClass(class_id=i, representative=rep, members=tuple(members))
        for i, (rep, members) in enumerate(classes)
    ]
