"""Reader/writer for the line-oriented interchange corpus format.

One block per interchange::

    interchange <id>
      meta <key> = <value>        # optional, repeatable
      roads <name> [<name> ...]   # repeatable, cumulative
      ramps <name> [<name> ...]
      connect <src> -> <dst> : <label>
    end

Labels are out-r / out-l / in-r / in-l, case-insensitive. Blank lines and
``#`` comments are ignored. The full grammar is documented in the README.
"""

from __future__ import annotations

import io
import re
from pathlib import Path
from typing import Iterable

from .errors import IxgenError
from .topology import EdgeLabel, InterchangeRecord, TopologyError, build_graph

_LABELS = {label.value: label for label in EdgeLabel}
_CONNECT_RE = re.compile(r"^(\S+)\s*->\s*(\S+)\s*:\s*(\S+)$")


class CorpusSyntaxError(IxgenError):
    """Malformed document; message carries the line number."""


class CorpusSchemaError(IxgenError):
    """Structurally valid document with bad content (label, duplicate id, ...)."""


def parse_corpus(path: str | Path) -> list[InterchangeRecord]:
    """Parse a corpus file into validated records, in file order."""
    text = Path(path).read_text(encoding="utf-8")
    return parse_corpus_text(text)


def parse_corpus_text(text: str) -> list[InterchangeRecord]:
    records: list[InterchangeRecord] = []
    seen_ids: set[str] = set()

    cur_id: str | None = None
    cur_line = 0
    roads: list[str] = []
    ramps: list[str] = []
    connections: list[tuple[str, str, EdgeLabel]] = []
    metadata: dict[str, str] = {}

    def fail_syntax(lineno: int, msg: str):
        raise CorpusSyntaxError(f"line {lineno}: {msg}")

    def close_block(lineno: int):
        nonlocal cur_id
        names = roads + ramps
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise CorpusSchemaError(f"interchange {cur_id!r}: duplicate vertex names {dupes}")
        try:
            graph = build_graph(roads, ramps, connections)
        except TopologyError as exc:
            raise type(exc)(f"interchange {cur_id!r}: {exc}") from exc
        records.append(InterchangeRecord(id=cur_id, graph=graph, metadata=dict(metadata)))
        cur_id = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split(None, 1)
        keyword = parts[0].lower()
        rest = parts[1].strip() if len(parts) > 1 else ""

        if keyword == "interchange":
            if cur_id is not None:
                fail_syntax(lineno, f"'interchange' before 'end' of block started at line {cur_line}")
            if not rest:
                raise CorpusSchemaError(f"line {lineno}: interchange id is empty")
            if rest in seen_ids:
                raise CorpusSchemaError(f"line {lineno}: duplicate interchange id {rest!r}")
            seen_ids.add(rest)
            cur_id, cur_line = rest, lineno
            roads, ramps, connections, metadata = [], [], [], {}
        elif cur_id is None:
            fail_syntax(lineno, f"{keyword!r} outside an interchange block")
        elif keyword == "end":
            if rest:
                fail_syntax(lineno, "unexpected text after 'end'")
            close_block(lineno)
        elif keyword == "roads":
            roads.extend(rest.split())
        elif keyword == "ramps":
            ramps.extend(rest.split())
        elif keyword == "meta":
            if "=" not in rest:
                fail_syntax(lineno, "meta line must be 'meta <key> = <value>'")
            key, value = (s.strip() for s in rest.split("=", 1))
            metadata[key] = value
        elif keyword == "connect":
            m = _CONNECT_RE.match(rest)
            if m is None:
                fail_syntax(lineno, "connect line must be 'connect <src> -> <dst> : <label>'")
            src, dst, label_str = m.groups()
            label = _LABELS.get(label_str.lower())
            if label is None:
                raise CorpusSchemaError(
                    f"line {lineno}: unknown label {label_str!r} "
                    f"(expected one of {sorted(_LABELS)})"
                )
            connections.append((src, dst, label))
        else:
            fail_syntax(lineno, f"unknown keyword {keyword!r}")

    if cur_id is not None:
        fail_syntax(len(text.splitlines()) + 1, f"missing 'end' for block started at line {cur_line}")
    return records


def serialize_corpus(records: Iterable[InterchangeRecord]) -> str:
    """Render records back to corpus text; parse_corpus round-trips it."""
    out = io.StringIO()
    for rec in records:
        out.write(f"interchange {rec.id}\n")
        for key, value in rec.metadata.items():
            out.write(f"  meta {key} = {value}\n")
        if rec.graph.roads:
            out.write(f"  roads {' '.join(rec.graph.roads)}\n")
        if rec.graph.ramps:
            out.write(f"  ramps {' '.join(rec.graph.ramps)}\n")
        for e in rec.graph.edges:
            out.write(f"  connect {e.source} -> {e.target} : {e.label.value}\n")
        out.write("end\n\n")
    return out.getvalue()


def write_corpus(records: Iterable[InterchangeRecord], path: str | Path) -> None:
    Path(path).write_text(serialize_corpus(records), encoding="utf-8")
