"""Embedded property graph with Open Provenance Model typing.

Nodes are artifacts, processes or agents; edges carry one of the six
causal labels and must respect the endpoint kind table. Every annotation
key is indexed for get_by_key lookups. Snapshots are length-prefixed
binary records with a trailing checksum.

Thread model: single writer, many readers. Mutations are serialized
through an internal lock; node/edge objects handed out are immutable.
"""

from __future__ import annotations

import hashlib
import json
import struct
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Mapping, Optional


class NodeKind(str, Enum):
    ARTIFACT = "artifact"
    PROCESS = "process"
    AGENT = "agent"


class EdgeLabel(str, Enum):
    USED = "used"
    WAS_UNDERTAKEN_BY = "wasUndertakenBy"
    WAS_TRIGGERED_BY = "wasTriggeredBy"
    WAS_DERIVED_FROM = "wasDerivedFrom"
    IS_BASED_ON = "isBasedOn"
    WAS_GENERATED_BY = "wasGeneratedBy"


# label -> (source kind, target kind); edges point from effect to cause
EDGE_ENDPOINTS: dict[EdgeLabel, tuple[NodeKind, NodeKind]] = {
    EdgeLabel.USED: (NodeKind.PROCESS, NodeKind.ARTIFACT),
    EdgeLabel.WAS_UNDERTAKEN_BY: (NodeKind.PROCESS, NodeKind.AGENT),
    EdgeLabel.WAS_TRIGGERED_BY: (NodeKind.PROCESS, NodeKind.PROCESS),
    EdgeLabel.WAS_DERIVED_FROM: (NodeKind.ARTIFACT, NodeKind.ARTIFACT),
    EdgeLabel.IS_BASED_ON: (NodeKind.ARTIFACT, NodeKind.ARTIFACT),
    EdgeLabel.WAS_GENERATED_BY: (NodeKind.ARTIFACT, NodeKind.PROCESS),
}

# annotation keys the graph maintains itself
RESERVED_NODE_KEYS = ("type", "identifier")
RESERVED_EDGE_KEYS = ("label",)


class Direction(Enum):
    INCOMING = "incoming"
    OUTGOING = "outgoing"


class GraphError(Exception):
    """Base class for graph store failures."""


class EmptyIdentifier(GraphError):
    def __init__(self) -> None:
        super().__init__("node identifier must be non-empty")


class DuplicateIdentifier(GraphError):
    def __init__(self, kind: NodeKind, identifier: str):
        self.kind = kind
        self.identifier = identifier
        super().__init__(f"{kind.value} node {identifier!r} already exists")


class UnknownNode(GraphError):
    def __init__(self, node_id: int):
        self.node_id = node_id
        super().__init__(f"no node with id {node_id}")


class EndpointKindViolation(GraphError):
    def __init__(self, label: EdgeLabel, found: tuple[NodeKind, NodeKind]):
        self.label = label
        self.found = found
        want = EDGE_ENDPOINTS[label]
        super().__init__(
            f"{label.value} requires {want[0].value}->{want[1].value}, "
            f"got {found[0].value}->{found[1].value}"
        )


class ReservedAnnotation(GraphError):
    def __init__(self, key: str):
        self.key = key
        super().__init__(f"annotation key {key!r} is maintained by the graph")


class IoFailure(GraphError):
    pass


class CorruptSnapshot(GraphError):
    def __init__(self, offset: int, reason: str):
        self.offset = offset
        self.reason = reason
        super().__init__(f"corrupt snapshot at byte {offset}: {reason}")


@dataclass(frozen=True)
class OpmNode:
    id: int
    kind: NodeKind
    identifier: str
    annotations: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class OpmEdge:
    id: int
    label: EdgeLabel
    source: int
    target: int
    annotations: dict[str, str] = field(default_factory=dict)


_MAGIC = b"OPMSNAP1"


class OpmGraph:
    """In-memory OPM graph with key-value indices and binary snapshots."""

    def __init__(self) -> None:
        self._nodes: dict[int, OpmNode] = {}
        self._edges: dict[int, OpmEdge] = {}
        self._by_identity: dict[tuple[NodeKind, str], int] = {}
        self._index: dict[str, dict[str, set[int]]] = {}
        self._out: dict[int, list[int]] = {}
        self._in: dict[int, list[int]] = {}
        self._next_node_id = 1
        self._next_edge_id = 1
        self._lock = threading.Lock()

    # -- mutation ---------------------------------------------------------

    def add_node(
        self,
        kind: NodeKind,
        identifier: str,
        annotations: Optional[Mapping[str, str]] = None,
    ) -> int:
        kind = NodeKind(kind)
        if not identifier:
            raise EmptyIdentifier()
        extra = dict(annotations or {})
        for key in RESERVED_NODE_KEYS:
            if key in extra and extra[key] != (
                kind.value if key == "type" else identifier
            ):
                raise ReservedAnnotation(key)
        with self._lock:
            if (kind, identifier) in self._by_identity:
                raise DuplicateIdentifier(kind, identifier)
            node_id = self._next_node_id
            self._next_node_id += 1
            merged = dict(extra)
            merged["type"] = kind.value
            merged["identifier"] = identifier
            node = OpmNode(node_id, kind, identifier, merged)
            self._install_node(node)
        return node_id

    def add_edge(
        self,
        label: EdgeLabel,
        source: int,
        target: int,
        annotations: Optional[Mapping[str, str]] = None,
    ) -> int:
        label = EdgeLabel(label)
        extra = dict(annotations or {})
        if "label" in extra and extra["label"] != label.value:
            raise ReservedAnnotation("label")
        with self._lock:
            src = self._nodes.get(source)
            if src is None:
                raise UnknownNode(source)
            dst = self._nodes.get(target)
            if dst is None:
                raise UnknownNode(target)
            want = EDGE_ENDPOINTS[label]
            if (src.kind, dst.kind) != want:
                raise EndpointKindViolation(label, (src.kind, dst.kind))
            edge_id = self._next_edge_id
            self._next_edge_id += 1
            merged = dict(extra)
            merged["label"] = label.value
            edge = OpmEdge(edge_id, label, source, target, merged)
            self._install_edge(edge)
        return edge_id

    def set_annotation(self, node_id: int, key: str, value: str) -> None:
        """Write one annotation, keeping the key index consistent."""
        if key in RESERVED_NODE_KEYS:
            raise ReservedAnnotation(key)
        with self._lock:
            node = self._nodes.get(node_id)
            if node is None:
                raise UnknownNode(node_id)
            old = node.annotations.get(key)
            if old is not None:
                self._index[key][old].discard(node_id)
                if not self._index[key][old]:
                    del self._index[key][old]
            merged = dict(node.annotations)
            merged[key] = value
            self._nodes[node_id] = OpmNode(
                node.id, node.kind, node.identifier, merged
            )
            self._index.setdefault(key, {}).setdefault(value, set()).add(node_id)

    def _install_node(self, node: OpmNode) -> None:
        self._nodes[node.id] = node
        self._by_identity[(node.kind, node.identifier)] = node.id
        self._out.setdefault(node.id, [])
        self._in.setdefault(node.id, [])
        for key, value in node.annotations.items():
            self._index.setdefault(key, {}).setdefault(value, set()).add(node.id)

    def _install_edge(self, edge: OpmEdge) -> None:
        self._edges[edge.id] = edge
        self._out[edge.source].append(edge.id)
        self._in[edge.target].append(edge.id)

    # -- lookup -----------------------------------------------------------

    @property
    def node_count(self) -> int:
        return len(self._nodes)

    @property
    def edge_count(self) -> int:
        return len(self._edges)

    def get_node(self, node_id: int) -> OpmNode:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise UnknownNode(node_id) from None

    def get_edge(self, edge_id: int) -> OpmEdge:
        return self._edges[edge_id]

    def has_node(self, node_id: int) -> bool:
        return node_id in self._nodes

    def find_node(self, kind: NodeKind, identifier: str) -> Optional[OpmNode]:
        node_id = self._by_identity.get((NodeKind(kind), identifier))
        return self._nodes[node_id] if node_id is not None else None

    def get_by_key(self, prop: str, value: str) -> set[int]:
        """All node ids whose annotations contain prop=value."""
        return set(self._index.get(prop, {}).get(value, set()))

    def neighbors(
        self,
        node_id: int,
        direction: Direction,
        label: Optional[EdgeLabel] = None,
    ) -> list[tuple[int, int]]:
        """(edge id, neighbor node id) pairs, ordered by edge id.

        Outgoing pairs edges having this node as source with their
        targets; Incoming pairs edges targeting this node with their
        sources.
        """
        if node_id not in self._nodes:
            raise UnknownNode(node_id)
        if direction is Direction.OUTGOING:
            edge_ids = self._out[node_id]
        else:
            edge_ids = self._in[node_id]
        out: list[tuple[int, int]] = []
        for eid in sorted(edge_ids):
            edge = self._edges[eid]
            if label is not None and edge.label is not EdgeLabel(label):
                continue
            other = edge.target if direction is Direction.OUTGOING else edge.source
            out.append((eid, other))
        return out

    def all_nodes(self) -> Iterator[OpmNode]:
        for node_id in sorted(self._nodes):
            yield self._nodes[node_id]

    def all_edges(self) -> Iterator[OpmEdge]:
        for edge_id in sorted(self._edges):
            yield self._edges[edge_id]

    # -- persistence ------------------------------------------------------

    def to_bytes(self) -> bytes:
        header = {
            "format": "opm-snapshot/1",
            "next_node_id": self._next_node_id,
            "next_edge_id": self._next_edge_id,
            "nodes": len(self._nodes),
            "edges": len(self._edges),
        }
        parts = [_MAGIC, _record(header)]
        for node in self.all_nodes():
            parts.append(
                _record(
                    {
                        "id": node.id,
                        "kind": node.kind.value,
                        "identifier": node.identifier,
                        "annotations": node.annotations,
                    }
                )
            )
        for edge in self.all_edges():
            parts.append(
                _record(
                    {
                        "id": edge.id,
                        "label": edge.label.value,
                        "source": edge.source,
                        "target": edge.target,
                        "annotations": edge.annotations,
                    }
                )
            )
        body = b"".join(parts)
        return body + hashlib.sha256(body).digest()

    def persist(self, path) -> None:
        try:
            data = self.to_bytes()
            tmp = str(path) + ".tmp"
            with open(tmp, "wb") as fh:
                fh.write(data)
            import os

            os.replace(tmp, str(path))
        except OSError as exc:
            raise IoFailure(str(exc)) from exc

    @classmethod
    def from_bytes(cls, data: bytes) -> "OpmGraph":
        if len(data) < len(_MAGIC) + 32:
            raise CorruptSnapshot(0, "file shorter than header and checksum")
        if data[: len(_MAGIC)] != _MAGIC:
            raise CorruptSnapshot(0, "bad magic")
        body, checksum = data[:-32], data[-32:]
        if hashlib.sha256(body).digest() != checksum:
            raise CorruptSnapshot(len(body), "checksum mismatch")
        offset = len(_MAGIC)
        header, offset = _read_record(data, offset, len(body))
        if header.get("format") != "opm-snapshot/1":
            raise CorruptSnapshot(len(_MAGIC), "unknown snapshot format")
        graph = cls()
        graph._next_node_id = int(header["next_node_id"])
        graph._next_edge_id = int(header["next_edge_id"])
        for _ in range(int(header["nodes"])):
            rec_offset = offset
            rec, offset = _read_record(data, offset, len(body))
            try:
                node = OpmNode(
                    int(rec["id"]),
                    NodeKind(rec["kind"]),
                    rec["identifier"],
                    dict(rec["annotations"]),
                )
            except (KeyError, ValueError) as exc:
                raise CorruptSnapshot(rec_offset, f"bad node record: {exc}") from exc
            if not node.identifier:
                raise CorruptSnapshot(rec_offset, "empty identifier")
            if (node.kind, node.identifier) in graph._by_identity:
                raise CorruptSnapshot(rec_offset, "duplicate node identity")
            if node.annotations.get("type") != node.kind.value:
                raise CorruptSnapshot(rec_offset, "type annotation mismatch")
            graph._install_node(node)
        for _ in range(int(header["edges"])):
            rec_offset = offset
            rec, offset = _read_record(data, offset, len(body))
            try:
                edge = OpmEdge(
                    int(rec["id"]),
                    EdgeLabel(rec["label"]),
                    int(rec["source"]),
                    int(rec["target"]),
                    dict(rec["annotations"]),
                )
            except (KeyError, ValueError) as exc:
                raise CorruptSnapshot(rec_offset, f"bad edge record: {exc}") from exc
            src = graph._nodes.get(edge.source)
            dst = graph._nodes.get(edge.target)
            if src is None or dst is None:
                raise CorruptSnapshot(rec_offset, "dangling edge endpoint")
            if (src.kind, dst.kind) != EDGE_ENDPOINTS[edge.label]:
                raise CorruptSnapshot(rec_offset, "endpoint kinds violate label")
            graph._install_edge(edge)
        if offset != len(body):
            raise CorruptSnapshot(offset, "trailing bytes after records")
        return graph

    @classmethod
    def load(cls, path) -> "OpmGraph":
        try:
            with open(str(path), "rb") as fh:
                data = fh.read()
        except OSError as exc:
            raise IoFailure(str(exc)) from exc
        return cls.from_bytes(data)


def _record(obj) -> bytes:
    payload = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return struct.pack(">I", len(payload)) + payload


def _read_record(data: bytes, offset: int, limit: int):
    if offset + 4 > limit:
        raise CorruptSnapshot(offset, "truncated record length")
    (length,) = struct.unpack_from(">I", data, offset)
    start = offset + 4
    end = start + length
    if end > limit:
        raise CorruptSnapshot(offset, "truncated record payload")
    try:
        obj = json.loads(data[start:end])
    except ValueError as exc:
        raise CorruptSnapshot(offset, "record is not valid JSON") from exc
    return obj, end
