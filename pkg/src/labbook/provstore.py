"""Provenance store: atomic assertion batches over the OPM graph.

A batch is applied all-or-nothing after full validation, and replaying
a batch id returns the originally assigned ids without touching the
graph. Graph snapshot and batch registry are persisted together in one
atomically replaced store file so neither can outrun the other.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from . import traversal
from .graph import (
    CorruptSnapshot,
    DuplicateIdentifier,
    EdgeLabel,
    EmptyIdentifier,
    GraphError,
    NodeKind,
    OpmGraph,
)
from .questions import LineageDirection, lineage

_MAGIC = b"LBPROV1\n"


class UnknownNodeRef(GraphError):
    def __init__(self, kind: str, identifier: str):
        self.kind = kind
        self.identifier = identifier
        super().__init__(f"batch references unknown node {kind}:{identifier}")


class ProvenanceUnavailable(Exception):
    pass


@dataclass(frozen=True)
class NodeSpec:
    kind: NodeKind
    identifier: str
    annotations: dict[str, str] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "identifier": self.identifier,
            "annotations": self.annotations,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "NodeSpec":
        return cls(NodeKind(obj["kind"]), obj["identifier"], dict(obj.get("annotations", {})))


@dataclass(frozen=True)
class EdgeSpec:
    label: EdgeLabel
    source: tuple[NodeKind, str]
    target: tuple[NodeKind, str]
    annotations: dict[str, str] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "label": self.label.value,
            "source": {"kind": self.source[0].value, "identifier": self.source[1]},
            "target": {"kind": self.target[0].value, "identifier": self.target[1]},
            "annotations": self.annotations,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "EdgeSpec":
        return cls(
            EdgeLabel(obj["label"]),
            (NodeKind(obj["source"]["kind"]), obj["source"]["identifier"]),
            (NodeKind(obj["target"]["kind"]), obj["target"]["identifier"]),
            dict(obj.get("annotations", {})),
        )


@dataclass
class AssertionBatch:
    """Atomic set of provenance assertions emitted by one notebook action."""

    batch_id: str
    nodes: list[NodeSpec] = field(default_factory=list)
    edges: list[EdgeSpec] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "batch_id": self.batch_id,
            "nodes": [n.to_json_dict() for n in self.nodes],
            "edges": [e.to_json_dict() for e in self.edges],
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "AssertionBatch":
        if not isinstance(obj.get("batch_id"), str) or not obj["batch_id"]:
            raise ValueError("batch_id must be a non-empty string")
        return cls(
            obj["batch_id"],
            [NodeSpec.from_json_dict(n) for n in obj.get("nodes", [])],
            [EdgeSpec.from_json_dict(e) for e in obj.get("edges", [])],
        )


@dataclass(frozen=True)
class BatchResult:
    node_ids: tuple[int, ...]
    edge_ids: tuple[int, ...]
    replayed: bool = False

    def to_json_dict(self) -> dict:
        return {
            "node_ids": list(self.node_ids),
            "edge_ids": list(self.edge_ids),
            "replayed": self.replayed,
        }


def node_descriptor(node) -> dict:
    return {
        "kind": node.kind.value,
        "identifier": node.identifier,
        "annotations": dict(node.annotations),
    }


def edge_descriptor(graph: OpmGraph, edge) -> dict:
    src = graph.get_node(edge.source)
    dst = graph.get_node(edge.target)
    return {
        "label": edge.label.value,
        "source": {"kind": src.kind.value, "identifier": src.identifier},
        "target": {"kind": dst.kind.value, "identifier": dst.identifier},
        "annotations": dict(edge.annotations),
    }


class ProvenanceStore:
    """Persistent graph plus idempotent batch registry."""

    def __init__(self, store_path: Union[str, Path]):
        self.store_path = Path(store_path)
        self._lock = threading.RLock()
        self._batches: dict[str, tuple[list[int], list[int]]] = {}
        if self.store_path.exists():
            self.graph, self._batches = self._read_store(self.store_path)
        else:
            self.graph = OpmGraph()

    # -- persistence --------------------------------------------------------

    @staticmethod
    def _read_store(path: Path):
        data = path.read_bytes()
        if len(data) < len(_MAGIC) + 32 or data[: len(_MAGIC)] != _MAGIC:
            raise CorruptSnapshot(0, "bad provenance store magic")
        body, checksum = data[:-32], data[-32:]
        if hashlib.sha256(body).digest() != checksum:
            raise CorruptSnapshot(len(body), "provenance store checksum mismatch")
        offset = len(_MAGIC)
        graph_bytes, offset = _read_section(data, offset, len(body))
        batches_bytes, offset = _read_section(data, offset, len(body))
        if offset != len(body):
            raise CorruptSnapshot(offset, "trailing bytes in provenance store")
        graph = OpmGraph.from_bytes(graph_bytes)
        raw = json.loads(batches_bytes)
        batches = {
            batch_id: (list(ids[0]), list(ids[1])) for batch_id, ids in raw.items()
        }
        return graph, batches

    def _write_store(self) -> None:
        batches_json = json.dumps(
            {bid: [ids[0], ids[1]] for bid, ids in sorted(self._batches.items())},
            sort_keys=True,
            separators=(",", ":"),
        ).encode()
        body = _MAGIC + _section(self.graph.to_bytes()) + _section(batches_json)
        data = body + hashlib.sha256(body).digest()
        tmp = self.store_path.with_suffix(".tmp")
        tmp.parent.mkdir(parents=True, exist_ok=True)
        tmp.write_bytes(data)
        os.replace(tmp, self.store_path)

    # -- batches --------------------------------------------------------------

    def has_batch(self, batch_id: str) -> bool:
        return batch_id in self._batches

    def apply_batch(self, batch: AssertionBatch) -> BatchResult:
        with self._lock:
            if batch.batch_id in self._batches:
                node_ids, edge_ids = self._batches[batch.batch_id]
                return BatchResult(tuple(node_ids), tuple(edge_ids), replayed=True)

            # validate everything before touching the graph
            staged: dict[tuple[NodeKind, str], NodeKind] = {}
            for spec in batch.nodes:
                if not spec.identifier:
                    raise EmptyIdentifier()
                key = (spec.kind, spec.identifier)
                if key in staged or self.graph.find_node(*key) is not None:
                    raise DuplicateIdentifier(spec.kind, spec.identifier)
                staged[key] = spec.kind

            def resolve_kind(ref: tuple[NodeKind, str]) -> NodeKind:
                if ref in staged:
                    return ref[0]
                node = self.graph.find_node(*ref)
                if node is None:
                    raise UnknownNodeRef(ref[0].value, ref[1])
                return node.kind

            from .graph import EDGE_ENDPOINTS, EndpointKindViolation

            for espec in batch.edges:
                found = (resolve_kind(espec.source), resolve_kind(espec.target))
                if found != EDGE_ENDPOINTS[espec.label]:
                    raise EndpointKindViolation(espec.label, found)

            node_ids: list[int] = []
            for spec in batch.nodes:
                node_ids.append(
                    self.graph.add_node(spec.kind, spec.identifier, spec.annotations)
                )
            edge_ids: list[int] = []
            for espec in batch.edges:
                source = self.graph.find_node(*espec.source)
                target = self.graph.find_node(*espec.target)
                edge_ids.append(
                    self.graph.add_edge(espec.label, source.id, target.id, espec.annotations)
                )
            self._batches[batch.batch_id] = (node_ids, edge_ids)
            self._write_store()
            return BatchResult(tuple(node_ids), tuple(edge_ids))

    # -- queries ----------------------------------------------------------------

    def stats(self) -> dict[str, int]:
        return {
            "nodes": self.graph.node_count,
            "edges": self.graph.edge_count,
            "batches": len(self._batches),
        }

    def has_node(self, kind: NodeKind, identifier: str) -> bool:
        return self.graph.find_node(NodeKind(kind), identifier) is not None

    def run_query(self, text: str) -> dict[str, traversal.ResultSet]:
        return traversal.evaluate(self.graph, traversal.parse(text))

    def query_last(self, text: str) -> traversal.ResultSet:
        """The last-bound variable's ResultSet (what the wire returns)."""
        expr = traversal.parse(text)
        results = traversal.evaluate(self.graph, expr)
        return results[expr.statements[-1].name]

    def subgraph(
        self,
        kind: NodeKind,
        identifier: str,
        direction: LineageDirection = LineageDirection.ANCESTORS,
    ) -> Optional[tuple[list[dict], list[dict]]]:
        """Closure subgraph around a node as wire descriptors, or None."""
        node = self.graph.find_node(NodeKind(kind), identifier)
        if node is None:
            return None
        ids = lineage(self.graph, node.id, direction) | {node.id}
        nodes = [
            node_descriptor(self.graph.get_node(n)) for n in sorted(ids)
        ]
        edges = [
            edge_descriptor(self.graph, e)
            for e in self.graph.all_edges()
            if e.source in ids and e.target in ids
        ]
        return nodes, edges


def _section(payload: bytes) -> bytes:
    return struct.pack(">Q", len(payload)) + payload


def _read_section(data: bytes, offset: int, limit: int):
    if offset + 8 > limit:
        raise CorruptSnapshot(offset, "truncated section length")
    (length,) = struct.unpack_from(">Q", data, offset)
    start = offset + 8
    end = start + length
    if end > limit:
        raise CorruptSnapshot(offset, "truncated section payload")
    return data[start:end], end
