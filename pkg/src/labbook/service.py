"""HTTP/JSON service exposing the provenance store, the data fabric and
the notebook orchestration of one site.

All endpoints except GET /health and the static frontend assets require
the signed identity headers. Mutations funnel through the single-writer
stores; reads never block writes.
"""

from __future__ import annotations

import json
import re
import threading
import urllib.parse
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional

from . import chunks as chunkmod
from . import fabric as fabricmod
from . import glp as glpmod
from . import graph as graphmod
from . import traversal
from .identity import BadIdentity, KeyRegistry, verify_request
from .questions import (
    LineageDirection,
    MissingRuleset,
    NoStage,
    ProgressAnswer,
    QualityReport,
    Question,
    answer,
    default_ruleset,
)
from .notebook import (
    BadSignature,
    ImportRequest,
    MetadataViolation,
    Notebook,
    NotCopyable,
    PlacementViolation,
    SignatureRecord,
    UnknownInfluence,
)
from .provstore import ProvenanceStore, ProvenanceUnavailable, AssertionBatch, UnknownNodeRef
from .identity import UnknownSignerKey

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".svg": "image/svg+xml",
    ".png": "image/png",
    ".ico": "image/x-icon",
    ".map": "application/json",
}


def _error_status(exc: Exception) -> tuple[int, str]:
    if isinstance(exc, BadIdentity):
        return 401, "bad_identity"
    if isinstance(exc, graphmod.DuplicateIdentifier):
        return 409, "duplicate_identifier"
    if isinstance(exc, fabricmod.PathTaken):
        return 409, "path_taken"
    if isinstance(exc, traversal.QuerySyntaxError):
        return 400, "syntax_error"
    if isinstance(exc, traversal.UnboundVariable):
        return 400, "unbound_variable"
    if isinstance(exc, traversal.TypeMismatch):
        return 422, "type_mismatch"
    if isinstance(exc, graphmod.EndpointKindViolation):
        return 422, "endpoint_kind_violation"
    if isinstance(exc, UnknownNodeRef):
        return 422, "unknown_node"
    if isinstance(exc, (graphmod.EmptyIdentifier, graphmod.ReservedAnnotation)):
        return 422, "invalid_node"
    if isinstance(exc, graphmod.UnknownNode):
        return 404, "unknown_node"
    if isinstance(exc, NoStage):
        return 422, "no_stage"
    if isinstance(exc, MissingRuleset):
        return 422, "missing_ruleset"
    if isinstance(exc, PlacementViolation):
        return 422, "placement_violation"
    if isinstance(exc, MetadataViolation):
        return 422, "metadata_violation"
    if isinstance(exc, UnknownInfluence):
        return 422, "unknown_influence"
    if isinstance(exc, NotCopyable):
        return 422, "not_copyable"
    if isinstance(exc, BadSignature):
        return 422, "bad_signature"
    if isinstance(exc, UnknownSignerKey):
        return 422, "unknown_signer_key"
    if isinstance(exc, fabricmod.UnknownItem):
        return 404, "unknown_item"
    if isinstance(exc, chunkmod.UnknownDigest):
        return 404, "unknown_digest"
    if isinstance(exc, chunkmod.ChunkMissing):
        return 422, "chunk_missing"
    if isinstance(exc, fabricmod.DigestMismatch):
        return 422, "digest_mismatch"
    if isinstance(
        exc,
        (
            fabricmod.BadPredicate,
            fabricmod.InvalidPath,
            fabricmod.InvalidItem,
            fabricmod.ParentNotCollection,
            fabricmod.MissingArchivalLocation,
            glpmod.UnknownCollectionType,
        ),
    ):
        return 422, "validation_error"
    if isinstance(exc, ProvenanceUnavailable):
        return 503, "provenance_unavailable"
    if isinstance(exc, (ValueError, KeyError, TypeError)):
        return 400, "bad_request"
    return 500, "internal_error"


def _error_body(exc: Exception, code: str) -> dict:
    body = {"error": {"code": code, "message": str(exc)}}
    if isinstance(exc, traversal.QuerySyntaxError):
        body["error"].update(
            {"line": exc.line, "column": exc.column, "expected": exc.expected}
        )
    if isinstance(exc, traversal.UnboundVariable):
        body["error"].update({"line": exc.line, "column": exc.column, "name": exc.name})
    if isinstance(exc, MetadataViolation):
        body["error"]["violations"] = [v.message for v in exc.violations]
    return body


class LabService:
    """Bundles the stores behind a threading HTTP server."""

    def __init__(
        self,
        notebook: Notebook,
        registry: KeyRegistry,
        host: str = "127.0.0.1",
        port: int = 0,
        static_dir: Optional[Path] = None,
    ):
        self.notebook = notebook
        self.repo = notebook.repo
        self.provenance: ProvenanceStore = notebook.provenance
        self.registry = registry
        self.static_dir = Path(static_dir) if static_dir else None
        handler = _make_handler(self)
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self._thread: Optional[threading.Thread] = None

    @property
    def address(self) -> tuple[str, int]:
        return self.httpd.server_address[:2]

    @property
    def base_url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def start(self) -> None:
        self._thread = threading.Thread(
            target=lambda: self.httpd.serve_forever(poll_interval=0.05), daemon=True
        )
        self._thread.start()

    def serve_forever(self) -> None:
        self.httpd.serve_forever()

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread:
            self._thread.join(timeout=5)


def _make_handler(service: LabService):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        server_version = "labbook"

        def log_message(self, fmt, *args):  # quiet test output
            pass

        # -- plumbing -----------------------------------------------------

        def _body(self) -> bytes:
            length = int(self.headers.get("Content-Length") or 0)
            return self.rfile.read(length) if length else b""

        def _send_json(self, status: int, obj) -> None:
            data = json.dumps(obj, sort_keys=True).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def _send_bytes(self, status: int, data: bytes, content_type: str) -> None:
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def _authenticate(self, body: bytes) -> str:
            return verify_request(
                service.registry, dict(self.headers), self.command, self.path, body
            )

        def _dispatch(self) -> None:
            parsed = urllib.parse.urlsplit(self.path)
            path = parsed.path
            params = urllib.parse.parse_qs(parsed.query)
            body = self._body()
            try:
                if self.command == "GET" and path == "/health":
                    self._send_json(
                        200, {"status": "ok", "site_id": service.repo.site_id}
                    )
                    return
                if self.command == "GET" and self._maybe_static(path):
                    return
                dn = self._authenticate(body)
                self._route(path, params, body, dn)
            except Exception as exc:  # mapped to a JSON error envelope
                status, code = _error_status(exc)
                self._send_json(status, _error_body(exc, code))

        def _maybe_static(self, path: str) -> bool:
            if service.static_dir is None:
                return False
            if path.startswith(
                ("/batch", "/query", "/lineage", "/stats", "/items", "/content",
                 "/changes", "/statedigest", "/spec", "/import")
            ):
                return False
            rel = path.lstrip("/") or "index.html"
            target = (service.static_dir / rel).resolve()
            root = service.static_dir.resolve()
            if root not in target.parents and target != root:
                return False
            if target.is_dir():
                target = target / "index.html"
            if not target.is_file():
                return False
            ctype = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
            self._send_bytes(200, target.read_bytes(), ctype)
            return True

        # -- routing ------------------------------------------------------

        def _route(self, path: str, params, body: bytes, dn: str) -> None:
            method = self.command
            if method == "POST" and path == "/batch":
                batch = AssertionBatch.from_json_dict(json.loads(body))
                result = service.provenance.apply_batch(batch)
                self._send_json(200, result.to_json_dict())
            elif method == "GET" and path == "/query":
                self._handle_query(params)
            elif method == "GET" and path.startswith("/lineage/"):
                self._handle_lineage(path, params)
            elif method == "GET" and path == "/stats":
                self._send_json(200, service.provenance.stats())
            elif method == "GET" and path == "/spec":
                self._send_json(200, service.notebook.spec.to_json_dict())
            elif method == "POST" and path == "/import":
                self._handle_import(body, dn)
            elif method == "POST" and path == "/items":
                self._handle_create_item(body)
            elif (m := re.fullmatch(r"/items/([^/]+)/signing_digest", path)) and method == "GET":
                self._send_json(
                    200, {"signed_digest": service.notebook.signing_digest(m.group(1))}
                )
            elif (m := re.fullmatch(r"/items/([^/]+)/signatures", path)) and method == "POST":
                record = SignatureRecord.from_json_dict(json.loads(body))
                service.notebook.add_signature_record(m.group(1), record)
                self._send_json(200, {"attached": True})
            elif (m := re.fullmatch(r"/items/([^/]+)/verify", path)) and method == "GET":
                verdicts = service.notebook.verify_item(m.group(1))
                self._send_json(
                    200, [{"signer_dn": d, "valid": v} for d, v in verdicts]
                )
            elif (m := re.fullmatch(r"/items/([^/]+)", path)) and method == "GET":
                record = service.repo.get_item(m.group(1))
                self._send_json(200, record.to_json_dict())
            elif (m := re.fullmatch(r"/items/([^/]+)", path)) and method == "PATCH":
                patch = json.loads(body).get("metadata", {})
                record = service.repo.update_metadata(m.group(1), patch)
                self._send_json(200, record.to_json_dict())
            elif method == "GET" and path == "/items":
                self._handle_items_query(params)
            elif method == "PUT" and path == "/content":
                digest, size = service.repo.put_content(body)
                self._send_json(200, {"digest": digest, "size": size})
            elif (m := re.fullmatch(r"/content/([0-9a-f]{64})", path)) and method == "GET":
                self._handle_get_content(m.group(1))
            elif method == "GET" and path == "/changes":
                since = json.loads(params.get("since", ["{}"])[0])
                seq = int(since.get(service.repo.site_id, 0))
                changes = service.repo.changes_since(seq)
                self._send_json(200, changes.to_json_dict())
            elif method == "POST" and path == "/changes":
                changes = fabricmod.ChangeSet.from_json_dict(json.loads(body))
                report = service.repo.apply_changes(changes)
                self._send_json(200, report.to_json_dict())
            elif method == "GET" and path == "/statedigest":
                self._send_json(200, {"digest": service.repo.state_digest()})
            else:
                self._send_json(
                    404, {"error": {"code": "not_found", "message": path}}
                )

        def _handle_query(self, params) -> None:
            exprs = params.get("expr")
            if not exprs:
                raise ValueError("missing expr parameter")
            last = service.provenance.query_last(exprs[0])
            self._send_json(200, _result_set_json(service.provenance.graph, last))

        def _handle_lineage(self, path: str, params) -> None:
            m = re.fullmatch(r"/lineage/([^/]+)/(.+)", path)
            if not m:
                raise ValueError("lineage path must be /lineage/{kind}/{identifier}")
            kind = graphmod.NodeKind(m.group(1))
            identifier = urllib.parse.unquote(m.group(2))
            node = service.provenance.graph.find_node(kind, identifier)
            if node is None:
                self._send_json(
                    404,
                    {"error": {"code": "unknown_node", "message": identifier}},
                )
                return
            question = params.get("question", [None])[0]
            direction = LineageDirection(
                params.get("direction", ["ancestors"])[0]
            )
            if question:
                self._handle_question(node, Question(question))
                return
            if params.get("format", [None])[0] == "graph":
                nodes, edges = service.provenance.subgraph(kind, identifier, direction)
                self._send_json(200, {"nodes": nodes, "edges": edges})
                return
            from .questions import lineage as lineage_fn

            ids = lineage_fn(service.provenance.graph, node.id, direction)
            graph = service.provenance.graph
            self._send_json(
                200,
                [
                    _node_json(graph.get_node(n))
                    for n in sorted(ids)
                ],
            )

        def _handle_question(self, node, question: Question) -> None:
            graph = service.provenance.graph
            context = None
            if question is Question.QUALITY:
                context = {"ruleset": default_ruleset()}
            result = answer(graph, question, node.id, context)
            if isinstance(result, ProgressAnswer):
                self._send_json(
                    200, {"stage": result.stage, "finalized": result.finalized}
                )
            elif isinstance(result, QualityReport):
                self._send_json(
                    200,
                    {
                        "passed": result.passed,
                        "violations": [
                            {
                                "rule": v.rule,
                                "node": _node_json(graph.get_node(v.node_id)),
                                "message": v.message,
                            }
                            for v in result.violations
                        ],
                    },
                )
            else:
                self._send_json(200, _result_set_json(graph, result))

        def _handle_import(self, body: bytes, dn: str) -> None:
            obj = json.loads(body)
            payload = None
            if obj.get("content_b64") is not None:
                import base64

                payload = base64.b64decode(obj["content_b64"])
            request = ImportRequest(
                path=obj["path"],
                item_type=obj["item_type"],
                metadata=dict(obj.get("metadata", {})),
                payload=payload,
                physical_location=obj.get("physical_location"),
                influences=list(obj.get("influences", [])),
                actor_dn=dn,
            )
            record, result = service.notebook.import_item(request)
            self._send_json(
                200, {"item": record.to_json_dict(), "batch": result.to_json_dict()}
            )

        def _handle_create_item(self, body: bytes) -> None:
            obj = json.loads(body)
            kind = fabricmod.ItemKind(obj["kind"])
            if kind is fabricmod.ItemKind.COLLECTION and obj.get("metadata", {}).get(
                "collection_type"
            ):
                record = service.notebook.create_collection(
                    obj["path"],
                    obj["metadata"]["collection_type"],
                    {
                        k: v
                        for k, v in obj.get("metadata", {}).items()
                        if k != "collection_type"
                    },
                )
            else:
                record = service.repo.create_item(
                    obj["path"],
                    kind,
                    obj.get("metadata", {}),
                    obj.get("content_digest"),
                )
            self._send_json(200, record.to_json_dict())

        def _handle_items_query(self, params) -> None:
            raw = params.get("query", [None])[0]
            predicate = (
                fabricmod.predicate_from_json(json.loads(raw))
                if raw
                else fabricmod.MATCH_ALL
            )
            records = service.repo.query(predicate)
            self._send_json(200, [r.to_json_dict() for r in records])

        def _handle_get_content(self, digest: str) -> None:
            chunks = service.repo.chunks
            if chunks.has_content(digest):
                data = chunks.get_content(digest)
            elif chunks.has_chunk(digest):
                data = chunks.get_chunk(digest)
            else:
                raise chunkmod.UnknownDigest(digest)
            self._send_bytes(200, data, "application/octet-stream")

        do_GET = _dispatch
        do_POST = _dispatch
        do_PUT = _dispatch
        do_PATCH = _dispatch

    return Handler


def _node_json(node) -> dict:
    return {
        "kind": node.kind.value,
        "identifier": node.identifier,
        "annotations": dict(node.annotations),
    }


def _result_set_json(graph, result: traversal.ResultSet):
    if result.tag == traversal.VALUES:
        return list(result.items)
    if result.tag == traversal.NODES:
        return [_node_json(graph.get_node(n)) for n in result.items]
    out = []
    for eid in result.items:
        edge = graph.get_edge(eid)
        src = graph.get_node(edge.source)
        dst = graph.get_node(edge.target)
        out.append(
            {
                "label": edge.label.value,
                "source": {"kind": src.kind.value, "identifier": src.identifier},
                "target": {"kind": dst.kind.value, "identifier": dst.identifier},
                "annotations": dict(edge.annotations),
            }
        )
    return out
