"""HTTP clients for talking to another site's service: a replication
peer for sync and a remote provenance store for split deployments.
Requests carry the signed identity headers of a local keyfile.
"""

from __future__ import annotations

import json
import urllib.error
import urllib.request
from typing import Optional

from .fabric import ChangeSet, PeerUnreachable
from .graph import NodeKind
from .identity import Keyfile, signature_headers
from .questions import LineageDirection
from .provstore import AssertionBatch, BatchResult, ProvenanceUnavailable


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str):
        self.status = status
        self.code = code
        super().__init__(f"{status} {code}: {message}")


class HttpClient:
    def __init__(self, base_url: str, keyfile: Keyfile, timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.keyfile = keyfile
        self.timeout = timeout

    def request(
        self, method: str, path_qs: str, body: bytes = b"", raw: bool = False
    ):
        headers = signature_headers(self.keyfile, method, path_qs, body)
        if body:
            headers["Content-Type"] = "application/json"
        req = urllib.request.Request(
            self.base_url + path_qs, data=body or None, headers=headers, method=method
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                data = resp.read()
                return data if raw else (json.loads(data) if data else None)
        except urllib.error.HTTPError as exc:
            payload = exc.read()
            try:
                err = json.loads(payload)["error"]
            except (ValueError, KeyError):
                err = {"code": "http_error", "message": payload.decode(errors="replace")}
            raise ServiceError(exc.code, err.get("code", "error"), err.get("message", ""))
        except (urllib.error.URLError, OSError, TimeoutError) as exc:
            raise ConnectionError(str(exc)) from exc


class RemotePeer:
    """Replication source behind a service URL."""

    def __init__(self, base_url: str, keyfile: Keyfile, timeout: float = 30.0):
        self._client = HttpClient(base_url, keyfile, timeout)
        self._site_id: Optional[str] = None

    @property
    def site_id(self) -> str:
        if self._site_id is None:
            try:
                info = self._client.request("GET", "/health")
            except ConnectionError as exc:
                raise PeerUnreachable(str(exc)) from exc
            self._site_id = info["site_id"]
        return self._site_id

    def changes_since(self, seq: int) -> ChangeSet:
        since = json.dumps({self.site_id: seq})
        from urllib.parse import quote

        try:
            obj = self._client.request("GET", f"/changes?since={quote(since)}")
        except ConnectionError as exc:
            raise PeerUnreachable(str(exc)) from exc
        return ChangeSet.from_json_dict(obj)

    def fetch_chunk(self, chunk_digest: str) -> bytes:
        try:
            return self._client.request("GET", f"/content/{chunk_digest}", raw=True)
        except ConnectionError as exc:
            raise PeerUnreachable(str(exc)) from exc


class RemoteProvenance:
    """Provenance store behind a service URL (same protocol the embedded
    ProvenanceStore offers to the notebook layer)."""

    def __init__(self, base_url: str, keyfile: Keyfile, timeout: float = 30.0):
        self._client = HttpClient(base_url, keyfile, timeout)

    def apply_batch(self, batch: AssertionBatch) -> BatchResult:
        try:
            obj = self._client.request(
                "POST", "/batch", json.dumps(batch.to_json_dict()).encode()
            )
        except ConnectionError as exc:
            raise ProvenanceUnavailable(str(exc)) from exc
        return BatchResult(
            tuple(obj["node_ids"]), tuple(obj["edge_ids"]), obj.get("replayed", False)
        )

    def has_node(self, kind: NodeKind, identifier: str) -> bool:
        escaped = identifier.replace("\\", "\\\\").replace("'", "\\'")
        expr = f"$x := g:key($_g,'identifier','{escaped}')[@type='{NodeKind(kind).value}']"
        from urllib.parse import quote

        try:
            result = self._client.request("GET", f"/query?expr={quote(expr)}")
        except ConnectionError as exc:
            raise ProvenanceUnavailable(str(exc)) from exc
        return bool(result)

    def subgraph(
        self,
        kind: NodeKind,
        identifier: str,
        direction: LineageDirection = LineageDirection.ANCESTORS,
    ):
        from urllib.parse import quote

        path = (
            f"/lineage/{NodeKind(kind).value}/{quote(identifier, safe='')}"
            f"?format=graph&direction={direction.value}"
        )
        try:
            obj = self._client.request("GET", path)
        except ConnectionError as exc:
            raise ProvenanceUnavailable(str(exc)) from exc
        except ServiceError as exc:
            if exc.status == 404:
                return None
            raise
        return obj["nodes"], obj["edges"]
