"""Notebook orchestration: the observer mechanism around imports, digital
signing, evidential archive export, search and copy forks.

Every import creates the fabric item and posts one atomic assertion
batch (artifact, a per-import process carrying the stage, the acting
agent, and the generated-by / undertaken-by / used edges). A write-ahead
journal brackets the two effects: replaying it after a crash either
completes the provenance post (batch ids make replays idempotent) or
establishes that the item never materialized.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Union
from uuid import uuid4

from . import chunks as chunkmod
from .fabric import ItemKind, ItemRecord, Repository, UnknownItem
from .glp import DataModelSpec, Violation, validate_metadata, validate_placement
from .graph import EdgeLabel, NodeKind
from .identity import KeyRegistry, Keyfile, UnknownSignerKey, sign, verify
from .questions import RuleViolation
from .provstore import (
    AssertionBatch,
    BatchResult,
    EdgeSpec,
    NodeSpec,
    ProvenanceUnavailable,
)

SIGNATURES_KEY = "signatures"
SIGNATURE_ALGORITHM = "ed25519-sha256"

# annotation keys copied from item metadata onto the artifact node;
# "type" is reserved for the node kind, so the item type maps to item_type
_COPIED_METADATA = ("creator", "created", "project")


class NotebookError(Exception):
    pass


class PlacementViolation(NotebookError):
    def __init__(self, violation: Violation):
        self.violation = violation
        super().__init__(violation.message)


class MetadataViolation(NotebookError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(v.message for v in violations))


class UnknownInfluence(NotebookError):
    def __init__(self, item_id: str):
        self.item_id = item_id
        super().__init__(f"influence {item_id} does not reference a live, tracked item")


class MissingPayload(NotebookError):
    def __init__(self, digest: str):
        self.digest = digest
        super().__init__(f"payload {digest} cannot be reproduced from the chunk store")


class NotCopyable(NotebookError):
    pass


class BadSignature(NotebookError):
    pass


@dataclass
class ImportRequest:
    path: str  # target collection
    item_type: str
    metadata: dict = field(default_factory=dict)
    payload: Optional[bytes] = None
    physical_location: Optional[str] = None
    influences: list[str] = field(default_factory=list)
    actor_dn: str = ""


@dataclass(frozen=True)
class SignatureRecord:
    signer_dn: str
    algorithm: str
    signature_b64: str
    signed_digest: str
    timestamp_ms: int

    def to_json_dict(self) -> dict:
        return {
            "signer_dn": self.signer_dn,
            "algorithm": self.algorithm,
            "signature": self.signature_b64,
            "signed_digest": self.signed_digest,
            "timestamp_ms": self.timestamp_ms,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "SignatureRecord":
        return cls(
            obj["signer_dn"],
            obj["algorithm"],
            obj["signature"],
            obj["signed_digest"],
            int(obj["timestamp_ms"]),
        )


@dataclass(frozen=True)
class ArchiveSummary:
    report_item_id: str
    item_count: int
    node_count: int
    edge_count: int
    payload_bytes: int
    out_dir: str


class Journal:
    """Append-only JSONL write-ahead journal."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)

    def append(self, obj: dict) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(obj, sort_keys=True) + "\n")

    def entries(self) -> list[dict]:
        if not self.path.exists():
            return []
        out = []
        with open(self.path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    out.append(json.loads(line))
                except ValueError:
                    break  # torn trailing line
        return out


class Notebook:
    """Binds one repository, its GLP spec and a provenance store."""

    def __init__(
        self,
        repo: Repository,
        provenance,
        spec: DataModelSpec,
        registry: KeyRegistry,
        journal_path: Union[str, Path],
        crash_hook: Optional[Callable[[str], None]] = None,
    ):
        self.repo = repo
        self.provenance = provenance
        self.spec = spec
        self.registry = registry
        self.journal = Journal(journal_path)
        self.crash_hook = crash_hook or (lambda stage: None)
        # one orchestration writer per repository: mutations that span the
        # fabric and the provenance store are serialized here
        self._write_lock = threading.RLock()

    # -- structure ------------------------------------------------------------

    def create_collection(
        self, path: str, collection_type: str, metadata: Optional[dict] = None
    ) -> ItemRecord:
        with self._write_lock:
            parent_type = self._parent_collection_type(path)
            bad = validate_placement(self.spec, parent_type, collection_type)
            if bad is not None:
                raise PlacementViolation(bad)
            merged = dict(metadata or {})
            merged["collection_type"] = collection_type
            return self.repo.create_item(path, ItemKind.COLLECTION, merged)

    def _parent_collection_type(self, path: str) -> Optional[str]:
        from .fabric import ParentNotCollection, normalize_path, parent_path

        parent = parent_path(normalize_path(path))
        if parent == "/":
            return None
        holder = self.repo.get_by_path(parent)
        if holder is None or holder.kind is not ItemKind.COLLECTION:
            raise ParentNotCollection(path)
        ct = holder.metadata.get("collection_type")
        if not isinstance(ct, str):
            raise ParentNotCollection(path)
        return ct

    def _collection_type_of(self, collection: ItemRecord) -> str:
        ct = collection.metadata.get("collection_type")
        if not isinstance(ct, str):
            raise PlacementViolation(
                Violation("placement", f"{collection.path} carries no collection type")
            )
        return ct

    # -- import pipeline --------------------------------------------------------

    def import_item(self, request: ImportRequest) -> tuple[ItemRecord, BatchResult]:
        with self._write_lock:
            return self._import_item(request)

    def _import_item(self, request: ImportRequest) -> tuple[ItemRecord, BatchResult]:
        if (request.payload is None) == (request.physical_location is None):
            raise NotebookError(
                "an import carries either file payload bytes or a physical location"
            )
        if not request.actor_dn:
            raise NotebookError("imports require an acting DN")
        target = self.repo.get_by_path(request.path)
        if target is None or target.kind is not ItemKind.COLLECTION:
            raise PlacementViolation(
                Violation("placement", f"{request.path} is not a collection")
            )
        collection_type = self._collection_type_of(target)

        bad = validate_placement(self.spec, collection_type, request.item_type)
        if bad is not None:
            raise PlacementViolation(bad)

        metadata = dict(request.metadata)
        metadata.setdefault("type", request.item_type)
        if request.physical_location is not None:
            metadata.setdefault("archival_location", request.physical_location)
        violations = validate_metadata(
            self.spec, collection_type, request.item_type, metadata
        )
        if violations:
            raise MetadataViolation(violations)

        for influence in request.influences:
            try:
                record = self.repo.get_item(influence)
            except Exception:
                raise UnknownInfluence(influence) from None
            if record.tombstone:
                raise UnknownInfluence(influence)
            if not self.provenance.has_node(NodeKind.ARTIFACT, influence):
                raise UnknownInfluence(influence)

        item_id = str(uuid4())
        kind = ItemKind.FILE if request.payload is not None else ItemKind.PHYSICAL_ITEM
        content_digest: Optional[str] = None
        if request.payload is not None:
            content_digest, _ = self.repo.put_content(request.payload)

        batch = self._import_batch(
            item_id,
            request.path,
            request.item_type,
            metadata,
            collection_type,
            request.actor_dn,
            request.influences,
        )
        journal_id = str(uuid4())
        self.journal.append(
            {
                "entry": journal_id,
                "phase": "pending",
                "op": "import",
                "item": {
                    "item_id": item_id,
                    "path": f"{request.path.rstrip('/')}/{self._leaf_name(metadata, item_id)}",
                    "kind": kind.value,
                    "metadata": metadata,
                    "content_digest": content_digest,
                },
                "batch": batch.to_json_dict(),
                "ts": int(time.time() * 1000),
            }
        )

        self.crash_hook("pre_fabric")
        record = self.repo.create_item(
            f"{request.path.rstrip('/')}/{self._leaf_name(metadata, item_id)}",
            kind,
            metadata,
            content_digest,
            item_id=item_id,
        )
        self.crash_hook("post_fabric")

        try:
            result = self.provenance.apply_batch(batch)
        except Exception as exc:
            self.repo.delete_item(item_id)
            self.journal.append(
                {"entry": journal_id, "phase": "rolled_back", "reason": str(exc)}
            )
            raise ProvenanceUnavailable(str(exc)) from exc
        self.crash_hook("post_provenance")
        self.journal.append({"entry": journal_id, "phase": "done"})
        return record, result

    @staticmethod
    def _leaf_name(metadata: dict, item_id: str) -> str:
        name = metadata.get("name")
        if isinstance(name, str) and name and "/" not in name and name != "..":
            return name
        return item_id

    def _import_batch(
        self,
        item_id: str,
        collection_path: str,
        item_type: str,
        metadata: dict,
        stage: str,
        actor_dn: str,
        influences: Iterable[str],
    ) -> AssertionBatch:
        annotations = {
            "path": f"{collection_path.rstrip('/')}/{self._leaf_name(metadata, item_id)}",
            "item_type": item_type,
        }
        for key in _COPIED_METADATA:
            value = metadata.get(key)
            if isinstance(value, str):
                annotations[key] = value
        process_identifier = f"import:{item_id}"
        nodes = [
            NodeSpec(NodeKind.ARTIFACT, item_id, annotations),
            NodeSpec(NodeKind.PROCESS, process_identifier, {"stage": stage}),
        ]
        if not self.provenance.has_node(NodeKind.AGENT, actor_dn):
            nodes.append(NodeSpec(NodeKind.AGENT, actor_dn, {}))
        edges = [
            EdgeSpec(
                EdgeLabel.WAS_GENERATED_BY,
                (NodeKind.ARTIFACT, item_id),
                (NodeKind.PROCESS, process_identifier),
            ),
            EdgeSpec(
                EdgeLabel.WAS_UNDERTAKEN_BY,
                (NodeKind.PROCESS, process_identifier),
                (NodeKind.AGENT, actor_dn),
            ),
        ]
        for influence in influences:
            edges.append(
                EdgeSpec(
                    EdgeLabel.USED,
                    (NodeKind.PROCESS, process_identifier),
                    (NodeKind.ARTIFACT, influence),
                )
            )
        return AssertionBatch(f"import:{item_id}", nodes, edges)

    def replay_journal(self) -> dict[str, int]:
        """Repair interrupted operations; call once on startup."""
        latest: dict[str, dict] = {}
        phases: dict[str, str] = {}
        for entry in self.journal.entries():
            eid = entry.get("entry")
            if not eid:
                continue
            phases[eid] = entry.get("phase", "")
            if entry.get("phase") == "pending":
                latest[eid] = entry
        completed = aborted = 0
        for eid, entry in latest.items():
            if phases.get(eid) != "pending":
                continue
            item_id = entry["item"]["item_id"]
            try:
                record = self.repo.get_item(item_id)
            except Exception:
                record = None
            if record is None:
                self.journal.append({"entry": eid, "phase": "aborted"})
                aborted += 1
                continue
            batch = AssertionBatch.from_json_dict(entry["batch"])
            self.provenance.apply_batch(batch)
            self.journal.append({"entry": eid, "phase": "done"})
            completed += 1
        return {"completed": completed, "aborted": aborted}

    # -- signing ------------------------------------------------------------------

    def signing_digest(self, item_id: str) -> str:
        """SHA-256 over (recomputed content digest, canonical metadata)."""
        record = self._live_item(item_id)
        hasher = hashlib.sha256()
        if record.kind is ItemKind.FILE:
            content_hash = hashlib.sha256()
            for piece in self.repo.iter_content(record.content_digest):
                content_hash.update(piece)
            hasher.update(content_hash.digest())
        hasher.update(b"\n")
        hasher.update(_canonical_metadata(record.metadata))
        return hasher.hexdigest()

    def sign_item(self, item_id: str, keyfile: Keyfile) -> SignatureRecord:
        with self._write_lock:
            record = self._live_item(item_id)
            if not self.registry.has(keyfile.dn):
                raise UnknownSignerKey(keyfile.dn)
            digest = self.signing_digest(item_id)
            signature = sign(keyfile.private_b64, bytes.fromhex(digest))
            sig_record = SignatureRecord(
                keyfile.dn,
                SIGNATURE_ALGORITHM,
                signature,
                digest,
                int(time.time() * 1000),
            )
            self._append_signature(record, sig_record)
            return sig_record

    def add_signature_record(self, item_id: str, sig_record: SignatureRecord) -> None:
        """Attach an externally produced detached signature after checking it."""
        with self._write_lock:
            record = self._live_item(item_id)
            public = self.registry.get(sig_record.signer_dn)
            digest = self.signing_digest(item_id)
            if sig_record.algorithm != SIGNATURE_ALGORITHM:
                raise BadSignature(f"unsupported algorithm {sig_record.algorithm!r}")
            if not verify(public, bytes.fromhex(digest), sig_record.signature_b64):
                raise BadSignature("signature does not verify against current content")
            self._append_signature(record, sig_record)

    def _append_signature(self, record: ItemRecord, sig_record: SignatureRecord) -> None:
        existing = record.metadata.get(SIGNATURES_KEY)
        sigs = list(existing) if isinstance(existing, list) else []
        sigs.append(json.dumps(sig_record.to_json_dict(), sort_keys=True))
        self.repo.update_metadata(record.item_id, {SIGNATURES_KEY: sigs})

    def verify_item(self, item_id: str) -> list[tuple[str, bool]]:
        """Re-check every stored signature against current content+metadata."""
        record = self._live_item(item_id)
        raw = record.metadata.get(SIGNATURES_KEY)
        if not isinstance(raw, list):
            return []
        try:
            current = self.signing_digest(item_id)
        except chunkmod.ChunkStoreError:
            current = None  # unreadable payload: nothing can verify
        out = []
        for entry in raw:
            sig_record = SignatureRecord.from_json_dict(json.loads(entry))
            public = self.registry.get(sig_record.signer_dn)
            valid = current is not None and verify(
                public, bytes.fromhex(current), sig_record.signature_b64
            )
            out.append((sig_record.signer_dn, valid))
        return out

    # -- archive --------------------------------------------------------------------

    def export_archive(self, report_item_id: str, out_dir: Union[str, Path]) -> ArchiveSummary:
        report = self._live_item(report_item_id)
        graph_part = self.provenance.subgraph(NodeKind.ARTIFACT, report_item_id)
        if graph_part is None:
            raise UnknownItem(report_item_id)
        nodes, edges = graph_part
        artifact_ids = [n["identifier"] for n in nodes if n["kind"] == "artifact"]
        items = []
        for artifact_id in artifact_ids:
            try:
                items.append(self.repo.get_item(artifact_id))
            except Exception:
                raise UnknownItem(artifact_id) from None
        items.sort(key=lambda r: r.item_id)

        out = Path(out_dir)
        payload_dir = out / "payload"
        payload_dir.mkdir(parents=True, exist_ok=True)
        payload_bytes = 0
        for item in items:
            if item.kind is not ItemKind.FILE:
                continue
            try:
                data = self.repo.get_content(item.content_digest)
            except chunkmod.ChunkStoreError:
                raise MissingPayload(item.content_digest) from None
            (payload_dir / item.content_digest).write_bytes(data)
            payload_bytes += len(data)

        manifest = {
            "schema": "evidential-archive/1",
            "report": report.item_id,
            "items": [item.to_json_dict() for item in items],
        }
        (out / "manifest.json").write_text(
            json.dumps(manifest, sort_keys=True, indent=2) + "\n"
        )
        (out / "provenance.json").write_text(
            json.dumps({"nodes": nodes, "edges": edges}, sort_keys=True, indent=2) + "\n"
        )
        return ArchiveSummary(
            report.item_id, len(items), len(nodes), len(edges), payload_bytes, str(out)
        )

    # -- search and copy ---------------------------------------------------------------

    def search(self, text: str) -> list[ItemRecord]:
        """Case-insensitive substring search over paths and string metadata."""
        needle = text.lower()
        hits = []
        for record in self.repo.items():
            if needle in record.path.lower() or _metadata_matches(record.metadata, needle):
                hits.append(record)
        return hits

    def copy_item(self, item_id: str, new_path: str) -> ItemRecord:
        """Fork an item: same content and metadata under a new identity,
        recorded as wasDerivedFrom(new, old) in the provenance graph."""
        with self._write_lock:
            return self._copy_item(item_id, new_path)

    def _copy_item(self, item_id: str, new_path: str) -> ItemRecord:
        source = self._live_item(item_id)
        if source.kind is ItemKind.COLLECTION:
            raise NotCopyable("collections carry no artifact node to fork")
        if not self.provenance.has_node(NodeKind.ARTIFACT, item_id):
            raise UnknownItem(item_id)
        from .fabric import normalize_path, parent_path

        new_path = normalize_path(new_path)
        parent = self.repo.get_by_path(parent_path(new_path))
        if parent is None or parent.kind is not ItemKind.COLLECTION:
            raise PlacementViolation(
                Violation("placement", f"{parent_path(new_path)} is not a collection")
            )
        collection_type = self._collection_type_of(parent)
        item_type = source.metadata.get("type")
        if isinstance(item_type, str):
            bad = validate_placement(self.spec, collection_type, item_type)
            if bad is not None:
                raise PlacementViolation(bad)

        metadata = {
            k: v for k, v in source.metadata.items() if k != SIGNATURES_KEY
        }
        new_id = str(uuid4())
        annotations = {"path": new_path}
        if isinstance(item_type, str):
            annotations["item_type"] = item_type
        for key in _COPIED_METADATA:
            value = metadata.get(key)
            if isinstance(value, str):
                annotations[key] = value
        batch = AssertionBatch(
            f"copy:{new_id}",
            [NodeSpec(NodeKind.ARTIFACT, new_id, annotations)],
            [
                EdgeSpec(
                    EdgeLabel.WAS_DERIVED_FROM,
                    (NodeKind.ARTIFACT, new_id),
                    (NodeKind.ARTIFACT, item_id),
                )
            ],
        )
        journal_id = str(uuid4())
        self.journal.append(
            {
                "entry": journal_id,
                "phase": "pending",
                "op": "copy",
                "item": {"item_id": new_id, "path": new_path},
                "batch": batch.to_json_dict(),
                "ts": int(time.time() * 1000),
            }
        )
        self.crash_hook("pre_fabric")
        record = self.repo.create_item(
            new_path, source.kind, metadata, source.content_digest, item_id=new_id
        )
        self.crash_hook("post_fabric")
        try:
            self.provenance.apply_batch(batch)
        except Exception as exc:
            self.repo.delete_item(new_id)
            self.journal.append(
                {"entry": journal_id, "phase": "rolled_back", "reason": str(exc)}
            )
            raise ProvenanceUnavailable(str(exc)) from exc
        self.journal.append({"entry": journal_id, "phase": "done"})
        return record

    # -- quality hook --------------------------------------------------------------

    def subject_signature_rule(self, item_id: str):
        """Optional quality rule: the subject item carries one valid signature."""
        notebook = self

        class SubjectSignatureRule:
            name = "subject-signature"

            def check(self, graph, node_ids) -> list[RuleViolation]:
                verdicts = notebook.verify_item(item_id)
                if any(valid for _, valid in verdicts):
                    return []
                node = graph.find_node(NodeKind.ARTIFACT, item_id)
                return [
                    RuleViolation(
                        self.name,
                        node.id if node else -1,
                        f"item {item_id} has no valid signature",
                    )
                ]

        return SubjectSignatureRule()

    # -- helpers ------------------------------------------------------------------

    def _live_item(self, item_id: str) -> ItemRecord:
        record = self.repo.get_item(item_id)  # raises fabric.UnknownItem
        if record.tombstone:
            raise UnknownItem(item_id)
        return record


def _canonical_metadata(metadata: dict) -> bytes:
    scrubbed = {k: v for k, v in metadata.items() if k != SIGNATURES_KEY}
    return json.dumps(scrubbed, sort_keys=True, separators=(",", ":")).encode()


def _metadata_matches(metadata: dict, needle: str) -> bool:
    for value in metadata.values():
        if isinstance(value, str) and needle in value.lower():
            return True
        if isinstance(value, list) and any(
            isinstance(v, str) and needle in v.lower() for v in value
        ):
            return True
    return False
