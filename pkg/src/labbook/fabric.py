"""Replicated item repository: metadata catalogue plus chunked payloads.

Each site keeps an append-only change log of full item records; the log
is both the durable storage (replayed on open) and the replication feed.
Conflicting writes to the same item resolve by last-writer-wins over the
(counter, wall time, site id) revision stamp; losing records are never
applied but reported. Distinct items colliding on a logical path keep
their stored records untouched and are disambiguated in the repository
view, so replicas stay byte-convergent.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import BinaryIO, Mapping, Optional, Protocol, Union
from uuid import uuid4

from .chunks import ChunkMissing, ChunkStore, ContentManifest, UnknownDigest, sha256_hex


class ItemKind(str, Enum):
    FILE = "file"
    COLLECTION = "collection"
    PHYSICAL_ITEM = "physical_item"


class FabricError(Exception):
    pass


class InvalidPath(FabricError):
    pass


class InvalidItem(FabricError):
    pass


class PathTaken(FabricError):
    def __init__(self, path: str):
        self.path = path
        super().__init__(f"path {path!r} is already in use")


class ParentNotCollection(FabricError):
    def __init__(self, path: str):
        self.path = path
        super().__init__(f"parent of {path!r} does not exist or is not a collection")


class MissingArchivalLocation(FabricError):
    def __init__(self) -> None:
        super().__init__("physical items require metadata key 'archival_location'")


class UnknownItem(FabricError):
    def __init__(self, item_id: str):
        self.item_id = item_id
        super().__init__(f"no item with id {item_id}")


class BadPredicate(FabricError):
    pass


class PeerUnreachable(FabricError):
    pass


class DigestMismatch(FabricError):
    def __init__(self, digest: str):
        self.digest = digest
        super().__init__(f"fetched content does not hash to {digest}")


@dataclass(frozen=True)
class RevisionStamp:
    counter: int
    wall_time_ms: int
    site_id: str

    def key(self) -> tuple[int, int, str]:
        return (self.counter, self.wall_time_ms, self.site_id)

    def to_json_dict(self) -> dict:
        return {
            "counter": self.counter,
            "wall_time_ms": self.wall_time_ms,
            "site_id": self.site_id,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "RevisionStamp":
        return cls(int(obj["counter"]), int(obj["wall_time_ms"]), obj["site_id"])


MetadataValue = Union[str, int, float, bool, list]


@dataclass(frozen=True)
class ItemRecord:
    item_id: str
    path: str
    kind: ItemKind
    content_digest: Optional[str]
    size_bytes: Optional[int]
    metadata: dict[str, MetadataValue]
    revision: RevisionStamp
    tombstone: bool = False

    def to_json_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "path": self.path,
            "kind": self.kind.value,
            "content_digest": self.content_digest,
            "size_bytes": self.size_bytes,
            "metadata": self.metadata,
            "revision": self.revision.to_json_dict(),
            "tombstone": self.tombstone,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "ItemRecord":
        return cls(
            obj["item_id"],
            obj["path"],
            ItemKind(obj["kind"]),
            obj.get("content_digest"),
            obj.get("size_bytes"),
            dict(obj.get("metadata", {})),
            RevisionStamp.from_json_dict(obj["revision"]),
            bool(obj.get("tombstone", False)),
        )


@dataclass
class ChangeSet:
    site_id: str
    entries: list[tuple[int, ItemRecord]]
    manifests: dict[str, ContentManifest] = field(default_factory=dict)

    @property
    def last_seq(self) -> int:
        return max((seq for seq, _ in self.entries), default=0)

    def to_json_dict(self) -> dict:
        return {
            "site_id": self.site_id,
            "entries": [
                {"seq": seq, "record": rec.to_json_dict()} for seq, rec in self.entries
            ],
            "manifests": {d: m.to_json_dict() for d, m in self.manifests.items()},
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "ChangeSet":
        return cls(
            obj["site_id"],
            [
                (int(e["seq"]), ItemRecord.from_json_dict(e["record"]))
                for e in obj.get("entries", [])
            ],
            {
                d: ContentManifest.from_json_dict(m)
                for d, m in obj.get("manifests", {}).items()
            },
        )


@dataclass
class ApplyReport:
    applied: int = 0
    ignored: int = 0
    conflicts: list[ItemRecord] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "applied": self.applied,
            "ignored": self.ignored,
            "conflicts": [r.to_json_dict() for r in self.conflicts],
        }


class Peer(Protocol):
    """Replication source; LocalPeer wraps a Repository, RemotePeer speaks HTTP."""

    @property
    def site_id(self) -> str: ...

    def changes_since(self, seq: int) -> ChangeSet: ...

    def fetch_chunk(self, chunk_digest: str) -> bytes: ...


def normalize_path(path: str) -> str:
    if not isinstance(path, str) or not path.startswith("/"):
        raise InvalidPath(f"path must start with '/': {path!r}")
    if path == "/":
        raise InvalidPath("the repository root is implicit and cannot be an item")
    segments = path.strip("/").split("/")
    for seg in segments:
        if not seg:
            raise InvalidPath(f"empty path segment in {path!r}")
        if seg == "..":
            raise InvalidPath(f"'..' is not allowed in {path!r}")
    return "/" + "/".join(segments)


def parent_path(path: str) -> str:
    head = path.rsplit("/", 1)[0]
    return head or "/"


def _check_metadata(metadata: Mapping[str, MetadataValue]) -> dict[str, MetadataValue]:
    out: dict[str, MetadataValue] = {}
    for key, value in metadata.items():
        if not isinstance(key, str):
            raise InvalidItem(f"metadata keys must be strings, got {key!r}")
        if isinstance(value, (str, bool, int, float)):
            out[key] = value
        elif isinstance(value, list) and all(isinstance(v, str) for v in value):
            out[key] = list(value)
        else:
            raise InvalidItem(f"unsupported metadata value for {key!r}: {value!r}")
    return out


# -- predicates -------------------------------------------------------------

_CMP_OPS = ("eq", "ne", "lt", "le", "gt", "ge", "contains")


@dataclass(frozen=True)
class MetaCmp:
    key: str
    op: str
    value: MetadataValue

    def matches(self, record: "ItemRecord") -> bool:
        present = self.key in record.metadata
        actual = record.metadata.get(self.key)
        if self.op == "eq":
            return present and actual == self.value
        if self.op == "ne":
            return not (present and actual == self.value)
        if self.op == "contains":
            if isinstance(actual, list):
                return self.value in actual
            if isinstance(actual, str) and isinstance(self.value, str):
                return self.value in actual
            return False
        if not present:
            return False
        if isinstance(actual, bool) or isinstance(self.value, bool):
            return False
        if isinstance(actual, (int, float)) and isinstance(self.value, (int, float)):
            pass
        elif isinstance(actual, str) and isinstance(self.value, str):
            pass
        else:
            return False
        if self.op == "lt":
            return actual < self.value
        if self.op == "le":
            return actual <= self.value
        if self.op == "gt":
            return actual > self.value
        return actual >= self.value

    def to_json_dict(self) -> dict:
        return {"meta": {"key": self.key, "op": self.op, "value": self.value}}


@dataclass(frozen=True)
class PathPrefix:
    prefix: str

    def matches(self, record: "ItemRecord") -> bool:
        return record.path == self.prefix or record.path.startswith(
            self.prefix.rstrip("/") + "/"
        )

    def to_json_dict(self) -> dict:
        return {"path_prefix": self.prefix}


@dataclass(frozen=True)
class KindIs:
    kind: ItemKind

    def matches(self, record: "ItemRecord") -> bool:
        return record.kind is self.kind

    def to_json_dict(self) -> dict:
        return {"kind": self.kind.value}


@dataclass(frozen=True)
class AllOf:
    preds: tuple

    def matches(self, record: "ItemRecord") -> bool:
        return all(p.matches(record) for p in self.preds)

    def to_json_dict(self) -> dict:
        return {"all": [p.to_json_dict() for p in self.preds]}


@dataclass(frozen=True)
class AnyOf:
    preds: tuple

    def matches(self, record: "ItemRecord") -> bool:
        return any(p.matches(record) for p in self.preds)

    def to_json_dict(self) -> dict:
        return {"any": [p.to_json_dict() for p in self.preds]}


@dataclass(frozen=True)
class NotPred:
    pred: object

    def matches(self, record: "ItemRecord") -> bool:
        return not self.pred.matches(record)

    def to_json_dict(self) -> dict:
        return {"not": self.pred.to_json_dict()}


MATCH_ALL = AllOf(())


def predicate_from_json(obj) -> object:
    """Decode a predicate AST from its JSON form; raises BadPredicate."""
    if not isinstance(obj, dict) or len(obj) != 1:
        raise BadPredicate(f"predicate must be a single-key object, got {obj!r}")
    key, value = next(iter(obj.items()))
    if key == "all":
        return AllOf(tuple(predicate_from_json(v) for v in _as_list(value)))
    if key == "any":
        return AnyOf(tuple(predicate_from_json(v) for v in _as_list(value)))
    if key == "not":
        return NotPred(predicate_from_json(value))
    if key == "path_prefix":
        if not isinstance(value, str):
            raise BadPredicate("path_prefix takes a string")
        return PathPrefix(value)
    if key == "kind":
        try:
            return KindIs(ItemKind(value))
        except ValueError:
            raise BadPredicate(f"unknown kind {value!r}") from None
    if key == "meta":
        if not isinstance(value, dict):
            raise BadPredicate("meta takes an object")
        op = value.get("op", "eq")
        if op not in _CMP_OPS or "key" not in value or "value" not in value:
            raise BadPredicate(f"bad comparison {value!r}")
        return MetaCmp(value["key"], op, value["value"])
    raise BadPredicate(f"unknown predicate {key!r}")


def _as_list(value) -> list:
    if not isinstance(value, list):
        raise BadPredicate("expected a list of predicates")
    return value


# -- repository ---------------------------------------------------------------


class Repository:
    """One site's item table, change log and chunk store."""

    def __init__(self, root: Union[str, Path], site_id: str, clock=None):
        self.root = Path(root)
        self.site_id = site_id
        self._clock = clock or (lambda: int(time.time() * 1000))
        self.root.mkdir(parents=True, exist_ok=True)
        self.chunks = ChunkStore(self.root)
        self._log_path = self.root / "changelog.jsonl"
        self._sync_path = self.root / "sync_state.json"
        self._records: dict[str, ItemRecord] = {}
        self._log: list[tuple[int, ItemRecord]] = []
        self._seq = 0
        self._sync_state: dict[str, int] = {}
        self._lock = threading.RLock()
        self._replay()
        if self._sync_path.exists():
            self._sync_state = json.loads(self._sync_path.read_text())

    def _replay(self) -> None:
        if not self._log_path.exists():
            return
        with open(self._log_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                    seq = int(obj["seq"])
                    record = ItemRecord.from_json_dict(obj["record"])
                except (ValueError, KeyError):
                    break  # torn trailing line; everything before it is intact
                self._log.append((seq, record))
                self._records[record.item_id] = record
                self._seq = max(self._seq, seq)

    def _append(self, record: ItemRecord) -> None:
        self._seq += 1
        entry = {"seq": self._seq, "record": record.to_json_dict()}
        with open(self._log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
        self._log.append((self._seq, record))
        self._records[record.item_id] = record

    def _next_stamp(self, previous: Optional[ItemRecord]) -> RevisionStamp:
        counter = previous.revision.counter + 1 if previous else 1
        return RevisionStamp(counter, self._clock(), self.site_id)

    # -- content ------------------------------------------------------------

    def put_content(self, data: Union[bytes, BinaryIO]) -> tuple[str, int]:
        return self.chunks.put_content(data)

    def get_content(self, digest: str) -> bytes:
        return self.chunks.get_content(digest)

    def iter_content(self, digest: str):
        return self.chunks.iter_content(digest)

    # -- item table ---------------------------------------------------------

    def create_item(
        self,
        path: str,
        kind: ItemKind,
        metadata: Optional[Mapping[str, MetadataValue]] = None,
        content_digest: Optional[str] = None,
        item_id: Optional[str] = None,
    ) -> ItemRecord:
        kind = ItemKind(kind)
        path = normalize_path(path)
        metadata = _check_metadata(metadata or {})
        with self._lock:
            view = self._view()
            live_view = {r.path: r for r in view.values() if not r.tombstone}
            raw_paths = {r.path for r in self._records.values() if not r.tombstone}
            if path in live_view or path in raw_paths:
                raise PathTaken(path)
            parent = parent_path(path)
            if parent != "/":
                holder = live_view.get(parent)
                if holder is None or holder.kind is not ItemKind.COLLECTION:
                    raise ParentNotCollection(path)
            size: Optional[int] = None
            if kind is ItemKind.FILE:
                if content_digest is None:
                    raise UnknownDigest("<missing content digest>")
                size = self.chunks.manifest_for(content_digest).size
            else:
                if content_digest is not None:
                    raise InvalidItem(f"{kind.value} items cannot carry content")
                if kind is ItemKind.PHYSICAL_ITEM and not metadata.get(
                    "archival_location"
                ):
                    raise MissingArchivalLocation()
            record = ItemRecord(
                item_id or str(uuid4()),
                path,
                kind,
                content_digest,
                size,
                metadata,
                self._next_stamp(None),
            )
            if record.item_id in self._records:
                raise InvalidItem(f"item id {record.item_id} already exists")
            self._append(record)
            return record

    def update_metadata(
        self, item_id: str, patch: Mapping[str, Optional[MetadataValue]]
    ) -> ItemRecord:
        with self._lock:
            current = self._records.get(item_id)
            if current is None or current.tombstone:
                raise UnknownItem(item_id)
            merged = dict(current.metadata)
            for key, value in patch.items():
                if value is None:
                    merged.pop(key, None)
                else:
                    merged[key] = value
            merged = _check_metadata(merged)
            if current.kind is ItemKind.PHYSICAL_ITEM and not merged.get(
                "archival_location"
            ):
                raise MissingArchivalLocation()
            record = replace(
                current, metadata=merged, revision=self._next_stamp(current)
            )
            self._append(record)
            return record

    def delete_item(self, item_id: str) -> ItemRecord:
        """Tombstone an item; payload chunks are retained forever."""
        with self._lock:
            current = self._records.get(item_id)
            if current is None or current.tombstone:
                raise UnknownItem(item_id)
            record = replace(
                current, tombstone=True, revision=self._next_stamp(current)
            )
            self._append(record)
            return record

    def get_item(self, item_id: str) -> ItemRecord:
        """Latest record for the id, tombstoned or not (view paths applied)."""
        view = self._view()
        record = view.get(item_id)
        if record is None:
            raise UnknownItem(item_id)
        return record

    def get_by_path(self, path: str) -> Optional[ItemRecord]:
        return self._live_by_path().get(path)

    def items(self, include_tombstones: bool = False) -> list[ItemRecord]:
        view = self._view()
        out = [
            r for r in view.values() if include_tombstones or not r.tombstone
        ]
        out.sort(key=lambda r: (r.path, r.item_id))
        return out

    def query(self, predicate) -> list[ItemRecord]:
        """Non-tombstone items matching the predicate, ordered by path."""
        if not hasattr(predicate, "matches"):
            raise BadPredicate(f"not a predicate: {predicate!r}")
        return [r for r in self.items() if predicate.matches(r)]

    # -- views ----------------------------------------------------------------

    def _live_by_path(self) -> dict[str, ItemRecord]:
        return {r.path: r for r in self._view().values() if not r.tombstone}

    def _view(self) -> dict[str, ItemRecord]:
        """Stored records with path collisions resolved deterministically.

        Among live items sharing a path the highest revision stamp keeps
        it; every loser is shown at path~conflict-<its site id>. Stored
        records are never rewritten, so replicas converge bytewise.
        """
        live_by_path: dict[str, list[ItemRecord]] = {}
        for record in self._records.values():
            if not record.tombstone:
                live_by_path.setdefault(record.path, []).append(record)
        out: dict[str, ItemRecord] = {
            r.item_id: r for r in self._records.values() if r.tombstone
        }
        taken: set[str] = set(live_by_path)
        for path, group in live_by_path.items():
            group.sort(key=lambda r: (r.revision.key(), r.item_id), reverse=True)
            out[group[0].item_id] = group[0]
            for loser in group[1:]:
                candidate = f"{path}~conflict-{loser.revision.site_id}"
                n = 1
                while candidate in taken:
                    n += 1
                    candidate = f"{path}~conflict-{loser.revision.site_id}-{n}"
                taken.add(candidate)
                out[loser.item_id] = replace(loser, path=candidate)
        return out

    def state_digest(self) -> str:
        """Digest of the canonical item-table serialization (view, sorted by id)."""
        view = self._view()
        canonical = [view[item_id].to_json_dict() for item_id in sorted(view)]
        return sha256_hex(
            json.dumps(canonical, sort_keys=True, separators=(",", ":")).encode()
        )

    # -- replication ----------------------------------------------------------

    @property
    def last_seq(self) -> int:
        return self._seq

    def changes_since(self, seq: int) -> ChangeSet:
        with self._lock:
            entries = [(s, r) for s, r in self._log if s > seq]
            manifests: dict[str, ContentManifest] = {}
            for _, record in entries:
                digest = record.content_digest
                if digest and digest not in manifests and self.chunks.has_content(digest):
                    manifests[digest] = self.chunks.manifest_for(digest)
            return ChangeSet(self.site_id, entries, manifests)

    def pull_changes(self, peer: Peer, since: Mapping[str, int]) -> ChangeSet:
        try:
            return peer.changes_since(since.get(peer.site_id, 0))
        except FabricError:
            raise
        except OSError as exc:
            raise PeerUnreachable(str(exc)) from exc

    def apply_changes(self, changes: ChangeSet) -> ApplyReport:
        """Last-writer-wins application; all referenced content must be present.

        Records that lose against the local state are reported in
        conflicts and leave no trace; accepted records are re-logged so
        they flow onward to other peers.
        """
        with self._lock:
            for digest, manifest in changes.manifests.items():
                if not self.chunks.has_content(digest):
                    self._verify_manifest(manifest)
                    self.chunks.register_manifest(manifest)
            for seq, record in sorted(changes.entries, key=lambda e: e[0]):
                if record.kind is ItemKind.FILE and not record.tombstone:
                    manifest = self.chunks.manifest_for(record.content_digest)
                    for index, chunk_digest in enumerate(manifest.chunks):
                        if not self.chunks.has_chunk(chunk_digest):
                            raise ChunkMissing(chunk_digest, index)
            report = ApplyReport()
            for seq, record in sorted(changes.entries, key=lambda e: e[0]):
                current = self._records.get(record.item_id)
                if current is None or record.revision.key() > current.revision.key():
                    self._append(record)
                    report.applied += 1
                elif record.revision.key() == current.revision.key():
                    report.ignored += 1
                else:
                    report.conflicts.append(record)
            return report

    def _verify_manifest(self, manifest: ContentManifest) -> None:
        """Re-hash the chunk sequence against the whole-file digest."""
        file_hash = hashlib.sha256()
        total = 0
        for index, chunk_digest in enumerate(manifest.chunks):
            if not self.chunks.has_chunk(chunk_digest):
                raise ChunkMissing(chunk_digest, index)
            data = self.chunks.get_chunk(chunk_digest)
            file_hash.update(data)
            total += len(data)
        if file_hash.hexdigest() != manifest.digest or total != manifest.size:
            raise DigestMismatch(manifest.digest)

    def fetch_content(self, peer: Peer, manifests: Mapping[str, ContentManifest]) -> int:
        """Pull missing chunks for the given manifests; returns chunks fetched."""
        fetched = 0
        for digest, manifest in manifests.items():
            if self.chunks.has_content(digest) and all(
                self.chunks.has_chunk(c) for c in manifest.chunks
            ):
                continue
            for chunk_digest in manifest.chunks:
                if not self.chunks.has_chunk(chunk_digest):
                    try:
                        data = peer.fetch_chunk(chunk_digest)
                    except FabricError:
                        raise
                    except OSError as exc:
                        raise PeerUnreachable(str(exc)) from exc
                    if sha256_hex(data) != chunk_digest:
                        raise DigestMismatch(chunk_digest)
                    self.chunks.put_chunk(data)
                    fetched += 1
            self._verify_manifest(manifest)
            self.chunks.register_manifest(manifest)
        return fetched

    def sync_with(self, peer: Peer) -> ApplyReport:
        """Pull from peer, fetch referenced content, apply, advance progress."""
        since = dict(self._sync_state)
        changes = self.pull_changes(peer, since)
        self.fetch_content(peer, changes.manifests)
        report = self.apply_changes(changes)
        if changes.entries:
            self._sync_state[peer.site_id] = max(
                changes.last_seq, self._sync_state.get(peer.site_id, 0)
            )
            self._sync_path.write_text(json.dumps(self._sync_state, sort_keys=True))
        return report


class LocalPeer:
    """Adapter presenting an in-process Repository as a replication peer."""

    def __init__(self, repo: Repository):
        self._repo = repo

    @property
    def site_id(self) -> str:
        return self._repo.site_id

    def changes_since(self, seq: int) -> ChangeSet:
        return self._repo.changes_since(seq)

    def fetch_chunk(self, chunk_digest: str) -> bytes:
        return self._repo.chunks.get_chunk(chunk_digest)
