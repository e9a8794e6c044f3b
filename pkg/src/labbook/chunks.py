"""Content-addressed chunk store.

Payloads are split into fixed 4 MiB chunks, each stored once under the
SHA-256 of its bytes. A whole-file digest (SHA-256 over the raw byte
stream, not a chunk tree) keys a manifest listing the chunk sequence.
Re-putting identical bytes writes nothing new.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterator, Union

CHUNK_SIZE = 4 * 1024 * 1024


class ChunkStoreError(Exception):
    pass


class UnknownDigest(ChunkStoreError):
    def __init__(self, digest: str):
        self.digest = digest
        super().__init__(f"no content with digest {digest}")


class ChunkMissing(ChunkStoreError):
    def __init__(self, digest: str, index: int):
        self.digest = digest
        self.index = index
        super().__init__(f"chunk {index} ({digest}) is missing from the store")


class IoFailure(ChunkStoreError):
    pass


@dataclass(frozen=True)
class ContentManifest:
    digest: str
    size: int
    chunks: tuple[str, ...]

    def to_json_dict(self) -> dict:
        return {"digest": self.digest, "size": self.size, "chunks": list(self.chunks)}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "ContentManifest":
        return cls(obj["digest"], int(obj["size"]), tuple(obj["chunks"]))


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class ChunkStore:
    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        self._chunk_dir = self.root / "chunks"
        self._manifest_path = self.root / "manifests.jsonl"
        self._manifests: dict[str, ContentManifest] = {}
        try:
            self._chunk_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise IoFailure(str(exc)) from exc
        self._load_manifests()

    def _load_manifests(self) -> None:
        if not self._manifest_path.exists():
            return
        with open(self._manifest_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    manifest = ContentManifest.from_json_dict(json.loads(line))
                except (ValueError, KeyError):
                    continue  # tolerate a torn trailing line
                self._manifests[manifest.digest] = manifest

    def chunk_path(self, chunk_digest: str) -> Path:
        return self._chunk_dir / chunk_digest[:2] / chunk_digest

    # -- writes -----------------------------------------------------------

    def put_content(self, data: Union[bytes, BinaryIO]) -> tuple[str, int]:
        """Store a byte stream; returns (whole-file digest, size)."""
        stream = io.BytesIO(data) if isinstance(data, (bytes, bytearray)) else data
        file_hash = hashlib.sha256()
        size = 0
        chunk_digests: list[str] = []
        try:
            while True:
                piece = stream.read(CHUNK_SIZE)
                if not piece:
                    break
                file_hash.update(piece)
                size += len(piece)
                chunk_digests.append(self._write_chunk(piece))
        except OSError as exc:
            raise IoFailure(str(exc)) from exc
        digest = file_hash.hexdigest()
        if digest not in self._manifests:
            self._record_manifest(ContentManifest(digest, size, tuple(chunk_digests)))
        return digest, size

    def put_chunk(self, data: bytes) -> str:
        """Store one raw chunk (replication path); returns its digest."""
        return self._write_chunk(data)

    def register_manifest(self, manifest: ContentManifest) -> None:
        if manifest.digest not in self._manifests:
            self._record_manifest(manifest)

    def _write_chunk(self, piece: bytes) -> str:
        digest = sha256_hex(piece)
        path = self.chunk_path(digest)
        if not path.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            try:
                with open(tmp, "wb") as fh:
                    fh.write(piece)
                os.replace(tmp, path)
            except OSError as exc:
                raise IoFailure(str(exc)) from exc
        return digest

    def _record_manifest(self, manifest: ContentManifest) -> None:
        try:
            with open(self._manifest_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(manifest.to_json_dict(), sort_keys=True) + "\n")
        except OSError as exc:
            raise IoFailure(str(exc)) from exc
        self._manifests[manifest.digest] = manifest

    # -- reads ------------------------------------------------------------

    def has_content(self, digest: str) -> bool:
        return digest in self._manifests

    def has_chunk(self, chunk_digest: str) -> bool:
        return self.chunk_path(chunk_digest).exists()

    def manifest_for(self, digest: str) -> ContentManifest:
        try:
            return self._manifests[digest]
        except KeyError:
            raise UnknownDigest(digest) from None

    def get_chunk(self, chunk_digest: str) -> bytes:
        path = self.chunk_path(chunk_digest)
        if not path.exists():
            raise UnknownDigest(chunk_digest)
        return path.read_bytes()

    def iter_content(self, digest: str) -> Iterator[bytes]:
        manifest = self.manifest_for(digest)
        for index, chunk_digest in enumerate(manifest.chunks):
            path = self.chunk_path(chunk_digest)
            if not path.exists():
                raise ChunkMissing(chunk_digest, index)
            yield path.read_bytes()

    def get_content(self, digest: str) -> bytes:
        return b"".join(self.iter_content(digest))

    @property
    def chunk_count(self) -> int:
        return sum(1 for sub in self._chunk_dir.iterdir() for _ in sub.iterdir())

    @property
    def content_count(self) -> int:
        return len(self._manifests)
