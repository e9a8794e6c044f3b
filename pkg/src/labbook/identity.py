"""Identity handling: Ed25519 keypairs, the DN key registry and signed
request headers (X-Identity-DN / X-Identity-TS / X-Identity-Sig).

A request signature covers (dn, timestamp, request digest) where the
request digest is SHA-256 over method, path+query and body. Timestamps
must fall within a +-300 s window of the verifier's clock.
"""

from __future__ import annotations

import base64
import hashlib
import json
import time
from pathlib import Path
from typing import Mapping, Optional, Union

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

CLOCK_WINDOW_S = 300

DN_HEADER = "X-Identity-DN"
TS_HEADER = "X-Identity-TS"
SIG_HEADER = "X-Identity-Sig"


class IdentityError(Exception):
    pass


class BadIdentity(IdentityError):
    pass


class UnknownSignerKey(IdentityError):
    def __init__(self, dn: str):
        self.dn = dn
        super().__init__(f"no registered public key for {dn!r}")


def generate_keypair() -> tuple[str, str]:
    """Returns (private, public) as base64 raw key bytes."""
    private = Ed25519PrivateKey.generate()
    priv_raw = private.private_bytes_raw()
    pub_raw = private.public_key().public_bytes_raw()
    return base64.b64encode(priv_raw).decode(), base64.b64encode(pub_raw).decode()


def public_from_private(private_b64: str) -> str:
    key = Ed25519PrivateKey.from_private_bytes(base64.b64decode(private_b64))
    return base64.b64encode(key.public_key().public_bytes_raw()).decode()


def sign(private_b64: str, message: bytes) -> str:
    key = Ed25519PrivateKey.from_private_bytes(base64.b64decode(private_b64))
    return base64.b64encode(key.sign(message)).decode()


def verify(public_b64: str, message: bytes, signature_b64: str) -> bool:
    try:
        key = Ed25519PublicKey.from_public_bytes(base64.b64decode(public_b64))
        key.verify(base64.b64decode(signature_b64), message)
        return True
    except (InvalidSignature, ValueError):
        return False


def request_digest(method: str, path_qs: str, body: bytes) -> str:
    hasher = hashlib.sha256()
    hasher.update(method.upper().encode())
    hasher.update(b"\n")
    hasher.update(path_qs.encode())
    hasher.update(b"\n")
    hasher.update(body or b"")
    return hasher.hexdigest()


def identity_message(dn: str, ts: int, digest_hex: str) -> bytes:
    return f"{dn}\n{ts}\n{digest_hex}".encode()


class Keyfile:
    """A principal's DN plus private key, stored as a small JSON file."""

    def __init__(self, dn: str, private_b64: str):
        self.dn = dn
        self.private_b64 = private_b64

    @property
    def public_b64(self) -> str:
        return public_from_private(self.private_b64)

    @classmethod
    def generate(cls, dn: str) -> "Keyfile":
        private_b64, _ = generate_keypair()
        return cls(dn, private_b64)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Keyfile":
        obj = json.loads(Path(path).read_text())
        return cls(obj["dn"], obj["private_key"])

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(
            json.dumps({"dn": self.dn, "private_key": self.private_b64}, indent=2)
            + "\n"
        )


class KeyRegistry:
    """DN to public key mapping, kept in a local JSON file."""

    def __init__(self, path: Optional[Union[str, Path]] = None):
        self.path = Path(path) if path else None
        self._keys: dict[str, str] = {}
        if self.path and self.path.exists():
            self._keys = json.loads(self.path.read_text())

    def add(self, dn: str, public_b64: str) -> None:
        self._keys[dn] = public_b64
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text(json.dumps(self._keys, indent=2, sort_keys=True) + "\n")

    def get(self, dn: str) -> str:
        try:
            return self._keys[dn]
        except KeyError:
            raise UnknownSignerKey(dn) from None

    def has(self, dn: str) -> bool:
        return dn in self._keys

    def dns(self) -> list[str]:
        return sorted(self._keys)


def signature_headers(
    keyfile: Keyfile,
    method: str,
    path_qs: str,
    body: bytes = b"",
    ts: Optional[int] = None,
) -> dict[str, str]:
    ts = int(time.time()) if ts is None else ts
    digest = request_digest(method, path_qs, body)
    sig = sign(keyfile.private_b64, identity_message(keyfile.dn, ts, digest))
    return {DN_HEADER: keyfile.dn, TS_HEADER: str(ts), SIG_HEADER: sig}


def verify_request(
    registry: KeyRegistry,
    headers: Mapping[str, str],
    method: str,
    path_qs: str,
    body: bytes,
    now: Optional[int] = None,
) -> str:
    """Authenticate a request; returns the caller's DN or raises BadIdentity."""
    lowered = {k.lower(): v for k, v in headers.items()}
    dn = lowered.get(DN_HEADER.lower())
    ts_raw = lowered.get(TS_HEADER.lower())
    sig = lowered.get(SIG_HEADER.lower())
    if not dn or not ts_raw or not sig:
        raise BadIdentity("missing identity headers")
    try:
        ts = int(ts_raw)
    except ValueError:
        raise BadIdentity("timestamp is not an integer") from None
    now = int(time.time()) if now is None else now
    if abs(now - ts) > CLOCK_WINDOW_S:
        raise BadIdentity("timestamp outside the accepted window")
    try:
        public = registry.get(dn)
    except UnknownSignerKey:
        raise BadIdentity(f"unknown identity {dn!r}") from None
    digest = request_digest(method, path_qs, body)
    if not verify(public, identity_message(dn, ts, digest), sig):
        raise BadIdentity("signature verification failed")
    return dn
