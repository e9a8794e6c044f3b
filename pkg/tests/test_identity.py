import pytest

from labbook.identity import (
    BadIdentity,
    KeyRegistry,
    Keyfile,
    UnknownSignerKey,
    generate_keypair,
    sign,
    signature_headers,
    verify,
    verify_request,
)


def test_sign_verify_round_trip():
    private, public = generate_keypair()
    message = b"laboratory"
    assert verify(public, message, sign(private, message))
    assert not verify(public, b"tampered", sign(private, message))


def test_keyfile_round_trip(tmp_path):
    keyfile = Keyfile.generate("CN=alice")
    keyfile.save(tmp_path / "k.json")
    loaded = Keyfile.load(tmp_path / "k.json")
    assert loaded.dn == "CN=alice"
    assert loaded.public_b64 == keyfile.public_b64


def test_registry_persistence(tmp_path):
    registry = KeyRegistry(tmp_path / "reg.json")
    registry.add("CN=alice", "AAAA")
    reloaded = KeyRegistry(tmp_path / "reg.json")
    assert reloaded.get("CN=alice") == "AAAA"
    with pytest.raises(UnknownSignerKey):
        reloaded.get("CN=bob")


class TestRequestAuth:
    def setup_method(self):
        self.keyfile = Keyfile.generate("CN=alice")
        self.registry = KeyRegistry()
        self.registry.add("CN=alice", self.keyfile.public_b64)

    def test_valid_request(self):
        headers = signature_headers(self.keyfile, "GET", "/stats")
        dn = verify_request(self.registry, headers, "GET", "/stats", b"")
        assert dn == "CN=alice"

    def test_body_covered(self):
        headers = signature_headers(self.keyfile, "POST", "/batch", b"{}")
        with pytest.raises(BadIdentity):
            verify_request(self.registry, headers, "POST", "/batch", b"{1:2}")

    def test_path_covered(self):
        headers = signature_headers(self.keyfile, "GET", "/query?expr=a")
        with pytest.raises(BadIdentity):
            verify_request(self.registry, headers, "GET", "/query?expr=b", b"")

    def test_timestamp_window(self):
        headers = signature_headers(self.keyfile, "GET", "/stats", ts=1000)
        assert verify_request(self.registry, headers, "GET", "/stats", b"", now=1299)
        with pytest.raises(BadIdentity):
            verify_request(self.registry, headers, "GET", "/stats", b"", now=1301)
        with pytest.raises(BadIdentity):
            verify_request(self.registry, headers, "GET", "/stats", b"", now=699)

    def test_unknown_dn(self):
        stranger = Keyfile.generate("CN=mallory")
        headers = signature_headers(stranger, "GET", "/stats")
        with pytest.raises(BadIdentity):
            verify_request(self.registry, headers, "GET", "/stats", b"")

    def test_missing_headers(self):
        with pytest.raises(BadIdentity):
            verify_request(self.registry, {}, "GET", "/stats", b"")

    def test_wrong_key(self):
        impostor = Keyfile("CN=alice", Keyfile.generate("x").private_b64)
        headers = signature_headers(impostor, "GET", "/stats")
        with pytest.raises(BadIdentity):
            verify_request(self.registry, headers, "GET", "/stats", b"")
