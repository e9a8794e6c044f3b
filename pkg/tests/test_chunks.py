import hashlib
import io
import os
import random

import pytest

from labbook.chunks import (
    CHUNK_SIZE,
    ChunkMissing,
    ChunkStore,
    UnknownDigest,
    sha256_hex,
)


@pytest.fixture
def store(tmp_path):
    return ChunkStore(tmp_path)


class TestPut:
    def test_empty_stream(self, store):
        digest, size = store.put_content(b"")
        assert size == 0
        assert digest == hashlib.sha256(b"").hexdigest()
        assert store.get_content(digest) == b""

    def test_ten_mib_is_three_chunks(self, store):
        data = os.urandom(10 * 1024 * 1024)
        digest, size = store.put_content(io.BytesIO(data))
        manifest = store.manifest_for(digest)
        assert size == len(data)
        assert len(manifest.chunks) == 3
        sizes = [len(store.get_chunk(c)) for c in manifest.chunks]
        assert sizes == [CHUNK_SIZE, CHUNK_SIZE, 2 * 1024 * 1024]

    def test_put_twice_stores_nothing_new(self, store):
        data = os.urandom(5 * 1024 * 1024)
        d1, _ = store.put_content(data)
        count = store.chunk_count
        d2, _ = store.put_content(data)
        assert d1 == d2
        assert store.chunk_count == count

    def test_whole_file_digest_is_raw_sha256(self, store):
        data = os.urandom(CHUNK_SIZE + 17)
        digest, _ = store.put_content(data)
        assert digest == hashlib.sha256(data).hexdigest()

    def test_boundary_sizes(self, store):
        for size in (1, CHUNK_SIZE - 1, CHUNK_SIZE, CHUNK_SIZE + 1):
            data = os.urandom(size)
            digest, got = store.put_content(data)
            assert got == size
            assert store.get_content(digest) == data


class TestGet:
    def test_round_trip_random_blob(self, store):
        data = os.urandom(1024 * 1024)
        digest, _ = store.put_content(data)
        assert store.get_content(digest) == data

    def test_unknown_digest(self, store):
        with pytest.raises(UnknownDigest):
            store.get_content("ab" * 32)

    def test_deleted_middle_chunk(self, store):
        data = os.urandom(10 * 1024 * 1024)
        digest, _ = store.put_content(data)
        manifest = store.manifest_for(digest)
        store.chunk_path(manifest.chunks[1]).unlink()
        with pytest.raises(ChunkMissing) as err:
            store.get_content(digest)
        assert err.value.index == 1
        assert err.value.digest == manifest.chunks[1]

    def test_reopen_keeps_manifests(self, tmp_path):
        store = ChunkStore(tmp_path)
        data = os.urandom(123456)
        digest, _ = store.put_content(data)
        reopened = ChunkStore(tmp_path)
        assert reopened.get_content(digest) == data

    def test_shared_chunks_between_files(self, store):
        # identical 4 MiB prefix dedupes to one chunk
        prefix = os.urandom(CHUNK_SIZE)
        a = prefix + b"a"
        b = prefix + b"b"
        store.put_content(a)
        count_after_a = store.chunk_count
        store.put_content(b)
        assert store.chunk_count == count_after_a + 1


class TestContentAddressing:
    @pytest.mark.parametrize("seed", range(3))
    def test_random_sizes_round_trip(self, store, seed):
        rng = random.Random(seed)
        for _ in range(8):
            size = rng.randrange(0, 2 * CHUNK_SIZE)
            data = os.urandom(size)
            digest, _ = store.put_content(data)
            assert store.get_content(digest) == data
            assert digest == sha256_hex(data)

    def test_distinct_bytes_distinct_digests(self, store):
        seen = {}
        for i in range(50):
            data = os.urandom(64) + bytes([i])
            digest, _ = store.put_content(data)
            assert digest not in seen
            seen[digest] = data
