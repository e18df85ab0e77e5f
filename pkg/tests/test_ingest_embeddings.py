from __future__ import annotations

import struct

import numpy as np
import pytest

from maceval.errors import (
    BadMagicError,
    InvalidDimensionError,
    MalformedLineError,
    NonFiniteValueError,
    TruncatedPayloadError,
    VersionUnsupportedError,
)
from maceval.ingest import (
    load_embedding_set,
    parse_embedding_keys,
    parse_embeddings,
    write_embedding_keys,
    write_embeddings,
)
from maceval.ingest.types import EmbeddingSet, FrameKey

HEADER = struct.Struct("<4sHHII")


def make_blob(n, d, payload=None, magic=b"MACE", version=1, reserved=0):
    if payload is None:
        payload = np.arange(n * d, dtype="<f4").tobytes()
    return HEADER.pack(magic, version, reserved, n, d) + payload


def test_minimal_well_formed_file():
    emb = parse_embeddings(make_blob(2, 3))
    assert emb.matrix.shape == (2, 3)
    assert emb.matrix.dtype == np.float64
    np.testing.assert_array_equal(emb.matrix, np.arange(6).reshape(2, 3))


def test_truncated_payload():
    blob = make_blob(2, 3)[:-4]  # 20 payload bytes instead of 24
    with pytest.raises(TruncatedPayloadError):
        parse_embeddings(blob)


def test_trailing_bytes_rejected():
    with pytest.raises(TruncatedPayloadError):
        parse_embeddings(make_blob(2, 3) + b"\x00")


def test_default_vit_dimension(rng):
    matrix = rng.uniform(size=(10, 384)).astype("<f4")
    emb = parse_embeddings(make_blob(10, 384, payload=matrix.tobytes()))
    assert emb.d == 384
    np.testing.assert_allclose(emb.matrix, matrix.astype(np.float64))


def test_bad_magic():
    with pytest.raises(BadMagicError):
        parse_embeddings(make_blob(2, 3, magic=b"MACX"))


def test_unsupported_version_and_reserved():
    with pytest.raises(VersionUnsupportedError):
        parse_embeddings(make_blob(2, 3, version=2))
    with pytest.raises(VersionUnsupportedError):
        parse_embeddings(make_blob(2, 3, reserved=7))


def test_zero_dimension():
    with pytest.raises(InvalidDimensionError):
        parse_embeddings(make_blob(5, 0, payload=b""))


def test_non_finite_payload():
    payload = np.array([1.0, np.nan, 0.0, 2.0, 3.0, 4.0], dtype="<f4").tobytes()
    with pytest.raises(NonFiniteValueError):
        parse_embeddings(make_blob(2, 3, payload=payload))


def test_round_trip_byte_identical(rng, tmp_path):
    matrix = rng.standard_normal((17, 5)).astype(np.float32)
    path = tmp_path / "x.emb"
    blob = write_embeddings(EmbeddingSet(matrix), path)
    assert path.read_bytes() == blob
    reparsed = parse_embeddings(path)
    assert write_embeddings(reparsed) == blob


def test_sidecar_keys_round_trip(tmp_path):
    keys = [FrameKey("v1", 0), FrameKey("v1", 1), FrameKey("v2", 7)]
    path = tmp_path / "x.keys.jsonl"
    write_embedding_keys(keys, path)
    assert parse_embedding_keys(path) == tuple(keys)


def test_sidecar_length_mismatch(tmp_path, rng):
    emb_path = tmp_path / "x.emb"
    write_embeddings(EmbeddingSet(rng.standard_normal((3, 2))), emb_path)
    keys_path = tmp_path / "x.keys.jsonl"
    write_embedding_keys([FrameKey("v1", 0)], keys_path)
    with pytest.raises(MalformedLineError):
        load_embedding_set(emb_path, keys_path)


def test_sidecar_bad_json(tmp_path):
    path = tmp_path / "k.jsonl"
    path.write_text('{"video_id": "v1", "frame_idx": }\n')
    with pytest.raises(MalformedLineError):
        parse_embedding_keys(path)
