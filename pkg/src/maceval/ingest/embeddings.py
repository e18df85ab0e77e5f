"""Binary embedding container.

Layout: magic b"MACE", u16 LE version (=1), u16 LE reserved (=0), u32 LE n,
u32 LE d, then n*d float32 LE row-major. No trailing bytes. Frame keys live
in a sidecar JSONL (i-th line describes the i-th row) so the binary stays
trivially streamable.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import IO, Iterable, Optional, Union

import numpy as np

from ..errors import (
    BadMagicError,
    InvalidDimensionError,
    MalformedLineError,
    NonFiniteValueError,
    TruncatedPayloadError,
    VersionUnsupportedError,
)
from .types import EmbeddingSet, FrameKey

MAGIC = b"MACE"
VERSION = 1
_HEADER = struct.Struct("<4sHHII")  # magic, version, reserved, n, d


def parse_embeddings(path: Union[str, Path, bytes]) -> EmbeddingSet:
    """Read an embedding binary into a float64 EmbeddingSet (without keys).

    Accepts a path or raw bytes. Rejects wrong magic, unknown version,
    nonzero reserved field, payload/header length mismatch (including
    trailing bytes), and non-finite entries.
    """
    if isinstance(path, bytes):
        blob = path
    else:
        blob = Path(path).read_bytes()

    if len(blob) < _HEADER.size:
        if blob[: len(MAGIC)] != MAGIC[: len(blob)] or len(blob) < len(MAGIC):
            raise BadMagicError(f"file too short for header ({len(blob)} bytes)")
        raise TruncatedPayloadError(f"file too short for header ({len(blob)} bytes)")

    magic, version, reserved, n, d = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != VERSION:
        raise VersionUnsupportedError(f"unsupported version {version}")
    if reserved != 0:
        raise VersionUnsupportedError(f"nonzero reserved field {reserved}")
    if d == 0:
        raise InvalidDimensionError("embedding dimension is 0")

    payload = blob[_HEADER.size:]
    expected = n * d * 4
    if len(payload) != expected:
        raise TruncatedPayloadError(
            f"payload is {len(payload)} bytes, header promises {expected} (n={n}, d={d})"
        )
    matrix = np.frombuffer(payload, dtype="<f4").reshape(n, d)
    if not np.isfinite(matrix).all():
        bad = int(np.flatnonzero(~np.isfinite(matrix.ravel()))[0])
        raise NonFiniteValueError(f"non-finite value at row {bad // d}, col {bad % d}")
    return EmbeddingSet(matrix.astype(np.float64))


def write_embeddings(embeddings: EmbeddingSet, path: Union[str, Path, None] = None) -> bytes:
    """Serialize an EmbeddingSet to the binary container (float32 on disk).

    Returns the bytes; also writes them to `path` when given. Round-trips
    byte-exactly through parse_embeddings for any well-formed file.
    """
    matrix = np.ascontiguousarray(embeddings.matrix, dtype="<f4")
    if not np.isfinite(matrix).all():
        raise NonFiniteValueError("refusing to serialize non-finite embeddings")
    n, d = matrix.shape
    blob = _HEADER.pack(MAGIC, VERSION, 0, n, d) + matrix.tobytes()
    if path is not None:
        Path(path).write_bytes(blob)
    return blob


def parse_embedding_keys(stream: Union[str, Path, IO[str], Iterable[str]]) -> tuple[FrameKey, ...]:
    """Read the sidecar JSONL of frame keys, one per embedding row."""
    keys: list[FrameKey] = []
    for line_no, line in enumerate(_iter_lines(stream), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedLineError(line_no, f"invalid JSON: {exc}") from exc
        if not isinstance(rec, dict) or "video_id" not in rec or "frame_idx" not in rec:
            raise MalformedLineError(line_no, "expected object with video_id and frame_idx")
        vid, idx = rec["video_id"], rec["frame_idx"]
        if not isinstance(vid, str) or not vid:
            raise MalformedLineError(line_no, "video_id must be a nonempty string")
        if not isinstance(idx, int) or isinstance(idx, bool) or idx < 0:
            raise MalformedLineError(line_no, "frame_idx must be an integer >= 0")
        keys.append(FrameKey(vid, idx))
    return tuple(keys)


def write_embedding_keys(keys: Iterable[FrameKey], path: Union[str, Path]) -> None:
    lines = [
        json.dumps({"video_id": k.video_id, "frame_idx": k.frame_idx}, sort_keys=True)
        for k in keys
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_embedding_set(
    binary_path: Union[str, Path], keys_path: Optional[Union[str, Path]] = None
) -> EmbeddingSet:
    """Parse a binary plus optional sidecar keys into one EmbeddingSet."""
    emb = parse_embeddings(binary_path)
    if keys_path is None:
        return emb
    keys = parse_embedding_keys(keys_path)
    if len(keys) != emb.n:
        raise MalformedLineError(
            len(keys), f"sidecar has {len(keys)} keys for {emb.n} embedding rows"
        )
    return EmbeddingSet(emb.matrix, keys)


def _iter_lines(stream) -> Iterable[str]:
    if isinstance(stream, (str, Path)):
        with open(stream, "r", encoding="utf-8") as fh:
            yield from fh
    else:
        yield from stream
