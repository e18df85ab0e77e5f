"""Parsing, validation, and cross-linking of all input artifacts."""

from .bundle import load_bundle, validate_bundle
from .embeddings import (
    load_embedding_set,
    parse_embedding_keys,
    parse_embeddings,
    write_embedding_keys,
    write_embeddings,
)
from .jsonl import parse_annotations, parse_detections, parse_frames_meta, parse_videos
from .ppm import Frame, parse_ppm, write_ppm
from .types import (
    DatasetBundle,
    EmbeddingSet,
    FrameKey,
    FrameMeta,
    GtBox,
    PolypTrack,
    ScoredBox,
    VideoRecord,
)

__all__ = [
    "DatasetBundle",
    "EmbeddingSet",
    "Frame",
    "FrameKey",
    "FrameMeta",
    "GtBox",
    "PolypTrack",
    "ScoredBox",
    "VideoRecord",
    "load_bundle",
    "load_embedding_set",
    "parse_annotations",
    "parse_detections",
    "parse_embedding_keys",
    "parse_embeddings",
    "parse_frames_meta",
    "parse_ppm",
    "parse_videos",
    "validate_bundle",
    "write_embedding_keys",
    "write_embeddings",
    "write_ppm",
]
