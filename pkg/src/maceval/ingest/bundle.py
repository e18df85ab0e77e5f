"""Cross-validation of parsed streams into a DatasetBundle.

validate_bundle is the one gate between parsing and computation: after it
succeeds, no downstream operation can dereference a missing video, frame,
or polyp. Errors name the first offending record.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Mapping, Optional, Union

from ..errors import (
    DanglingPolypRefError,
    DanglingVideoRefError,
    EmbeddingKeyMismatchError,
    FrameOutOfRangeError,
)
from . import jsonl
from .embeddings import load_embedding_set
from .types import (
    DatasetBundle,
    EmbeddingSet,
    FrameKey,
    FrameMeta,
    PolypTrack,
    ScoredBox,
    VideoRecord,
)


def validate_bundle(
    videos: Mapping[str, VideoRecord],
    frame_metas: Iterable[FrameMeta],
    detections: Mapping[FrameKey, tuple[ScoredBox, ...]],
    tracks: Iterable[PolypTrack],
    embeddings: Optional[Mapping[str, EmbeddingSet]] = None,
) -> DatasetBundle:
    """Cross-link all parsed streams; raise on the first dangling reference.

    Canonical internal ordering is by (video_id, frame_idx), so shuffling
    input lines yields an identical bundle.
    """
    if not videos:
        raise DanglingVideoRefError("no video records")

    tracks = tuple(sorted(tracks, key=lambda t: (t.video_id, t.polyp_id)))
    polyp_ids_by_video: dict[str, set[str]] = {}
    for track in tracks:
        video = videos.get(track.video_id)
        if video is None:
            raise DanglingVideoRefError(
                f"annotations: polyp {track.polyp_id} references unknown video {track.video_id!r}"
            )
        last_idx = track.visible_frames[-1][0]
        if last_idx >= video.n_frames:
            raise FrameOutOfRangeError(
                f"annotations: polyp {track.polyp_id} visible on frame {last_idx} "
                f"of {video.n_frames}-frame video {track.video_id!r}"
            )
        polyp_ids_by_video.setdefault(track.video_id, set()).add(track.polyp_id)

    meta_map: dict[FrameKey, FrameMeta] = {}
    for meta in sorted(frame_metas, key=lambda m: m.key):
        video = videos.get(meta.key.video_id)
        if video is None:
            raise DanglingVideoRefError(f"frames: {meta.key} references unknown video")
        if meta.key.frame_idx >= video.n_frames:
            raise FrameOutOfRangeError(
                f"frames: {meta.key} out of range for {video.n_frames}-frame video"
            )
        declared = polyp_ids_by_video.get(meta.key.video_id, set())
        missing = meta.polyp_ids - declared
        if missing:
            raise DanglingPolypRefError(
                f"frames: {meta.key} lists polyp {sorted(missing)[0]!r} absent from annotations"
            )
        meta_map[meta.key] = meta

    det_map: dict[FrameKey, tuple[ScoredBox, ...]] = {}
    for key in sorted(detections):
        video = videos.get(key.video_id)
        if video is None:
            raise DanglingVideoRefError(f"detections: {key} references unknown video")
        if key.frame_idx >= video.n_frames:
            raise FrameOutOfRangeError(
                f"detections: {key} out of range for {video.n_frames}-frame video"
            )
        det_map[key] = detections[key]

    emb_map: dict[str, EmbeddingSet] = {}
    for name in sorted(embeddings or {}):
        emb = (embeddings or {})[name]
        if emb.keys is not None:
            for key in emb.keys:
                if key not in meta_map:
                    raise EmbeddingKeyMismatchError(
                        f"embeddings[{name!r}]: {key} has no frame meta"
                    )
        emb_map[name] = emb

    return DatasetBundle(
        videos=dict(sorted(videos.items())),
        frame_metas=meta_map,
        detections=det_map,
        tracks=tracks,
        embeddings=emb_map,
    )


def load_bundle(
    root: Union[str, Path],
    strict: bool = False,
    with_embeddings: bool = True,
) -> DatasetBundle:
    """Load and validate the artifact tree rooted at `root`.

    Expected layout: videos.jsonl, frames.jsonl, detections.jsonl,
    annotations.jsonl, plus optional embeddings/<name>.emb with sidecar
    embeddings/<name>.keys.jsonl, and frames/<video_id>/<frame_idx>.ppm.
    """
    root = Path(root)
    videos = jsonl.parse_videos(root / "videos.jsonl", strict=strict)
    metas = jsonl.parse_frames_meta(root / "frames.jsonl", strict=strict)
    dets_path = root / "detections.jsonl"
    detections = jsonl.parse_detections(dets_path, strict=strict) if dets_path.exists() else {}
    ann_path = root / "annotations.jsonl"
    tracks = jsonl.parse_annotations(ann_path, strict=strict) if ann_path.exists() else []

    embeddings: dict[str, EmbeddingSet] = {}
    emb_dir = root / "embeddings"
    if with_embeddings and emb_dir.is_dir():
        for binary in sorted(emb_dir.glob("*.emb")):
            keys_path = binary.with_suffix(".keys.jsonl")
            embeddings[binary.stem] = load_embedding_set(
                binary, keys_path if keys_path.exists() else None
            )

    return validate_bundle(videos, metas, detections, tracks, embeddings)
