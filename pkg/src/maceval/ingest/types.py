"""Domain types for parsed input artifacts.

A DatasetBundle is the cross-validated join of all streams; it is immutable
after validation and safe to share between threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Optional, Sequence

import numpy as np

from ..errors import RangeError


class FrameKey(NamedTuple):
    video_id: str
    frame_idx: int


@dataclass(frozen=True)
class VideoRecord:
    video_id: str
    fps: float
    n_frames: int
    site: str = ""

    def __post_init__(self):
        if not self.video_id:
            raise ValueError("video_id must be nonempty")
        if not (self.fps > 0):
            raise ValueError(f"fps must be > 0, got {self.fps}")
        if self.n_frames < 1:
            raise ValueError(f"n_frames must be >= 1, got {self.n_frames}")

    @property
    def duration_minutes(self) -> float:
        return self.n_frames / (self.fps * 60.0)


@dataclass(frozen=True)
class FrameMeta:
    key: FrameKey
    nbi: bool = False
    ce: Optional[bool] = None  # None: to be computed from pixels
    inside_body: bool = True
    polyp_ids: frozenset[str] = frozenset()


@dataclass(frozen=True)
class ScoredBox:
    x0: float
    y0: float
    x1: float
    y1: float
    score: float

    def __post_init__(self):
        if not (0.0 <= self.x0 < self.x1 <= 1.0 and 0.0 <= self.y0 < self.y1 <= 1.0):
            raise RangeError(f"invalid box geometry ({self.x0},{self.y0},{self.x1},{self.y1})")
        if not (0.0 <= self.score <= 1.0):
            raise RangeError(f"score {self.score} outside [0,1]")


@dataclass(frozen=True)
class GtBox:
    polyp_id: str
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not self.polyp_id:
            raise ValueError("polyp_id must be nonempty")
        if not (0.0 <= self.x0 < self.x1 <= 1.0 and 0.0 <= self.y0 < self.y1 <= 1.0):
            raise RangeError(f"invalid box geometry ({self.x0},{self.y0},{self.x1},{self.y1})")


@dataclass(frozen=True)
class PolypTrack:
    polyp_id: str
    video_id: str
    visible_frames: tuple[tuple[int, GtBox], ...]  # sorted, strictly increasing frame_idx

    def __post_init__(self):
        if not self.visible_frames:
            raise ValueError(f"polyp {self.polyp_id}: empty track")
        idxs = [f for f, _ in self.visible_frames]
        if any(b <= a for a, b in zip(idxs, idxs[1:])):
            raise ValueError(f"polyp {self.polyp_id}: frame indices not strictly increasing")

    @property
    def frame_indices(self) -> list[int]:
        return [f for f, _ in self.visible_frames]


@dataclass(frozen=True)
class EmbeddingSet:
    """n x d matrix of frame embeddings, optionally aligned to frame keys.

    Stored float32 on disk, promoted to float64 for every computation.
    """

    matrix: np.ndarray
    keys: Optional[tuple[FrameKey, ...]] = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2:
            raise ValueError(f"embedding matrix must be 2-D, got shape {m.shape}")
        object.__setattr__(self, "matrix", m)
        if self.keys is not None and len(self.keys) != m.shape[0]:
            raise ValueError(f"{len(self.keys)} keys for {m.shape[0]} rows")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def d(self) -> int:
        return self.matrix.shape[1]

    def take(self, rows: Sequence[int]) -> "EmbeddingSet":
        """Row subset/multiset (bootstrap resamples use repeated indices)."""
        keys = tuple(self.keys[i] for i in rows) if self.keys is not None else None
        return EmbeddingSet(self.matrix[np.asarray(rows, dtype=np.intp)], keys)


@dataclass(frozen=True)
class DatasetBundle:
    """Validated join of videos, frame metas, detections, tracks, embeddings."""

    videos: Mapping[str, VideoRecord]
    frame_metas: Mapping[FrameKey, FrameMeta]
    detections: Mapping[FrameKey, tuple[ScoredBox, ...]]
    tracks: tuple[PolypTrack, ...]
    embeddings: Mapping[str, EmbeddingSet] = field(default_factory=dict)

    def __post_init__(self):
        metas: dict[str, list[FrameMeta]] = {v: [] for v in self.videos}
        for meta in self.frame_metas.values():
            metas.setdefault(meta.key.video_id, []).append(meta)
        tracks: dict[str, list[PolypTrack]] = {v: [] for v in self.videos}
        for track in self.tracks:
            tracks.setdefault(track.video_id, []).append(track)
        dets: dict[str, list[tuple[int, tuple[ScoredBox, ...]]]] = {v: [] for v in self.videos}
        for key, boxes in self.detections.items():
            dets.setdefault(key.video_id, []).append((key.frame_idx, boxes))
        object.__setattr__(self, "_metas_by_video", metas)
        object.__setattr__(self, "_tracks_by_video", tracks)
        object.__setattr__(self, "_dets_by_video", dets)

    @property
    def video_ids(self) -> list[str]:
        return sorted(self.videos)

    def tracks_of(self, video_id: str) -> list[PolypTrack]:
        return list(self._tracks_by_video.get(video_id, ()))

    def detections_of(self, video_id: str) -> list[tuple[int, tuple[ScoredBox, ...]]]:
        return list(self._dets_by_video.get(video_id, ()))

    def video_flags(self, video_id: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Dense per-frame (inside, nbi, ce) arrays for one video.

        Frames without a meta row default to inside=True, nbi=False, ce
        unresolved. ce is tri-state int8: -1 unresolved, 0 false, 1 true.
        """
        n = self.videos[video_id].n_frames
        inside = np.ones(n, dtype=bool)
        nbi = np.zeros(n, dtype=bool)
        ce = np.full(n, -1, dtype=np.int8)
        for meta in self._metas_by_video.get(video_id, ()):
            idx = meta.key.frame_idx
            inside[idx] = meta.inside_body
            nbi[idx] = meta.nbi
            if meta.ce is not None:
                ce[idx] = int(meta.ce)
        return inside, nbi, ce

    def gt_boxes_of(self, video_id: str) -> dict[int, list[GtBox]]:
        """All ground-truth boxes of one video grouped by frame index."""
        out: dict[int, list[GtBox]] = {}
        for track in self._tracks_by_video.get(video_id, ()):
            for frame_idx, box in track.visible_frames:
                out.setdefault(frame_idx, []).append(box)
        return out
