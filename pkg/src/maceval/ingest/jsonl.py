"""JSONL parsers for frame metadata, detections, annotations, and videos.

Each parser is a pure function over a line stream (path, file object, or
iterable of strings). Lenient mode (default) ignores unknown fields; strict
mode rejects them so CI catches typos.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import IO, Iterable, Union

from ..errors import (
    CrossVideoPolypError,
    DuplicateKeyError,
    MalformedLineError,
    RangeError,
    UnknownFieldError,
)
from .types import FrameKey, FrameMeta, GtBox, PolypTrack, ScoredBox, VideoRecord

Stream = Union[str, Path, IO[str], Iterable[str]]

_FRAME_FIELDS = {"video_id", "frame_idx", "nbi", "ce", "inside", "polyp_ids"}
_DET_FIELDS = {"video_id", "frame_idx", "boxes"}
_BOX_FIELDS = {"x0", "y0", "x1", "y1", "score"}
_ANN_FIELDS = {"video_id", "frame_idx", "gt"}
_GT_FIELDS = {"polyp_id", "x0", "y0", "x1", "y1"}
_VIDEO_FIELDS = {"video_id", "fps", "n_frames", "site"}


def parse_frames_meta(stream: Stream, strict: bool = False) -> list[FrameMeta]:
    """Parse frames.jsonl into an order-preserving list of FrameMeta."""
    metas: list[FrameMeta] = []
    seen: set[FrameKey] = set()
    for line_no, rec in _records(stream):
        _check_fields(rec, _FRAME_FIELDS, strict, line_no)
        key = _frame_key(rec, line_no)
        if key in seen:
            raise DuplicateKeyError(f"duplicate frame meta for {key}")
        seen.add(key)
        nbi = _bool_field(rec, "nbi", line_no, required=True)
        # Missing "ce" means "classify from pixels later"; explicit false
        # means asserted whitelight.
        ce = _bool_field(rec, "ce", line_no, required=False)
        inside = _bool_field(rec, "inside", line_no, required=True)
        polyp_ids = rec.get("polyp_ids")
        if not isinstance(polyp_ids, list) or not all(
            isinstance(p, str) and p for p in polyp_ids
        ):
            raise MalformedLineError(line_no, "polyp_ids must be a list of nonempty strings")
        metas.append(
            FrameMeta(key=key, nbi=nbi, ce=ce, inside_body=inside, polyp_ids=frozenset(polyp_ids))
        )
    return metas


def parse_detections(stream: Stream, strict: bool = False) -> dict[FrameKey, tuple[ScoredBox, ...]]:
    """Parse detections.jsonl into a FrameKey -> boxes map, order preserved per frame."""
    out: dict[FrameKey, tuple[ScoredBox, ...]] = {}
    for line_no, rec in _records(stream):
        _check_fields(rec, _DET_FIELDS, strict, line_no)
        key = _frame_key(rec, line_no)
        if key in out:
            raise DuplicateKeyError(f"duplicate detections for {key}")
        raw_boxes = rec.get("boxes", [])
        if not isinstance(raw_boxes, list):
            raise MalformedLineError(line_no, "boxes must be a list")
        boxes = []
        for raw in raw_boxes:
            if not isinstance(raw, dict):
                raise MalformedLineError(line_no, "each box must be an object")
            _check_fields(raw, _BOX_FIELDS, strict, line_no)
            try:
                boxes.append(
                    ScoredBox(
                        x0=_num(raw, "x0", line_no),
                        y0=_num(raw, "y0", line_no),
                        x1=_num(raw, "x1", line_no),
                        y1=_num(raw, "y1", line_no),
                        score=_num(raw, "score", line_no),
                    )
                )
            except RangeError as exc:
                raise RangeError(f"line {line_no}: {exc}") from exc
        out[key] = tuple(boxes)
    return out


def parse_annotations(stream: Stream, strict: bool = False) -> list[PolypTrack]:
    """Parse per-frame ground truth and regroup it into per-polyp tracks."""
    seen: set[FrameKey] = set()
    by_polyp: dict[str, tuple[str, list[tuple[int, GtBox]]]] = {}
    order: list[str] = []
    for line_no, rec in _records(stream):
        _check_fields(rec, _ANN_FIELDS, strict, line_no)
        key = _frame_key(rec, line_no)
        if key in seen:
            raise DuplicateKeyError(f"duplicate annotations for {key}")
        seen.add(key)
        gts = rec.get("gt", [])
        if not isinstance(gts, list):
            raise MalformedLineError(line_no, "gt must be a list")
        frame_polyps: set[str] = set()
        for raw in gts:
            if not isinstance(raw, dict):
                raise MalformedLineError(line_no, "each gt entry must be an object")
            _check_fields(raw, _GT_FIELDS, strict, line_no)
            pid = raw.get("polyp_id")
            if not isinstance(pid, str) or not pid:
                raise MalformedLineError(line_no, "polyp_id must be a nonempty string")
            if pid in frame_polyps:
                raise DuplicateKeyError(f"line {line_no}: polyp {pid} listed twice on {key}")
            frame_polyps.add(pid)
            try:
                box = GtBox(
                    polyp_id=pid,
                    x0=_num(raw, "x0", line_no),
                    y0=_num(raw, "y0", line_no),
                    x1=_num(raw, "x1", line_no),
                    y1=_num(raw, "y1", line_no),
                )
            except RangeError as exc:
                raise RangeError(f"line {line_no}: {exc}") from exc
            if pid not in by_polyp:
                by_polyp[pid] = (key.video_id, [])
                order.append(pid)
            video_id, frames = by_polyp[pid]
            if video_id != key.video_id:
                raise CrossVideoPolypError(
                    f"polyp {pid} appears in videos {video_id} and {key.video_id}"
                )
            frames.append((key.frame_idx, box))
    tracks = []
    for pid in order:
        video_id, frames = by_polyp[pid]
        frames.sort(key=lambda fb: fb[0])
        tracks.append(PolypTrack(polyp_id=pid, video_id=video_id, visible_frames=tuple(frames)))
    return tracks


def parse_videos(stream: Stream, strict: bool = False) -> dict[str, VideoRecord]:
    """Parse videos.jsonl into a video_id -> VideoRecord map."""
    out: dict[str, VideoRecord] = {}
    for line_no, rec in _records(stream):
        _check_fields(rec, _VIDEO_FIELDS, strict, line_no)
        vid = rec.get("video_id")
        if not isinstance(vid, str) or not vid:
            raise MalformedLineError(line_no, "video_id must be a nonempty string")
        if vid in out:
            raise DuplicateKeyError(f"duplicate video record for {vid!r}")
        fps = rec.get("fps")
        n_frames = rec.get("n_frames")
        if not isinstance(fps, (int, float)) or isinstance(fps, bool) or not fps > 0:
            raise MalformedLineError(line_no, "fps must be a number > 0")
        if not isinstance(n_frames, int) or isinstance(n_frames, bool) or n_frames < 1:
            raise MalformedLineError(line_no, "n_frames must be an integer >= 1")
        site = rec.get("site", "")
        if not isinstance(site, str):
            raise MalformedLineError(line_no, "site must be a string")
        out[vid] = VideoRecord(video_id=vid, fps=float(fps), n_frames=n_frames, site=site)
    return out


# --- shared helpers ---------------------------------------------------------

def _records(stream: Stream):
    for line_no, line in enumerate(_iter_lines(stream), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedLineError(line_no, f"invalid JSON: {exc}") from exc
        if not isinstance(rec, dict):
            raise MalformedLineError(line_no, "each line must be a JSON object")
        yield line_no, rec


def _iter_lines(stream: Stream) -> Iterable[str]:
    if isinstance(stream, (str, Path)):
        with open(stream, "r", encoding="utf-8") as fh:
            yield from fh
    else:
        yield from stream


def _check_fields(rec: dict, allowed: set[str], strict: bool, line_no: int) -> None:
    if strict:
        unknown = set(rec) - allowed
        if unknown:
            raise UnknownFieldError(f"line {line_no}: unknown field(s) {sorted(unknown)}")


def _frame_key(rec: dict, line_no: int) -> FrameKey:
    vid = rec.get("video_id")
    idx = rec.get("frame_idx")
    if not isinstance(vid, str) or not vid:
        raise MalformedLineError(line_no, "video_id must be a nonempty string")
    if not isinstance(idx, int) or isinstance(idx, bool) or idx < 0:
        raise MalformedLineError(line_no, "frame_idx must be an integer >= 0")
    return FrameKey(vid, idx)


def _bool_field(rec: dict, name: str, line_no: int, required: bool):
    if name not in rec:
        if required:
            raise MalformedLineError(line_no, f"missing required field {name!r}")
        return None
    value = rec[name]
    if not isinstance(value, bool):
        raise MalformedLineError(line_no, f"{name} must be a boolean")
    return value


def _num(rec: dict, name: str, line_no: int) -> float:
    value = rec.get(name)
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise MalformedLineError(line_no, f"{name} must be a number")
    return float(value)
