from __future__ import annotations

import json
import random

import pytest

from maceval.errors import (
    CrossVideoPolypError,
    DuplicateKeyError,
    MalformedLineError,
    RangeError,
    UnknownFieldError,
)
from maceval.ingest import (
    parse_annotations,
    parse_detections,
    parse_frames_meta,
    parse_videos,
    validate_bundle,
)
from maceval.ingest.types import FrameKey


def lines(*records):
    return [json.dumps(r) for r in records]


FRAME = {"video_id": "v1", "frame_idx": 0, "nbi": False, "inside": True, "polyp_ids": []}


class TestFramesMeta:
    def test_single_record(self):
        metas = parse_frames_meta(lines(FRAME))
        assert len(metas) == 1
        assert metas[0].key == FrameKey("v1", 0)
        assert metas[0].ce is None  # missing ce means "classify later"

    def test_duplicate_key(self):
        with pytest.raises(DuplicateKeyError):
            parse_frames_meta(lines(FRAME, FRAME))

    def test_both_modality_flags(self):
        rec = dict(FRAME, nbi=True, ce=True)
        metas = parse_frames_meta(lines(rec))
        assert metas[0].nbi and metas[0].ce is True

    def test_explicit_whitelight(self):
        rec = dict(FRAME, ce=False)
        assert parse_frames_meta(lines(rec))[0].ce is False

    def test_strict_rejects_unknown_field(self):
        rec = dict(FRAME, extra=1)
        assert parse_frames_meta(lines(rec))  # lenient default
        with pytest.raises(UnknownFieldError):
            parse_frames_meta(lines(rec), strict=True)

    def test_missing_required_field(self):
        rec = {k: v for k, v in FRAME.items() if k != "nbi"}
        with pytest.raises(MalformedLineError):
            parse_frames_meta(lines(rec))

    def test_malformed_json_names_line(self):
        with pytest.raises(MalformedLineError, match="line 2"):
            parse_frames_meta([json.dumps(FRAME), "{nope"])


class TestDetections:
    def test_empty_boxes(self):
        dets = parse_detections(lines({"video_id": "v1", "frame_idx": 0, "boxes": []}))
        assert dets[FrameKey("v1", 0)] == ()

    def test_score_out_of_range(self):
        rec = {"video_id": "v1", "frame_idx": 0,
               "boxes": [{"x0": 0.1, "y0": 0.1, "x1": 0.2, "y1": 0.2, "score": 1.2}]}
        with pytest.raises(RangeError):
            parse_detections(lines(rec))

    def test_inverted_box(self):
        rec = {"video_id": "v1", "frame_idx": 0,
               "boxes": [{"x0": 0.5, "y0": 0.1, "x1": 0.2, "y1": 0.2, "score": 0.5}]}
        with pytest.raises(RangeError):
            parse_detections(lines(rec))

    def test_two_boxes_preserve_order(self):
        rec = {"video_id": "v1", "frame_idx": 3,
               "boxes": [{"x0": 0.1, "y0": 0.1, "x1": 0.2, "y1": 0.2, "score": 0.5},
                         {"x0": 0.3, "y0": 0.3, "x1": 0.4, "y1": 0.4, "score": 0.7}]}
        boxes = parse_detections(lines(rec))[FrameKey("v1", 3)]
        assert [b.score for b in boxes] == [0.5, 0.7]


def ann(video, frame, *polyps):
    return {"video_id": video, "frame_idx": frame,
            "gt": [{"polyp_id": p, "x0": 0.1, "y0": 0.1, "x1": 0.3, "y1": 0.3}
                   for p in polyps]}


class TestAnnotations:
    def test_single_track(self):
        tracks = parse_annotations(lines(ann("v1", 0, "p1"), ann("v1", 1, "p1"),
                                         ann("v1", 5, "p1")))
        assert len(tracks) == 1
        assert tracks[0].frame_indices == [0, 1, 5]

    def test_cross_video_polyp(self):
        with pytest.raises(CrossVideoPolypError):
            parse_annotations(lines(ann("v1", 0, "p1"), ann("v2", 0, "p1")))

    def test_interleaved_tracks_match_bruteforce_grouping(self):
        # Oracle: group (frame, polyp) pairs by polyp_id, sort frames.
        random.seed(4)
        pairs = [(f, p) for f in range(30) for p in ("p1", "p2") if random.random() < 0.5]
        records = {}
        for f, p in pairs:
            records.setdefault(f, []).append(p)
        tracks = parse_annotations(lines(*(ann("v1", f, *ps) for f, ps in sorted(records.items()))))
        expected = {}
        for f, p in pairs:
            expected.setdefault(p, []).append(f)
        by_id = {t.polyp_id: t.frame_indices for t in tracks}
        assert by_id == {p: sorted(fs) for p, fs in expected.items()}


class TestVideos:
    def test_basic(self):
        videos = parse_videos(lines({"video_id": "v1", "fps": 30.0, "n_frames": 100, "site": "a"}))
        assert videos["v1"].duration_minutes == pytest.approx(100 / 1800)

    def test_bad_fps(self):
        with pytest.raises(MalformedLineError):
            parse_videos(lines({"video_id": "v1", "fps": 0, "n_frames": 100, "site": "a"}))


def test_bundle_is_order_independent(rng):
    videos = [{"video_id": f"v{i}", "fps": 2.0, "n_frames": 50, "site": "x"} for i in range(3)]
    frames = [dict(FRAME, video_id=f"v{i}", frame_idx=f)
              for i in range(3) for f in range(50)]
    anns = [ann(f"v{i}", f, f"v{i}_p") for i in range(3) for f in (4, 5, 6)]
    dets = [{"video_id": f"v{i}", "frame_idx": 5,
             "boxes": [{"x0": 0.1, "y0": 0.1, "x1": 0.3, "y1": 0.3, "score": 0.9}]}
            for i in range(3)]

    def build(order_seed):
        r = random.Random(order_seed)
        shuffled = [list(x) for x in (videos, frames, anns, dets)]
        for part in shuffled:
            r.shuffle(part)
        sv, sf, sa, sd = shuffled
        return validate_bundle(
            parse_videos(lines(*sv)),
            parse_frames_meta(lines(*sf)),
            parse_detections(lines(*sd)),
            parse_annotations(lines(*sa)),
        )

    a, b = build(1), build(2)
    assert list(a.videos) == list(b.videos)
    assert list(a.frame_metas) == list(b.frame_metas)
    assert list(a.detections) == list(b.detections)
    assert [t.polyp_id for t in a.tracks] == [t.polyp_id for t in b.tracks]
    assert a.tracks == b.tracks
