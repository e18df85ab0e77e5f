from __future__ import annotations

import numpy as np
import pytest

from maceval.ingest import validate_bundle
from maceval.ingest.types import (
    FrameKey,
    FrameMeta,
    GtBox,
    PolypTrack,
    ScoredBox,
    VideoRecord,
)


def make_meta(video_id, frame_idx, nbi=False, ce=False, inside=True, polyp_ids=()):
    return FrameMeta(
        key=FrameKey(video_id, frame_idx),
        nbi=nbi,
        ce=ce,
        inside_body=inside,
        polyp_ids=frozenset(polyp_ids),
    )


def make_track(polyp_id, video_id, frames, box=(0.4, 0.4, 0.6, 0.6)):
    gt = GtBox(polyp_id, *box)
    return PolypTrack(
        polyp_id=polyp_id,
        video_id=video_id,
        visible_frames=tuple((f, gt) for f in frames),
    )


@pytest.fixture
def tiny_bundle():
    """Two videos at 60 fpm: v1 has one polyp visible on frames 10-19 with a
    perfect detection run, plus an unmatched alarm run on frames 40-44; v2
    has one missed polyp and no alarms."""
    videos = {
        "v1": VideoRecord("v1", fps=1.0, n_frames=120, site="s"),
        "v2": VideoRecord("v2", fps=1.0, n_frames=60, site="s"),
    }
    metas = [make_meta("v1", f, polyp_ids=("p1",) if 10 <= f < 20 else ())
             for f in range(120)]
    metas += [make_meta("v2", f, polyp_ids=("p2",) if 5 <= f < 15 else ())
              for f in range(60)]
    tracks = [
        make_track("p1", "v1", range(10, 20)),
        make_track("p2", "v2", range(5, 15), box=(0.1, 0.1, 0.3, 0.3)),
    ]
    hit = ScoredBox(0.4, 0.4, 0.6, 0.6, 0.9)
    alarm = ScoredBox(0.7, 0.7, 0.9, 0.9, 0.8)
    detections = {FrameKey("v1", f): (hit,) for f in range(10, 20)}
    detections.update({FrameKey("v1", f): (alarm,) for f in range(40, 45)})
    return validate_bundle(videos, metas, detections, tracks)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
