from __future__ import annotations

import numpy as np
import pytest

from maceval.errors import (
    DanglingPolypRefError,
    DanglingVideoRefError,
    DataFormatError,
    EmbeddingKeyMismatchError,
    FrameOutOfRangeError,
)
from maceval.ingest import validate_bundle
from maceval.ingest.types import (
    EmbeddingSet,
    FrameKey,
    GtBox,
    PolypTrack,
    ScoredBox,
    VideoRecord,
)

from conftest import make_meta, make_track


def parts():
    videos = {"v1": VideoRecord("v1", fps=2.0, n_frames=100, site="s")}
    metas = [make_meta("v1", f, polyp_ids=("p1",) if f == 5 else ()) for f in range(10)]
    dets = {FrameKey("v1", 5): (ScoredBox(0.4, 0.4, 0.6, 0.6, 0.9),)}
    tracks = [make_track("p1", "v1", [5])]
    return videos, metas, dets, tracks


def test_consistent_fixture_validates():
    bundle = validate_bundle(*parts())
    assert bundle.video_ids == ["v1"]
    assert len(bundle.tracks) == 1


def test_detection_out_of_range():
    videos, metas, dets, tracks = parts()
    dets[FrameKey("v1", 999)] = (ScoredBox(0.1, 0.1, 0.2, 0.2, 0.5),)
    with pytest.raises(FrameOutOfRangeError, match="999"):
        validate_bundle(videos, metas, dets, tracks)


def test_dangling_polyp_ref():
    videos, metas, dets, tracks = parts()
    metas.append(make_meta("v1", 50, polyp_ids=("ghost",)))
    with pytest.raises(DanglingPolypRefError, match="ghost"):
        validate_bundle(videos, metas, dets, tracks)


def test_dangling_video_ref():
    videos, metas, dets, tracks = parts()
    tracks.append(make_track("p9", "v9", [1]))
    with pytest.raises(DanglingVideoRefError, match="v9"):
        validate_bundle(videos, metas, dets, tracks)


def test_annotation_past_video_end():
    videos, metas, dets, tracks = parts()
    tracks.append(make_track("p2", "v1", [100]))
    with pytest.raises(FrameOutOfRangeError):
        validate_bundle(videos, metas, dets, tracks)


def test_embedding_key_must_have_meta(rng):
    videos, metas, dets, tracks = parts()
    emb = EmbeddingSet(rng.standard_normal((2, 4)),
                       keys=(FrameKey("v1", 0), FrameKey("v1", 77)))
    with pytest.raises(EmbeddingKeyMismatchError, match="77"):
        validate_bundle(videos, metas, dets, tracks, {"vit": emb})


def test_embedding_with_matching_keys(rng):
    videos, metas, dets, tracks = parts()
    emb = EmbeddingSet(rng.standard_normal((2, 4)),
                       keys=(FrameKey("v1", 0), FrameKey("v1", 1)))
    bundle = validate_bundle(videos, metas, dets, tracks, {"vit": emb})
    assert bundle.embeddings["vit"].n == 2


def test_random_deletions_always_yield_named_error(rng):
    """Fuzz: dropping a referenced record from a valid fixture must produce a
    DataFormatError naming the problem, never an accepted bundle."""
    for trial in range(30):
        videos, metas, dets, tracks = parts()
        what = trial % 3
        if what == 0:
            videos = {}
        elif what == 1:
            metas = [m for m in metas if m.key.frame_idx != 5]  # meta keeps polyp list
            tracks = []  # drop annotations so the polyp_ids reference dangles
            metas.append(make_meta("v1", 5, polyp_ids=("p1",)))
        else:
            videos = {"v2": VideoRecord("v2", fps=1.0, n_frames=5, site="s")}
        with pytest.raises(DataFormatError):
            validate_bundle(videos, metas, dets, tracks)


def test_video_flags_densify():
    videos, metas, dets, tracks = parts()
    metas.append(make_meta("v1", 11, nbi=True, ce=None, inside=False))
    bundle = validate_bundle(videos, metas, dets, tracks)
    inside, nbi, ce = bundle.video_flags("v1")
    assert inside.shape == (100,)
    assert not inside[11] and nbi[11] and ce[11] == -1
    assert ce[9] == 0            # explicit ce=False from the fixture metas
    assert inside[50] and ce[50] == -1  # no meta row: defaults, unresolved ce
