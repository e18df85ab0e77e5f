"""Deterministic synthetic-data generation with known ground truth.

Scenarios are JSON-serializable specs; every random draw derives from the
scenario seed through the same counter-based stream derivation the
bootstrap uses, so the same scenario always serializes to byte-identical
artifacts.

Detection bundles plant polyp-level hit probabilities (per modality) and a
Poisson false-alarm rate, placed so that evaluating at score threshold 0.5
recovers them exactly in expectation: hit polyps carry matching boxes with
scores in (0.5, 1], missed polyps carry matching boxes below 0.5, and
false-alarm runs are disjoint from every polyp interval.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .ingest.bundle import validate_bundle
from .ingest.embeddings import write_embeddings
from .ingest.ppm import Frame, write_ppm
from .ingest.types import (
    DatasetBundle,
    EmbeddingSet,
    FrameKey,
    FrameMeta,
    GtBox,
    PolypTrack,
    ScoredBox,
    VideoRecord,
)
from .mace import diagonal_frechet
from .stats import stream_key

# Stream-domain tags keep video, polyp, and noise draws decorrelated.
_DOM_EMBED = 1
_DOM_VIDEO = 2

_MIN_GAP = 15  # frames between planted intervals; prevents run merging


@dataclass(frozen=True)
class GroupSpec:
    """One Gaussian group: mean vector, diagonal variances (or full cov), n."""

    mean: np.ndarray
    var: Optional[np.ndarray] = None   # (d,) diagonal variances
    cov: Optional[np.ndarray] = None   # (d, d) full covariance
    n: int = 100

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "mean", mean)
        if (self.var is None) == (self.cov is None):
            raise ValueError("exactly one of var/cov must be given")
        if self.var is not None:
            var = np.broadcast_to(np.asarray(self.var, dtype=np.float64), mean.shape).copy()
            if (var < 0).any():
                raise ValueError("variances must be nonnegative")
            object.__setattr__(self, "var", var)
        else:
            cov = np.asarray(self.cov, dtype=np.float64)
            if cov.shape != (mean.size, mean.size):
                raise ValueError(f"cov shape {cov.shape} does not match dim {mean.size}")
            object.__setattr__(self, "cov", cov)
        if self.n < 2:
            raise ValueError(f"each group needs n >= 2, got {self.n}")

    @property
    def d(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class ShiftScenario:
    groups: Mapping[str, GroupSpec]
    seed: int = 17

    @classmethod
    def from_json(cls, obj: dict, seed: int) -> "ShiftScenario":
        dim = int(obj.get("dim", 8))
        groups = {}
        for name, g in obj["groups"].items():
            mean = g.get("mean", 0.0)
            mean = np.full(dim, float(mean)) if np.isscalar(mean) else np.asarray(mean, float)
            if "cov" in g:
                groups[name] = GroupSpec(mean=mean, cov=np.asarray(g["cov"], float), n=int(g["n"]))
            else:
                var = g.get("var", 1.0)
                var = np.full(dim, float(var)) if np.isscalar(var) else np.asarray(var, float)
                groups[name] = GroupSpec(mean=mean, var=var, n=int(g["n"]))
        return cls(groups=groups, seed=seed)

    def closed_form(self, group_a: str, group_b: str) -> float:
        """Ground-truth MACE between two diagonal groups (oracle path)."""
        a, b = self.groups[group_a], self.groups[group_b]
        if a.var is None or b.var is None:
            raise ValueError("closed form requires diagonal covariances")
        return diagonal_frechet(a.mean, a.var, b.mean, b.var)


def gen_embeddings(scenario: ShiftScenario) -> dict[str, EmbeddingSet]:
    """Sample every group from its Gaussian via a per-group derived stream."""
    out: dict[str, EmbeddingSet] = {}
    for idx, (name, spec) in enumerate(scenario.groups.items()):
        rng = np.random.Generator(np.random.PCG64(stream_key(scenario.seed, _DOM_EMBED, idx)))
        z = rng.standard_normal((spec.n, spec.d))
        if spec.var is not None:
            x = spec.mean + z * np.sqrt(spec.var)
        else:
            x = spec.mean + z @ np.linalg.cholesky(spec.cov).T
        out[name] = EmbeddingSet(x)
    return out


# --- detection bundles ---------------------------------------------------------

@dataclass(frozen=True)
class DetectorScenario:
    n_videos: int = 20
    frames_per_video: int = 900
    fps: float = 30.0
    polyps_per_video: tuple[int, int] = (1, 3)
    track_frames: tuple[int, int] = (20, 60)
    hit_prob: Mapping[str, float] = field(
        default_factory=lambda: {"wl": 0.9, "nbi": 0.9, "ce": 0.9}
    )
    fa_per_minute: float = 0.5
    fa_run_frames: tuple[int, int] = (8, 12)
    nbi_polyp_fraction: float = 0.0
    ce_polyp_fraction: float = 0.0
    modality_cover: tuple[float, float] = (0.3, 0.8)
    outside_frames: int = 0
    box_size: tuple[float, float] = (0.08, 0.2)
    site: str = "synthetic"
    video_prefix: str = "v"
    seed: int = 17

    def __post_init__(self):
        for name, p in self.hit_prob.items():
            if not (0.0 <= p <= 1.0):
                raise ValueError(f"hit_prob[{name!r}] outside [0,1]: {p}")
        if self.fa_per_minute < 0:
            raise ValueError("fa_per_minute must be >= 0")
        if self.nbi_polyp_fraction + self.ce_polyp_fraction > 1.0:
            raise ValueError("modality polyp fractions must sum to <= 1")

    @classmethod
    def from_json(cls, obj: dict, seed: int) -> "DetectorScenario":
        kwargs = dict(obj)
        for key in ("polyps_per_video", "track_frames", "fa_run_frames",
                    "modality_cover", "box_size"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(seed=seed, **kwargs)


def gen_detection_bundle(scenario: DetectorScenario) -> DatasetBundle:
    """Plant polyp tracks, detections, false alarms, and modality flags."""
    videos: dict[str, VideoRecord] = {}
    metas: list[FrameMeta] = []
    detections: dict[FrameKey, tuple[ScoredBox, ...]] = {}
    tracks: list[PolypTrack] = []

    pad = len(str(max(scenario.n_videos - 1, 0)))
    for v in range(scenario.n_videos):
        video_id = f"{scenario.video_prefix}{v:0{pad}d}"
        rng = np.random.Generator(np.random.PCG64(stream_key(scenario.seed, _DOM_VIDEO, v)))
        video = VideoRecord(
            video_id=video_id,
            fps=scenario.fps,
            n_frames=scenario.frames_per_video,
            site=scenario.site,
        )
        videos[video_id] = video
        _fill_video(scenario, video, rng, metas, detections, tracks)

    return validate_bundle(videos, metas, detections, tracks)


def _fill_video(scenario, video, rng, metas, detections, tracks) -> None:
    n_frames = video.n_frames
    lo, hi = scenario.outside_frames, n_frames - scenario.outside_frames
    inside_minutes = max(hi - lo, 0) / (video.fps * 60.0)

    n_polyps = int(rng.integers(scenario.polyps_per_video[0], scenario.polyps_per_video[1] + 1))
    n_fa = int(rng.poisson(scenario.fa_per_minute * inside_minutes))
    lengths = [int(rng.integers(scenario.track_frames[0], scenario.track_frames[1] + 1))
               for _ in range(n_polyps)]
    lengths += [int(rng.integers(scenario.fa_run_frames[0], scenario.fa_run_frames[1] + 1))
                for _ in range(n_fa)]
    # Polyps come first in the length list, so on a crowded timeline false
    # alarms are dropped before polyps and the TPR denominator stays faithful.
    placements = _place_intervals(lengths, lo, hi, rng)
    polyp_intervals = [(s, ln) for idx, s, ln in placements if idx < n_polyps]
    fa_intervals = [(s, ln) for idx, s, ln in placements if idx >= n_polyps]

    nbi_flags = np.zeros(n_frames, dtype=bool)
    ce_flags = np.zeros(n_frames, dtype=bool)
    polyps_on_frame: dict[int, set[str]] = {}
    boxes_on_frame: dict[int, list[ScoredBox]] = {}

    for j, (start, length) in enumerate(polyp_intervals):
        pid = f"{video.video_id}_p{j}"
        gt = _random_box(scenario, rng, pid)
        label = _polyp_label(scenario, rng)
        hit = rng.random() < scenario.hit_prob.get(label, scenario.hit_prob.get("wl", 1.0))
        cover = rng.uniform(*scenario.modality_cover)
        flagged = int(round(cover * length)) if label != "wl" else 0
        visible = []
        for k in range(length):
            f = start + k
            visible.append((f, gt))
            polyps_on_frame.setdefault(f, set()).add(pid)
            if k < flagged:
                nbi_flags[f] = True  # CE frames also carry NBI in the field
                if label == "ce":
                    ce_flags[f] = True
            score = rng.uniform(0.55, 0.95) if hit else rng.uniform(0.05, 0.45)
            boxes_on_frame.setdefault(f, []).append(
                ScoredBox(gt.x0, gt.y0, gt.x1, gt.y1, round(float(score), 6))
            )
        tracks.append(PolypTrack(polyp_id=pid, video_id=video.video_id,
                                 visible_frames=tuple(visible)))

    for start, length in fa_intervals:
        box = _random_box(scenario, rng, None)
        for k in range(length):
            score = rng.uniform(0.55, 0.95)
            boxes_on_frame.setdefault(start + k, []).append(
                ScoredBox(box.x0, box.y0, box.x1, box.y1, round(float(score), 6))
            )

    for f in range(n_frames):
        metas.append(FrameMeta(
            key=FrameKey(video.video_id, f),
            nbi=bool(nbi_flags[f]),
            ce=bool(ce_flags[f]),
            inside_body=bool(lo <= f < hi),
            polyp_ids=frozenset(polyps_on_frame.get(f, ())),
        ))
    for f in sorted(boxes_on_frame):
        detections[FrameKey(video.video_id, f)] = tuple(boxes_on_frame[f])


def _polyp_label(scenario: DetectorScenario, rng) -> str:
    u = rng.random()
    if u < scenario.ce_polyp_fraction:
        return "ce"
    if u < scenario.ce_polyp_fraction + scenario.nbi_polyp_fraction:
        return "nbi"
    return "wl"


def _random_box(scenario: DetectorScenario, rng, polyp_id: Optional[str]):
    w = rng.uniform(*scenario.box_size)
    h = rng.uniform(*scenario.box_size)
    x0 = rng.uniform(0.0, 1.0 - w)
    y0 = rng.uniform(0.0, 1.0 - h)
    coords = (round(float(x0), 6), round(float(y0), 6),
              round(float(x0 + w), 6), round(float(y0 + h), 6))
    if polyp_id is None:
        return ScoredBox(*coords, score=0.5)
    return GtBox(polyp_id, *coords)


def _place_intervals(
    lengths: Sequence[int], lo: int, hi: int, rng
) -> list[tuple[int, int, int]]:
    """Non-overlapping placements with >= _MIN_GAP spacing.

    Returns (input_index, start, length) triples in timeline order;
    intervals that no longer fit are dropped (earlier inputs win).
    """
    kept: list[tuple[int, int]] = []
    total = 0
    for idx, length in enumerate(lengths):
        need = total + length + _MIN_GAP * (len(kept) + 2)
        if lo + need > hi:
            continue
        kept.append((idx, length))
        total += length
    if not kept:
        return []
    slack = (hi - lo) - total - _MIN_GAP * (len(kept) + 1)
    weights = rng.random(len(kept) + 1)
    gaps = np.floor(weights / weights.sum() * slack).astype(int)
    placed = []
    cursor = lo
    for i, (idx, length) in enumerate(kept):
        cursor += _MIN_GAP + int(gaps[i])
        placed.append((idx, cursor, length))
        cursor += length
    return placed


# --- artifact tree -------------------------------------------------------------

@dataclass(frozen=True)
class SynthScenario:
    """Top-level scenario file: optional embedding and detector sections."""

    seed: int = 17
    embeddings: Optional[ShiftScenario] = None
    detector: Optional[DetectorScenario] = None
    pixel_ce_videos: int = 0           # withhold ce flags, emit PPM frames instead
    frame_size: tuple[int, int] = (32, 24)

    @classmethod
    def from_json(cls, source: Union[str, Path, dict]) -> "SynthScenario":
        if isinstance(source, (str, Path)):
            obj = json.loads(Path(source).read_text(encoding="utf-8"))
        else:
            obj = source
        seed = int(obj.get("seed", 17))
        emb = obj.get("embeddings")
        det = obj.get("detector")
        return cls(
            seed=seed,
            embeddings=ShiftScenario.from_json(emb, seed) if emb else None,
            detector=DetectorScenario.from_json(det, seed) if det else None,
            pixel_ce_videos=int(obj.get("pixel_ce_videos", 0)),
            frame_size=tuple(obj.get("frame_size", (32, 24))),
        )


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    """Inverse hexcone conversion (hue in degrees); generator-side counterpart
    of the modality module's rgb_to_hsv, used to plant colored fixtures."""
    hsv = np.asarray(hsv, dtype=np.float64)
    h, s, v = hsv[..., 0] % 360.0, hsv[..., 1], hsv[..., 2]
    c = v * s
    x = c * (1.0 - np.abs((h / 60.0) % 2.0 - 1.0))
    m = v - c
    sector = (h // 60.0).astype(int) % 6
    zeros = np.zeros_like(c)
    r = np.choose(sector, [c, x, zeros, zeros, x, c])
    g = np.choose(sector, [x, c, c, x, zeros, zeros])
    b = np.choose(sector, [zeros, zeros, x, c, c, x])
    return np.stack([r + m, g + m, b + m], axis=-1)


# Flat-color palettes for PPM fixtures: enough to exercise the CE pixel
# rule, nothing more.
_CE_RGB = (40, 60, 200)      # indigo-carmine-ish blue, hue ~232
_TISSUE_RGB = (190, 120, 100)


def write_artifact_tree(
    scenario: SynthScenario, out_dir: Union[str, Path]
) -> Optional[DatasetBundle]:
    """Write the full input-artifact tree for a scenario.

    Layout: videos/frames/detections/annotations JSONL, embeddings/<g>.emb,
    and frames/<video_id>/<frame_idx>.ppm for videos whose ce flags are
    withheld for pixel classification. Returns the generated bundle when the
    scenario has a detector section.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    bundle = None
    if scenario.detector is not None:
        bundle = gen_detection_bundle(scenario.detector)
        pixel_videos = set(bundle.video_ids[: scenario.pixel_ce_videos])
        _write_jsonl(out / "videos.jsonl", (
            {"video_id": v.video_id, "fps": v.fps, "n_frames": v.n_frames, "site": v.site}
            for v in bundle.videos.values()
        ))
        _write_jsonl(out / "frames.jsonl", (
            _meta_record(m, withhold_ce=m.key.video_id in pixel_videos)
            for m in bundle.frame_metas.values()
        ))
        _write_jsonl(out / "detections.jsonl", (
            {
                "video_id": key.video_id,
                "frame_idx": key.frame_idx,
                "boxes": [
                    {"x0": b.x0, "y0": b.y0, "x1": b.x1, "y1": b.y1, "score": b.score}
                    for b in boxes
                ],
            }
            for key, boxes in bundle.detections.items()
        ))
        _write_jsonl(out / "annotations.jsonl", _annotation_records(bundle))
        for video_id in sorted(pixel_videos):
            _write_ppm_frames(bundle, video_id, out / "frames" / video_id, scenario.frame_size)

    if scenario.embeddings is not None:
        emb_dir = out / "embeddings"
        emb_dir.mkdir(exist_ok=True)
        for name, emb in gen_embeddings(scenario.embeddings).items():
            write_embeddings(emb, emb_dir / f"{name}.emb")

    return bundle


def _meta_record(meta: FrameMeta, withhold_ce: bool) -> dict:
    rec = {
        "video_id": meta.key.video_id,
        "frame_idx": meta.key.frame_idx,
        "nbi": meta.nbi,
        "inside": meta.inside_body,
        "polyp_ids": sorted(meta.polyp_ids),
    }
    if not withhold_ce and meta.ce is not None:
        rec["ce"] = meta.ce
    return rec


def _annotation_records(bundle: DatasetBundle):
    by_frame: dict[FrameKey, list[GtBox]] = {}
    for track in bundle.tracks:
        for frame_idx, box in track.visible_frames:
            by_frame.setdefault(FrameKey(track.video_id, frame_idx), []).append(box)
    for key in sorted(by_frame):
        yield {
            "video_id": key.video_id,
            "frame_idx": key.frame_idx,
            "gt": [
                {"polyp_id": b.polyp_id, "x0": b.x0, "y0": b.y0, "x1": b.x1, "y1": b.y1}
                for b in sorted(by_frame[key], key=lambda b: b.polyp_id)
            ],
        }


def _write_ppm_frames(bundle: DatasetBundle, video_id: str, video_dir: Path,
                      frame_size: tuple[int, int]) -> None:
    video_dir.mkdir(parents=True, exist_ok=True)
    w, h = frame_size
    _, _, ce = bundle.video_flags(video_id)
    base = np.zeros((h, w, 3), dtype=np.uint8)
    base[:, :] = _TISSUE_RGB
    ce_frame = base.copy()
    ce_frame[: max(h // 2, 1), :] = _CE_RGB  # half the pixels in the CE range
    for frame_idx in range(bundle.videos[video_id].n_frames):
        pixels = ce_frame if ce[frame_idx] == 1 else base
        write_ppm(Frame(width=w, height=h, pixels=pixels), video_dir / f"{frame_idx}.ppm")


def _write_jsonl(path: Path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
