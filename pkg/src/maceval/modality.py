"""Imaging-modality handling: NBI flags, pixel-rule CE classification,
lesion visibility fractions, cohorts, and per-video usage histograms.

NBI is ingestion-only (the flag arrives in frames.jsonl). CE is either
ingested or classified from pixels with a configurable color-range rule;
an ingested flag always wins. The default rule targets indigo-carmine
blue and is a placeholder to be calibrated on real footage.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .errors import EmptyROIError
from .ingest.ppm import Frame, parse_ppm
from .ingest.types import DatasetBundle, FrameKey, FrameMeta, PolypTrack


class Modality(Enum):
    NBI = "nbi"
    CE = "ce"


class ColorSpace(Enum):
    RGB = "rgb"
    HSV = "hsv"


@dataclass(frozen=True)
class PixelRangeRule:
    """Per-channel inclusive bounds plus the fraction of pixels required.

    Hue is in degrees [0, 360) and may wrap (min > max means the interval
    passes through 0); other channels are in [0, 1].
    """

    space: ColorSpace = ColorSpace.HSV
    ch0: tuple[float, float] = (200.0, 260.0)  # hue (or red)
    ch1: tuple[float, float] = (0.3, 1.0)      # saturation (or green)
    ch2: tuple[float, float] = (0.15, 1.0)     # value (or blue)
    min_fraction: float = 0.05

    def __post_init__(self):
        if not (0.0 < self.min_fraction <= 1.0):
            raise ValueError(f"min_fraction must be in (0,1], got {self.min_fraction}")
        for name, (lo, hi) in (("ch1", self.ch1), ("ch2", self.ch2)):
            if lo > hi:
                raise ValueError(f"{name} bounds inverted: {lo} > {hi}")
        if self.space is ColorSpace.RGB and self.ch0[0] > self.ch0[1]:
            raise ValueError("ch0 bounds inverted (wrap-around is hue-only)")

    @classmethod
    def from_json(cls, source: Union[str, Path, dict]) -> "PixelRangeRule":
        """Load a rule from its JSON config form.

        HSV form: {"space":"hsv","hue":[lo,hi],"sat_min":s,"val_min":v,
        "min_fraction":f} with optional sat_max/val_max. RGB form:
        {"space":"rgb","r":[lo,hi],"g":[lo,hi],"b":[lo,hi],"min_fraction":f}.
        """
        if isinstance(source, (str, Path)):
            obj = json.loads(Path(source).read_text(encoding="utf-8"))
        else:
            obj = dict(source)
        space = ColorSpace(obj.get("space", "hsv"))
        frac = float(obj.get("min_fraction", 0.05))
        if space is ColorSpace.HSV:
            hue = obj.get("hue", [200.0, 260.0])
            return cls(
                space=space,
                ch0=(float(hue[0]), float(hue[1])),
                ch1=(float(obj.get("sat_min", 0.3)), float(obj.get("sat_max", 1.0))),
                ch2=(float(obj.get("val_min", 0.15)), float(obj.get("val_max", 1.0))),
                min_fraction=frac,
            )
        return cls(
            space=space,
            ch0=tuple(float(x) for x in obj.get("r", [0.0, 1.0])),
            ch1=tuple(float(x) for x in obj.get("g", [0.0, 1.0])),
            ch2=tuple(float(x) for x in obj.get("b", [0.0, 1.0])),
            min_fraction=frac,
        )

    def to_json(self) -> dict:
        if self.space is ColorSpace.HSV:
            return {
                "space": "hsv",
                "hue": list(self.ch0),
                "sat_min": self.ch1[0],
                "sat_max": self.ch1[1],
                "val_min": self.ch2[0],
                "val_max": self.ch2[1],
                "min_fraction": self.min_fraction,
            }
        return {
            "space": "rgb",
            "r": list(self.ch0),
            "g": list(self.ch1),
            "b": list(self.ch2),
            "min_fraction": self.min_fraction,
        }


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Hexcone RGB -> HSV with hue in degrees; gray pixels get hue 0.

    Accepts any (..., 3) array with channels in [0, 1].
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = np.maximum(np.maximum(r, g), b)
    minc = np.minimum(np.minimum(r, g), b)
    delta = maxc - minc
    safe = np.where(delta == 0.0, 1.0, delta)
    hue = np.zeros_like(maxc)
    hue = np.where(maxc == r, ((g - b) / safe) % 6.0, hue)
    hue = np.where((maxc == g) & (maxc != r), (b - r) / safe + 2.0, hue)
    hue = np.where((maxc == b) & (maxc != r) & (maxc != g), (r - g) / safe + 4.0, hue)
    hue = np.where(delta == 0.0, 0.0, hue * 60.0) % 360.0
    sat = np.where(maxc == 0.0, 0.0, delta / np.where(maxc == 0.0, 1.0, maxc))
    return np.stack([hue, sat, maxc], axis=-1)


def ce_classify_frame(
    frame: Union[Frame, np.ndarray],
    rule: PixelRangeRule,
    roi: Optional[tuple[int, int, int, int]] = None,
) -> bool:
    """True iff enough ROI pixels fall inside the rule's color range.

    roi is (x0, y0, x1, y1) in pixel coordinates, half-open; None scans
    the whole frame.
    """
    pixels = frame.pixels if isinstance(frame, Frame) else np.asarray(frame)
    if roi is not None:
        x0, y0, x1, y1 = roi
        pixels = pixels[y0:y1, x0:x1]
    if pixels.size == 0:
        raise EmptyROIError("ROI contains no pixels")
    values = pixels.reshape(-1, 3).astype(np.float64) / 255.0
    if rule.space is ColorSpace.HSV:
        values = rgb_to_hsv(values)
        lo, hi = rule.ch0
        if lo <= hi:
            in_range = (values[:, 0] >= lo) & (values[:, 0] <= hi)
        else:  # hue interval wraps through 0
            in_range = (values[:, 0] >= lo) | (values[:, 0] <= hi)
    else:
        in_range = (values[:, 0] >= rule.ch0[0]) & (values[:, 0] <= rule.ch0[1])
    in_range &= (values[:, 1] >= rule.ch1[0]) & (values[:, 1] <= rule.ch1[1])
    in_range &= (values[:, 2] >= rule.ch2[0]) & (values[:, 2] <= rule.ch2[1])
    return bool(in_range.mean() >= rule.min_fraction)


def resolve_ce_flags(
    bundle: DatasetBundle,
    frames_root: Union[str, Path],
    rule: PixelRangeRule,
    roi: Optional[tuple[int, int, int, int]] = None,
) -> DatasetBundle:
    """Fill unresolved ce flags by classifying <video_id>/<frame_idx>.ppm.

    Ingested flags take precedence; only frames with ce=None are read.
    A missing PPM for such a frame is an error (silently assuming white
    light would hide data problems).
    """
    root = Path(frames_root)
    metas: dict[FrameKey, FrameMeta] = {}
    for key, meta in bundle.frame_metas.items():
        if meta.ce is None:
            path = root / key.video_id / f"{key.frame_idx}.ppm"
            if not path.exists():
                raise FileNotFoundError(
                    f"frame pixels missing for unresolved ce flag: {path}"
                )
            ce = ce_classify_frame(parse_ppm(path), rule, roi)
            meta = FrameMeta(
                key=meta.key, nbi=meta.nbi, ce=ce,
                inside_body=meta.inside_body, polyp_ids=meta.polyp_ids,
            )
        metas[key] = meta
    return DatasetBundle(
        videos=bundle.videos,
        frame_metas=metas,
        detections=bundle.detections,
        tracks=bundle.tracks,
        embeddings=bundle.embeddings,
    )


# --- visibility fractions and cohorts ----------------------------------------

def modality_flags(bundle: DatasetBundle, video_id: str, which: Modality) -> np.ndarray:
    """Dense per-frame flag array for one video; unresolved ce counts False."""
    _, nbi, ce = bundle.video_flags(video_id)
    return nbi if which is Modality.NBI else ce == 1


def lesion_modality_fraction(track: PolypTrack, flags: Sequence[bool]) -> float:
    """Fraction of the track's visible frames carrying the modality flag."""
    idxs = track.frame_indices
    flagged = sum(1 for i in idxs if flags[i])
    return flagged / len(idxs)


def lesion_fractions(bundle: DatasetBundle, which: Modality) -> dict[str, float]:
    """Visibility fraction per polyp_id across the whole bundle."""
    out: dict[str, float] = {}
    for video_id in bundle.video_ids:
        flags = modality_flags(bundle, video_id, which)
        for track in bundle.tracks_of(video_id):
            out[track.polyp_id] = lesion_modality_fraction(track, flags)
    return out


def cohort_by_fraction(
    tracks: Sequence[PolypTrack], fractions: Mapping[str, float], threshold: float
) -> list[PolypTrack]:
    """Tracks whose visibility fraction is at least the threshold."""
    if not (0.0 <= threshold <= 1.0):
        raise ValueError(f"threshold must be in [0,1], got {threshold}")
    return [t for t in tracks if fractions.get(t.polyp_id, 0.0) >= threshold]


def fraction_sweep(
    tracks: Sequence[PolypTrack],
    fractions: Mapping[str, float],
    step: float = 0.1,
    min_cohort: int = 100,
) -> list[tuple[float, list[PolypTrack]]]:
    """(threshold, cohort) pairs at `step` intervals while the cohort holds
    at least min_cohort polyps; stops at the first violation."""
    if not (0.0 < step <= 1.0):
        raise ValueError(f"step must be in (0,1], got {step}")
    out = []
    k = 1
    while True:
        threshold = round(k * step, 9)
        if threshold > 1.0:
            break
        cohort = cohort_by_fraction(tracks, fractions, threshold)
        if len(cohort) < min_cohort:
            break
        out.append((threshold, cohort))
        k += 1
    return out


# --- per-video usage ----------------------------------------------------------

def video_modality_fraction(bundle: DatasetBundle, video_id: str, which: Modality) -> float:
    """Fraction of inside-body frames carrying the flag (0 if none inside)."""
    inside, nbi, ce = bundle.video_flags(video_id)
    flags = nbi if which is Modality.NBI else ce == 1
    denom = int(inside.sum())
    if denom == 0:
        return 0.0
    return float((flags & inside).sum() / denom)


@dataclass(frozen=True)
class ModalityHistogram:
    bin_edges: tuple[float, ...]
    with_polyp: tuple[int, ...]
    without_polyp: tuple[int, ...]

    @property
    def totals(self) -> tuple[int, ...]:
        return tuple(a + b for a, b in zip(self.with_polyp, self.without_polyp))


def video_modality_histogram(
    bundle: DatasetBundle,
    which: Modality,
    bin_edges: Sequence[float] = tuple(np.linspace(0.0, 1.0, 21)),
) -> ModalityHistogram:
    """Histogram of videos by flagged-frame fraction, split by polyp presence."""
    edges = np.asarray(bin_edges, dtype=float)
    if edges[0] > 0.0 or edges[-1] < 1.0:
        raise ValueError("bin edges must cover [0, 1]")
    has_polyp = {t.video_id for t in bundle.tracks}
    frac_with, frac_without = [], []
    for video_id in bundle.video_ids:
        frac = video_modality_fraction(bundle, video_id, which)
        (frac_with if video_id in has_polyp else frac_without).append(frac)
    counts_with, _ = np.histogram(frac_with, bins=edges)
    counts_without, _ = np.histogram(frac_without, bins=edges)
    return ModalityHistogram(
        bin_edges=tuple(float(e) for e in edges),
        with_polyp=tuple(int(c) for c in counts_with),
        without_polyp=tuple(int(c) for c in counts_without),
    )
