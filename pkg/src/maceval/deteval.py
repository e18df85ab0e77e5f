"""Detection evaluation: temporal filtering, matching, TPR/FAPM curves.

The per-frame detector output is binarized at a score threshold, smoothed
by a centered majority-vote window ("median filtering"), matched to polyp
tracks by IoU, and reduced to polyp-level TPR and false-alarm events per
minute. A sweep over (votes, threshold) yields a TPR-vs-FAPM curve whose
Pareto upper envelope is compared across datasets at fixed FAPM operating
points via the video-level bootstrap.

SweepEvaluator caches per-(video, config) sufficient statistics so each
bootstrap resample is a weighted sum, not a re-run of the filter.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import (
    EmptyCurveError,
    NotEstimableError,
    TooFewValidResamplesError,
    ZeroDurationError,
)
from .ingest.types import DatasetBundle, GtBox, PolypTrack, ScoredBox
from .stats import BootstrapConfig, TestResult, non_inferiority, resample_units, superiority_one_sided


@dataclass(frozen=True)
class FilterConfig:
    window: int = 7
    votes: int = 4
    score_threshold: float = 0.5

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError(f"window must be odd and >= 1, got {self.window}")
        if not (1 <= self.votes <= self.window):
            raise ValueError(f"votes must be in [1, {self.window}], got {self.votes}")
        if not (0.0 <= self.score_threshold <= 1.0):
            raise ValueError(f"score_threshold must be in [0,1], got {self.score_threshold}")


@dataclass(frozen=True)
class MatchConfig:
    iou_threshold: float = 0.2

    def __post_init__(self):
        if not (0.0 < self.iou_threshold <= 1.0):
            raise ValueError(f"iou_threshold must be in (0,1], got {self.iou_threshold}")


class CurvePoint(NamedTuple):
    fapm: float
    tpr: float


@dataclass(frozen=True)
class Curve:
    """Pareto upper envelope: fapm strictly increasing, tpr nondecreasing."""

    points: tuple[CurvePoint, ...]

    def __post_init__(self):
        fapms = [p.fapm for p in self.points]
        tprs = [p.tpr for p in self.points]
        if any(b <= a for a, b in zip(fapms, fapms[1:])):
            raise ValueError("curve fapm values must be strictly increasing")
        if any(b < a for a, b in zip(tprs, tprs[1:])):
            raise ValueError("curve tpr values must be nondecreasing")


class TprAtFapm(NamedTuple):
    value: float
    clamped: bool


class CompareMode(Enum):
    SUPERIORITY = "superiority"
    NON_INFERIORITY = "non_inferiority"


def default_sweep(window: int = 7, n_thresholds: int = 50) -> list[FilterConfig]:
    """All vote counts for one window crossed with a score-threshold grid."""
    thresholds = np.linspace(0.01, 0.99, n_thresholds)
    return [
        FilterConfig(window=window, votes=v, score_threshold=float(t))
        for v in range(1, window + 1)
        for t in thresholds
    ]


# --- per-frame primitives ----------------------------------------------------

def binarize_frames(
    boxes_by_frame: Sequence[Sequence[ScoredBox]],
    score_threshold: float,
    inside: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, list[tuple[ScoredBox, ...]]]:
    """Per-frame positive flag plus the boxes that survive the threshold.

    A frame is positive iff any box scores >= threshold. Frames flagged
    outside the body are forced negative and keep no boxes.
    """
    n = len(boxes_by_frame)
    flags = np.zeros(n, dtype=bool)
    retained: list[tuple[ScoredBox, ...]] = []
    for i, boxes in enumerate(boxes_by_frame):
        if inside is not None and not inside[i]:
            retained.append(())
            continue
        keep = tuple(b for b in boxes if b.score >= score_threshold)
        flags[i] = bool(keep)
        retained.append(keep)
    return flags, retained


def median_filter(stream: Sequence[bool], cfg: FilterConfig) -> np.ndarray:
    """Majority-style vote over a centered window.

    output[i] = 1 iff the count of ones in the window of length cfg.window
    centered at i reaches cfg.votes; positions beyond the ends count as 0.
    """
    arr = np.asarray(stream, dtype=bool)
    if arr.size == 0:
        return arr
    counts = _window_counts(arr[None, :], cfg.window)[0]
    return counts >= cfg.votes


def iou(a, b) -> float:
    """Intersection over union of two boxes (anything with x0,y0,x1,y1)."""
    ix0, iy0 = max(a.x0, b.x0), max(a.y0, b.y0)
    ix1, iy1 = min(a.x1, b.x1), min(a.y1, b.y1)
    iw, ih = ix1 - ix0, iy1 - iy0
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = (a.x1 - a.x0) * (a.y1 - a.y0) + (b.x1 - b.x0) * (b.y1 - b.y0) - inter
    return inter / union


def apply_filter(
    boxes_by_frame: Sequence[Sequence[ScoredBox]],
    cfg: FilterConfig,
    inside: Optional[np.ndarray] = None,
) -> list[tuple[ScoredBox, ...]]:
    """Binarize, vote-filter, and keep retained boxes only on passing frames."""
    flags, retained = binarize_frames(boxes_by_frame, cfg.score_threshold, inside)
    passed = median_filter(flags, cfg)
    return [boxes if ok else () for boxes, ok in zip(retained, passed)]


def polyp_detected(
    track: PolypTrack,
    filtered_boxes: Sequence[Sequence[ScoredBox]],
    mcfg: MatchConfig,
) -> bool:
    """True iff any visible frame's retained boxes match the GT box there."""
    for frame_idx, gt in track.visible_frames:
        for box in filtered_boxes[frame_idx]:
            if iou(box, gt) >= mcfg.iou_threshold:
                return True
    return False


def false_alarm_events(
    filtered_boxes: Sequence[Sequence[ScoredBox]],
    gt_by_frame: dict[int, list[GtBox]],
    mcfg: MatchConfig,
) -> int:
    """Count maximal runs of consecutive false-positive frames.

    A frame is false-positive iff it has at least one retained box and none
    of them matches any GT box on that frame.
    """
    events = 0
    in_run = False
    for frame_idx, boxes in enumerate(filtered_boxes):
        fp = bool(boxes)
        if fp:
            gts = gt_by_frame.get(frame_idx, ())
            if any(iou(box, gt) >= mcfg.iou_threshold for box in boxes for gt in gts):
                fp = False
        if fp and not in_run:
            events += 1
        in_run = fp
    return events


# --- sweep evaluation --------------------------------------------------------

@dataclass
class _VideoCache:
    """Per-config sufficient statistics for one video."""

    polyp_ids: list[str]
    detected: np.ndarray   # (n_configs, n_polyps) bool
    fa_events: np.ndarray  # (n_configs,) int
    minutes: float


def _window_counts(pos: np.ndarray, window: int) -> np.ndarray:
    """Zero-padded centered window sums along the last axis of a 2-D array."""
    n = pos.shape[-1]
    half = window // 2
    cum = np.zeros(pos.shape[:-1] + (n + 1,), dtype=np.int64)
    cum[..., 1:] = np.cumsum(pos.astype(np.int64), axis=-1)
    hi = np.minimum(np.arange(n) + half + 1, n)
    lo = np.maximum(np.arange(n) - half, 0)
    return cum[..., hi] - cum[..., lo]


class SweepEvaluator:
    """Caches per-(video, config) detection statistics for fast resampling."""

    def __init__(
        self,
        bundle: DatasetBundle,
        sweep: Sequence[FilterConfig],
        mcfg: MatchConfig,
        video_ids: Optional[Sequence[str]] = None,
    ):
        if not sweep:
            raise ValueError("sweep must be nonempty")
        self.configs = list(sweep)
        self.mcfg = mcfg
        self.video_ids = list(video_ids) if video_ids is not None else bundle.video_ids
        self._caches = [self._build_cache(bundle, vid) for vid in self.video_ids]
        self.minutes = np.array([c.minutes for c in self._caches])
        self.polyp_counts = np.array([len(c.polyp_ids) for c in self._caches])

    def _build_cache(self, bundle: DatasetBundle, video_id: str) -> _VideoCache:
        video = bundle.videos[video_id]
        n_frames = video.n_frames
        inside, _, _ = bundle.video_flags(video_id)
        tracks = sorted(bundle.tracks_of(video_id), key=lambda t: t.polyp_id)
        gt_by_frame = bundle.gt_boxes_of(video_id)

        # Frame-level score summaries: best box score, and best score among
        # boxes that match any GT box on the frame.
        s_any = np.full(n_frames, -np.inf)
        s_match = np.full(n_frames, -np.inf)
        boxes_by_frame: dict[int, tuple[ScoredBox, ...]] = {}
        for frame_idx, boxes in bundle.detections_of(video_id):
            if not boxes or not inside[frame_idx]:
                continue
            boxes_by_frame[frame_idx] = boxes
            s_any[frame_idx] = max(b.score for b in boxes)
            gts = gt_by_frame.get(frame_idx, ())
            matched = [
                b.score
                for b in boxes
                if any(iou(b, g) >= self.mcfg.iou_threshold for g in gts)
            ]
            if matched:
                s_match[frame_idx] = max(matched)

        # Per polyp: visible frame indices and the best matching-box score.
        polyp_frames: list[np.ndarray] = []
        polyp_scores: list[np.ndarray] = []
        for track in tracks:
            idxs, scores = [], []
            for frame_idx, gt in track.visible_frames:
                best = -np.inf
                for box in boxes_by_frame.get(frame_idx, ()):
                    if iou(box, gt) >= self.mcfg.iou_threshold:
                        best = max(best, box.score)
                idxs.append(frame_idx)
                scores.append(best)
            polyp_frames.append(np.asarray(idxs, dtype=np.intp))
            polyp_scores.append(np.asarray(scores))

        n_configs = len(self.configs)
        detected = np.zeros((n_configs, len(tracks)), dtype=bool)
        fa = np.zeros(n_configs, dtype=np.int64)

        thresholds = np.array([c.score_threshold for c in self.configs])
        uniq_t, t_index = np.unique(thresholds, return_inverse=True)
        pos = s_any[None, :] >= uniq_t[:, None]          # (T, F)
        match_pos = s_match[None, :] >= uniq_t[:, None]  # (T, F)

        for window in sorted({c.window for c in self.configs}):
            rows = [i for i, c in enumerate(self.configs) if c.window == window]
            counts = _window_counts(pos, window)         # (T, F)
            ti = t_index[rows]
            votes = np.array([self.configs[i].votes for i in rows])
            passed = counts[ti] >= votes[:, None]        # (R, F)
            fp = passed & pos[ti] & ~match_pos[ti]
            fa[rows] = fp[:, 0] + (fp[:, 1:] & ~fp[:, :-1]).sum(axis=1)
            for p, (idxs, scores) in enumerate(zip(polyp_frames, polyp_scores)):
                hit = (scores[None, :] >= uniq_t[ti][:, None]) & passed[:, idxs]
                detected[rows, p] = hit.any(axis=1)

        return _VideoCache(
            polyp_ids=[t.polyp_id for t in tracks],
            detected=detected,
            fa_events=fa,
            minutes=video.duration_minutes,
        )

    def stat_matrices(
        self, polyp_filter: Optional[frozenset[str]] = None
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(detected, fa_events, polyp_counts) as (configs x videos) matrices.

        polyp_filter restricts the TPR numerator/denominator to the named
        polyps; false-alarm counts always cover all alarms of the video.
        """
        n_configs = len(self.configs)
        n_videos = len(self.video_ids)
        det = np.zeros((n_configs, n_videos))
        fa = np.zeros((n_configs, n_videos))
        polyps = np.zeros(n_videos)
        for v, cache in enumerate(self._caches):
            fa[:, v] = cache.fa_events
            if polyp_filter is None:
                det[:, v] = cache.detected.sum(axis=1)
                polyps[v] = len(cache.polyp_ids)
            else:
                mask = np.fromiter(
                    (pid in polyp_filter for pid in cache.polyp_ids),
                    dtype=bool,
                    count=len(cache.polyp_ids),
                )
                det[:, v] = cache.detected[:, mask].sum(axis=1)
                polyps[v] = int(mask.sum())
        return det, fa, polyps

    def totals(
        self,
        multiplicity: np.ndarray,
        polyp_filter: Optional[frozenset[str]] = None,
    ) -> Optional[tuple[np.ndarray, np.ndarray]]:
        """(tpr, fapm) arrays over all configs for a video multiset.

        multiplicity[v] is how many times video v was drawn. Returns None
        when the draw contains no (eligible) polyps or no duration.
        """
        det, fa, polyps = self.stat_matrices(polyp_filter)
        return _ratio_totals(det, fa, polyps, self.minutes, multiplicity)

    def unit_multiplicity(self, indices: Optional[np.ndarray] = None) -> np.ndarray:
        """Multiplicity vector for a draw of video indices (None: each once)."""
        if indices is None:
            return np.ones(len(self.video_ids), dtype=np.int64)
        return np.bincount(indices, minlength=len(self.video_ids))


def _ratio_totals(
    det: np.ndarray,
    fa: np.ndarray,
    polyps: np.ndarray,
    minutes: np.ndarray,
    multiplicity: np.ndarray,
) -> Optional[tuple[np.ndarray, np.ndarray]]:
    total_minutes = float(minutes @ multiplicity)
    total_polyps = float(polyps @ multiplicity)
    if total_minutes <= 0.0 or total_polyps == 0.0:
        return None
    return (det @ multiplicity) / total_polyps, (fa @ multiplicity) / total_minutes


# --- curves -------------------------------------------------------------------

def _envelope(fapm: np.ndarray, tpr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pareto upper envelope: drop points dominated at smaller-or-equal fapm."""
    order = np.lexsort((-tpr, fapm))
    f, t = fapm[order], tpr[order]
    prev_best = np.concatenate(([-np.inf], np.maximum.accumulate(t)[:-1]))
    keep = t > prev_best
    return f[keep], t[keep]


def curve_from_totals(tpr: np.ndarray, fapm: np.ndarray) -> Curve:
    """Reduce raw per-config (fapm, tpr) points to their Pareto envelope."""
    f, t = _envelope(np.asarray(fapm, float), np.asarray(tpr, float))
    return Curve(points=tuple(CurvePoint(float(a), float(b)) for a, b in zip(f, t)))


def build_curve(
    bundle: DatasetBundle,
    video_ids: Optional[Sequence[str]] = None,
    sweep: Optional[Sequence[FilterConfig]] = None,
    mcfg: MatchConfig = MatchConfig(),
    polyp_filter: Optional[frozenset[str]] = None,
) -> Curve:
    """Evaluate the sweep on the given videos and keep the Pareto envelope."""
    evaluator = SweepEvaluator(bundle, sweep or default_sweep(), mcfg, video_ids)
    totals = evaluator.totals(evaluator.unit_multiplicity(), polyp_filter)
    if totals is None:
        raise NotEstimableError("no polyps in the selected videos")
    tpr, fapm = totals
    return curve_from_totals(tpr, fapm)


def tpr_at_fapm(curve: Curve, target_fapm: float) -> TprAtFapm:
    """Linear interpolation on the envelope, clamped at the ends."""
    if not curve.points:
        raise EmptyCurveError("cannot interpolate an empty curve")
    f = np.array([p.fapm for p in curve.points])
    t = np.array([p.tpr for p in curve.points])
    clamped = bool(target_fapm < f[0] or target_fapm > f[-1])
    return TprAtFapm(float(np.interp(target_fapm, f, t)), clamped)


def dataset_tpr_fapm(
    bundle: DatasetBundle,
    video_ids: Sequence[str],
    fcfg: FilterConfig,
    mcfg: MatchConfig = MatchConfig(),
) -> tuple[float, float]:
    """Polyp-level TPR and false alarms per minute for one filter config.

    video_ids is a multiset: a video drawn twice counts twice in both the
    polyp and the duration sums.
    """
    if not video_ids:
        raise NotEstimableError("empty video subset")
    unique = sorted(set(video_ids))
    evaluator = SweepEvaluator(bundle, [fcfg], mcfg, unique)
    mult = np.zeros(len(unique), dtype=np.int64)
    for vid in video_ids:
        mult[unique.index(vid)] += 1
    total_minutes = float(evaluator.minutes @ mult)
    if total_minutes <= 0.0:
        raise ZeroDurationError("selected videos have zero total duration")
    totals = evaluator.totals(mult)
    if totals is None:
        raise NotEstimableError("zero polyps in the selected videos")
    tpr, fapm = totals
    return float(tpr[0]), float(fapm[0])


# --- dataset comparison --------------------------------------------------------

def _interp_clamped(fapm: np.ndarray, tpr: np.ndarray, targets: Sequence[float]) -> np.ndarray:
    f, t = _envelope(fapm, tpr)
    return np.interp(np.asarray(targets, dtype=float), f, t)


def bootstrap_curve_tprs(
    evaluator: SweepEvaluator,
    fapm_points: Sequence[float],
    cfg: BootstrapConfig,
    polyp_filter: Optional[frozenset[str]] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-resample interpolated TPRs at the operating points.

    Returns (tprs, valid): tprs has shape (n_resamples, n_points) with NaN
    rows for non-estimable resamples, valid is the boolean row mask.
    """
    n_videos = len(evaluator.video_ids)
    det, fa, polyps = evaluator.stat_matrices(polyp_filter)
    out = np.full((cfg.n_resamples, len(fapm_points)), np.nan)
    valid = np.zeros(cfg.n_resamples, dtype=bool)
    for i in range(cfg.n_resamples):
        mult = evaluator.unit_multiplicity(resample_units(n_videos, cfg, i))
        totals = _ratio_totals(det, fa, polyps, evaluator.minutes, mult)
        if totals is None:
            continue
        tpr, fapm = totals
        out[i] = _interp_clamped(fapm, tpr, fapm_points)
        valid[i] = True
    return out, valid


def compare_datasets(
    bundle_a: DatasetBundle,
    bundle_b: DatasetBundle,
    fapm_points: Sequence[float] = (0.5, 1.0),
    cfg: BootstrapConfig = BootstrapConfig(),
    mode: CompareMode = CompareMode.NON_INFERIORITY,
    margin: float = 0.015,
    sweep: Optional[Sequence[FilterConfig]] = None,
    mcfg: MatchConfig = MatchConfig(),
) -> list[TestResult]:
    """Bootstrap test of B's TPR against A's at each FAPM operating point.

    Per resample both curves are rebuilt on resampled videos and the delta
    tpr_b - tpr_a is interpolated at each point. Both sides consume the
    same resample stream, so comparing a bundle against itself yields a
    delta of exactly zero.
    """
    sweep = list(sweep) if sweep is not None else default_sweep()
    eval_a = SweepEvaluator(bundle_a, sweep, mcfg)
    eval_b = SweepEvaluator(bundle_b, sweep, mcfg)
    deltas, _ = bootstrap_tpr_deltas(eval_a, eval_b, fapm_points, cfg)
    results = []
    for k in range(len(fapm_points)):
        if mode is CompareMode.SUPERIORITY:
            results.append(superiority_one_sided(deltas[k]))
        else:
            results.append(non_inferiority(deltas[k], margin=margin))
    return results


def bootstrap_tpr_deltas(
    eval_a: SweepEvaluator,
    eval_b: SweepEvaluator,
    fapm_points: Sequence[float],
    cfg: BootstrapConfig,
    polyp_filter_a: Optional[frozenset[str]] = None,
    polyp_filter_b: Optional[frozenset[str]] = None,
) -> tuple[list[np.ndarray], int]:
    """Per-point delta (B minus A) distributions over joint valid resamples."""
    tpr_a, valid_a = bootstrap_curve_tprs(eval_a, fapm_points, cfg, polyp_filter_a)
    tpr_b, valid_b = bootstrap_curve_tprs(eval_b, fapm_points, cfg, polyp_filter_b)
    valid = valid_a & valid_b
    n_dropped = int(cfg.n_resamples - valid.sum())
    if n_dropped > cfg.n_resamples // 2:
        raise TooFewValidResamplesError(
            f"{n_dropped} of {cfg.n_resamples} resamples were not estimable"
        )
    delta = tpr_b[valid] - tpr_a[valid]
    return [delta[:, k] for k in range(len(fapm_points))], n_dropped
