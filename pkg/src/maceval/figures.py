"""Matplotlib figure rendering for the CLI report path.

Figures land next to the delimited output. SVG is the default because it
can be made byte-deterministic (fixed hash salt, no date metadata); PNG is
available behind a flag when rasters are wanted.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .deteval import Curve  # noqa: E402
from .modality import ModalityHistogram  # noqa: E402
from .project import Projection2D  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "maceval"

_COLORS = plt.rcParams["axes.prop_cycle"].by_key()["color"]


def save_figure(fig, path: Union[str, Path]) -> None:
    path = Path(path)
    metadata = {"Date": None} if path.suffix == ".svg" else None
    fig.savefig(path, metadata=metadata, bbox_inches="tight")
    plt.close(fig)


def curve_figure(curves: Mapping[str, Curve], path: Union[str, Path],
                 fapm_points: Sequence[float] = ()) -> None:
    """TPR vs FAPM envelopes, one line per dataset label."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for i, (label, curve) in enumerate(sorted(curves.items())):
        f = [p.fapm for p in curve.points]
        t = [p.tpr for p in curve.points]
        ax.plot(f, t, marker="o", markersize=3, linewidth=1.2,
                color=_COLORS[i % len(_COLORS)], label=label)
    for x in fapm_points:
        ax.axvline(x, color="gray", linestyle=":", linewidth=0.8)
    ax.set_xlabel("False alarms per minute")
    ax.set_ylabel("True positive rate")
    ax.set_ylim(0.0, 1.02)
    ax.legend(loc="lower right", fontsize=8)
    ax.grid(alpha=0.3)
    save_figure(fig, path)


def histogram_figure(hist: ModalityHistogram, path: Union[str, Path],
                     title: str = "") -> None:
    """Stacked per-bin video counts, split by polyp presence."""
    fig, ax = plt.subplots(figsize=(6, 4))
    edges = hist.bin_edges
    lefts = edges[:-1]
    widths = [b - a for a, b in zip(edges[:-1], edges[1:])]
    ax.bar(lefts, hist.with_polyp, width=widths, align="edge",
           color=_COLORS[0], label="videos with polyps")
    ax.bar(lefts, hist.without_polyp, width=widths, align="edge",
           bottom=hist.with_polyp, color=_COLORS[1], label="videos without polyps")
    ax.set_xlabel("Fraction of inside-body frames flagged")
    ax.set_ylabel("Videos")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    save_figure(fig, path)


def scatter_figure(projection: Projection2D, path: Union[str, Path]) -> None:
    """2-D projection scatter, one color per label group."""
    fig, ax = plt.subplots(figsize=(5.5, 5))
    pts = projection.points
    labels = projection.labels or ("",) * pts.shape[0]
    for i, group in enumerate(sorted(set(labels))):
        mask = [lab == group for lab in labels]
        ax.scatter(pts[mask, 0], pts[mask, 1], s=6,
                   color=_COLORS[i % len(_COLORS)], label=group or None, alpha=0.7)
    ax.set_xlabel("dim 1")
    ax.set_ylabel("dim 2")
    if any(labels):
        ax.legend(fontsize=8, markerscale=2)
    save_figure(fig, path)


def cohort_figure(rows: Sequence[dict], path: Union[str, Path], modality: str) -> None:
    """Cohort TPR (with CI bars) against the visibility-fraction threshold."""
    fig, ax = plt.subplots(figsize=(6, 4))
    thresholds = [r["threshold"] for r in rows]
    tprs = [r["tpr"] for r in rows]
    lo = [r["tpr"] - r["ci"][0] for r in rows]
    hi = [r["ci"][1] - r["tpr"] for r in rows]
    ax.errorbar(thresholds, tprs, yerr=[lo, hi], fmt="o-", capsize=3,
                color=_COLORS[0], label=f"{modality} cohort")
    ref = [r["reference_tpr"] for r in rows]
    ax.plot(thresholds, ref, "s--", color=_COLORS[1], label="all polyps")
    ax.set_xlabel(f"Minimum fraction of time visible in {modality}")
    ax.set_ylabel("TPR at operating point")
    ax.set_ylim(0.0, 1.02)
    ax.legend(fontsize=8, loc="lower left")
    ax.grid(alpha=0.3)
    save_figure(fig, path)
