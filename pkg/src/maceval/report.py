"""Deterministic report emission.

Every report embeds the tool version, the full run configuration, and
sha256 digests of the inputs it was computed from, so identical inputs and
flags always produce byte-identical files. No timestamps anywhere.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

from . import __version__

TOOL_NAME = "maceval"


@dataclass(frozen=True)
class RunConfig:
    """Global knobs echoed verbatim into every report."""

    seed: int = 17
    resamples: int = 1000
    margin: float = 0.015
    fapm_points: tuple[float, ...] = (0.5, 1.0)
    window: int = 7
    iou: float = 0.2
    ce_rule: Optional[str] = None
    strict: bool = False
    figures: bool = False
    fig_format: str = "svg"

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "resamples": self.resamples,
            "margin": self.margin,
            "fapm_points": list(self.fapm_points),
            "window": self.window,
            "iou": self.iou,
            "ce_rule": self.ce_rule,
            "strict": self.strict,
            "figures": self.figures,
            "fig_format": self.fig_format,
        }


def sha256_file(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def input_digests(paths: Sequence[Union[str, Path]]) -> dict[str, str]:
    """sha256 per input; directories digest their sorted member files."""
    out: dict[str, str] = {}
    for path in paths:
        p = Path(path)
        if p.is_dir():
            inner = hashlib.sha256()
            for member in sorted(p.rglob("*")):
                if member.is_file():
                    inner.update(member.relative_to(p).as_posix().encode())
                    inner.update(bytes.fromhex(sha256_file(member)))
            out[str(path)] = inner.hexdigest()
        else:
            out[str(path)] = sha256_file(p)
    return out


def provenance(config: RunConfig, inputs: Sequence[Union[str, Path]]) -> dict:
    return {
        "tool": TOOL_NAME,
        "version": __version__,
        "config": config.to_dict(),
        "inputs": input_digests(inputs),
    }


def write_json_report(path: Union[str, Path], payload: Mapping) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def write_csv_report(
    path: Union[str, Path],
    header: Sequence[str],
    rows: Sequence[Sequence],
    preamble: Optional[Mapping[str, str]] = None,
) -> None:
    """CSV with optional '# key: value' provenance comment lines on top."""
    buf = io.StringIO()
    if preamble:
        for key in sorted(preamble):
            buf.write(f"# {key}: {preamble[key]}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_format_cell(cell) for cell in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def _format_cell(cell) -> str:
    if isinstance(cell, float):
        return format(cell, ".10g")
    return str(cell)
