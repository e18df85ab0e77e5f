"""Binary PPM (P6) reader for raw frame pixels.

Only maxval 255 is supported; comments ('#' to end of line) are legal
anywhere in the header whitespace. Pixels come back as an (h, w, 3) uint8
array in row-major order.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from ..errors import BadHeaderError, TruncatedPixelsError, UnsupportedMaxvalError


@dataclass(frozen=True)
class Frame:
    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3) uint8


def parse_ppm(data: Union[bytes, str, Path]) -> Frame:
    """Parse binary PPM bytes (or a file path) into a Frame."""
    if not isinstance(data, bytes):
        data = Path(data).read_bytes()

    if data[:2] != b"P6":
        raise BadHeaderError(f"not a binary PPM (magic {data[:2]!r})")
    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        pos = _skip_whitespace(data, pos)
        if pos >= len(data):
            raise BadHeaderError("header ended before width/height/maxval")
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        token = data[start:pos]
        if not token.isdigit():
            raise BadHeaderError(f"expected integer header field, got {token!r}")
        fields.append(int(token))
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise BadHeaderError(f"invalid dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedMaxvalError(f"maxval {maxval}, only 255 supported")
    # Exactly one whitespace byte separates maxval from pixel data.
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise BadHeaderError("missing separator after maxval")
    pos += 1

    expected = width * height * 3
    pixels = data[pos : pos + expected]
    if len(pixels) < expected:
        raise TruncatedPixelsError(f"have {len(pixels)} pixel bytes, need {expected}")
    array = np.frombuffer(pixels, dtype=np.uint8).reshape(height, width, 3)
    return Frame(width=width, height=height, pixels=array)


def write_ppm(frame: Frame, path: Union[str, Path, None] = None) -> bytes:
    pixels = np.ascontiguousarray(frame.pixels, dtype=np.uint8)
    if pixels.shape != (frame.height, frame.width, 3):
        raise ValueError(f"pixel array shape {pixels.shape} disagrees with frame dimensions")
    blob = f"P6\n{frame.width} {frame.height}\n255\n".encode("ascii") + pixels.tobytes()
    if path is not None:
        Path(path).write_bytes(blob)
    return blob


def _skip_whitespace(data: bytes, pos: int) -> int:
    """Advance past whitespace and '#' comments."""
    while pos < len(data):
        byte = data[pos : pos + 1]
        if byte == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
        elif byte.isspace():
            pos += 1
        else:
            break
    return pos
