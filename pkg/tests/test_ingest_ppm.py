from __future__ import annotations

import numpy as np
import pytest

from maceval.errors import BadHeaderError, TruncatedPixelsError, UnsupportedMaxvalError
from maceval.ingest import Frame, parse_ppm, write_ppm


def test_minimal_2x1():
    frame = parse_ppm(b"P6 2 1 255\n" + bytes([255, 0, 0, 0, 255, 0]))
    assert (frame.width, frame.height) == (2, 1)
    np.testing.assert_array_equal(frame.pixels[0, 0], [255, 0, 0])
    np.testing.assert_array_equal(frame.pixels[0, 1], [0, 255, 0])


def test_maxval_65535_rejected():
    with pytest.raises(UnsupportedMaxvalError):
        parse_ppm(b"P6 2 1 65535\n" + bytes(12))


def test_comments_skipped():
    # Format oracle: '#' starts a comment that runs to end of line and is
    # legal anywhere in the header whitespace.
    data = b"P6\n# written by a scope\n2 # width\n1\n# maxval next\n255\n" + bytes(6)
    frame = parse_ppm(data)
    assert (frame.width, frame.height) == (2, 1)


def test_truncated_pixels():
    with pytest.raises(TruncatedPixelsError):
        parse_ppm(b"P6 2 2 255\n" + bytes(11))


def test_wrong_magic():
    with pytest.raises(BadHeaderError):
        parse_ppm(b"P5 2 1 255\n" + bytes(6))


def test_garbage_header_field():
    with pytest.raises(BadHeaderError):
        parse_ppm(b"P6 two 1 255\n" + bytes(6))


def test_write_parse_round_trip(rng):
    pixels = rng.integers(0, 256, size=(3, 4, 3), dtype=np.uint8)
    blob = write_ppm(Frame(width=4, height=3, pixels=pixels))
    frame = parse_ppm(blob)
    np.testing.assert_array_equal(frame.pixels, pixels)
