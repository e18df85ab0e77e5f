"""Exception hierarchy shared across the package.

Three families matter for the CLI exit-code contract: data/format errors
(exit 2), I/O errors (plain OSError, exit 3), and statistical
non-estimability (exit 4). Everything else is a bug.
"""

from __future__ import annotations


class MacevalError(Exception):
    """Base class for all errors raised by this package."""


class DataFormatError(MacevalError):
    """A parsed artifact violates its format or cross-reference contract."""


# --- embedding binary ------------------------------------------------------

class BadMagicError(DataFormatError):
    """File does not start with the 'MACE' magic bytes."""


class VersionUnsupportedError(DataFormatError):
    """Header declares a version (or reserved field) we do not understand."""


class TruncatedPayloadError(DataFormatError):
    """Payload length disagrees with the n*d*4 bytes the header promises."""


class NonFiniteValueError(DataFormatError):
    """An embedding entry is NaN or infinite."""


class InvalidDimensionError(DataFormatError):
    """Header declares a zero embedding dimension."""


# --- JSONL streams ---------------------------------------------------------

class MalformedLineError(DataFormatError):
    """A JSONL line is not valid JSON or fails schema checks."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class DuplicateKeyError(DataFormatError):
    """Two records in one stream share a (video_id, frame_idx) key."""


class UnknownFieldError(DataFormatError):
    """Strict mode: a record carries a field the schema does not define."""


class RangeError(DataFormatError):
    """A numeric field is outside its allowed range (score, coordinates)."""


class CrossVideoPolypError(DataFormatError):
    """One polyp_id appears in ground truth of two different videos."""


# --- PPM frames ------------------------------------------------------------

class BadHeaderError(DataFormatError):
    """PPM header is not a well-formed binary 'P6' header."""


class UnsupportedMaxvalError(DataFormatError):
    """PPM maxval is not 255."""


class TruncatedPixelsError(DataFormatError):
    """PPM pixel payload is shorter than width*height*3 bytes."""


# --- bundle cross-validation -----------------------------------------------

class DanglingVideoRefError(DataFormatError):
    """A record references a video_id absent from the video stream."""


class DanglingPolypRefError(DataFormatError):
    """A frame meta lists a polyp_id absent from the annotations."""


class FrameOutOfRangeError(DataFormatError):
    """A record's frame_idx is >= n_frames of the owning video."""


class EmbeddingKeyMismatchError(DataFormatError):
    """An embedding row's frame key has no matching frame meta."""


# --- numerics --------------------------------------------------------------

class TooFewSamplesError(MacevalError):
    """Fewer samples than the operation's minimum."""


class NonFiniteInputError(MacevalError):
    """A computation input contains NaN or infinity."""


class NotSymmetricError(MacevalError):
    """Matrix is not symmetric within tolerance."""


class EigenFailureError(MacevalError):
    """Eigendecomposition failed or found eigenvalues too negative to clamp."""


class DimensionMismatchError(MacevalError):
    """Operands have incompatible dimensions."""


# --- statistics ------------------------------------------------------------

class EmptySamplesError(MacevalError):
    """A sample vector required to be nonempty is empty."""


class NotEstimableError(MacevalError):
    """The requested statistic is undefined on this data (exit code 4)."""


class TooFewValidResamplesError(NotEstimableError):
    """More than half the bootstrap resamples were not estimable."""


class ZeroDurationError(MacevalError):
    """Total video duration is zero; FAPM denominators are undefined."""


class EmptyCurveError(MacevalError):
    """Cannot interpolate on a curve with no points."""


# --- modality / projection -------------------------------------------------

class EmptyROIError(MacevalError):
    """The configured ROI rectangle contains no pixels."""


class DegenerateRowError(MacevalError):
    """All pairwise distances in a row are zero; bandwidth is undefined."""


class PerplexityTooLargeError(MacevalError):
    """Perplexity is too large for the number of samples."""


class UndersampledWarning(UserWarning):
    """Moment fit with fewer samples than dimensions; covariance is rank-deficient."""
