"""MACE distance: squared Fréchet distance between Gaussian fits of two
embedding collections.

For Gaussians (mu_a, S_a) and (mu_b, S_b) the score is

    ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a^{1/2} S_b S_a^{1/2})^{1/2})

computed with the symmetrized product form so every matrix square root acts
on a symmetric PSD matrix. The score is zero iff the moment pairs coincide,
and for diagonal covariances it collapses to the closed form
sum_i (dmu_i)^2 + sum_i (sqrt(sa_i) - sqrt(sb_i))^2 used by the test oracles.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatchError,
    EigenFailureError,
    NonFiniteInputError,
    NotSymmetricError,
    TooFewSamplesError,
    UndersampledWarning,
)
from .ingest.types import EmbeddingSet

# Relative ridge added to fitted covariances; keeps rank-deficient fits
# (n < d happens on small bootstrap cohorts) positive definite.
COV_EPSILON_SCALE = 1e-6
# Eigenvalues below -NEG_EIGENVALUE_TOL * trace/d are a failure, not noise.
NEG_EIGENVALUE_TOL = 1e-10
SYMMETRY_RTOL = 1e-9


@dataclass(frozen=True)
class GaussianMoments:
    mean: np.ndarray  # (d,)
    cov: np.ndarray   # (d, d), symmetric PSD after regularization
    n: int

    @property
    def d(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class MaceScore:
    value: float
    d: int
    n_a: int
    n_b: int


def fit_gaussian(embeddings: EmbeddingSet, warn_undersampled: bool = True) -> GaussianMoments:
    """Fit mean and regularized unbiased covariance to an embedding set.

    cov = (n-1)-normalized sample covariance, symmetrized as (C + C^T)/2,
    plus eps*I with eps = 1e-6 * max(trace(C)/d, 1e-30).
    """
    x = np.asarray(embeddings.matrix, dtype=np.float64)
    n, d = x.shape
    if n < 2:
        raise TooFewSamplesError(f"need at least 2 samples to fit moments, got {n}")
    if not np.isfinite(x).all():
        raise NonFiniteInputError("embedding matrix contains non-finite values")
    if n < d and warn_undersampled:
        warnings.warn(
            f"fitting {d}-dimensional moments from {n} samples; covariance is rank-deficient",
            UndersampledWarning,
            stacklevel=2,
        )
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (n - 1)
    cov = 0.5 * (cov + cov.T)
    eps = COV_EPSILON_SCALE * max(float(np.trace(cov)) / d, 1e-30)
    cov = cov + eps * np.eye(d)
    return GaussianMoments(mean=mean, cov=cov, n=n)


def matrix_sqrt_psd(matrix: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    Small negative eigenvalues (rounding residue, down to
    -1e-10 * trace/d) are clamped to zero; anything more negative raises
    EigenFailureError instead of being silently absorbed.
    """
    s = np.asarray(matrix, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise NotSymmetricError(f"expected a square matrix, got shape {s.shape}")
    scale = float(np.abs(s).max()) if s.size else 0.0
    if scale > 0 and float(np.abs(s - s.T).max()) > SYMMETRY_RTOL * scale:
        raise NotSymmetricError("matrix is not symmetric within 1e-9 relative")
    s = 0.5 * (s + s.T)
    try:
        eigvals, eigvecs = np.linalg.eigh(s)
    except np.linalg.LinAlgError as exc:
        raise EigenFailureError(f"eigendecomposition failed: {exc}") from exc
    d = s.shape[0]
    floor = -NEG_EIGENVALUE_TOL * max(float(np.trace(s)), 0.0) / d
    if eigvals.min(initial=0.0) < floor:
        raise EigenFailureError(
            f"eigenvalue {eigvals.min():.3e} below clamp threshold {floor:.3e}; "
            "input is not numerically PSD"
        )
    root = eigvecs * np.sqrt(np.clip(eigvals, 0.0, None)) @ eigvecs.T
    return 0.5 * (root + root.T)


def frechet_distance(a: GaussianMoments, b: GaussianMoments) -> MaceScore:
    """Squared Fréchet distance between two Gaussian moment pairs."""
    if a.d != b.d:
        raise DimensionMismatchError(f"dimension mismatch: {a.d} vs {b.d}")
    mean_term = float(np.sum((a.mean - b.mean) ** 2))
    sqrt_a = matrix_sqrt_psd(a.cov)
    inner = sqrt_a @ b.cov @ sqrt_a
    cross = matrix_sqrt_psd(0.5 * (inner + inner.T))
    trace_term = float(np.trace(a.cov) + np.trace(b.cov) - 2.0 * np.trace(cross))
    value = mean_term + trace_term
    # Tiny negative residue from the trace subtraction rounds up to zero.
    if value < 0:
        value = 0.0
    return MaceScore(value=value, d=a.d, n_a=a.n, n_b=b.n)


def mace_between(
    set_a: EmbeddingSet, set_b: EmbeddingSet, warn_undersampled: bool = True
) -> MaceScore:
    """MACE distance between two embedding sets (ROI cropping is upstream)."""
    if set_a.d != set_b.d:
        raise DimensionMismatchError(f"dimension mismatch: {set_a.d} vs {set_b.d}")
    moments_a = fit_gaussian(set_a, warn_undersampled=warn_undersampled)
    moments_b = fit_gaussian(set_b, warn_undersampled=warn_undersampled)
    return frechet_distance(moments_a, moments_b)


def diagonal_frechet(
    mean_a: np.ndarray, var_a: np.ndarray, mean_b: np.ndarray, var_b: np.ndarray
) -> float:
    """Closed form for commuting (diagonal) covariances.

    Independent of the matrix-square-root path on purpose: scenario specs use
    it as the ground-truth oracle for sampled MACE values.
    """
    mean_a, var_a = np.asarray(mean_a, float), np.asarray(var_a, float)
    mean_b, var_b = np.asarray(mean_b, float), np.asarray(var_b, float)
    if mean_a.shape != mean_b.shape or var_a.shape != var_b.shape:
        raise DimensionMismatchError("mean/variance shapes disagree")
    return float(np.sum((mean_a - mean_b) ** 2) + np.sum((np.sqrt(var_a) - np.sqrt(var_b)) ** 2))
