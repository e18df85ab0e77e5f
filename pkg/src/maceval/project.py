"""2-D projections of embedding sets for figure emission.

pca_2d is the deterministic baseline and also initializes the exact
(O(n^2)) t-SNE. The t-SNE path deliberately avoids BLAS-backed reductions
(matmul, eigh) in favor of chunked elementwise sums: numpy's pairwise
summation has a fixed order, so the output is byte-identical no matter how
many threads the linear-algebra backend was given. That costs speed at the
top of the exact regime (n up to 5000) and buys reproducibility.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Optional, Sequence

import numpy as np

from .errors import DegenerateRowError, PerplexityTooLargeError, TooFewSamplesError
from .ingest.types import EmbeddingSet

_TINY = 1e-12


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    iterations: int = 1000
    learning_rate: float = 200.0
    momentum_start: float = 0.5
    momentum_final: float = 0.8
    momentum_switch_iter: int = 250
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    seed: int = 0
    jitter: float = 0.0  # optional init noise in units of the 1e-4 init scale
    max_exact_n: int = 5000

    def __post_init__(self):
        if not self.perplexity > 1.0:
            raise ValueError(f"perplexity must be > 1, got {self.perplexity}")
        if self.iterations < 1 or self.learning_rate <= 0:
            raise ValueError("iterations must be >= 1 and learning_rate > 0")


@dataclass(frozen=True)
class Projection2D:
    points: np.ndarray  # (n, 2)
    labels: Optional[tuple[str, ...]] = None
    diagnostics: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"projection must be (n, 2), got {pts.shape}")
        if not np.isfinite(pts).all():
            raise ValueError("projection contains non-finite coordinates")
        object.__setattr__(self, "points", pts)
        if self.labels is not None and len(self.labels) != pts.shape[0]:
            raise ValueError(f"{len(self.labels)} labels for {pts.shape[0]} points")


class SigmaSearch(NamedTuple):
    sigma: float
    achieved: bool


def pca_2d(embeddings: EmbeddingSet, labels: Optional[Sequence[str]] = None) -> Projection2D:
    """Project onto the top-2 principal axes.

    Sign convention: the first nonzero loading of each component is
    positive, so the output is unique, not just unique up to reflection.
    """
    x = np.asarray(embeddings.matrix, dtype=np.float64)
    n, d = x.shape
    if n < 3:
        raise TooFewSamplesError(f"PCA needs at least 3 samples, got {n}")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    components = eigvecs[:, ::-1][:, :2]  # eigh sorts ascending
    if d == 1:
        components = np.hstack([components, np.zeros((1, 1))])
    for k in range(components.shape[1]):
        col = components[:, k]
        nonzero = np.flatnonzero(np.abs(col) > 1e-12)
        if nonzero.size and col[nonzero[0]] < 0:
            components[:, k] = -col
    return Projection2D(points=centered @ components, labels=_as_labels(labels))


def perplexity_calibration(
    sq_distances: Sequence[float], perplexity: float, n_iter: int = 50
) -> SigmaSearch:
    """Per-point Gaussian bandwidth matching the target perplexity.

    Bisects log(sigma) over [1e-20, 1e20] until the conditional
    distribution's entropy satisfies 2^H = perplexity within 1e-5. Returns
    the nearer bracket boundary with achieved=False when the target is out
    of reach (e.g. perplexity > number of neighbors).
    """
    d = np.asarray(sq_distances, dtype=np.float64)
    if d.size == 0:
        raise DegenerateRowError("no neighbor distances")
    if not (d > 0).any():
        raise DegenerateRowError("all neighbor distances are zero")

    def perp_at(log_sigma: float) -> float:
        return 2.0 ** _entropy_bits(d, np.exp(log_sigma))

    lo, hi = np.log(1e-20), np.log(1e20)
    if perp_at(hi) < perplexity - 1e-5:
        return SigmaSearch(sigma=float(np.exp(hi)), achieved=False)
    if perp_at(lo) > perplexity + 1e-5:
        return SigmaSearch(sigma=float(np.exp(lo)), achieved=False)
    mid = 0.5 * (lo + hi)
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        p = perp_at(mid)
        if abs(p - perplexity) <= 1e-5:
            break
        if p > perplexity:
            hi = mid
        else:
            lo = mid
    sigma = float(np.exp(mid))
    return SigmaSearch(sigma=sigma, achieved=abs(perp_at(mid) - perplexity) <= 1e-5)


def tsne_2d(embeddings: EmbeddingSet, cfg: TsneConfig = TsneConfig(),
            labels: Optional[Sequence[str]] = None) -> Projection2D:
    """Exact t-SNE to 2-D: calibrated Gaussian P, Student-t Q, momentum
    gradient descent with early exaggeration from a PCA initialization.

    Deterministic given the config; the seed only matters when jitter > 0.
    """
    x = np.asarray(embeddings.matrix, dtype=np.float64)
    n = x.shape[0]
    if n < 10:
        raise TooFewSamplesError(f"t-SNE needs at least 10 samples, got {n}")
    if n > cfg.max_exact_n:
        raise ValueError(f"exact t-SNE capped at {cfg.max_exact_n} samples, got {n}")
    if not cfg.perplexity < n / 3:
        raise PerplexityTooLargeError(
            f"perplexity {cfg.perplexity} requires more than {int(3 * cfg.perplexity)} samples"
        )

    p_joint = joint_probabilities(x, cfg.perplexity)
    y = _init_embedding(x, cfg)
    kl_initial = kl_divergence(p_joint, y)

    update = np.zeros_like(y)
    gains = np.ones_like(y)
    for it in range(cfg.iterations):
        exaggerate = it < cfg.exaggeration_iters
        p_eff = p_joint * cfg.early_exaggeration if exaggerate else p_joint
        grad = _tsne_gradient(p_eff, y)
        momentum = cfg.momentum_start if it < cfg.momentum_switch_iter else cfg.momentum_final
        same_sign = (grad > 0) == (update > 0)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        np.clip(gains, 0.01, None, out=gains)
        update = momentum * update - cfg.learning_rate * gains * grad
        y = y + update
        y = y - y.mean(axis=0)

    kl_final = kl_divergence(p_joint, y)
    return Projection2D(
        points=y,
        labels=_as_labels(labels),
        diagnostics={"kl_initial": kl_initial, "kl_final": kl_final},
    )


# --- internals ----------------------------------------------------------------

def _as_labels(labels: Optional[Sequence[str]]) -> Optional[tuple[str, ...]]:
    return tuple(labels) if labels is not None else None


def _entropy_bits(sq_d: np.ndarray, sigma: float) -> float:
    """Shannon entropy (bits) of the conditional neighbor distribution."""
    logits = -sq_d / (2.0 * sigma * sigma)
    logits = logits - logits.max()
    w = np.exp(logits)
    z = w.sum()
    p = w / z
    nz = p > 0
    return float(-(p[nz] * np.log2(p[nz])).sum())


def pairwise_sq_distances(x: np.ndarray, chunk: int = 128) -> np.ndarray:
    """Full n x n squared-distance matrix via chunked elementwise sums."""
    n = x.shape[0]
    out = np.empty((n, n))
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        diff = x[start:stop, None, :] - x[None, :, :]
        out[start:stop] = np.sum(diff * diff, axis=2)
    np.fill_diagonal(out, 0.0)
    return out


def joint_probabilities(x: np.ndarray, perplexity: float) -> np.ndarray:
    """Symmetrized t-SNE P matrix: nonnegative, zero diagonal, sums to 1."""
    n = x.shape[0]
    sq_d = pairwise_sq_distances(x)
    cond = np.zeros((n, n))
    mask = ~np.eye(n, dtype=bool)
    for i in range(n):
        row = sq_d[i][mask[i]]
        sigma = perplexity_calibration(row, perplexity).sigma
        logits = -row / (2.0 * sigma * sigma)
        logits -= logits.max()
        w = np.exp(logits)
        cond[i][mask[i]] = w / w.sum()
    p = (cond + cond.T) / (2.0 * n)
    return p / p.sum()


def _student_t_kernel(y: np.ndarray) -> np.ndarray:
    """(1 + ||yi - yj||^2)^-1 with zero diagonal."""
    num = 1.0 / (1.0 + pairwise_sq_distances(y))
    np.fill_diagonal(num, 0.0)
    return num


def kl_divergence(p: np.ndarray, y: np.ndarray) -> float:
    num = _student_t_kernel(y)
    q = num / num.sum()
    pm = np.maximum(p, _TINY)
    qm = np.maximum(q, _TINY)
    nz = p > 0
    return float((p[nz] * np.log(pm[nz] / qm[nz])).sum())


def _tsne_gradient(p: np.ndarray, y: np.ndarray, chunk: int = 256) -> np.ndarray:
    num = _student_t_kernel(y)
    q = num / num.sum()
    w = (p - q) * num
    n = y.shape[0]
    grad = np.empty_like(y)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        diff = y[start:stop, None, :] - y[None, :, :]
        grad[start:stop] = 4.0 * np.sum(w[start:stop, :, None] * diff, axis=1)
    return grad


def _top2_power_iteration(x: np.ndarray, n_iter: int = 200) -> np.ndarray:
    """Top-2 eigenvectors of the sample covariance without BLAS reductions."""
    n, d = x.shape
    cov = np.zeros((d, d))
    for start in range(0, n, max(1, 4096 // max(d, 1))):
        stop = min(start + max(1, 4096 // max(d, 1)), n)
        block = x[start:stop]
        cov += np.sum(block[:, :, None] * block[:, None, :], axis=0)
    cov /= max(n - 1, 1)

    def matvec(v: np.ndarray) -> np.ndarray:
        return np.sum(cov * v[None, :], axis=1)

    components = []
    for k in range(2):
        v = np.cos(np.arange(d) + k)  # fixed, seed-free start vector
        v /= np.sqrt(np.sum(v * v))
        for _ in range(n_iter):
            for u in components:
                v = v - np.sum(v * u) * u
            w = matvec(v)
            norm = np.sqrt(np.sum(w * w))
            if norm < _TINY:
                w = np.zeros(d)
                w[k % d] = 1.0
                norm = 1.0
            v = w / norm
        for u in components:
            v = v - np.sum(v * u) * u
        norm = np.sqrt(np.sum(v * v))
        v = v / norm if norm > _TINY else v
        components.append(v)
    return np.stack(components, axis=1)


def _init_embedding(x: np.ndarray, cfg: TsneConfig) -> np.ndarray:
    centered = x - x.mean(axis=0)
    components = _top2_power_iteration(centered)
    y = np.sum(centered[:, :, None] * components[None, :, :], axis=1)
    scale = y[:, 0].std()
    if scale > 0:
        y = y / scale * 1e-4
    if cfg.jitter > 0:
        rng = np.random.Generator(np.random.PCG64(cfg.seed))
        y = y + rng.normal(scale=cfg.jitter * 1e-4, size=y.shape)
    return y
