"""Deterministic bootstrap engine and hypothesis tests.

Resample streams are derived from (seed, resample_idx) through a 64-bit
mixing function, so resample i is the same multiset no matter the call
order or thread count. Test statistics follow the bootstrap convention:
mean of the bootstrap distribution over its standard deviation, with
decisions taken from percentile bounds and the normal-tail p-value kept
as an advisory, floored at 1e-8 for reporting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from statistics import NormalDist
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import EmptySamplesError, TooFewValidResamplesError

P_FLOOR = 1e-8

# Sentinel a stat_fn returns when a resample carries no usable data
# (e.g. zero eligible polyps); such resamples are dropped and counted.
NOT_ESTIMABLE = None


class Unit(Enum):
    VIDEO = "video"
    GROUP = "group"


class Decision(Enum):
    REJECT = "reject"
    FAIL_TO_REJECT = "fail_to_reject"


@dataclass(frozen=True)
class BootstrapConfig:
    n_resamples: int = 1000
    seed: int = 17
    unit: Unit = Unit.VIDEO

    def __post_init__(self):
        if self.n_resamples < 2:
            raise ValueError(f"n_resamples must be >= 2, got {self.n_resamples}")


@dataclass(frozen=True)
class BootstrapDistribution:
    values: np.ndarray
    n_dropped: int
    n_resamples: int


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float          # numeric, already floored at P_FLOOR
    p_floored: bool         # True -> report as "<1e-8"
    ci: tuple[float, float]
    decision: Decision
    margin: Optional[float] = None
    level: float = 0.95

    @property
    def p_display(self) -> str:
        return "<1e-8" if self.p_floored else format(self.p_value, ".6g")

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "p_display": self.p_display,
            "ci": [self.ci[0], self.ci[1]],
            "decision": self.decision.value,
            "margin": self.margin,
            "level": self.level,
        }


# --- resampling -------------------------------------------------------------

_MASK64 = (1 << 64) - 1


def _mix64(x: int) -> int:
    """splitmix64 finalizer; decorrelates consecutive counters."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def stream_key(seed: int, *indices: int) -> int:
    """Derive an independent 64-bit stream key from a seed and counters."""
    key = seed & _MASK64
    for idx in indices:
        key = _mix64(key ^ _mix64(idx & _MASK64))
    return key


def resample_units(n_units: int, cfg: BootstrapConfig, resample_idx: int) -> np.ndarray:
    """Multiset of n_units indices drawn uniformly with replacement.

    Pure function of (cfg.seed, resample_idx); independent of call order.
    """
    if n_units < 1:
        raise EmptySamplesError("cannot resample from zero units")
    if not (0 <= resample_idx < cfg.n_resamples):
        raise ValueError(f"resample_idx {resample_idx} outside [0, {cfg.n_resamples})")
    rng = np.random.Generator(np.random.PCG64(stream_key(cfg.seed, resample_idx)))
    return rng.integers(0, n_units, size=n_units)


def bootstrap_distribution(
    stat_fn: Callable[[np.ndarray], Optional[float]],
    n_units: int,
    cfg: BootstrapConfig,
) -> BootstrapDistribution:
    """Evaluate stat_fn on every resample; drop and count NOT_ESTIMABLE ones.

    Raises TooFewValidResamplesError when more than half the resamples are
    dropped (the distribution would not be trustworthy).
    """
    values = []
    dropped = 0
    for i in range(cfg.n_resamples):
        stat = stat_fn(resample_units(n_units, cfg, i))
        if stat is NOT_ESTIMABLE or (isinstance(stat, float) and math.isnan(stat)):
            dropped += 1
        else:
            values.append(float(stat))
    if dropped > cfg.n_resamples // 2:
        raise TooFewValidResamplesError(
            f"{dropped} of {cfg.n_resamples} resamples were not estimable"
        )
    return BootstrapDistribution(
        values=np.asarray(values, dtype=np.float64),
        n_dropped=dropped,
        n_resamples=cfg.n_resamples,
    )


# --- interval and test machinery ---------------------------------------------

def percentile_ci(samples: Sequence[float], level: float = 0.95) -> tuple[float, float]:
    """Equal-tailed percentile interval, type-7 (linear) quantiles."""
    arr = np.asarray(samples, dtype=np.float64)
    if arr.size < 2:
        raise EmptySamplesError(f"need >= 2 samples for a percentile CI, got {arr.size}")
    if not (0.0 < level < 1.0):
        raise ValueError(f"level must be in (0,1), got {level}")
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(arr, [alpha, 1.0 - alpha], method="linear")
    return float(lo), float(hi)


def _norm_sf(z: float) -> float:
    """Upper tail of the standard normal."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def _floor_p(p: float) -> tuple[float, bool]:
    if p < P_FLOOR:
        return P_FLOOR, True
    return p, False


def _mean_sd(samples: np.ndarray) -> tuple[float, float]:
    mean = float(samples.mean())
    sd = float(samples.std(ddof=1)) if samples.size > 1 else 0.0
    return mean, sd


def z_test_two_sided(
    samples_a: Sequence[float], samples_b: Sequence[float], level: float = 0.95
) -> TestResult:
    """Two-sided z-test on the difference of two bootstrap distributions.

    z = (mean_a - mean_b) / sqrt(var_a + var_b). With both spreads zero the
    statistic degenerates: equal means -> z = 0, fail to reject; unequal
    means -> z = +/-inf, reject.
    """
    a = np.asarray(samples_a, dtype=np.float64)
    b = np.asarray(samples_b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise EmptySamplesError("z-test needs nonempty sample vectors")
    mean_a, sd_a = _mean_sd(a)
    mean_b, sd_b = _mean_sd(b)
    diff = mean_a - mean_b
    pooled = math.sqrt(sd_a * sd_a + sd_b * sd_b)
    if pooled == 0.0:
        if diff == 0.0:
            return TestResult(0.0, 1.0, False, (0.0, 0.0), Decision.FAIL_TO_REJECT, level=level)
        z = math.inf if diff > 0 else -math.inf
        return TestResult(z, P_FLOOR, True, (diff, diff), Decision.REJECT, level=level)
    z = diff / pooled
    p, floored = _floor_p(2.0 * _norm_sf(abs(z)))
    quantile = NormalDist().inv_cdf(0.5 + level / 2.0)
    ci = (diff - quantile * pooled, diff + quantile * pooled)
    decision = Decision.REJECT if p < (1.0 - level) else Decision.FAIL_TO_REJECT
    return TestResult(z, p, floored, ci, decision, level=level)


def _one_sided_bounds(delta: np.ndarray, level: float) -> tuple[float, float]:
    """Percentile bounds matching a one-sided test at `level`: the interval
    (q_alpha, q_{1-alpha}) whose lower end is the one-sided lower bound."""
    alpha = 1.0 - level
    lo, hi = np.quantile(delta, [alpha, 1.0 - alpha], method="linear")
    return float(lo), float(hi)


def superiority_one_sided(delta_samples: Sequence[float], level: float = 0.95) -> TestResult:
    """One-sided superiority test on bootstrap TPR differences.

    Superior (reject) iff the one-sided lower percentile bound of the delta
    distribution is > 0. Statistic t = mean / sd; p from the normal tail.
    """
    delta = np.asarray(delta_samples, dtype=np.float64)
    if delta.size == 0:
        raise EmptySamplesError("superiority test needs nonempty delta samples")
    mean, sd = _mean_sd(delta)
    lo, hi = _one_sided_bounds(delta, level) if delta.size > 1 else (mean, mean)
    decision = Decision.REJECT if lo > 0.0 else Decision.FAIL_TO_REJECT
    if sd == 0.0:
        if mean == 0.0:
            return TestResult(0.0, 1.0, False, (lo, hi), Decision.FAIL_TO_REJECT, level=level)
        t = math.inf if mean > 0 else -math.inf
        p, floored = (P_FLOOR, True) if mean > 0 else (1.0, False)
        return TestResult(t, p, floored, (lo, hi), decision, level=level)
    t = mean / sd
    p, floored = _floor_p(_norm_sf(t))
    return TestResult(t, p, floored, (lo, hi), decision, level=level)


def non_inferiority(
    delta_samples: Sequence[float], margin: float = 0.015, level: float = 0.95
) -> TestResult:
    """One-sided non-inferiority test at the given margin.

    Non-inferior (reject the inferiority hypothesis) iff the one-sided lower
    percentile bound of delta is > -margin. Statistic t = (mean + margin)/sd.
    """
    if not margin > 0:
        raise ValueError(f"margin must be > 0, got {margin}")
    delta = np.asarray(delta_samples, dtype=np.float64)
    if delta.size == 0:
        raise EmptySamplesError("non-inferiority test needs nonempty delta samples")
    mean, sd = _mean_sd(delta)
    lo, hi = _one_sided_bounds(delta, level) if delta.size > 1 else (mean, mean)
    decision = Decision.REJECT if lo > -margin else Decision.FAIL_TO_REJECT
    shifted = mean + margin
    if sd == 0.0:
        if shifted == 0.0:
            return TestResult(
                0.0, 1.0, False, (lo, hi), Decision.FAIL_TO_REJECT, margin=margin, level=level
            )
        t = math.inf if shifted > 0 else -math.inf
        p, floored = (P_FLOOR, True) if shifted > 0 else (1.0, False)
        return TestResult(t, p, floored, (lo, hi), decision, margin=margin, level=level)
    t = shifted / sd
    p, floored = _floor_p(_norm_sf(t))
    return TestResult(t, p, floored, (lo, hi), decision, margin=margin, level=level)
