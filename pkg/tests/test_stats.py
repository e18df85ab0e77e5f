from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maceval.errors import EmptySamplesError, TooFewValidResamplesError
from maceval.stats import (
    NOT_ESTIMABLE,
    BootstrapConfig,
    Decision,
    bootstrap_distribution,
    non_inferiority,
    percentile_ci,
    resample_units,
    superiority_one_sided,
    z_test_two_sided,
)

CFG = BootstrapConfig(n_resamples=1000, seed=42)


class TestResampleUnits:
    def test_single_unit_forced(self):
        np.testing.assert_array_equal(resample_units(1, CFG, 0), [0])

    def test_deterministic_for_same_index(self):
        a = resample_units(100, CFG, 5)
        b = resample_units(100, CFG, 5)
        np.testing.assert_array_equal(a, b)

    def test_distinct_across_indices(self):
        a = resample_units(100, CFG, 0)
        b = resample_units(100, CFG, 1)
        assert (a != b).any()

    def test_order_independent(self):
        backwards = [resample_units(50, CFG, i) for i in reversed(range(20))]
        forwards = [resample_units(50, CFG, i) for i in range(20)]
        for f, b in zip(forwards, reversed(backwards)):
            np.testing.assert_array_equal(f, b)

    def test_range(self):
        draws = resample_units(7, CFG, 3)
        assert draws.shape == (7,)
        assert draws.min() >= 0 and draws.max() < 7


class TestBootstrapDistribution:
    def test_constant_stat(self):
        dist = bootstrap_distribution(lambda idx: 0.5, 10, CFG)
        assert dist.values.shape == (1000,)
        assert (dist.values == 0.5).all()
        assert dist.n_dropped == 0

    def test_mean_stays_in_unit_range(self):
        units = np.array([1.0, 2.0, 3.0])
        dist = bootstrap_distribution(lambda idx: float(units[idx].mean()), 3, CFG)
        assert dist.values.min() >= 1.0 and dist.values.max() <= 3.0

    def test_not_estimable_dropped_and_counted(self):
        def stat(idx):
            return NOT_ESTIMABLE if idx[0] % 3 == 0 else 1.0

        dist = bootstrap_distribution(stat, 50, CFG)
        assert dist.n_dropped > 0
        assert dist.values.size == 1000 - dist.n_dropped

    def test_too_many_dropped(self):
        with pytest.raises(TooFewValidResamplesError):
            bootstrap_distribution(lambda idx: NOT_ESTIMABLE, 5, CFG)

    def test_coverage_on_bernoulli_units(self):
        # Monte-Carlo oracle: CI of the resampled mean of Bernoulli(0.7)
        # units should cover 0.7 about 95% of the time.
        outer = np.random.default_rng(2024)
        cfg = BootstrapConfig(n_resamples=200, seed=9)
        hits = 0
        trials = 200
        for trial in range(trials):
            units = (outer.random(100) < 0.7).astype(float)
            cfg_t = BootstrapConfig(n_resamples=200, seed=trial)
            dist = bootstrap_distribution(lambda idx: float(units[idx].mean()),
                                          100, cfg_t)
            lo, hi = percentile_ci(dist.values, 0.95)
            hits += lo <= 0.7 <= hi
        assert hits >= 0.90 * trials


class TestPercentileCI:
    def test_type7_on_1_to_1000(self):
        samples = np.arange(1.0, 1001.0)
        assert percentile_ci(samples, 0.95) == pytest.approx((25.975, 975.025))

    def test_all_equal(self):
        assert percentile_ci([3.0] * 10, 0.95) == (3.0, 3.0)

    def test_two_points_interpolation(self):
        assert percentile_ci([0.0, 1.0], 0.95) == pytest.approx((0.025, 0.975))

    def test_empty_rejected(self):
        with pytest.raises(EmptySamplesError):
            percentile_ci([1.0], 0.95)

    def test_matches_numpy_type7(self, rng):
        samples = rng.standard_normal(501)
        lo, hi = percentile_ci(samples, 0.9)
        assert lo == np.quantile(samples, 0.05)
        assert hi == np.quantile(samples, 0.95)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_nesting(self, seed):
        samples = np.random.default_rng(seed).standard_normal(40)
        lo95, hi95 = percentile_ci(samples, 0.95)
        lo99, hi99 = percentile_ci(samples, 0.99)
        assert lo99 <= lo95 and hi95 <= hi99


class TestZTest:
    def test_formula(self, rng):
        a = rng.normal(10.0, 1.0, size=4000)
        b = rng.normal(14.0, 1.0, size=4000)
        result = z_test_two_sided(a, b)
        expected = (a.mean() - b.mean()) / math.sqrt(a.var(ddof=1) + b.var(ddof=1))
        assert result.statistic == pytest.approx(expected)
        assert result.statistic == pytest.approx(-2.828, abs=0.15)
        assert result.decision is Decision.REJECT

    def test_identical_samples(self, rng):
        a = rng.standard_normal(100)
        result = z_test_two_sided(a, a.copy())
        assert result.statistic == 0.0
        assert result.decision is Decision.FAIL_TO_REJECT

    def test_p_floor_regime(self, rng):
        # Hugely separated distributions must report the "<1e-8" floor.
        a = rng.normal(0.0, 0.001, size=1000)
        b = rng.normal(1.0, 0.001, size=1000)
        result = z_test_two_sided(a, b)
        assert abs(result.statistic) > 500
        assert result.p_floored and result.p_display == "<1e-8"
        assert result.p_value == 1e-8

    def test_degenerate_spread_unequal_means(self):
        result = z_test_two_sided([1.0, 1.0], [2.0, 2.0])
        assert math.isinf(result.statistic)
        assert result.decision is Decision.REJECT

    def test_degenerate_spread_equal_means(self):
        result = z_test_two_sided([1.0, 1.0], [1.0, 1.0])
        assert result.statistic == 0.0
        assert result.decision is Decision.FAIL_TO_REJECT

    @settings(max_examples=40, deadline=None)
    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_antisymmetry(self, seed):
        r = np.random.default_rng(seed)
        a, b = r.standard_normal(30), r.standard_normal(30) + r.uniform(-1, 1)
        fwd = z_test_two_sided(a, b)
        rev = z_test_two_sided(b, a)
        assert fwd.statistic == -rev.statistic
        assert fwd.p_value == rev.p_value


class TestSuperiority:
    def test_all_positive_deltas(self):
        result = superiority_one_sided([0.017] * 50)
        assert result.decision is Decision.REJECT
        assert result.ci[0] == pytest.approx(0.017)

    def test_symmetric_deltas(self, rng):
        deltas = np.concatenate([rng.normal(0, 0.01, 500), -rng.normal(0, 0.01, 500)])
        assert superiority_one_sided(deltas).decision is Decision.FAIL_TO_REJECT

    def test_paper_regime_statistic_with_floor(self, rng):
        deltas = rng.normal(0.02, 0.0004, size=1000)
        result = superiority_one_sided(deltas)
        assert result.statistic > 45.2
        assert result.p_display == "<1e-8"

    def test_statistic_is_mean_over_sd(self, rng):
        deltas = rng.normal(0.01, 0.005, size=400)
        result = superiority_one_sided(deltas)
        assert result.statistic == pytest.approx(deltas.mean() / deltas.std(ddof=1))


class TestNonInferiority:
    def test_direct_quantile_example(self):
        result = non_inferiority([0.019, 0.020, 0.021], margin=0.015)
        assert result.decision is Decision.REJECT
        assert result.margin == 0.015

    def test_clearly_inferior(self):
        result = non_inferiority([-0.05] * 20, margin=0.015)
        assert result.decision is Decision.FAIL_TO_REJECT

    def test_paper_regime(self, rng):
        deltas = rng.normal(0.017, 0.0005, size=1000)
        result = non_inferiority(deltas, margin=0.015)
        assert result.statistic > 47.3
        assert result.margin == 0.015
        assert result.p_display == "<1e-8"

    def test_margin_must_be_positive(self):
        with pytest.raises(ValueError):
            non_inferiority([0.1], margin=0.0)

    @settings(max_examples=40, deadline=None)
    @given(
        st.integers(min_value=0, max_value=2**32 - 1),
        st.floats(min_value=1e-4, max_value=0.2),
    )
    def test_superiority_implies_non_inferiority(self, seed, margin):
        deltas = np.random.default_rng(seed).normal(0.005, 0.02, size=60)
        if superiority_one_sided(deltas).decision is Decision.REJECT:
            assert non_inferiority(deltas, margin=margin).decision is Decision.REJECT

    def test_boundary_uses_percentile_not_normal(self):
        # Decision comes from the percentile bound: one far-negative outlier
        # below the 5th percentile cannot flip a clearly positive delta set.
        deltas = np.concatenate([np.full(99, 0.02), [-10.0]])
        result = non_inferiority(deltas, margin=0.015)
        assert result.decision is Decision.REJECT
