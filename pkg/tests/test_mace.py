from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maceval.errors import (
    DimensionMismatchError,
    EigenFailureError,
    NonFiniteInputError,
    NotSymmetricError,
    TooFewSamplesError,
    UndersampledWarning,
)
from maceval.ingest.types import EmbeddingSet
from maceval.mace import (
    GaussianMoments,
    diagonal_frechet,
    fit_gaussian,
    frechet_distance,
    mace_between,
    matrix_sqrt_psd,
)


def moments(mean, cov, n=100):
    return GaussianMoments(mean=np.asarray(mean, float), cov=np.asarray(cov, float), n=n)


class TestFitGaussian:
    def test_hand_checked_covariance(self):
        # Oracle by hand: column means 1; per-column deviations {-1,1,-1,1}
        # squared sum 4 over n-1=3 gives 4/3; cross terms cancel.
        rows = np.array([[0, 0], [2, 0], [0, 2], [2, 2]], dtype=float)
        g = fit_gaussian(EmbeddingSet(rows))
        np.testing.assert_allclose(g.mean, [1.0, 1.0])
        eps = 1e-6 * (8 / 3) / 2
        np.testing.assert_allclose(g.cov, np.diag([4 / 3 + eps, 4 / 3 + eps]), atol=1e-15)

    def test_identical_rows_give_epsilon_identity(self):
        rows = np.tile([3.0, -1.0, 2.0], (5, 1))
        g = fit_gaussian(EmbeddingSet(rows))
        np.testing.assert_allclose(g.mean, [3.0, -1.0, 2.0])
        np.testing.assert_allclose(g.cov, 1e-6 * 1e-30 * np.eye(3))

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamplesError):
            fit_gaussian(EmbeddingSet(np.ones((1, 3))))

    def test_non_finite_rejected(self):
        bad = np.ones((3, 2))
        bad[1, 1] = np.inf
        with pytest.raises(NonFiniteInputError):
            fit_gaussian(EmbeddingSet(bad))

    def test_undersampled_warning(self, rng):
        with pytest.warns(UndersampledWarning):
            fit_gaussian(EmbeddingSet(rng.standard_normal((3, 10))))


class TestMatrixSqrt:
    def test_identity(self):
        np.testing.assert_allclose(matrix_sqrt_psd(np.eye(3)), np.eye(3))

    def test_diagonal(self):
        np.testing.assert_allclose(matrix_sqrt_psd(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))

    def test_two_by_two_eigendecomposition_oracle(self):
        # Eigenvalues 1 and 3 with eigenvectors (1,-1)/sqrt2 and (1,1)/sqrt2:
        # sqrt = [[(sqrt3+1)/2, (sqrt3-1)/2], [...]]
        root = matrix_sqrt_psd(np.array([[2.0, 1.0], [1.0, 2.0]]))
        expected = np.array([[1.3660254, 0.3660254], [0.3660254, 1.3660254]])
        np.testing.assert_allclose(root, expected, atol=1e-6)

    def test_not_symmetric(self):
        with pytest.raises(NotSymmetricError):
            matrix_sqrt_psd(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_large_negative_eigenvalue_fails_loudly(self):
        with pytest.raises(EigenFailureError):
            matrix_sqrt_psd(np.array([[1.0, 0.0], [0.0, -0.5]]))

    def test_small_negative_clamped(self):
        s = np.diag([1.0, -1e-14])
        root = matrix_sqrt_psd(s)
        np.testing.assert_allclose(root, np.diag([1.0, 0.0]), atol=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=2, max_value=16), st.integers(min_value=0, max_value=2**32 - 1))
    def test_sqrt_of_square_recovers_psd_matrix(self, d, seed):
        r = np.random.default_rng(seed)
        q, _ = np.linalg.qr(r.standard_normal((d, d)))
        eig = r.uniform(0.0, 5.0, size=d)
        root_true = (q * eig) @ q.T
        s = root_true @ root_true
        recovered = matrix_sqrt_psd(0.5 * (s + s.T))
        denom = np.linalg.norm(root_true) or 1.0
        assert np.linalg.norm(recovered - root_true) / denom < 1e-6

    def test_reconstruction_error_bound(self, rng):
        for _ in range(20):
            d = int(rng.integers(2, 64))
            a = rng.standard_normal((d, d))
            s = a @ a.T
            root = matrix_sqrt_psd(s)
            assert np.linalg.norm(root @ root - s) / np.linalg.norm(s) < 1e-7


class TestFrechetDistance:
    def test_identical_moments_zero(self, rng):
        a = rng.standard_normal((50, 6))
        g = fit_gaussian(EmbeddingSet(a))
        assert frechet_distance(g, g).value < 1e-8

    def test_one_dimensional_closed_form(self):
        # mu 0 vs 3, var 1 vs 4: 9 + (1 + 4 - 2*2) = 10
        a = moments([0.0], [[1.0]])
        b = moments([3.0], [[4.0]])
        assert frechet_distance(a, b).value == pytest.approx(10.0, abs=1e-12)

    def test_two_dimensional_diagonal_closed_form(self):
        # 2 + (1-2)^2 + (1-3)^2 = 7
        a = moments([0.0, 0.0], np.eye(2))
        b = moments([1.0, 1.0], np.diag([4.0, 9.0]))
        assert frechet_distance(a, b).value == pytest.approx(7.0, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            frechet_distance(moments([0.0], [[1.0]]), moments([0, 0], np.eye(2)))

    def test_matches_diagonal_oracle_on_random_diagonals(self, rng):
        for _ in range(20):
            d = int(rng.integers(1, 12))
            mean_a, mean_b = rng.standard_normal((2, d)) * 3
            var_a, var_b = rng.uniform(0.1, 5.0, size=(2, d))
            got = frechet_distance(
                moments(mean_a, np.diag(var_a)), moments(mean_b, np.diag(var_b))
            ).value
            want = diagonal_frechet(mean_a, var_a, mean_b, var_b)
            assert got == pytest.approx(want, rel=1e-10)

    def test_general_covariance_against_scipy_sqrtm(self, rng):
        # Independent route: scipy's generic (non-symmetric) sqrtm of the
        # plain product, versus our symmetrized eigh form.
        from scipy import linalg

        for _ in range(10):
            d = 6
            a = rng.standard_normal((d, d))
            b = rng.standard_normal((d, d))
            cov_a, cov_b = a @ a.T + 0.1 * np.eye(d), b @ b.T + 0.1 * np.eye(d)
            mu_a, mu_b = rng.standard_normal((2, d))
            want = (np.sum((mu_a - mu_b) ** 2) + np.trace(cov_a) + np.trace(cov_b)
                    - 2.0 * np.trace(linalg.sqrtm(cov_a @ cov_b).real))
            got = frechet_distance(moments(mu_a, cov_a), moments(mu_b, cov_b)).value
            assert got == pytest.approx(want, rel=1e-8)


class TestMaceBetween:
    def test_same_rows_zero(self, rng):
        x = EmbeddingSet(rng.standard_normal((40, 5)))
        assert mace_between(x, x).value < 1e-8

    def test_sampled_one_dimensional_converges(self):
        rng = np.random.default_rng(7)
        a = EmbeddingSet(rng.normal(0.0, 1.0, size=(50_000, 1)))
        b = EmbeddingSet(rng.normal(3.0, 2.0, size=(50_000, 1)))
        assert mace_between(a, b).value == pytest.approx(10.0, rel=0.05)

    def test_symmetry(self, rng):
        a = EmbeddingSet(rng.standard_normal((80, 7)) + 1.0)
        b = EmbeddingSet(rng.standard_normal((60, 7)) * 1.5)
        ab = mace_between(a, b).value
        ba = mace_between(b, a).value
        assert abs(ab - ba) <= 1e-6 * (1.0 + ab)

    def test_rotation_invariance(self, rng):
        a = rng.standard_normal((100, 16)) + 0.5
        b = rng.standard_normal((90, 16)) * 2.0
        base = mace_between(EmbeddingSet(a), EmbeddingSet(b)).value
        for _ in range(5):
            q, _ = np.linalg.qr(rng.standard_normal((16, 16)))
            rotated = mace_between(EmbeddingSet(a @ q), EmbeddingSet(b @ q)).value
            assert abs(rotated - base) <= 1e-8 * max(base, 1.0)

    def test_translation_covariance(self, rng):
        a = rng.standard_normal((200, 5))
        t = rng.standard_normal(5)
        score = mace_between(EmbeddingSet(a), EmbeddingSet(a + t)).value
        assert score == pytest.approx(float(np.sum(t * t)), rel=1e-8)

    def test_monotone_in_mean_shift(self):
        cov = np.diag([1.0, 2.0, 0.5])
        base = moments([0.0, 0.0, 0.0], cov)
        values = [
            frechet_distance(base, moments([s, 0.0, 0.0], cov)).value
            for s in np.linspace(0.0, 4.0, 15)
        ]
        assert all(b >= a for a, b in zip(values, values[1:]))

    def test_dimension_mismatch(self, rng):
        with pytest.raises(DimensionMismatchError):
            mace_between(EmbeddingSet(rng.standard_normal((10, 3))),
                         EmbeddingSet(rng.standard_normal((10, 4))))
