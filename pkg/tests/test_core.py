import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import hadamard

from lqcertify.core import (
    DegenerateInputError,
    Dictionary,
    DomainError,
    InputError,
    Observation,
    RecoveryProblem,
    SparseSignal,
    l0_count,
    l2_norm,
    lq_quasinorm,
    mutual_coherence,
    normalize_columns,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
vectors = arrays(np.float64, st.integers(1, 20), elements=finite)
exponents = st.floats(0.05, 1.0)


def brute_coherence(a):
    # pairwise loop, independent of the Gram-matrix path
    n = a.shape[1]
    best = 0.0
    for i, j in itertools.combinations(range(n), 2):
        best = max(best, abs(sum(a[k, i] * a[k, j] for k in range(a.shape[0]))))
    return best


class TestQuasinorm:
    def test_l1(self):
        assert lq_quasinorm([3, 4], 1) == 7

    @pytest.mark.parametrize("q", [0.1, 0.5, 0.9, 1.0])
    def test_single_nonzero(self, q):
        assert lq_quasinorm([5, 0, 0], q) == pytest.approx(5, rel=1e-14)

    def test_half(self):
        assert lq_quasinorm([3, 4], 0.5) == pytest.approx((math.sqrt(3) + 2) ** 2, rel=1e-14)
        assert lq_quasinorm([3, 4], 0.5) == pytest.approx(13.9282, abs=1e-4)

    def test_raised(self):
        assert lq_quasinorm([3, 4], 0.5, raised=True) == pytest.approx(math.sqrt(3) + 2)

    @pytest.mark.parametrize("q", [0.0, -0.5, 1.5])
    def test_bad_q(self, q):
        with pytest.raises(DomainError):
            lq_quasinorm([1.0], q)

    def test_nonfinite(self):
        with pytest.raises(InputError):
            lq_quasinorm([1.0, np.nan], 0.5)

    @settings(max_examples=300)
    @given(vectors, exponents, exponents)
    def test_monotone_in_exponent(self, x, q1, q2):
        q1, q2 = min(q1, q2), max(q1, q2)
        assert lq_quasinorm(x, q2) <= lq_quasinorm(x, q1) * (1 + 1e-12) + 1e-300

    @settings(max_examples=300)
    @given(vectors)
    def test_l1_l2_sandwich(self, x):
        l1 = lq_quasinorm(x, 1.0)
        l2 = l2_norm(x)
        assert l2 <= l1 * (1 + 1e-12)
        assert l1 <= math.sqrt(x.size) * l2 * (1 + 1e-12)

    @settings(max_examples=300)
    @given(vectors, st.floats(0.05, 0.99))
    def test_hoelder_upper(self, x, q):
        n = x.size
        assert lq_quasinorm(x, q) <= n ** (1 / q - 1) * lq_quasinorm(x, 1.0) * (1 + 1e-12)

    @given(vectors, vectors, exponents)
    def test_raised_additive_over_disjoint_blocks(self, a, b, q):
        joined = np.concatenate([a, b])
        lhs = lq_quasinorm(joined, q, raised=True)
        rhs = lq_quasinorm(a, q, raised=True) + lq_quasinorm(b, q, raised=True)
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-300)


class TestL0:
    def test_exact_zeros(self):
        assert l0_count([0, 3, 0, -2], 0) == 2

    def test_threshold(self):
        assert l0_count([1e-12, 1], 1e-9) == 1

    def test_all_zero(self):
        assert l0_count(np.zeros(5)) == 0

    def test_nonfinite(self):
        with pytest.raises(InputError):
            l0_count([np.inf])


class TestDictionary:
    def test_normalize_single_column(self):
        A = normalize_columns(np.array([[3.0], [4.0]]))
        np.testing.assert_allclose(A.entries[:, 0], [0.6, 0.8], rtol=1e-15)

    def test_orthonormal_unchanged(self, rng):
        Q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
        A = normalize_columns(Q)
        np.testing.assert_allclose(A.entries, Q, atol=1e-15)

    def test_zero_column(self):
        with pytest.raises(DegenerateInputError, match="column 1"):
            normalize_columns(np.array([[1.0, 0.0], [1.0, 0.0]]))

    def test_rejects_unnormalized(self):
        with pytest.raises(InputError):
            Dictionary(np.array([[2.0, 0.0], [0.0, 1.0]]))

    def test_immutable(self):
        A = normalize_columns(np.eye(3))
        with pytest.raises(ValueError):
            A.entries[0, 0] = 5.0


class TestCoherence:
    def test_identity(self):
        assert mutual_coherence(Dictionary(np.eye(4))) == 0.0

    def test_three_vectors_in_plane(self):
        A = normalize_columns(np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]))
        expected = brute_coherence(A.entries)
        assert expected == pytest.approx(1 / math.sqrt(2), rel=1e-14)
        assert mutual_coherence(A) == pytest.approx(expected, abs=1e-15)

    def test_spikes_hadamard(self):
        A = normalize_columns(np.hstack([np.eye(4), hadamard(4) / 2.0]))
        expected = brute_coherence(A.entries)
        assert expected == pytest.approx(0.5, abs=1e-15)
        assert mutual_coherence(A) == pytest.approx(0.5, abs=1e-12)

    def test_uses_absolute_value(self):
        A = normalize_columns(np.array([[1.0, -1.0], [0.0, 0.1]]))
        assert mutual_coherence(A) > 0.9

    def test_single_column(self):
        with pytest.raises(DomainError):
            mutual_coherence(Dictionary(np.array([[1.0]])))

    def test_invariant_under_permutation_and_signs(self, rng):
        for _ in range(20):
            A = normalize_columns(rng.standard_normal((6, 10)))
            perm = rng.permutation(10)
            signs = rng.choice([-1.0, 1.0], 10)
            B = Dictionary(A.entries[:, perm] * signs)
            assert mutual_coherence(B) == pytest.approx(mutual_coherence(A), abs=1e-15)
            assert 0.0 <= mutual_coherence(A) <= 1.0

    def test_random_matches_pairwise_loop(self, rng):
        A = normalize_columns(rng.standard_normal((4, 7)))
        assert mutual_coherence(A) == pytest.approx(brute_coherence(A.entries), abs=1e-14)


class TestSignalAndObservation:
    def test_support_default_tolerance(self):
        x = SparseSignal(np.array([1.0, 1e-10, 0.0, -2.0]))
        assert list(x.support) == [0, 3]
        assert x.sparsity == 2
        assert list(x.off_support()) == [1, 2]

    def test_observation_noise_budget(self):
        with pytest.raises(InputError):
            Observation(np.ones(2), epsilon=0.1, y_clean=np.zeros(2) + 0.9,
                        noise=np.array([0.1, 0.1]))

    def test_observation_consistency(self):
        w = np.array([0.03, 0.04])
        obs = Observation(np.array([1.03, 0.04]), epsilon=0.05, y_clean=np.array([1.0, 0.0]), noise=w)
        assert obs.m == 2

    def test_problem_validation(self):
        A = Dictionary(np.eye(2))
        obs = Observation(np.ones(2))
        with pytest.raises(DomainError):
            RecoveryProblem(A, obs, -1.0, 0.5)
        with pytest.raises(DomainError):
            RecoveryProblem(A, obs, 1.0, 1.5)
        with pytest.raises(InputError):
            RecoveryProblem(A, Observation(np.ones(3)), 1.0, 0.5)
