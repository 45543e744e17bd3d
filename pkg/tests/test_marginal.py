import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brace import InvalidInputError, cluster_frequencies, log_det_B, log_marginal_y
from brace.marginal import (
    ClusterStats,
    compact_labels,
    log_marginal_from_stats,
    membership_matrix,
    naive_candidate_log_marginals,
    null_log_marginal,
    reduced_quadratic,
)
from oracles import gaussian_log_marginal, quadrature_log_marginal


def random_instance(rng, n, p, K):
    X = rng.normal(size=(n, p))
    y = rng.normal(size=n)
    z = np.zeros(p, dtype=int)
    z[:K] = np.arange(1, K + 1)  # every cluster non-empty
    z[K:] = rng.integers(0, K + 1, size=p - K)
    return X, y, rng.permutation(z)


def test_det_identity_three_clusters():
    assert np.exp(log_det_B([3, 2, 1])) == pytest.approx(14.0, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 10), min_size=1, max_size=6))
def test_det_identity_against_explicit_determinant(f):
    f = np.array(f, float)
    fs = f[:-1]
    B = np.eye(fs.size) + np.outer(fs, fs) / f[-1] ** 2
    assert np.exp(log_det_B(f)) == pytest.approx(np.linalg.det(B) if fs.size else 1.0, rel=1e-9)


def test_null_labelling_gives_null_density():
    rng = np.random.default_rng(0)
    X, y = rng.normal(size=(6, 4)), rng.normal(size=6)
    expected = -3 * np.log(2 * np.pi * 1.5) - 0.5 * (y @ y) / 1.5
    assert log_marginal_y(y, X, np.zeros(4, int), 1.5, 2.0) == pytest.approx(expected)
    # a lone nonzero cluster is forced to zero by the constraint
    assert log_marginal_y(y, X, np.array([0, 3, 3, 0]), 1.5, 2.0) == pytest.approx(expected)


@pytest.mark.parametrize("seed", range(8))
def test_quadrature_oracle(seed):
    rng = np.random.default_rng(seed)
    K = 2 + seed % 2
    X, y, z = random_instance(rng, n=5, p=5, K=K)
    s2, g2 = [0.5, 1.0, 2.0][seed % 3], [2.0, 0.5, 1.0][seed % 3]
    got = log_marginal_y(y, X, z, s2, g2)
    assert got == pytest.approx(quadrature_log_marginal(y, X, z, s2, g2), rel=1e-6)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 5), st.floats(0.05, 20), st.floats(0.05, 20))
def test_gaussian_oracle(seed, K, sigma2, gamma2):
    rng = np.random.default_rng(seed)
    X, y, z = random_instance(rng, n=12, p=9, K=K)
    got = log_marginal_y(y, X, z, sigma2, gamma2)
    assert got == pytest.approx(gaussian_log_marginal(y, X, z, sigma2, gamma2), rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 5))
def test_relabelling_invariance(seed, K):
    # which cluster is eliminated must not matter
    rng = np.random.default_rng(seed)
    X, y, z = random_instance(rng, n=10, p=8, K=K)
    perm = np.concatenate([[0], rng.permutation(K) + 1])
    a = log_marginal_y(y, X, z, 0.8, 1.7)
    b = log_marginal_y(y, X, perm[z], 0.8, 1.7)
    assert a == pytest.approx(b, rel=1e-11)


def test_batched_statistics_match_single():
    rng = np.random.default_rng(4)
    stats = []
    for _ in range(3):
        X, y, z = random_instance(rng, 8, 6, 3)
        Xz = X @ membership_matrix(z)
        stats.append((Xz.T @ Xz, Xz.T @ y, cluster_frequencies(z).f))
    C, d, f = (np.stack(t) for t in zip(*stats))
    batched = log_marginal_from_stats(C, d, f, 4.0, 8, 1.1, 0.9)
    single = [log_marginal_from_stats(*s, 4.0, 8, 1.1, 0.9) for s in stats]
    np.testing.assert_allclose(batched, single, rtol=1e-13)


def test_reduced_quadratic_matches_substitution():
    # theta_K = -f*' theta* / f_K substituted into theta'A theta - 2 b'theta
    rng = np.random.default_rng(2)
    K = 4
    R = rng.normal(size=(K, K))
    C, d, f = R @ R.T, rng.normal(size=K), np.array([3.0, 1.0, 2.0, 2.0])
    red = reduced_quadratic(C, d, f, 1.0, 2.0)
    A = C + 0.5 * np.eye(K)
    T = np.vstack([np.eye(K - 1), -f[:-1] / f[-1]])
    np.testing.assert_allclose(red.A_star, T.T @ A @ T, atol=1e-12)
    np.testing.assert_allclose(red.b_tilde, T.T @ d, atol=1e-12)


def test_compaction_and_frequencies():
    np.testing.assert_array_equal(compact_labels([0, 7, 3, 7, 0]), [0, 2, 1, 2, 0])
    freq = cluster_frequencies([0, 7, 3, 7, 0])
    np.testing.assert_array_equal(freq.f, [1, 2])
    assert (freq.p0, freq.K, freq.p_z) == (2, 2, 3)
    with pytest.raises(InvalidInputError):
        compact_labels([0, -1])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 6), min_size=1, max_size=20))
def test_frequencies_account_for_every_feature(z):
    freq = cluster_frequencies(z)
    assert freq.f.sum() + freq.p0 == len(z)
    assert np.all(freq.f > 0)


def test_input_validation():
    with pytest.raises(InvalidInputError):
        log_marginal_y(np.ones(3), np.ones((3, 2)), [1, 2], 0.0, 1.0)
    with pytest.raises(InvalidInputError):
        log_marginal_y(np.ones(3), np.ones((3, 2)), [1, 2, 0], 1.0, 1.0)
    with pytest.raises(InvalidInputError):
        log_det_B([])


@pytest.mark.parametrize("mode", ["gram", "columns"])
def test_cached_candidates_match_naive(mode):
    rng = np.random.default_rng(11)
    X, y, z = random_instance(rng, n=20, p=12, K=4)
    stats = ClusterStats(X, y, z, mode)
    for j in range(12):
        expected = naive_candidate_log_marginals(X, y, stats.z, j, 0.9, 1.3)
        stats.remove(j)
        got = stats.candidate_log_marginals(j, 0.9, 1.3)
        np.testing.assert_allclose(got, expected, rtol=1e-10)
        stats.add(j, int(rng.integers(0, stats.K + 1)))


@pytest.mark.parametrize("K", [0, 1, 2])
def test_candidates_with_few_clusters(K):
    rng = np.random.default_rng(K)
    X, y = rng.normal(size=(10, 5)), rng.normal(size=10)
    z = np.zeros(5, int)
    z[1:1 + K] = np.arange(1, K + 1)
    stats = ClusterStats(X, y, z)
    got = stats.candidate_log_marginals(0, 1.2, 0.7)
    np.testing.assert_allclose(got, naive_candidate_log_marginals(X, y, z, 0, 1.2, 0.7), rtol=1e-12)
    if K <= 1:
        assert got[0] == pytest.approx(null_log_marginal(y @ y, 10, 1.2))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["gram", "columns"]))
def test_incremental_updates_match_rebuild(seed, mode):
    rng = np.random.default_rng(seed)
    X, y, z = random_instance(rng, n=9, p=7, K=3)
    stats = ClusterStats(X, y, z, mode)
    for j in rng.integers(0, 7, size=15):
        stats.remove(j)
        stats.add(j, int(rng.integers(0, stats.K + 1)))
    fresh = ClusterStats(X, y, stats.z, mode)
    assert np.all(stats.f > 0)
    np.testing.assert_allclose(stats.C, fresh.C, atol=1e-10)
    np.testing.assert_allclose(stats.d, fresh.d, atol=1e-10)
    assert stats.log_marginal(1.0, 1.0) == pytest.approx(log_marginal_y(y, X, stats.z, 1.0, 1.0))


def test_scoring_requires_unassigned_feature():
    rng = np.random.default_rng(0)
    stats = ClusterStats(rng.normal(size=(5, 3)), rng.normal(size=5), [1, 2, 0])
    with pytest.raises(InvalidInputError):
        stats.candidate_log_marginals(0, 1.0, 1.0)


def test_all_small_labellings_against_gaussian_oracle():
    rng = np.random.default_rng(5)
    X, y = rng.normal(size=(7, 4)), rng.normal(size=7)
    for z in itertools.product(range(4), repeat=4):
        z = np.array(z)
        assert log_marginal_y(y, X, z, 0.7, 1.9) == pytest.approx(
            gaussian_log_marginal(y, X, z, 0.7, 1.9), rel=1e-10)
