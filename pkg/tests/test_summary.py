import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brace import (
    ChainTrace,
    InvalidInputError,
    coclustering_matrix,
    credible_interval_select,
    point_partition,
    summarize,
)
from brace.summary import binder_expected_loss, vi_expected_loss
from oracles import binder_expected_loss_bruteforce, set_partitions, vi_bruteforce


def make_trace(z, beta=None):
    z = np.asarray(z, dtype=np.int64)
    S, p = z.shape
    beta = np.zeros((S, p)) if beta is None else np.asarray(beta, float)
    ones = np.ones(S)
    return ChainTrace(beta, z, ones, ones, ones, z.max(axis=1), np.zeros(S), np.arange(S))


def same_partition(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return np.array_equal(a[:, None] == a[None, :], b[:, None] == b[None, :])


def random_samples(rng, S, p, max_label):
    return rng.integers(0, max_label + 1, size=(S, p))


def test_credible_interval_selection():
    rng = np.random.default_rng(0)
    beta = np.column_stack([rng.normal(3.0, 0.5, 400), rng.normal(0.0, 1.0, 400),
                            np.where(rng.random(400) < 0.2, 0.0, 2.0)])
    s = credible_interval_select(make_trace(np.ones((400, 3)), beta), level=0.95)
    np.testing.assert_array_equal(s.selected, [True, False, False])
    assert np.all(s.ci_lower <= s.ci_upper)
    np.testing.assert_allclose(s.beta_mean, beta.mean(axis=0))
    np.testing.assert_array_equal(s.selected, (s.ci_lower > 0) | (s.ci_upper < 0))


def test_selection_is_nested_in_level():
    rng = np.random.default_rng(1)
    beta = rng.normal(rng.normal(0, 1.5, 20), 1.0, size=(300, 20))
    trace = make_trace(np.ones((300, 20)), beta)
    wide = credible_interval_select(trace, 0.95).selected
    narrow = credible_interval_select(trace, 0.5).selected
    assert np.all(narrow >= wide) and narrow.sum() > wide.sum()


def test_level_near_one_selects_nothing_with_zero_samples():
    rng = np.random.default_rng(2)
    beta = rng.normal(5.0, 0.1, size=(50, 4))
    beta[7] = 0.0
    assert not credible_interval_select(make_trace(np.ones((50, 4)), beta), 0.9999).selected.any()


def test_empty_trace_and_bad_level():
    with pytest.raises(InvalidInputError):
        credible_interval_select(make_trace(np.zeros((0, 3))))
    with pytest.raises(InvalidInputError):
        credible_interval_select(make_trace(np.ones((3, 3))), level=1.0)
    with pytest.raises(InvalidInputError):
        point_partition(np.zeros((0, 3), int))


def test_inclusion_probability():
    z = np.array([[0, 1, 2], [1, 1, 0], [0, 2, 1], [3, 1, 1]])
    s = credible_interval_select(make_trace(z))
    np.testing.assert_allclose(s.inclusion_prob, [0.5, 1.0, 0.75])


def test_coclustering_matrix():
    z = np.array([[0, 0, 1], [1, 1, 2], [1, 2, 2], [2, 3, 1]])
    P = coclustering_matrix(make_trace(z))
    np.testing.assert_allclose(np.diag(P), 1.0)
    np.testing.assert_allclose(P, P.T)
    assert P[0, 1] == pytest.approx(0.5) and P[1, 2] == pytest.approx(0.25)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_relabelling_invariance(seed):
    rng = np.random.default_rng(seed)
    z = random_samples(rng, 30, 8, 4)
    beta = rng.normal(size=(30, 8)) * (z > 0)
    relabelled = z.copy()
    for s in range(30):
        perm = np.concatenate([[0], rng.permutation(4) + 1])
        relabelled[s] = perm[z[s]]
    np.testing.assert_array_equal(coclustering_matrix(z), coclustering_matrix(relabelled))
    a = credible_interval_select(make_trace(z, beta)).selected
    b = credible_interval_select(make_trace(relabelled, beta)).selected
    np.testing.assert_array_equal(a, b)


def test_binder_loss_against_bruteforce():
    rng = np.random.default_rng(3)
    samples = random_samples(rng, 25, 6, 3)
    P = coclustering_matrix(samples)
    for labels in set_partitions(6):
        assert binder_expected_loss(labels, P) == pytest.approx(
            binder_expected_loss_bruteforce(labels, samples), abs=1e-12)


def test_vi_loss_against_bruteforce():
    rng = np.random.default_rng(4)
    samples = random_samples(rng, 10, 6, 3)
    for labels in itertools.islice(set_partitions(6), 0, None, 7):
        expected = np.mean([vi_bruteforce(labels, s) for s in samples])
        assert vi_expected_loss(labels, samples) == pytest.approx(expected, abs=1e-12)


def test_identical_samples_return_that_partition():
    z = np.tile([0, 2, 2, 1, 0, 1, 3], (20, 1))
    for loss in ("binder", "vi"):
        assert same_partition(point_partition(z, loss=loss, rng=0), z[0])


def test_pair_with_high_coclustering_is_joined():
    z = np.array([[1, 1]] * 9 + [[1, 2]])
    assert point_partition(z, rng=0).tolist() == [0, 0]
    z = np.array([[1, 1]] * 1 + [[1, 2]] * 9)
    assert point_partition(z, rng=0).tolist() == [0, 1]


@pytest.mark.parametrize("loss", ["binder", "vi"])
@pytest.mark.parametrize("seed", range(10))
def test_point_partition_beats_samples_and_exhaustive_search(loss, seed):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(4, 9))
    base = rng.integers(0, 3, size=p)
    samples = np.where(rng.random((15, p)) < 0.25, rng.integers(0, 4, size=(15, p)), base)
    P = coclustering_matrix(samples)

    def expected(labels):
        return binder_expected_loss(labels, P) if loss == "binder" else vi_expected_loss(labels, samples)

    got = expected(point_partition(samples, loss=loss, rng=seed))
    assert got <= min(expected(s) for s in samples) + 1e-12
    if p <= 7:
        best = min(expected(np.array(lab)) for lab in set_partitions(p))
        assert got <= best + 0.05 * max(best, 1.0)


def test_never_separates_always_together_or_joins_never_together():
    rng = np.random.default_rng(6)
    samples = random_samples(rng, 40, 10, 5)
    samples[:, 3] = samples[:, 7]
    samples[:, 0] = 6  # never shares with anything else
    for loss in ("binder", "vi"):
        labels = point_partition(samples, loss=loss, rng=1)
        assert labels[3] == labels[7]
        assert np.sum(labels == labels[0]) == 1


def test_summarize_moves_unselected_to_spike():
    rng = np.random.default_rng(7)
    S = 200
    z = np.tile([1, 1, 2, 2, 0, 3], (S, 1))
    beta = np.column_stack([rng.normal(2, 0.1, S)] * 2 + [rng.normal(-2, 0.1, S)] * 2
                           + [np.zeros(S), rng.normal(0, 1, S)])
    s = summarize(make_trace(z, beta), rng=0)
    np.testing.assert_array_equal(s.selected, [True, True, True, True, False, False])
    np.testing.assert_array_equal(s.point_partition, [1, 1, 2, 2, 0, 0])
    d = s.to_dict([f"x{j}" for j in range(6)])
    assert d["selected"] == ["x0", "x1", "x2", "x3"] and d["n_nonzero_clusters"] == 2


def test_point_partition_is_reproducible():
    rng = np.random.default_rng(8)
    samples = random_samples(rng, 30, 12, 4)
    np.testing.assert_array_equal(point_partition(samples, rng=3), point_partition(samples, rng=3))


def test_bad_loss_and_restarts():
    with pytest.raises(InvalidInputError):
        point_partition(np.ones((2, 2), int), loss="nope")
    with pytest.raises(InvalidInputError):
        point_partition(np.ones((2, 2), int), restarts=0)
