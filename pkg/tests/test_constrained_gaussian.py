import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brace import (
    GaussianParams,
    HyperplaneConstraint,
    InvalidInputError,
    NumericalError,
    conditional_moments,
    sample_hyperplane_gaussian,
)
from oracles import nullspace_conditional_moments


def random_problem(rng, K, spread=1.0):
    A = rng.normal(size=(K, K))
    Sigma = A @ A.T + 0.5 * np.eye(K)
    mu = spread * rng.normal(size=K)
    f = rng.integers(1, 8, size=K).astype(float)
    return GaussianParams(mu, Sigma), HyperplaneConstraint.sum_to_zero(f)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 7))
def test_moments_match_nullspace_oracle(seed, K):
    params, c = random_problem(np.random.default_rng(seed), K)
    got = conditional_moments(params, c)
    mean, cov = nullspace_conditional_moments(params.mu, params.Sigma, c.H, c.q)
    np.testing.assert_allclose(got.mu, mean, atol=1e-9)
    np.testing.assert_allclose(got.Sigma, cov, atol=1e-9)


def test_two_constraints_against_oracle():
    rng = np.random.default_rng(3)
    K = 5
    A = rng.normal(size=(K, K))
    params = GaussianParams(rng.normal(size=K), A @ A.T + np.eye(K))
    c = HyperplaneConstraint(rng.normal(size=(2, K)), np.array([0.3, -1.0]))
    got = conditional_moments(params, c)
    mean, cov = nullspace_conditional_moments(params.mu, params.Sigma, c.H, c.q)
    np.testing.assert_allclose(got.mu, mean, atol=1e-10)
    np.testing.assert_allclose(got.Sigma, cov, atol=1e-10)
    draws = sample_hyperplane_gaussian(params, c, rng, size=50)
    np.testing.assert_allclose(draws @ c.H.T, np.tile(c.q, (50, 1)), atol=1e-10)


def test_identity_sum_constraint_mean():
    # N(mu, I) given sum(theta) = 0 has mean mu - mean(mu)
    mu = np.array([1.0, 2.0, 6.0])
    got = conditional_moments(GaussianParams(mu, np.eye(3)),
                              HyperplaneConstraint.sum_to_zero(np.ones(3)))
    np.testing.assert_allclose(got.mu, mu - 3.0, atol=1e-14)
    np.testing.assert_allclose(got.Sigma, np.eye(3) - 1.0 / 3, atol=1e-14)


def test_conditional_covariance_is_singular_along_constraint():
    params, c = random_problem(np.random.default_rng(1), 4)
    cov = conditional_moments(params, c).Sigma
    np.testing.assert_allclose(c.H @ cov, 0.0, atol=1e-12)
    assert np.linalg.matrix_rank(cov, tol=1e-9) == 3


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 8), st.floats(0.1, 100.0))
def test_every_draw_satisfies_constraint(seed, K, spread):
    rng = np.random.default_rng(seed)
    params, c = random_problem(rng, K, spread)
    draws = sample_hyperplane_gaussian(params, c, rng, size=20)
    scale = max(1.0, np.abs(draws).max() * np.abs(c.H).sum())
    assert np.all(np.abs(draws @ c.H.T) <= 1e-10 * scale)


def test_single_draw_shape():
    params, c = random_problem(np.random.default_rng(0), 3)
    assert sample_hyperplane_gaussian(params, c, np.random.default_rng(1)).shape == (3,)


def test_same_seed_same_draws():
    params, c = random_problem(np.random.default_rng(0), 4)
    a = sample_hyperplane_gaussian(params, c, np.random.default_rng(9), size=5)
    b = sample_hyperplane_gaussian(params, c, np.random.default_rng(9), size=5)
    np.testing.assert_array_equal(a, b)


def test_dimension_errors():
    params = GaussianParams(np.zeros(3), np.eye(3))
    with pytest.raises(InvalidInputError):
        conditional_moments(params, HyperplaneConstraint.sum_to_zero(np.ones(2)))
    with pytest.raises(InvalidInputError):
        conditional_moments(GaussianParams(np.zeros(1), np.eye(1)),
                            HyperplaneConstraint.sum_to_zero(np.ones(1)))
    with pytest.raises(InvalidInputError):
        GaussianParams(np.zeros(2), np.eye(3))
    with pytest.raises(InvalidInputError):
        HyperplaneConstraint(np.ones((1, 3)), np.zeros(2))


def test_degenerate_constraint_reports_numerical_error():
    params = GaussianParams(np.zeros(3), np.eye(3))
    with pytest.raises(NumericalError, match="singular"):
        conditional_moments(params, HyperplaneConstraint.sum_to_zero(np.zeros(3)))
    with pytest.raises(NumericalError):
        sample_hyperplane_gaussian(GaussianParams(np.zeros(3), np.zeros((3, 3))),
                                   HyperplaneConstraint.sum_to_zero(np.ones(3)),
                                   np.random.default_rng(0))
