"""Gaussian vectors conditioned on a linear equality ``H theta = q``.

Draws are produced by sampling the unconstrained Gaussian and correcting along
``Sigma H^T``, which yields exact samples from the conditional law without
factorizing the (singular) conditional covariance.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .exceptions import InvalidInputError, NumericalError

EIGEN_FLOOR = 1e-12


@dataclass(frozen=True)
class GaussianParams:
    mu: np.ndarray
    Sigma: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        Sigma = np.atleast_2d(np.asarray(self.Sigma, dtype=float))
        if Sigma.shape != (mu.size, mu.size):
            raise InvalidInputError(
                f"covariance shape {Sigma.shape} does not match mean length {mu.size}"
            )
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "Sigma", Sigma)


@dataclass(frozen=True)
class HyperplaneConstraint:
    """The affine subspace ``{theta : H theta = q}``; ``H`` is ``m x K``."""

    H: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        if q.size != H.shape[0]:
            raise InvalidInputError(f"H has {H.shape[0]} rows but q has {q.size} entries")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "q", q)

    @classmethod
    def sum_to_zero(cls, weights):
        """Single constraint ``weights @ theta = 0``."""
        return cls(np.asarray(weights, dtype=float)[None, :], np.zeros(1))


def _gain(Sigma, c):
    # Sigma H^T (H Sigma H^T)^{-1}, via a Cholesky factor of the m x m middle term
    SHt = Sigma @ c.H.T
    M = c.H @ SHt
    try:
        cf = linalg.cho_factor(M, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError(
            f"H Sigma H^T is singular for constraint H={c.H.tolist()}, q={c.q.tolist()}"
        ) from exc
    return linalg.cho_solve(cf, SHt.T).T


def conditional_moments(params, c):
    """Mean and covariance of ``theta ~ N(mu, Sigma)`` given ``H theta = q``.

    Returns
    -------
    GaussianParams
        ``mu_T = mu + S H^T (H S H^T)^{-1} (q - H mu)`` and
        ``Sigma_T = S - S H^T (H S H^T)^{-1} H S``. Eigenvalues of ``Sigma_T``
        below ``1e-12`` (relative) are set to zero.
    """
    _check_dims(params, c)
    W = _gain(params.Sigma, c)
    mu_T = params.mu + W @ (c.q - c.H @ params.mu)
    Sigma_T = params.Sigma - W @ (c.H @ params.Sigma)
    Sigma_T = 0.5 * (Sigma_T + Sigma_T.T)
    evals, evecs = np.linalg.eigh(Sigma_T)
    scale = max(float(np.max(np.abs(evals))), 1.0)
    evals = np.where(evals < EIGEN_FLOOR * scale, 0.0, evals)
    Sigma_T = (evecs * evals) @ evecs.T
    return GaussianParams(mu_T, 0.5 * (Sigma_T + Sigma_T.T))


def sample_hyperplane_gaussian(params, c, rng, size=None):
    """Exact draw(s) from ``N(mu, Sigma)`` conditioned on ``H theta = q``.

    Parameters
    ----------
    params : GaussianParams
    c : HyperplaneConstraint
    rng : numpy.random.Generator
    size : int, optional
        Number of draws. ``None`` returns a single vector of length K.

    Returns
    -------
    ndarray of shape (K,) or (size, K)
    """
    _check_dims(params, c)
    try:
        L = linalg.cholesky(params.Sigma, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError("covariance is not positive definite") from exc
    W = _gain(params.Sigma, c)
    k = params.mu.size
    eps = rng.standard_normal(k if size is None else (size, k))
    free = params.mu + eps @ L.T
    return free + (c.q - free @ c.H.T) @ W.T


def _check_dims(params, c):
    if c.H.shape[1] != params.mu.size:
        raise InvalidInputError(
            f"constraint acts on {c.H.shape[1]} coordinates but mean has {params.mu.size}"
        )
    if c.H.shape[0] >= c.H.shape[1]:
        raise InvalidInputError("constraint must have fewer rows than coordinates")
