"""Synthetic compositional regression benchmarks.

Predictors are logistic-normal: rows of ``U ~ N_p(m, Sigma)`` are pushed through
the softmax to give relative abundances ``O`` and ``X = log O``. The response is
``y = X beta + eps`` with a clustered, sparse, zero-sum ``beta``.
"""

from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import InvalidInputError
from .preprocessing import center

# (value, multiplicity) blocks of the coefficient template, before projection
BETA_TEMPLATE = (
    (-0.8, 4), (-1.41, 6), (-1.95, 4), (-1.16, 1), (0.96, 1), (0.0, 3),
    (1.04, 6), (0.51, 4), (1.95, 7),
)
TEMPLATE_SLOTS = 37
CASES = ("dep1", "dep2")


@dataclass(frozen=True)
class SimConfig:
    n: int = 300
    p: int = 100
    case: str = "dep1"
    rho: float = 0.5
    snr: float = 1.0
    seed: int = 0
    train_fraction: float = 0.8

    def __post_init__(self):
        if self.p < TEMPLATE_SLOTS:
            raise InvalidInputError(f"p must be at least {TEMPLATE_SLOTS}, got {self.p}")
        if self.n < 4:
            raise InvalidInputError("n must be at least 4")
        if self.case not in CASES:
            raise InvalidInputError(f"case must be one of {CASES}, got {self.case!r}")
        if not self.snr > 0:
            raise InvalidInputError("snr must be positive")
        if not 0 < self.train_fraction < 1:
            raise InvalidInputError("train_fraction must lie in (0, 1)")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class SimulationTruth:
    beta_true: np.ndarray
    partition_true: np.ndarray
    sigma_true: float
    case: str
    rho: float

    def to_dict(self):
        return {
            "beta_true": self.beta_true.tolist(),
            "partition_true": self.partition_true.tolist(),
            "sigma_true": self.sigma_true,
            "case": self.case,
            "rho": self.rho,
        }


def build_true_beta(p):
    """Clustered sparse coefficients, shifted to sum exactly to zero.

    The template is padded with zeros to length ``p``; its nonzero entries are
    shifted by their mean, which keeps ties, signs of separation between
    clusters and the zero pattern.

    Returns
    -------
    beta : ndarray of shape (p,)
    labels : ndarray of shape (p,)
        0 for zero coefficients, ``1..8`` for the distinct nonzero template values
        in order of first appearance.
    """
    if p < TEMPLATE_SLOTS:
        raise InvalidInputError(f"p must be at least {TEMPLATE_SLOTS}, got {p}")
    values = np.concatenate([np.full(m, v) for v, m in BETA_TEMPLATE])
    beta = np.zeros(p)
    beta[:values.size] = values
    nz = beta != 0
    labels = np.zeros(p, dtype=np.int64)
    seen = {}
    for j in np.flatnonzero(nz):
        labels[j] = seen.setdefault(beta[j], len(seen) + 1)
    beta[nz] -= beta[nz].mean()
    return beta, labels


def build_covariance(cfg, partition_true):
    """Predictor covariance for the two dependence settings.

    ``dep1``: ``rho^|i-j|``. ``dep2``: among template features with nonzero
    coefficients, ``0.75 - 0.015|i-j|`` within a cluster and ``0.4 - 0.02|i-j|``
    between clusters, both floored at 0; all other pairs uncorrelated. The
    result is made positive definite by flooring eigenvalues at ``1e-6``.
    """
    p = cfg.p
    idx = np.arange(p)
    dist = np.abs(idx[:, None] - idx[None, :])
    if cfg.case == "dep1":
        return cfg.rho ** dist.astype(float)
    labels = np.asarray(partition_true)
    active = labels > 0
    same = labels[:, None] == labels[None, :]
    both = active[:, None] & active[None, :]
    within = np.maximum(0.75 - 0.015 * dist, 0.0)
    between = np.maximum(0.4 - 0.02 * dist, 0.0)
    Sigma = np.where(both & same, within, np.where(both, between, 0.0))
    np.fill_diagonal(Sigma, 1.0)
    evals, evecs = np.linalg.eigh(Sigma)
    Sigma = (evecs * np.maximum(evals, 1e-6)) @ evecs.T
    return 0.5 * (Sigma + Sigma.T)


def simulate_compositions(cfg, rng, Sigma, mean=None):
    """Logistic-normal relative abundances, rows summing to one.

    The default mean is ``log(0.5 p)`` for the first ten features and 0 elsewhere.
    """
    if mean is None:
        mean = np.zeros(cfg.p)
        mean[:10] = np.log(0.5 * cfg.p)
    U = rng.multivariate_normal(mean, Sigma, size=cfg.n, method="cholesky")
    E = np.exp(U - U.max(axis=1, keepdims=True))
    return E / E.sum(axis=1, keepdims=True)


def simulate_dataset(cfg, return_raw=False):
    """Draw a train/test pair and the ground truth.

    The test set is centered with the training means. With ``return_raw`` the
    uncentered relative abundances and responses are returned as a fourth item
    ``(O_train, y_train, O_test, y_test)``.
    """
    rng = np.random.default_rng(cfg.seed)
    beta, labels = build_true_beta(cfg.p)
    Sigma = build_covariance(cfg, labels)
    O = simulate_compositions(cfg, rng, Sigma)
    X = np.log(O)
    sigma = float(np.mean(np.abs(beta[beta != 0])) / cfg.snr)
    y = X @ beta + sigma * rng.standard_normal(cfg.n)
    n_train = int(round(cfg.train_fraction * cfg.n))
    n_train = min(max(n_train, 2), cfg.n - 1)
    perm = rng.permutation(cfg.n)
    tr, te = np.sort(perm[:n_train]), np.sort(perm[n_train:])
    names = tuple(f"f{j + 1}" for j in range(cfg.p))
    train = center(X[tr], y[tr], names)
    test = train.apply_centering(X[te], y[te])
    truth = SimulationTruth(beta, labels, sigma, cfg.case, cfg.rho)
    if return_raw:
        return train, test, truth, (O[tr], y[tr], O[te], y[te])
    return train, test, truth
