"""Gibbs sampler for regression with a spiked, sum-constrained Dirichlet process prior.

One sweep updates, in order: the cluster labels (collapsed over the cluster
values), the cluster values, the two variances and the DP concentration.
Label 0 is the spike: those coefficients are exactly zero. Nonzero labels are
kept compacted to ``1..K``.
"""

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import linalg

from .constrained_gaussian import GaussianParams, HyperplaneConstraint, sample_hyperplane_gaussian
from .exceptions import InvalidInputError, NumericalError
from .marginal import ClusterStats, compact_labels

logger = logging.getLogger(__name__)

_TINY = np.finfo(float).tiny


@dataclass(frozen=True)
class Hyperparams:
    """Prior hyperparameters.

    ``sigma2 ~ IG(a_sigma, b_sigma)``, ``gamma2 ~ IG(a_gamma, b_gamma)``,
    ``alpha ~ Gamma(a_alpha, rate=b_alpha)`` and the spike weight has a
    symmetric ``Beta(alpha0/2, alpha0/2)`` prior (uniform for ``alpha0=2``).
    """

    a_sigma: float = 0.001
    b_sigma: float = 0.001
    a_gamma: float = 0.001
    b_gamma: float = 0.001
    a_alpha: float = 1.0
    b_alpha: float = 1.0
    alpha0: float = 2.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise InvalidInputError(f"hyperparameter {name} must be positive, got {value}")

    @classmethod
    def default(cls, p, **overrides):
        """Defaults for ``p`` features: ``a_alpha = 1/(0.75 log p)^2``, ``b_alpha = a_alpha/sqrt(p)``."""
        if p >= 2:
            a_alpha = 1.0 / (0.75 * np.log(p)) ** 2
            b_alpha = a_alpha / np.sqrt(p)
        else:
            a_alpha = b_alpha = 1.0
        params = dict(a_alpha=float(a_alpha), b_alpha=float(b_alpha))
        params.update(overrides)
        return cls(**params)


@dataclass(frozen=True)
class ChainConfig:
    n_iter: int = 5000
    burn_in: int = 3000
    seed: int = 0
    init_clusters: int = 5
    thin: int = 1
    shuffle_sweeps: bool = False
    stats_mode: str = "auto"
    gram_max_features: int = 4000

    def __post_init__(self):
        if self.n_iter < 1:
            raise InvalidInputError("n_iter must be positive")
        if not 0 <= self.burn_in < self.n_iter:
            raise InvalidInputError(
                f"burn_in must satisfy 0 <= burn_in < n_iter, got {self.burn_in} and {self.n_iter}"
            )
        if self.thin < 1:
            raise InvalidInputError("thin must be positive")
        if self.init_clusters < 1:
            raise InvalidInputError("init_clusters must be positive")
        if self.stats_mode not in ("auto", "gram", "columns"):
            raise InvalidInputError(f"unknown stats_mode {self.stats_mode!r}")

    def resolved_stats_mode(self, p):
        if self.stats_mode != "auto":
            return self.stats_mode
        return "gram" if p <= self.gram_max_features else "columns"


@dataclass
class GibbsState:
    """Current values of all sampled quantities.

    ``theta`` is ``None`` right after a label sweep, until :func:`update_theta`
    refreshes it for the new labelling.
    """

    z: np.ndarray
    theta: np.ndarray
    sigma2: float
    gamma2: float
    alpha: float

    @property
    def K(self):
        return int(self.z.max()) if self.z.size else 0

    @property
    def p_z(self):
        return int(np.count_nonzero(self.z))

    def beta(self):
        """Coefficient vector: ``theta[z_j - 1]`` for nonzero labels, exactly 0 on the spike."""
        if self.theta is None:
            raise InvalidInputError("theta is stale; call update_theta first")
        out = np.zeros(self.z.size)
        nz = self.z > 0
        out[nz] = self.theta[self.z[nz] - 1]
        return out

    def copy(self):
        theta = None if self.theta is None else self.theta.copy()
        return replace(self, z=self.z.copy(), theta=theta)

    def to_dict(self):
        return {
            "z": self.z.tolist(),
            "theta": None if self.theta is None else self.theta.tolist(),
            "sigma2": self.sigma2,
            "gamma2": self.gamma2,
            "alpha": self.alpha,
        }


@dataclass(frozen=True)
class ChainTrace:
    """Post-burn-in samples, one row per stored iteration."""

    beta: np.ndarray
    z: np.ndarray
    sigma2: np.ndarray
    gamma2: np.ndarray
    alpha: np.ndarray
    K: np.ndarray
    log_marginal: np.ndarray
    iteration: np.ndarray = field(default=None)

    def __post_init__(self):
        for name in ("beta", "z", "sigma2", "gamma2", "alpha", "K", "log_marginal", "iteration"):
            value = getattr(self, name)
            if value is not None:
                value = np.asarray(value)
                value.setflags(write=False)
                object.__setattr__(self, name, value)

    def __len__(self):
        return int(self.beta.shape[0])

    @property
    def p(self):
        return int(self.beta.shape[1])


def _stats_for(state, data, mode):
    return ClusterStats(data.X, data.y, state.z, mode)


def _inv_gamma(rng, shape, rate):
    g = max(rng.gamma(shape), _TINY)
    return min(rate / g, 1.0 / _TINY)


def init_state(data, cfg, hp, rng, stats=None):
    """Starting point for the chain.

    Features are ranked by the marginal score ``X'y``; the tenth with the
    smallest ``|score|`` starts in the spike and the rest are split into
    ``cfg.init_clusters`` contiguous quantile groups of the signed score.
    """
    p = data.p
    if cfg.init_clusters > p:
        raise InvalidInputError(f"init_clusters={cfg.init_clusters} exceeds p={p}")
    score = data.X.T @ data.y
    n_spike = min(p // 10, p - cfg.init_clusters)
    spiked = np.argsort(np.abs(score), kind="stable")[:n_spike]
    rest = np.setdiff1d(np.arange(p), spiked)
    rest = rest[np.argsort(score[rest], kind="stable")]
    z = np.zeros(p, dtype=np.int64)
    for label, group in enumerate(np.array_split(rest, cfg.init_clusters), start=1):
        z[group] = label
    state = GibbsState(
        z=compact_labels(z),
        theta=None,
        sigma2=max(float(np.var(data.y)), _TINY),
        gamma2=1.0,
        alpha=hp.a_alpha / hp.b_alpha,
    )
    if stats is not None:
        stats.reset(state.z)
    return update_theta(state, data, rng, stats=stats)


def label_prior_logweights(m0, counts, p, alpha, alpha0):
    """Log prior weights of the spike, each existing cluster and a new cluster.

    ``m0`` and ``counts`` exclude the feature being relabelled. The spike gets
    ``(m0 + alpha0/2) / (p - 1 + alpha0)``; the remaining mass is split Polya-urn
    style over the nonzero clusters (``counts``) and a new one (``alpha``).
    """
    counts = np.asarray(counts, dtype=float)
    m = counts.sum()
    denom = np.log(p - 1 + alpha0)
    log_spike = np.log(m0 + 0.5 * alpha0) - denom
    log_slab = np.log(m + 0.5 * alpha0) - denom
    log_urn = np.log(m + alpha)
    out = np.empty(counts.size + 2)
    out[0] = log_spike
    with np.errstate(divide="ignore"):
        out[1:-1] = log_slab + np.log(counts) - log_urn
    out[-1] = log_slab + np.log(alpha) - log_urn
    return out


def _draw_categorical(logw, rng):
    w = np.exp(logw - np.max(logw))
    cdf = np.cumsum(w)
    return int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))


def update_labels(state, data, hp, rng, stats=None, order=None):
    """One collapsed sweep over all labels.

    For each feature the candidates are the spike, every existing nonzero
    cluster and a fresh cluster; each is weighted by its prior weight times
    the collapsed marginal of ``y``. Clusters emptied along the way are removed
    immediately. ``theta`` in the returned state is ``None`` (stale).
    """
    if stats is None:
        stats = ClusterStats(data.X, data.y, state.z)
    elif not np.array_equal(stats.z, state.z):
        stats.reset(state.z)
    p = data.p
    order = range(p) if order is None else order
    for j in order:
        stats.remove(j)
        scores = stats.candidate_log_marginals(j, state.sigma2, state.gamma2)
        m0 = p - 1 - int(stats.f.sum())
        logw = scores + label_prior_logweights(m0, stats.f, p, state.alpha, hp.alpha0)
        if not np.any(np.isfinite(logw)):
            raise NumericalError(f"all label weights are -inf for feature {j}",
                                 state.to_dict())
        choice = _draw_categorical(logw, rng)
        if choice > 0:
            stats.add(j, choice - 1)
    return GibbsState(stats.z.copy(), None, state.sigma2, state.gamma2, state.alpha)


def update_theta(state, data, rng, stats=None):
    """Draw the cluster values from their sum-constrained Gaussian full conditional.

    Unconstrained conditional: precision ``I/gamma2 + Xz'Xz/sigma2`` and mean
    ``Sigma Xz'y / sigma2``; the draw is then conditioned on ``f'theta = 0``.
    """
    if stats is None:
        stats = ClusterStats(data.X, data.y, state.z)
    elif not np.array_equal(stats.z, state.z):
        stats.reset(state.z)
    K = stats.K
    new = state.copy()
    if K == 0:
        new.theta = np.zeros(0)
        return new
    if K == 1:
        new.theta = np.zeros(1)
        return new
    prec = np.eye(K) / state.gamma2 + stats.C / state.sigma2
    try:
        cf = linalg.cho_factor(prec, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError("theta precision matrix is not positive definite",
                             state.to_dict()) from exc
    Sigma = linalg.cho_solve(cf, np.eye(K))
    Sigma = 0.5 * (Sigma + Sigma.T)
    mu = Sigma @ stats.d / state.sigma2
    constraint = HyperplaneConstraint.sum_to_zero(stats.f)
    new.theta = sample_hyperplane_gaussian(GaussianParams(mu, Sigma), constraint, rng)
    return new


def update_variances(state, data, hp, rng):
    """Inverse-gamma draws for ``gamma2`` (given theta) and ``sigma2`` (given the residual)."""
    new = state.copy()
    K = state.K
    theta = state.theta
    ss_theta = float(theta @ theta) if K >= 2 else 0.0
    shape_inc = 0.5 * (K - 1) if K >= 2 else 0.0
    new.gamma2 = _inv_gamma(rng, hp.a_gamma + shape_inc, hp.b_gamma + 0.5 * ss_theta)
    resid = data.y - data.X @ state.beta()
    new.sigma2 = _inv_gamma(rng, hp.a_sigma + 0.5 * data.n, hp.b_sigma + 0.5 * float(resid @ resid))
    return new


def update_concentration(state, hp, rng):
    """Auxiliary-variable update of the DP concentration (Escobar and West).

    With ``K`` nonzero clusters over ``p_z`` nonzero features,
    ``eta ~ Beta(alpha + 1, p_z)`` and alpha is drawn from a two-component
    mixture of ``Gamma(a + K, b - log eta)`` and ``Gamma(a + K - 1, b - log eta)``
    with odds ``(a + K - 1) : p_z (b - log eta)``.
    """
    new = state.copy()
    K, p_z = state.K, state.p_z
    if p_z == 0:
        new.alpha = max(rng.gamma(hp.a_alpha) / hp.b_alpha, _TINY)
        return new
    eta = rng.beta(state.alpha + 1.0, p_z)
    rate = hp.b_alpha - np.log(max(eta, _TINY))
    odds = (hp.a_alpha + K - 1) / (p_z * rate)
    shape = hp.a_alpha + K if rng.random() < odds / (1.0 + odds) else hp.a_alpha + K - 1
    new.alpha = max(rng.gamma(shape) / rate, _TINY)
    return new


def run_chain(data, cfg, hp=None, callback=None):
    """Run the sampler and return the stored post-burn-in samples.

    Parameters
    ----------
    data : Dataset
        Centered design matrix and response.
    cfg : ChainConfig
    hp : Hyperparams, optional
        Defaults to :meth:`Hyperparams.default` for ``data.p``.
    callback : callable, optional
        Called as ``callback(iteration, state)`` after every sweep.

    Returns
    -------
    ChainTrace
    """
    hp = Hyperparams.default(data.p) if hp is None else hp
    rng = np.random.default_rng(cfg.seed)
    stats = ClusterStats(data.X, data.y, np.zeros(data.p, dtype=np.int64),
                         cfg.resolved_stats_mode(data.p))
    state = init_state(data, cfg, hp, rng, stats=stats)

    keep = range(cfg.burn_in, cfg.n_iter, cfg.thin)
    S, p = len(keep), data.p
    beta = np.empty((S, p))
    labels = np.empty((S, p), dtype=np.int64)
    scalars = np.empty((S, 4))
    K = np.empty(S, dtype=np.int64)
    s = 0
    for it in range(cfg.n_iter):
        try:
            stats.reset(state.z)  # bounds drift from incremental updates
            order = rng.permutation(p) if cfg.shuffle_sweeps else None
            state = update_labels(state, data, hp, rng, stats=stats, order=order)
            state = update_theta(state, data, rng, stats=stats)
            state = update_variances(state, data, hp, rng)
            state = update_concentration(state, hp, rng)
            if it >= cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
                beta[s] = state.beta()
                labels[s] = state.z
                K[s] = state.K
                scalars[s] = (state.sigma2, state.gamma2, state.alpha,
                              stats.log_marginal(state.sigma2, state.gamma2))
                s += 1
        except NumericalError as exc:
            raise NumericalError(f"iteration {it}: {exc}", exc.state or state.to_dict()) from exc
        if callback is not None:
            callback(it, state)
        if (it + 1) % 500 == 0:
            logger.debug("iteration %d: K=%d sigma2=%.4g alpha=%.4g", it + 1, state.K,
                         state.sigma2, state.alpha)
    return ChainTrace(beta, labels, scalars[:, 0], scalars[:, 1], scalars[:, 2], K,
                      scalars[:, 3], np.asarray(keep, dtype=np.int64))
