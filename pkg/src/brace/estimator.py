"""scikit-learn style front end to the sampler."""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .gibbs import ChainConfig, Hyperparams, run_chain
from .preprocessing import center
from .summary import summarize


class BraceRegressor(RegressorMixin, BaseEstimator):
    """Sparse, clustered, sum-to-zero linear regression on log compositions.

    ``X`` should already hold log relative abundances (put
    :class:`brace.LogRelativeAbundance` in front of it in a pipeline when
    starting from counts). Both ``X`` and ``y`` are centered internally; the
    fitted coefficients sum to zero and features share coefficient values
    within clusters.

    Parameters
    ----------
    n_iter : int, default=5000
        Total Gibbs sweeps.
    burn_in : int, default=3000
        Sweeps discarded before samples are stored.
    thin : int, default=1
    init_clusters : int, default=5
    random_state : int, default=0
        Seed for the sampler and for the point-partition search.
    level : float, default=0.95
        Credible level used for variable selection.
    loss : {"binder", "vi"}, default="binder"
        Loss minimized by the reported clustering.
    restarts : int, default=10
    shuffle_sweeps : bool, default=False
        Visit features in a fresh random order every sweep.
    hyperparams : dict, optional
        Overrides for :class:`brace.Hyperparams` (defaults depend on the
        number of features).

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
        Posterior mean coefficients.
    intercept_ : float
    selected_ : ndarray of bool
        Features whose credible interval excludes zero.
    partition_ : ndarray of int
        Reported clustering; 0 marks unselected features.
    trace_ : ChainTrace
    summary_ : PosteriorSummary
    """

    def __init__(self, n_iter=5000, burn_in=3000, thin=1, init_clusters=5, random_state=0,
                 level=0.95, loss="binder", restarts=10, shuffle_sweeps=False, hyperparams=None):
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.thin = thin
        self.init_clusters = init_clusters
        self.random_state = random_state
        self.level = level
        self.loss = loss
        self.restarts = restarts
        self.shuffle_sweeps = shuffle_sweeps
        self.hyperparams = hyperparams

    def _chain_config(self):
        return ChainConfig(
            n_iter=self.n_iter, burn_in=self.burn_in, seed=self.random_state,
            init_clusters=self.init_clusters, thin=self.thin, shuffle_sweeps=self.shuffle_sweeps,
        )

    def fit(self, X, y):
        X, y = validate_data(self, X, y, dtype=float, y_numeric=True)
        cfg = self._chain_config()
        data = center(X, y)
        hp = Hyperparams.default(data.p, **(self.hyperparams or {}))
        self.trace_ = run_chain(data, cfg, hp)
        self.summary_ = summarize(self.trace_, level=self.level, loss=self.loss,
                                  restarts=self.restarts, rng=self.random_state)
        self.coef_ = self.summary_.beta_mean
        self.intercept_ = float(data.y_mean - data.x_mean @ self.coef_)
        self.selected_ = self.summary_.selected
        self.partition_ = self.summary_.point_partition
        self.hyperparams_ = hp
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, dtype=float, reset=False)
        return X @ self.coef_ + self.intercept_
