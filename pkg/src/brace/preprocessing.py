"""Count tables to centered log relative abundances.

The model works on ``X = log(U~)`` where ``U~`` is the total-sum-scaled count
table with exact zeros replaced by a pseudocount, and on a centered response.
Both the design matrix and the response are centered so the regression needs
no intercept; the training means are kept so new samples can be mapped onto
the same scale.
"""

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import InvalidInputError

DEFAULT_PSEUDOCOUNT = 0.5


@dataclass(frozen=True)
class CountMatrix:
    """Raw abundance table, one row per sample and one column per feature."""

    values: np.ndarray
    feature_names: tuple
    sample_ids: tuple

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise InvalidInputError("count table must be two-dimensional")
        if values.shape != (len(self.sample_ids), len(self.feature_names)):
            raise InvalidInputError(
                f"count table has shape {values.shape} but {len(self.sample_ids)} "
                f"sample ids and {len(self.feature_names)} feature names were given"
            )
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise InvalidInputError("counts must be finite and nonnegative")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))

    @classmethod
    def from_frame(cls, frame):
        return cls(frame.to_numpy(dtype=float), tuple(map(str, frame.columns)),
                   tuple(map(str, frame.index)))

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class Dataset:
    """Centered design matrix and response.

    ``x_mean`` and ``y_mean`` are the means removed during centering; they are
    reused by :meth:`apply_centering` for held-out data.
    """

    X: np.ndarray
    y: np.ndarray
    x_mean: np.ndarray
    y_mean: float
    feature_names: tuple = field(default=())

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    def apply_centering(self, X, y=None):
        """Center new log-abundance rows (and optionally a response) with the stored means."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.p:
            raise InvalidInputError(f"expected {self.p} columns, got shape {X.shape}")
        Xc = X - self.x_mean
        yc = None if y is None else np.asarray(y, dtype=float) - self.y_mean
        if yc is None:
            yc = np.zeros(X.shape[0])
        return Dataset(Xc, yc, self.x_mean, self.y_mean, self.feature_names)


def _as_values(counts):
    if isinstance(counts, CountMatrix):
        return counts.values
    if isinstance(counts, pd.DataFrame):
        return counts.to_numpy(dtype=float)
    return np.asarray(counts, dtype=float)


def to_log_relative_abundance(counts, pseudocount=DEFAULT_PSEUDOCOUNT):
    """Replace zeros, apply total sum scaling and take logs.

    Parameters
    ----------
    counts : CountMatrix, DataFrame or array of shape (n_samples, n_features)
        Nonnegative abundances.
    pseudocount : float, default=0.5
        Value substituted for exact zeros. ``0`` disables replacement.

    Returns
    -------
    ndarray of shape (n_samples, n_features)
        Log relative abundances; ``exp`` of each row sums to one.
    """
    values = np.atleast_2d(_as_values(counts)).copy()
    if not np.all(np.isfinite(values)) or np.any(values < 0):
        raise InvalidInputError("counts must be finite and nonnegative")
    if pseudocount < 0:
        raise InvalidInputError(f"pseudocount must be nonnegative, got {pseudocount}")
    if pseudocount > 0:
        values[values == 0] = pseudocount
    totals = values.sum(axis=1, keepdims=True)
    if np.any(totals == 0):
        raise ZeroDivisionError("sample with all-zero counts and no pseudocount")
    if np.any(values == 0):
        raise InvalidInputError("zero counts remain; log relative abundance undefined")
    # difference of logs stays finite when a ratio would underflow
    return np.log(values) - np.log(totals)


def center(X, y, feature_names=()):
    """Column-center ``X`` and center ``y``, keeping the means."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2:
        raise InvalidInputError("X must be two-dimensional")
    if X.shape[0] != y.shape[0]:
        raise InvalidInputError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
    if X.shape[0] < 2:
        raise InvalidInputError("centering needs at least two samples")
    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    return Dataset(X - x_mean, y - y_mean, x_mean, y_mean, tuple(feature_names))


def filter_features(counts, min_total=0.0):
    """Drop features whose total abundance is below ``min_total``.

    Features that still have zero total abundance afterwards are an error: they
    carry no information and would only ever be pseudocounts.
    """
    if not isinstance(counts, CountMatrix):
        raise InvalidInputError("filter_features expects a CountMatrix")
    totals = counts.values.sum(axis=0)
    keep = totals >= min_total
    values = counts.values[:, keep]
    names = tuple(n for n, k in zip(counts.feature_names, keep) if k)
    empty = [n for n, t in zip(names, values.sum(axis=0)) if t == 0]
    if empty:
        raise InvalidInputError(
            f"{len(empty)} feature(s) have zero total abundance (e.g. {empty[0]!r}); "
            "raise the abundance filter threshold to drop them"
        )
    return CountMatrix(values, names, counts.sample_ids)


class LogRelativeAbundance(TransformerMixin, BaseEstimator):
    """Transformer mapping count tables to log relative abundances.

    Stateless apart from remembering the number of input features, so it can sit
    at the front of a :class:`~sklearn.pipeline.Pipeline` ahead of
    :class:`brace.BraceRegressor`.

    Parameters
    ----------
    pseudocount : float, default=0.5
        Replacement for exact zero counts.
    """

    def __init__(self, pseudocount=DEFAULT_PSEUDOCOUNT):
        self.pseudocount = pseudocount

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise InvalidInputError(
                f"expected {self.n_features_in_} features, got {X.shape[1]}"
            )
        return to_log_relative_abundance(X, self.pseudocount)
