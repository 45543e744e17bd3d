"""Scores against held-out data and against a known truth."""

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import comb

from .exceptions import InvalidInputError


@dataclass(frozen=True)
class EvalReport:
    pe: float
    l2: float
    fp: int
    fn: int
    ari: float

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def prediction_error(y_test, X_test, beta_hat):
    """Mean squared residual ``|y - X beta|^2 / n``."""
    y_test = np.asarray(y_test, dtype=float).ravel()
    X_test = np.asarray(X_test, dtype=float)
    beta_hat = np.asarray(beta_hat, dtype=float).ravel()
    if X_test.ndim != 2 or X_test.shape != (y_test.size, beta_hat.size):
        raise InvalidInputError(
            f"dimension mismatch: X {X_test.shape}, y {y_test.shape}, beta {beta_hat.shape}"
        )
    resid = y_test - X_test @ beta_hat
    return float(resid @ resid / y_test.size)


def l2_loss(beta_true, beta_hat):
    beta_true = np.asarray(beta_true, dtype=float).ravel()
    beta_hat = np.asarray(beta_hat, dtype=float).ravel()
    if beta_true.shape != beta_hat.shape:
        raise InvalidInputError(f"length mismatch: {beta_true.size} vs {beta_hat.size}")
    return float(np.linalg.norm(beta_true - beta_hat))


def selection_errors(selected, beta_true):
    """``(false positives, false negatives)`` of a selected set against the true support."""
    selected = np.asarray(selected, dtype=bool).ravel()
    active = np.asarray(beta_true, dtype=float).ravel() != 0
    if selected.shape != active.shape:
        raise InvalidInputError(f"length mismatch: {selected.size} vs {active.size}")
    return int(np.sum(selected & ~active)), int(np.sum(~selected & active))


def contingency_table(labels_a, labels_b):
    _, a = np.unique(np.asarray(labels_a), return_inverse=True)
    _, b = np.unique(np.asarray(labels_b), return_inverse=True)
    table = np.zeros((a.max() + 1, b.max() + 1), dtype=np.int64)
    np.add.at(table, (a, b), 1)
    return table


def adjusted_rand_index(labels_a, labels_b):
    """Chance-corrected pair agreement between two partitions.

    Two partitions that both put everything in one cluster (or both leave
    everything in singletons) make the index 0/0; they are identical, so 1 is
    returned.
    """
    labels_a = np.asarray(labels_a).ravel()
    labels_b = np.asarray(labels_b).ravel()
    if labels_a.shape != labels_b.shape:
        raise InvalidInputError(f"length mismatch: {labels_a.size} vs {labels_b.size}")
    n = labels_a.size
    if n < 2:
        raise InvalidInputError("need at least two items")
    table = contingency_table(labels_a, labels_b)
    sum_joint = comb(table, 2).sum()
    sum_a = comb(table.sum(axis=1), 2).sum()
    sum_b = comb(table.sum(axis=0), 2).sum()
    expected = sum_a * sum_b / comb(n, 2)
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        return 1.0
    return float((sum_joint - expected) / (max_index - expected))


def evaluate(summary, test, truth):
    """Full report for one fitted replicate."""
    fp, fn = selection_errors(summary.selected, truth.beta_true)
    return EvalReport(
        pe=prediction_error(test.y, test.X, summary.beta_mean),
        l2=l2_loss(truth.beta_true, summary.beta_mean),
        fp=fp,
        fn=fn,
        ari=adjusted_rand_index(truth.partition_true, summary.point_partition),
    )
