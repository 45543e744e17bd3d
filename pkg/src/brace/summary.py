"""Point estimates from a chain trace.

Coefficients are summarized by posterior means and equal-tailed credible
intervals; a feature is selected when its interval excludes zero. A single
clustering is found by greedy minimization of the posterior expected Binder
or variation-of-information loss over the sampled labellings.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidInputError

LOSSES = ("binder", "vi")


@dataclass(frozen=True)
class PosteriorSummary:
    beta_mean: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    selected: np.ndarray
    inclusion_prob: np.ndarray
    level: float
    point_partition: np.ndarray = None

    def to_dict(self, feature_names=None):
        names = list(feature_names) if feature_names is not None else [
            f"f{j + 1}" for j in range(self.beta_mean.size)]
        out = {
            "level": self.level,
            "feature_names": names,
            "beta_mean": self.beta_mean.tolist(),
            "ci_lower": self.ci_lower.tolist(),
            "ci_upper": self.ci_upper.tolist(),
            "inclusion_prob": self.inclusion_prob.tolist(),
            "selected": [n for n, s in zip(names, self.selected) if s],
        }
        if self.point_partition is not None:
            out["partition"] = self.point_partition.tolist()
            out["n_nonzero_clusters"] = int(self.point_partition.max(initial=0))
        return out


def _check_trace(trace):
    if trace is None or len(trace) == 0:
        raise InvalidInputError("trace is empty")


def credible_interval_select(trace, level=0.95):
    """Posterior means, equal-tailed intervals, inclusion probabilities and selection."""
    _check_trace(trace)
    if not 0 < level < 1:
        raise InvalidInputError(f"level must lie in (0, 1), got {level}")
    beta = np.asarray(trace.beta, dtype=float)
    tail = 0.5 * (1.0 - level)
    # inverse empirical CDF: bounds are always sampled values, so a zero draw
    # stays inside the interval as the level approaches one
    lower, upper = np.quantile(beta, [tail, 1.0 - tail], axis=0, method="inverted_cdf")
    selected = (lower > 0) | (upper < 0)
    return PosteriorSummary(
        beta_mean=beta.mean(axis=0),
        ci_lower=lower,
        ci_upper=upper,
        selected=selected,
        inclusion_prob=np.mean(np.asarray(trace.z) != 0, axis=0),
        level=level,
    )


def _labels_of(trace):
    return np.asarray(trace.z if hasattr(trace, "z") else trace)


def coclustering_matrix(trace):
    """Fraction of samples in which each pair of features shares a label (spike included)."""
    labels = _labels_of(trace)
    if labels.ndim != 2 or labels.shape[0] == 0:
        raise InvalidInputError("trace is empty")
    S, p = labels.shape
    counts = np.zeros((p, p))
    for z in labels:
        counts += z[:, None] == z[None, :]
    return counts / S


def _xlogx(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = x[pos] * np.log(x[pos])
    return out


def binder_expected_loss(labels, P):
    """Posterior expected Binder loss with unit costs, counted over unordered pairs."""
    labels = np.asarray(labels)
    same = labels[:, None] == labels[None, :]
    iu = np.triu_indices(labels.size, k=1)
    return float(np.sum(np.where(same, 1.0 - P, P)[iu]))


def vi_expected_loss(labels, samples):
    """Average variation of information (natural log) between ``labels`` and each sample."""
    samples = np.asarray(samples)
    zs = np.apply_along_axis(_compact, 1, samples) if samples.shape[0] else samples
    return _vi_against_compacted(labels, zs)


def _vi_against_compacted(labels, zs):
    labels = _compact(np.asarray(labels))
    S, p = zs.shape
    n_c, n_z = int(labels.max()) + 1, int(zs.max()) + 1
    rows = np.repeat(np.arange(S), p)
    flat = (rows * n_c + np.tile(labels, S)) * n_z + zs.ravel()
    joint = np.bincount(flat, minlength=S * n_c * n_z).reshape(S, n_c, n_z)
    h_joint = _xlogx(joint).sum(axis=(1, 2))
    h_c = _xlogx(joint.sum(axis=2)).sum(axis=1)
    h_z = _xlogx(joint.sum(axis=1)).sum(axis=1)
    # VI = (sum phi(n_c) + sum phi(n_z) - 2 sum phi(n_cz)) / n
    return float(np.mean(h_c + h_z - 2.0 * h_joint) / p)


class _BinderObjective:
    """Change in expected Binder loss from placing one group of items."""

    def __init__(self, P, sizes):
        self.W = np.outer(sizes, sizes) * (P - 0.5)
        np.fill_diagonal(self.W, 0.0)

    def start(self, labels, n_clusters):
        self.onehot = np.zeros((labels.size, n_clusters))
        assigned = np.flatnonzero(labels >= 0)
        self.onehot[assigned, labels[assigned]] = 1.0

    def costs(self, a):
        return np.append(-(self.W[a] @ self.onehot), 0.0)

    def insert(self, a, k):
        if k == self.onehot.shape[1]:
            self.onehot = np.column_stack([self.onehot, np.zeros(self.onehot.shape[0])])
        self.onehot[a, k] = 1.0

    def remove(self, a, k):
        self.onehot[a, k] = 0.0

    def drop(self, k):
        self.onehot = np.delete(self.onehot, k, axis=1)


class _VIObjective:
    """Change in expected variation of information from placing one group.

    Up to constants, ``n E[VI] = sum_k phi(n_k) - 2 mean_s sum_kl phi(n_kl^s)``
    with ``phi(x) = x log x`` and ``n_kl^s`` the joint counts with sample ``s``.
    """

    def __init__(self, group_labels, sizes):
        self.L = group_labels  # S x m
        self.sizes = np.asarray(sizes, dtype=float)
        self.rows = np.arange(group_labels.shape[0])
        self.n_lab = int(group_labels.max()) + 1

    def start(self, labels, n_clusters):
        self.size = np.zeros(n_clusters)
        self.joint = np.zeros((self.rows.size, n_clusters, self.n_lab))
        for a in np.flatnonzero(labels >= 0):
            self.insert(a, labels[a])

    def costs(self, a):
        w = self.sizes[a]
        d_marg = _xlogx(self.size + w) - _xlogx(self.size)
        cur = self.joint[self.rows, :, self.L[:, a]]
        d_joint = (_xlogx(cur + w) - _xlogx(cur)).mean(axis=0)
        return np.append(d_marg - 2.0 * d_joint, -_xlogx(w))

    def insert(self, a, k):
        if k == self.size.size:
            self.size = np.append(self.size, 0.0)
            pad = np.zeros((self.rows.size, 1, self.n_lab))
            self.joint = np.concatenate([self.joint, pad], axis=1)
        w = self.sizes[a]
        self.size[k] += w
        self.joint[self.rows, k, self.L[:, a]] += w

    def remove(self, a, k):
        w = self.sizes[a]
        self.size[k] -= w
        self.joint[self.rows, k, self.L[:, a]] -= w

    def drop(self, k):
        self.size = np.delete(self.size, k)
        self.joint = np.delete(self.joint, k, axis=1)


def _group_items(labels):
    """Merge items whose labels agree in every sample (co-clustering probability 1).

    Returns the group of each item, group sizes and one representative item per
    group; groups are numbered by first appearance.
    """
    _, first, inverse = np.unique(labels.T, axis=0, return_index=True, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(first.size)
    group = rank[inverse]
    return group, np.bincount(group), np.sort(first)


def _compact(labels):
    """Relabel to ``0..K-1`` by order of first appearance."""
    labels = np.asarray(labels)
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(first.size)
    return rank[np.asarray(inverse).ravel()]


def _local_search(obj, labels, order, forbid, max_sweeps=100):
    """Sequentially allocate unassigned groups, then reassign one group at a time.

    A group is never placed in a cluster holding a group it never shared a
    label with (``forbid``).
    """
    labels = labels.copy()
    n_clusters = int(labels.max()) + 1 if np.any(labels >= 0) else 0
    obj.start(labels, n_clusters)

    def masked_costs(a):
        costs = obj.costs(a)
        clash = forbid[a] & (labels >= 0)
        costs[np.unique(labels[clash])] = np.inf
        return costs

    for a in order:
        if labels[a] < 0:
            k = int(np.argmin(masked_costs(a)))
            obj.insert(a, k)
            labels[a] = k
            n_clusters = max(n_clusters, k + 1)
    for _ in range(max_sweeps):
        changed = False
        for a in order:
            home = labels[a]
            obj.remove(a, home)
            labels[a] = -1
            if not np.any(labels == home):
                obj.drop(home)
                labels[labels > home] -= 1
                n_clusters -= 1
                home = n_clusters
            costs = masked_costs(a)
            k = int(np.argmin(costs))
            if costs[k] < costs[home] - 1e-10:
                changed = True
            else:
                k = home
            obj.insert(a, k)
            labels[a] = k
            n_clusters = max(n_clusters, k + 1)
        if not changed:
            break
    return labels


def point_partition(trace, loss="binder", restarts=10, rng=None):
    """Single clustering minimizing the posterior expected loss.

    Candidates are ``restarts`` randomized greedy allocations plus the best
    sampled labelling, each refined by reassignment sweeps; the candidate with
    the smallest expected loss wins. The result is never worse than any sampled
    labelling, never separates features that share a label in every sample, and
    never joins features that never share one.

    Parameters
    ----------
    trace : ChainTrace or array of shape (n_samples, p)
        Sampled labels; the spike (label 0) is an ordinary cluster here.
    loss : {"binder", "vi"}
    restarts : int
    rng : numpy.random.Generator or int, optional

    Returns
    -------
    ndarray of shape (p,)
        Labels ``0..K-1`` in order of first appearance.
    """
    if loss not in LOSSES:
        raise InvalidInputError(f"loss must be one of {LOSSES}, got {loss!r}")
    if restarts < 1:
        raise InvalidInputError("restarts must be positive")
    samples = _labels_of(trace)
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise InvalidInputError("trace is empty")
    rng = np.random.default_rng(rng)
    P = coclustering_matrix(samples)
    group, sizes, reps = _group_items(samples)
    m = sizes.size
    Pg = P[np.ix_(reps, reps)]
    forbid = Pg == 0
    unique_samples = np.unique(np.apply_along_axis(_compact, 1, samples), axis=0)

    if loss == "binder":
        def make():
            return _BinderObjective(Pg, sizes)

        def expected(labels):
            return binder_expected_loss(labels, P)
    else:
        group_samples = np.apply_along_axis(_compact, 1, samples[:, reps])

        def make():
            return _VIObjective(group_samples, sizes)

        compacted = np.apply_along_axis(_compact, 1, samples)

        def expected(labels):
            return _vi_against_compacted(labels, compacted)

    sample_losses = [expected(s) for s in unique_samples]
    best_sample = unique_samples[int(np.argmin(sample_losses))]
    candidates = [best_sample]
    candidates.append(_local_search(make(), best_sample[reps], np.arange(m), forbid)[group])
    for _ in range(restarts):
        order = rng.permutation(m)
        start = np.full(m, -1, dtype=np.int64)
        candidates.append(_local_search(make(), start, order, forbid)[group])
    losses = [expected(c) for c in candidates]
    return _compact(candidates[int(np.argmin(losses))])


def summarize(trace, level=0.95, loss="binder", restarts=10, rng=None):
    """Credible-interval selection plus the reported clustering.

    The reported clustering is :func:`point_partition` with every unselected
    feature moved to the spike: label 0 is the spike and selected features are
    numbered ``1..K`` by first appearance.
    """
    summary = credible_interval_select(trace, level)
    raw = point_partition(trace, loss=loss, restarts=restarts, rng=rng)
    reported = np.zeros(raw.size, dtype=np.int64)
    sel = summary.selected
    if np.any(sel):
        reported[sel] = _compact(raw[sel]) + 1
    return PosteriorSummary(
        beta_mean=summary.beta_mean,
        ci_lower=summary.ci_lower,
        ci_upper=summary.ci_upper,
        selected=summary.selected,
        inclusion_prob=summary.inclusion_prob,
        level=level,
        point_partition=reported,
    )
