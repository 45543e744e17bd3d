"""Collapsed marginal likelihood of the response given cluster labels.

The cluster values ``theta`` carry a ``N(0, gamma2 I)`` prior restricted to the
hyperplane ``f^T theta = 0`` (``f`` = cluster sizes). Eliminating the last
coordinate, ``theta_K = -f*^T theta* / f_K``, turns both the prior normalizer and
the likelihood integral into unconstrained Gaussian integrals over
``theta* = theta[:-1]``:

    log f(y | .) = -n/2 log(2 pi s2) + (K-1)/2 log(s2/g2) - 1/2 log det A*
                   + 1/2 log(sum f_k^2 / f_K^2) - (y'y - b~' A*^-1 b~) / (2 s2)

with ``A = Xz'Xz + (s2/g2) I``, ``b = Xz'y`` and ``A*``, ``b~`` the reduced
quadratic. Everything is evaluated from the sufficient statistics
``C = Xz'Xz``, ``d = Xz'y`` and ``y'y`` so callers can update them incrementally.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidInputError, NumericalError

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class ClusterFrequencies:
    f: np.ndarray
    p0: int

    @property
    def K(self):
        return int(self.f.size)

    @property
    def p_z(self):
        return int(self.f.sum())


@dataclass(frozen=True)
class ReducedQuadratic:
    A_star: np.ndarray
    b_tilde: np.ndarray


def compact_labels(z):
    """Renumber nonzero labels to ``1..K`` preserving their order; 0 stays 0."""
    z = np.asarray(z, dtype=np.int64)
    if np.any(z < 0):
        raise InvalidInputError("labels must be nonnegative")
    out = np.zeros_like(z)
    nz = z != 0
    if np.any(nz):
        _, inv = np.unique(z[nz], return_inverse=True)
        out[nz] = inv + 1
    return out


def cluster_frequencies(z):
    """Sizes of the nonzero clusters (after compaction) and of the spike."""
    z = compact_labels(z)
    K = int(z.max()) if z.size else 0
    f = np.bincount(z, minlength=K + 1)[1:]
    if np.any(f == 0):
        raise AssertionError("empty nonzero cluster after compaction")
    return ClusterFrequencies(f.astype(np.int64), int(np.sum(z == 0)))


def log_det_B(f):
    """``log det(I + f* f*^T / f_K^2) = log(sum f_k^2) - 2 log f_K``."""
    f = np.asarray(f.f if isinstance(f, ClusterFrequencies) else f, dtype=float)
    if f.size == 0:
        raise InvalidInputError("need at least one nonzero cluster")
    return float(np.log(np.sum(f * f)) - 2.0 * np.log(f[-1]))


def membership_matrix(z):
    """``p x K`` 0/1 matrix with ``Z[j, k-1] = 1`` iff ``z_j = k`` (labels compacted)."""
    z = compact_labels(z)
    K = int(z.max()) if z.size else 0
    Z = np.zeros((z.size, K))
    nz = np.flatnonzero(z)
    Z[nz, z[nz] - 1] = 1.0
    return Z


def reduced_quadratic(C, d, f, sigma2, gamma2):
    """``A*`` and ``b~`` after eliminating the last cluster value.

    Leading axes of ``C`` (``... x K x K``), ``d`` and ``f`` (``... x K``) are
    treated as a batch.
    """
    C = np.asarray(C, dtype=float)
    d = np.asarray(d, dtype=float)
    f = np.asarray(f, dtype=float)
    K = C.shape[-1]
    A = C + (sigma2 / gamma2) * np.eye(K)
    fs = f[..., :-1]
    fK = f[..., -1][..., None]
    A11 = A[..., :-1, :-1]
    a12 = A[..., :-1, -1] / fK
    aKK = A[..., -1, -1][..., None, None] / (fK[..., None] ** 2)
    cross = a12[..., :, None] * fs[..., None, :]
    A_star = A11 - cross - np.swapaxes(cross, -1, -2) + aKK * (fs[..., :, None] * fs[..., None, :])
    b_tilde = d[..., :-1] - (d[..., -1][..., None] / fK) * fs
    return ReducedQuadratic(A_star, b_tilde)


def null_log_marginal(yty, n, sigma2):
    """``log N(y; 0, sigma2 I)``; the value for zero or one nonzero cluster."""
    return -0.5 * n * (LOG_2PI + np.log(sigma2)) - 0.5 * yty / sigma2


def log_marginal_from_stats(C, d, f, yty, n, sigma2, gamma2):
    """Collapsed log marginal from sufficient statistics.

    Parameters
    ----------
    C : array (..., K, K)
        ``Xz^T Xz``.
    d : array (..., K)
        ``Xz^T y``.
    f : array (..., K)
        Cluster sizes.
    yty : float
    n : int
    sigma2, gamma2 : float

    Returns
    -------
    float or ndarray of shape ``C.shape[:-2]``
    """
    C = np.asarray(C, dtype=float)
    K = C.shape[-1]
    batch = C.shape[:-2]
    base = null_log_marginal(yty, n, sigma2)
    if K <= 1:
        return np.full(batch, base) if batch else float(base)
    red = reduced_quadratic(C, d, f, sigma2, gamma2)
    try:
        L = np.linalg.cholesky(red.A_star)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            "reduced precision matrix A* is not positive definite",
            {"sigma2": sigma2, "gamma2": gamma2, "f": np.asarray(f).tolist()},
        ) from exc
    logdet = 2.0 * np.sum(np.log(np.diagonal(L, axis1=-2, axis2=-1)), axis=-1)
    w = np.linalg.solve(L, red.b_tilde[..., None])[..., 0]
    quad = np.sum(w * w, axis=-1)
    f = np.asarray(f, dtype=float)
    log_b = np.log(np.sum(f * f, axis=-1)) - 2.0 * np.log(f[..., -1])
    out = (base + 0.5 * (K - 1) * np.log(sigma2 / gamma2) - 0.5 * logdet
           + 0.5 * log_b + 0.5 * quad / sigma2)
    if not np.all(np.isfinite(out)):
        raise NumericalError(
            "non-finite collapsed marginal",
            {"sigma2": sigma2, "gamma2": gamma2, "f": np.asarray(f).tolist()},
        )
    return out if batch else float(out)


def log_marginal_y(y, X, z, sigma2, gamma2):
    """Collapsed ``log f(y | sigma2, gamma2, z, X)`` with ``theta`` integrated out.

    Columns of ``X`` sharing a nonzero label are summed into ``Xz``; label 0
    columns are dropped. With zero or one nonzero cluster the constraint forces
    every coefficient to zero and the null density is returned.
    """
    y = np.asarray(y, dtype=float).ravel()
    X = np.asarray(X, dtype=float)
    if sigma2 <= 0 or gamma2 <= 0:
        raise InvalidInputError("variances must be positive")
    if X.shape != (y.size, np.size(z)):
        raise InvalidInputError(f"X shape {X.shape} inconsistent with y and z")
    Z = membership_matrix(z)
    Xz = X @ Z
    freq = cluster_frequencies(z)
    return log_marginal_from_stats(Xz.T @ Xz, Xz.T @ y, freq.f, float(y @ y), y.size,
                                   sigma2, gamma2)


class ClusterStats:
    """Sufficient statistics ``Xz'Xz``, ``Xz'y`` and cluster sizes for a labelling.

    Moving one feature between clusters updates the aggregates in ``O(K + p)``
    (``mode="gram"``, using a precomputed ``X'X``) or ``O(nK)``
    (``mode="columns"``, keeping the summed columns ``Xz``) instead of
    rebuilding ``Xz`` from scratch.

    Labels are kept compacted: nonzero clusters are ``1..K`` and the row/column
    order of ``C`` follows the label order.
    """

    def __init__(self, X, y, z, mode="gram"):
        if mode not in ("gram", "columns"):
            raise InvalidInputError(f"unknown statistics mode {mode!r}")
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.mode = mode
        self.n, self.p = self.X.shape
        self.v = self.X.T @ self.y
        self.yty = float(self.y @ self.y)
        if mode == "gram":
            self.G = self.X.T @ self.X
            self.diag = np.diagonal(self.G).copy()
        else:
            self.G = None
            self.diag = np.einsum("ij,ij->j", self.X, self.X)
        self.reset(z)

    @property
    def K(self):
        return int(self.f.size)

    def reset(self, z):
        """Rebuild every aggregate from scratch for labels ``z``."""
        self.z = compact_labels(z)
        K = int(self.z.max()) if self.z.size else 0
        self.f = np.bincount(self.z, minlength=K + 1)[1:].astype(np.int64)
        Z = membership_matrix(self.z)
        self.d = Z.T @ self.v
        if self.mode == "gram":
            self.C = Z.T @ self.G @ Z
        else:
            self.Xz = self.X @ Z
            self.C = self.Xz.T @ self.Xz

    def cross(self, j):
        """``Xz' x_j``: inner products of feature ``j`` with each summed cluster column."""
        if self.mode == "gram":
            return np.bincount(self.z, weights=self.G[j], minlength=self.K + 1)[1:]
        return self.X[:, j] @ self.Xz

    def remove(self, j):
        """Take feature ``j`` out of its cluster (it becomes unassigned, label 0)."""
        k = self.z[j]
        if k == 0:
            return
        c = k - 1
        g = self.cross(j)
        self.C[c, :] -= g
        self.C[:, c] -= g
        self.C[c, c] += self.diag[j]
        self.d[c] -= self.v[j]
        self.f[c] -= 1
        self.z[j] = 0
        if self.mode == "columns":
            self.Xz[:, c] -= self.X[:, j]
        if self.f[c] == 0:
            self._drop(c)

    def add(self, j, c):
        """Put unassigned feature ``j`` in cluster index ``c`` (``c == K`` opens a new one)."""
        g = self.cross(j)
        K = self.K
        if c == K:
            C = np.empty((K + 1, K + 1))
            C[:K, :K] = self.C
            C[K, :K] = g
            C[:K, K] = g
            C[K, K] = self.diag[j]
            self.C = C
            self.d = np.append(self.d, self.v[j])
            self.f = np.append(self.f, 1)
            if self.mode == "columns":
                self.Xz = np.column_stack([self.Xz, self.X[:, j]])
        else:
            self.C[c, :] += g
            self.C[:, c] += g
            self.C[c, c] += self.diag[j]
            self.d[c] += self.v[j]
            self.f[c] += 1
            if self.mode == "columns":
                self.Xz[:, c] += self.X[:, j]
        self.z[j] = c + 1

    def _drop(self, c):
        keep = np.arange(self.K) != c
        self.C = self.C[np.ix_(keep, keep)]
        self.d = self.d[keep]
        self.f = self.f[keep]
        if self.mode == "columns":
            self.Xz = self.Xz[:, keep]
        self.z[self.z > c + 1] -= 1

    def candidate_log_marginals(self, j, sigma2, gamma2):
        """Collapsed log marginal for each placement of unassigned feature ``j``.

        Returns an array of length ``K + 2``: spike, each existing cluster, and
        a new singleton cluster, in that order.

        Uses the projected form ``det A* = det(A) f'A^-1 f / f_K^2`` and
        ``b~'A*^-1 b~ = b'A^-1 b - (f'A^-1 b)^2 / f'A^-1 f`` so that every candidate
        is a rank-2 (existing cluster) or bordered (new cluster) update of the
        inverse for the labelling without ``j``.
        """
        if self.z[j] != 0:
            raise InvalidInputError(f"feature {j} must be unassigned before scoring")
        K = self.K
        n, yty = self.n, self.yty
        base = null_log_marginal(yty, n, sigma2)
        out = np.full(K + 2, base)
        if K == 0:
            return out
        r = sigma2 / gamma2
        g = self.cross(j)
        gjj = self.diag[j]
        vj = self.v[j]
        f = self.f.astype(float)
        d = self.d
        A0 = self.C + r * np.eye(K)
        try:
            L = np.linalg.cholesky(A0)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("cluster Gram matrix is not positive definite",
                                 {"sigma2": sigma2, "gamma2": gamma2, "f": self.f.tolist()}) from exc
        logdet0 = 2.0 * np.sum(np.log(np.diagonal(L)))
        M = np.linalg.inv(A0)
        mf, md, mg = np.stack([f, d, g]) @ M  # M is symmetric
        mkk = np.diagonal(M)
        fMf, dMd, fMd = f @ mf, d @ md, f @ md
        gMg, fMg, dMg = g @ mg, f @ mg, d @ mg
        ftf = f @ f
        log_r = np.log(r)

        def score(k_clusters, logdet, F, D, FD, sumsq):
            return (base + 0.5 * (k_clusters - 1) * log_r - 0.5 * logdet - 0.5 * np.log(F)
                    + 0.5 * np.log(sumsq) + 0.5 * (D - FD * FD / F) / sigma2)

        if K >= 2:
            out[0] = score(K, logdet0, fMf, dMd, fMd, ftf)
            # existing cluster k: A0 + e_k w' + w e_k', w = g + (gjj/2) e_k
            t11 = mkk
            t12 = mg + 0.5 * gjj * mkk
            t22 = gMg + gjj * mg + 0.25 * gjj * gjj * mkk
            s12 = 1.0 + t12
            detW = t11 * t22 - s12 * s12
            # a_k = f + e_k, c_k = d + vj e_k
            p1f = mf + mkk
            p1d = md + vj * mkk
            p2f = fMg + mg + 0.5 * gjj * p1f
            p2d = dMg + vj * mg + 0.5 * gjj * p1d

            def form(base_val, p1a, p2a, p1c, p2c):
                corr = (t22 * p1a * p1c - s12 * (p1a * p2c + p2a * p1c) + t11 * p2a * p2c) / detW
                return base_val - corr

            F = form(fMf + 2.0 * mf + mkk, p1f, p2f, p1f, p2f)
            D = form(dMd + 2.0 * vj * md + vj * vj * mkk, p1d, p2d, p1d, p2d)
            FD = form(fMd + vj * mf + md + vj * mkk, p1f, p2f, p1d, p2d)
            with np.errstate(invalid="ignore"):
                logdet = logdet0 + np.log(-detW)
            out[1:K + 1] = score(K, logdet, F, D, FD, ftf + 2.0 * f + 1.0)
        s = gjj + r - gMg
        a = fMg - 1.0
        c = dMg - vj
        out[K + 1] = score(K + 1, logdet0 + np.log(s), fMf + a * a / s, dMd + c * c / s,
                           fMd + a * c / s, ftf + 1.0)
        if not np.all(np.isfinite(out)):
            raise NumericalError(
                f"non-finite candidate marginal for feature {j}",
                {"sigma2": sigma2, "gamma2": gamma2, "f": self.f.tolist()},
            )
        return out

    def log_marginal(self, sigma2, gamma2):
        """Collapsed log marginal of the current labelling."""
        return log_marginal_from_stats(self.C, self.d, self.f, self.yty, self.n,
                                       sigma2, gamma2)


def naive_candidate_log_marginals(X, y, z, j, sigma2, gamma2):
    """Same output as :meth:`ClusterStats.candidate_log_marginals`, rebuilding ``Xz`` per candidate.

    Reference path for checking and benchmarking the cached statistics.
    """
    z = compact_labels(z)
    z[j] = 0
    z = compact_labels(z)
    K = int(z.max()) if z.size else 0
    out = np.empty(K + 2)
    for slot in range(K + 2):
        cand = z.copy()
        cand[j] = slot
        out[slot] = log_marginal_y(y, X, cand, sigma2, gamma2)
    return out
