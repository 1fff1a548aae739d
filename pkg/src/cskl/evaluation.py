"""Risks, classical baselines, and recovery metrics."""
import math

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import logsumexp

from . import _accel
from .core import (
    DiracMixture,
    DimensionMismatch,
    EmptyDataset,
    GaussianMixture,
    InvalidParameter,
    Subspace,
    as_dataset,
    make_rng,
)

LLOYD_MAX_ITERS = 300
EM_MAX_ITERS = 500
EM_REL_TOL = 1e-9


def _centroids_of(h):
    if isinstance(h, DiracMixture):
        return np.asarray(h.centroids)
    if isinstance(h, GaussianMixture):
        return np.asarray(h.means)
    return np.atleast_2d(np.asarray(h, dtype=np.float64))


def clustering_risk(data, h, p: int = 2, chunk_size: int = 65536) -> float:
    """Mean over samples of min_l |x - c_l|^p (p=2: k-means, p=1: k-medians)."""
    if p not in (1, 2):
        raise InvalidParameter("p must be 1 or 2")
    data = as_dataset(data)
    C = _centroids_of(h)
    if C.shape[1] != data.dim:
        raise DimensionMismatch("centroid dimension does not match the data")
    total, n = 0.0, 0
    parts = []
    for X in data.chunks(chunk_size):
        _, d2 = _accel.nearest_centroids(X, C)
        parts.append(np.sum(d2 if p == 2 else np.sqrt(d2)))
        n += X.shape[0]
    if n == 0:
        raise EmptyDataset("risk of an empty dataset is undefined")
    total = math.fsum(parts)
    return total / n


def gaussian_logpdf(X, means, cov):
    """(n, k) matrix of log N(x_i; mu_l, cov)."""
    d = X.shape[1]
    chol = np.linalg.cholesky(cov)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    diff = X[:, None, :] - means[None, :, :]
    z = np.linalg.solve(chol, diff.reshape(-1, d).T).T.reshape(diff.shape)
    return -0.5 * (np.einsum("nkd,nkd->nk", z, z) + logdet + d * math.log(2 * math.pi))


def gmm_negative_log_likelihood(data, h: GaussianMixture, chunk_size: int = 65536) -> float:
    """Average -log sum_l alpha_l N(x; c_l, Sigma), via log-sum-exp."""
    data = as_dataset(data)
    if h.dim != data.dim:
        raise DimensionMismatch("mixture dimension does not match the data")
    with np.errstate(divide="ignore"):
        logw = np.log(h.weights)
    parts, n = [], 0
    for X in data.chunks(chunk_size):
        parts.append(-logsumexp(gaussian_logpdf(X, h.means, h.covariance) + logw, axis=1).sum())
        n += X.shape[0]
    if n == 0:
        raise EmptyDataset("likelihood of an empty dataset is undefined")
    return math.fsum(parts) / n


def pca_risk(data, h: Subspace, chunk_size: int = 65536) -> float:
    """Mean squared norm of the residual after projecting onto the subspace."""
    data = as_dataset(data)
    B = np.asarray(h.basis)
    if B.shape[0] != data.dim:
        raise DimensionMismatch("subspace dimension does not match the data")
    parts, n = [], 0
    for X in data.chunks(chunk_size):
        R = X - (X @ B) @ B.T
        parts.append(np.einsum("nd,nd->", R, R))
        n += X.shape[0]
    if n == 0:
        raise EmptyDataset("risk of an empty dataset is undefined")
    return math.fsum(parts) / n


def second_moment(data) -> np.ndarray:
    X = as_dataset(data).to_array()
    if X.shape[0] == 0:
        raise EmptyDataset("empty dataset")
    return X.T @ X / X.shape[0]


# ------------------------------------------------------------------ baselines

def _array(data):
    X = as_dataset(data).to_array()
    if X.shape[0] == 0:
        raise EmptyDataset("empty dataset")
    return X


def kmeans_plusplus(X, k, rng):
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers[i] = X[idx]
        d2 = np.minimum(d2, np.sum((X - centers[i]) ** 2, axis=1))
    return centers


def _lloyd_once(X, C):
    labels = None
    for _ in range(LLOYD_MAX_ITERS):
        new, d2 = _accel.nearest_centroids(X, C)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        counts = np.bincount(labels, minlength=C.shape[0])
        sums = np.zeros_like(C)
        np.add.at(sums, labels, X)
        empty = counts == 0
        C = np.where(empty[:, None], C, sums / np.maximum(counts, 1)[:, None])
        if empty.any():
            # reseed empty clusters at the worst-served points
            far = np.argsort(d2, kind="stable")[::-1][: empty.sum()]
            C[empty] = X[far]
    labels, d2 = _accel.nearest_centroids(X, C)
    return C, labels, d2.mean()


def baseline_lloyd(data, k: int, restarts: int = 10, seed: int = 0) -> DiracMixture:
    """Lloyd's algorithm from k-means++ seeds; best of ``restarts`` runs."""
    X = _array(data)
    if k < 1 or k > X.shape[0]:
        raise InvalidParameter(f"need 1 <= k <= n, got k={k}, n={X.shape[0]}")
    rng = make_rng(seed)
    best = None
    for _ in range(max(1, restarts)):
        C, labels, risk = _lloyd_once(X, kmeans_plusplus(X, k, rng))
        if best is None or risk < best[2]:
            best = (C, labels, risk)
    C, labels, _ = best
    w = np.bincount(labels, minlength=k) / X.shape[0]
    return DiracMixture(C, w / w.sum())


def baseline_em(data, k: int, Sigma, restarts: int = 5, seed: int = 0) -> GaussianMixture:
    """EM for a k-GMM with known shared covariance (means and weights only)."""
    X = _array(data)
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=np.float64))
    if k < 1 or k > X.shape[0]:
        raise InvalidParameter(f"need 1 <= k <= n, got k={k}, n={X.shape[0]}")
    rng = make_rng(seed)
    best = None
    for _ in range(max(1, restarts)):
        mu = kmeans_plusplus(X, k, rng)
        w = np.full(k, 1.0 / k)
        prev = -np.inf
        for _ in range(EM_MAX_ITERS):
            with np.errstate(divide="ignore"):
                logp = gaussian_logpdf(X, mu, Sigma) + np.log(w)
            norm = logsumexp(logp, axis=1)
            ll = norm.mean()
            resp = np.exp(logp - norm[:, None])
            nk = resp.sum(axis=0)
            w = nk / nk.sum()
            alive = nk > 0
            mu[alive] = (resp[:, alive].T @ X) / nk[alive, None]
            if np.isfinite(prev) and abs(ll - prev) <= EM_REL_TOL * abs(prev):
                break
            prev = ll
        if best is None or ll > best[0]:
            best = (ll, mu.copy(), w.copy())
    return GaussianMixture(best[1], best[2] / best[2].sum(), Sigma)


def baseline_exact_pca(data, k: int) -> Subspace:
    """Top-k eigenvectors of the empirical second-moment matrix."""
    from .decoders import top_subspace

    S = second_moment(data)
    if not 1 <= k <= S.shape[0]:
        raise InvalidParameter("need 1 <= k <= d")
    return top_subspace(S, k)


# ------------------------------------------------------------------ metrics

def match_components(truth, estimate):
    """Optimal one-to-one matching of components.

    Returns ``(perm, dist)`` where ``perm[i]`` is the estimate index matched to
    truth component i (-1 when unmatched) and ``dist[i]`` the Euclidean (Diracs,
    arrays) or Mahalanobis (Gaussian mixtures) distance, inf when unmatched.
    """
    T, E = _centroids_of(truth), _centroids_of(estimate)
    if T.shape[1] != E.shape[1]:
        raise DimensionMismatch("component dimensions differ")
    diff = T[:, None, :] - E[None, :, :]
    if isinstance(truth, GaussianMixture):
        D = np.sqrt(np.einsum("ijd,de,ije->ij", diff, np.linalg.inv(truth.covariance), diff))
    else:
        D = np.linalg.norm(diff, axis=-1)
    rows, cols = linear_sum_assignment(D)
    perm = np.full(T.shape[0], -1, dtype=np.int64)
    dist = np.full(T.shape[0], np.inf)
    perm[rows] = cols
    dist[rows] = D[rows, cols]
    return perm, dist


def separate_centroids(h: DiracMixture, eps: float) -> DiracMixture:
    """Greedy thinning to a 2 eps-separated set.

    Centroids are visited in order; one within 2 eps of an already kept centroid is
    dropped and its weight moved to that neighbour. Every dropped point has a kept
    point within 2 eps, which is what bounds the extra risk by 2 eps.
    """
    C = np.asarray(h.centroids)
    kept, w = [], []
    for c, a in zip(C, h.weights):
        for i, q in enumerate(kept):
            if np.linalg.norm(c - q) < 2 * eps:
                w[i] += a
                break
        else:
            kept.append(c)
            w.append(a)
    w = np.array(w)
    return DiracMixture(np.array(kept), w / w.sum())


def empirical_rip_delta(projectors, rank: int, trials: int = 2000, seed: int = 0, extra=()) -> float:
    """max |‖M(X)‖^2/‖X‖_F^2 - 1| over random symmetric matrices of rank <= ``rank``.

    ``extra`` adds specific matrices (e.g. differences of interest) to the probe set.
    """
    L = np.asarray(projectors)
    m, d, _ = L.shape
    A = L.reshape(m, d * d)
    rng = make_rng(seed)
    worst = 0.0
    probes = list(extra)
    for _ in range(trials):
        U = rng.standard_normal((d, rank))
        s = rng.standard_normal(rank)
        probes.append((U * s) @ U.T)
    for M in probes:
        nrm = np.linalg.norm(M)
        if nrm == 0:
            continue
        worst = max(worst, abs(np.sum((A @ M.ravel()) ** 2) / nrm ** 2 - 1.0))
    return worst


def pca_bound_constants(k: int, delta: float):
    """(C1, C2) of the compressive PCA excess-risk bound for RIP constant delta."""
    if not 0 <= delta < 1:
        raise InvalidParameter("delta must lie in [0, 1)")
    r = math.sqrt(2 * k)
    c1 = 2.0 + 4.0 * r * math.sqrt(1 + delta) / math.sqrt(1 - delta)
    c2 = 4.0 * r / math.sqrt(1 - delta)
    return c1, c2
