"""Hot loops: Fourier moment accumulation and nearest-centroid search.

Each kernel has a numba implementation and a numpy implementation with the
same signature. The public names (``fourier_chunk_sums``,
``nearest_centroids``) point at the numba versions unless ``CSKL_NUMBA=0``.
"""
import numpy as np

from ._config import USE_NUMBA

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None
else:
    import os as _os

    if "NUMBA_THREADING_LAYER" not in _os.environ:
        # the bundled TBB is often too old and only produces a warning
        numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

HAVE_NUMBA = numba is not None


# ---------------------------------------------------------------- numpy path

def fourier_chunk_sums_numpy(X, omegas):
    """Column sums of cos(X @ omegas.T) and sin(X @ omegas.T).

    Parameters
    ----------
    X : (b, d) float64
    omegas : (m, d) float64

    Returns
    -------
    (cos_sum, sin_sum) : two (m,) float64 arrays
    """
    phase = X @ omegas.T
    # np.sum on a contiguous axis uses pairwise summation
    return np.cos(phase).sum(axis=0), np.sin(phase).sum(axis=0)


def nearest_centroids_numpy(X, C):
    """Index of the closest row of C for every row of X, and the squared distance."""
    n = X.shape[0]
    labels = np.empty(n, dtype=np.int64)
    best = np.empty(n)
    step = max(1, 2 ** 20 // max(1, C.shape[0] * X.shape[1]))
    for s in range(0, n, step):
        diff = X[s:s + step, None, :] - C[None, :, :]
        d2 = np.einsum("nkd,nkd->nk", diff, diff)
        lab = np.argmin(d2, axis=1)  # first minimum on ties
        labels[s:s + step] = lab
        best[s:s + step] = d2[np.arange(lab.size), lab]
    return labels, best


# ---------------------------------------------------------------- numba path

if HAVE_NUMBA:

    @numba.njit(parallel=True, cache=True, fastmath=False)
    def fourier_chunk_sums_numba(X, omegas):
        b, d = X.shape
        m = omegas.shape[0]
        cos_sum = np.zeros(m)
        sin_sum = np.zeros(m)
        for j in numba.prange(m):
            sc = 0.0
            cc = 0.0
            ss = 0.0
            cs = 0.0
            for i in range(b):
                t = 0.0
                for q in range(d):
                    t += omegas[j, q] * X[i, q]
                # Kahan summation keeps the error independent of b
                yc = np.cos(t) - cc
                tc = sc + yc
                cc = (tc - sc) - yc
                sc = tc
                ys = np.sin(t) - cs
                ts = ss + ys
                cs = (ts - ss) - ys
                ss = ts
            cos_sum[j] = sc
            sin_sum[j] = ss
        return cos_sum, sin_sum

    @numba.njit(parallel=True, cache=True)
    def nearest_centroids_numba(X, C):
        n, d = X.shape
        k = C.shape[0]
        labels = np.empty(n, dtype=np.int64)
        best = np.empty(n)
        for i in numba.prange(n):
            bl = 0
            bd = np.inf
            for l in range(k):
                s = 0.0
                for q in range(d):
                    t = X[i, q] - C[l, q]
                    s += t * t
                if s < bd:
                    bd = s
                    bl = l
            labels[i] = bl
            best[i] = bd
        return labels, best

else:  # pragma: no cover
    fourier_chunk_sums_numba = fourier_chunk_sums_numpy
    nearest_centroids_numba = nearest_centroids_numpy


def backend():
    """Name of the active kernel backend."""
    return "numba" if (USE_NUMBA and HAVE_NUMBA) else "numpy"


def _prep(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def fourier_chunk_sums(X, omegas):
    X, omegas = _prep(X), _prep(omegas)
    if backend() == "numba":
        return fourier_chunk_sums_numba(X, omegas)
    return fourier_chunk_sums_numpy(X, omegas)


def nearest_centroids(X, C):
    X, C = _prep(X), _prep(C)
    if backend() == "numba":
        return nearest_centroids_numba(X, C)
    return nearest_centroids_numpy(X, C)
