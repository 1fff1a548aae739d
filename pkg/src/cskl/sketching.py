"""Empirical sketches, merging, and closed-form sketches of model distributions."""
import numpy as np

from . import _accel
from .core import (
    DiracMixture,
    DimensionMismatch,
    EmptyDataset,
    FeatureKind,
    FingerprintMismatch,
    FrequencyMatrix,
    GaussianMixture,
    InvalidParameter,
    Sketch,
    as_dataset,
)

DEFAULT_CHUNK = 4096


class _Compensated:
    """Neumaier summation of equally-shaped arrays."""

    def __init__(self, shape):
        self.total = np.zeros(shape)
        self.comp = np.zeros(shape)

    def add(self, x):
        t = self.total + x
        big = np.abs(self.total) >= np.abs(x)
        self.comp += np.where(big, (self.total - t) + x, (x - t) + self.total)
        self.total = t

    def result(self):
        return self.total + self.comp


def _require_fourier(freq):
    if not freq.kind.is_fourier:
        raise InvalidParameter("operation requires a Fourier feature scheme")


def feature_map(x, freq: FrequencyMatrix) -> np.ndarray:
    """Feature vector of one sample (shape (m,)) or of each row of a batch (shape (n, m))."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != freq.dim:
        raise DimensionMismatch(f"sample dimension {X.shape[1]} != scheme dimension {freq.dim}")
    if freq.kind is FeatureKind.QUADRATIC_MOMENT:
        out = np.einsum("jab,na,nb->nj", freq.projectors, X, X)
    else:
        out = freq.scale * np.exp(1j * (X @ freq.omegas.T))
    return out[0] if single else out


def _chunk_sum(X, freq):
    if freq.kind is FeatureKind.QUADRATIC_MOMENT:
        return X.T @ X
    c, s = _accel.fourier_chunk_sums(X, freq.omegas)
    return np.stack([c, s])


def sketch_dataset(data, freq: FrequencyMatrix, chunk_size: int = DEFAULT_CHUNK) -> Sketch:
    """One pass over ``data``; returns the mean feature vector with its sample count."""
    data = as_dataset(data)
    if data.dim != freq.dim:
        raise DimensionMismatch(f"dataset dimension {data.dim} != scheme dimension {freq.dim}")
    shape = (freq.dim, freq.dim) if freq.kind is FeatureKind.QUADRATIC_MOMENT else (2, freq.m)
    acc = _Compensated(shape)
    n = 0
    for X in data.chunks(chunk_size):
        acc.add(_chunk_sum(X, freq))
        n += X.shape[0]
    if n == 0:
        raise EmptyDataset("cannot sketch an empty dataset")
    total = acc.result() / n
    if freq.kind is FeatureKind.QUADRATIC_MOMENT:
        values = model_sketch_pca(total, freq)
    else:
        values = freq.scale * (total[0] + 1j * total[1])
    return Sketch(freq.fingerprint, values, n)


def merge(a: Sketch, b: Sketch) -> Sketch:
    """Sketch of the union of the two underlying datasets."""
    if a.scheme_fingerprint != b.scheme_fingerprint:
        raise FingerprintMismatch("cannot merge sketches from different schemes")
    n = a.count + b.count
    if n == 0:
        raise InvalidParameter("zero total count")
    values = (a.count * a.values + b.count * b.values) / n
    return Sketch(a.scheme_fingerprint, values, n)


def merge_all(sketches) -> Sketch:
    sketches = list(sketches)
    if not sketches:
        raise InvalidParameter("nothing to merge")
    out = sketches[0]
    for s in sketches[1:]:
        out = merge(out, s)
    return out


def as_sketch(values, freq: FrequencyMatrix, count: int = 1) -> Sketch:
    """Wrap a raw moment vector (e.g. a model sketch) as a Sketch of ``freq``."""
    values = np.asarray(values)
    if values.shape != (freq.m,):
        raise DimensionMismatch(f"expected {freq.m} sketch entries, got {values.shape}")
    return Sketch(freq.fingerprint, values, count)


def dirac_atoms(centroids, freq: FrequencyMatrix) -> np.ndarray:
    """(m, k) matrix whose columns are the feature vectors of the centroids."""
    _require_fourier(freq)
    C = np.atleast_2d(np.asarray(centroids, dtype=np.float64))
    if C.shape[1] != freq.dim:
        raise DimensionMismatch("centroid dimension does not match the scheme")
    return freq.scale[:, None] * np.exp(1j * (freq.omegas @ C.T))


def gaussian_damping(freq: FrequencyMatrix, covariance) -> np.ndarray:
    """exp(-omega_j^T Sigma omega_j / 2), the characteristic-function envelope."""
    return np.exp(-0.5 * np.einsum("jd,de,je->j", freq.omegas, covariance, freq.omegas))


def gmm_atoms(means, freq: FrequencyMatrix, covariance=None) -> np.ndarray:
    if freq.kind is not FeatureKind.PLAIN_FOURIER:
        raise InvalidParameter("Gaussian mixture sketches need plain Fourier features")
    cov = freq.scheme.covariance if covariance is None else covariance
    return dirac_atoms(means, freq) * gaussian_damping(freq, cov)[:, None]


def model_sketch_diracs(h: DiracMixture, freq: FrequencyMatrix) -> np.ndarray:
    return dirac_atoms(h.centroids, freq) @ h.weights


def model_sketch_gmm(h: GaussianMixture, freq: FrequencyMatrix) -> np.ndarray:
    if freq.kind is not FeatureKind.PLAIN_FOURIER:
        raise InvalidParameter("Gaussian mixture sketches need plain Fourier features")
    if h.dim != freq.dim:
        raise DimensionMismatch("mixture dimension does not match the scheme")
    if not np.allclose(h.covariance, freq.scheme.covariance, rtol=1e-12, atol=1e-12):
        raise InvalidParameter("mixture covariance differs from the scheme covariance")
    return gmm_atoms(h.means, freq) @ h.weights


def model_sketch_pca(S, freq) -> np.ndarray:
    """<L_j, S> for each projector; ``freq`` may also be a raw (m, d, d) projector stack."""
    L = freq.projectors if isinstance(freq, FrequencyMatrix) else np.asarray(freq)
    S = np.asarray(S, dtype=np.float64)
    if S.shape != L.shape[1:]:
        raise DimensionMismatch(f"matrix shape {S.shape} does not match projectors {L.shape[1:]}")
    return np.einsum("jab,ab->j", L, S)


def model_sketch(h, freq):
    """Dispatch on hypothesis type."""
    if isinstance(h, DiracMixture):
        return model_sketch_diracs(h, freq)
    if isinstance(h, GaussianMixture):
        return model_sketch_gmm(h, freq)
    return model_sketch_pca(h, freq)


def check_fourier_bounds(sketch: Sketch, freq: FrequencyMatrix, rtol: float = 1e-12) -> bool:
    """True when every entry is within its per-frequency amplitude."""
    _require_fourier(freq)
    return bool(np.all(np.abs(sketch.values) <= freq.scale * (1 + rtol)))
