"""Shared domain types: feature schemes, frequency draws, sketches, hypotheses."""
from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Tuple

import numpy as np

SIMPLEX_TOL = 1e-12
GEOM_SLACK = 1e-9
ORTHO_TOL = 1e-10


class CsklError(Exception):
    """Base class for errors raised by this package."""


class InvalidParameter(CsklError, ValueError):
    pass


class DimensionMismatch(CsklError, ValueError):
    pass


class FingerprintMismatch(CsklError):
    """Two objects were built from incompatible feature schemes."""


class EmptyDataset(CsklError, ValueError):
    pass


class NumericalFailure(CsklError, ArithmeticError):
    pass


class FeatureKind(enum.IntEnum):
    WEIGHTED_FOURIER = 0
    PLAIN_FOURIER = 1
    QUADRATIC_MOMENT = 2

    @property
    def is_fourier(self) -> bool:
        return self is not FeatureKind.QUADRATIC_MOMENT


class RngId(enum.IntEnum):
    PHILOX = 1
    PCG64 = 2


def make_rng(seed: int, rng_id: int = RngId.PHILOX) -> np.random.Generator:
    """Generator for a (seed, rng_id) pair; the bit stream is fixed by both."""
    rng_id = RngId(rng_id)
    if rng_id is RngId.PHILOX:
        return np.random.Generator(np.random.Philox(seed))
    return np.random.Generator(np.random.PCG64(seed))


def _frozen(a, dtype=np.float64) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def _check_spd(S: np.ndarray, name: str = "covariance") -> None:
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise InvalidParameter(f"{name} must be a square matrix, got shape {S.shape}")
    if not np.all(np.isfinite(S)) or not np.allclose(S, S.T, rtol=0, atol=1e-12 * max(1.0, np.abs(S).max())):
        raise InvalidParameter(f"{name} must be finite and symmetric")
    if np.linalg.eigvalsh(S).min() <= 0:
        raise InvalidParameter(f"{name} must be positive definite")


@dataclass(frozen=True, eq=False)
class FeatureScheme:
    """Everything needed to regenerate a sketching operator.

    ``lam`` is ignored (stored as 0) for quadratic moments; ``covariance`` is only
    meaningful for plain Fourier features.
    """

    kind: FeatureKind
    dim: int
    sketch_size: int
    lam: float = 0.0
    covariance: Optional[np.ndarray] = None
    seed: int = 0
    rng_id: RngId = RngId.PHILOX

    def __post_init__(self):
        object.__setattr__(self, "kind", FeatureKind(self.kind))
        object.__setattr__(self, "rng_id", RngId(self.rng_id))
        if int(self.dim) < 1 or int(self.sketch_size) < 1:
            raise InvalidParameter("dim and sketch_size must be positive")
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "sketch_size", int(self.sketch_size))
        if not 0 <= int(self.seed) < 2 ** 64:
            raise InvalidParameter("seed must fit in an unsigned 64-bit integer")
        object.__setattr__(self, "seed", int(self.seed))
        if self.kind.is_fourier:
            if not (np.isfinite(self.lam) and self.lam > 0):
                raise InvalidParameter(f"lambda must be positive, got {self.lam}")
        else:
            object.__setattr__(self, "lam", 0.0)
        object.__setattr__(self, "lam", float(self.lam))
        if self.kind is FeatureKind.PLAIN_FOURIER:
            if self.covariance is None:
                cov = np.eye(self.dim)
            else:
                cov = np.atleast_2d(np.asarray(self.covariance, dtype=np.float64))
            if cov.shape != (self.dim, self.dim):
                raise DimensionMismatch(f"covariance shape {cov.shape} does not match dim {self.dim}")
            _check_spd(cov)
            object.__setattr__(self, "covariance", _frozen(cov))
        else:
            object.__setattr__(self, "covariance", None)

    def fingerprint(self) -> bytes:
        return fingerprint(self)

    def compatible(self, other: "FeatureScheme") -> bool:
        return self.fingerprint() == other.fingerprint()


def fingerprint(scheme: FeatureScheme) -> bytes:
    """128-bit digest of the fields that determine the sketching operator."""
    if scheme.covariance is None:
        cov_hash = bytes(16)
    else:
        cov = np.ascontiguousarray(scheme.covariance, dtype="<f8")
        cov_hash = hashlib.blake2b(cov.tobytes(), digest_size=16).digest()
    head = struct.pack(
        "<BIIdQH",
        int(scheme.kind),
        scheme.dim,
        scheme.sketch_size,
        scheme.lam,
        scheme.seed,
        int(scheme.rng_id),
    )
    return hashlib.blake2b(b"cskl-scheme/1" + head + cov_hash, digest_size=16).digest()


@dataclass(frozen=True, eq=False)
class FrequencyMatrix:
    """Sampled feature parameters of one sketching operator.

    For Fourier kinds ``omegas`` holds one frequency per row and ``weights`` the
    per-frequency reweighting. For quadratic moments ``projectors`` holds the m
    symmetric d x d matrices and ``omegas`` is empty.
    """

    scheme: FeatureScheme
    omegas: np.ndarray
    weights: np.ndarray
    norm_const: float
    projectors: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "omegas", _frozen(self.omegas))
        object.__setattr__(self, "weights", _frozen(self.weights))
        if self.projectors is not None:
            object.__setattr__(self, "projectors", _frozen(self.projectors))
        m, d = self.scheme.sketch_size, self.scheme.dim
        if self.scheme.kind.is_fourier and self.omegas.shape != (m, d):
            raise DimensionMismatch(f"omegas must be {(m, d)}, got {self.omegas.shape}")
        if self.weights.shape != (m,) or not np.all(self.weights > 0):
            raise InvalidParameter("weights must be a positive length-m vector")

    @property
    def m(self) -> int:
        return self.scheme.sketch_size

    @property
    def dim(self) -> int:
        return self.scheme.dim

    @property
    def kind(self) -> FeatureKind:
        return self.scheme.kind

    @property
    def fingerprint(self) -> bytes:
        return self.scheme.fingerprint()

    @property
    def scale(self) -> np.ndarray:
        """Per-frequency amplitude norm_const / (sqrt(m) * w_j)."""
        return self.norm_const / (np.sqrt(self.m) * self.weights)


@dataclass(frozen=True, eq=False)
class Sketch:
    """Mean of the feature map over ``count`` samples."""

    scheme_fingerprint: bytes
    values: np.ndarray
    count: int

    def __post_init__(self):
        vals = np.asarray(self.values)
        dtype = np.complex128 if np.iscomplexobj(vals) else np.float64
        object.__setattr__(self, "values", _frozen(vals, dtype))
        if self.values.ndim != 1:
            raise DimensionMismatch("sketch values must be a vector")
        if not np.all(np.isfinite(self.values)):
            raise NumericalFailure("sketch contains non-finite entries")
        if int(self.count) < 1:
            raise InvalidParameter("a sketch must summarize at least one sample")
        object.__setattr__(self, "count", int(self.count))
        object.__setattr__(self, "scheme_fingerprint", bytes(self.scheme_fingerprint))

    @property
    def m(self) -> int:
        return self.values.shape[0]


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        return v.copy()
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    w = np.maximum(v - theta, 0.0)
    return w / w.sum()


def _check_simplex(w: np.ndarray) -> None:
    if w.ndim != 1 or np.any(w < 0) or abs(w.sum() - 1.0) > SIMPLEX_TOL:
        raise InvalidParameter(f"weights must lie on the simplex (sum={w.sum()!r}, min={w.min() if w.size else None!r})")


def pairwise_min_distance(P: np.ndarray, metric: Optional[np.ndarray] = None) -> float:
    """Smallest distance between distinct rows, Euclidean or Mahalanobis under ``metric``."""
    if P.shape[0] < 2:
        return np.inf
    diff = P[:, None, :] - P[None, :, :]
    if metric is None:
        d2 = np.einsum("ijd,ijd->ij", diff, diff)
    else:
        d2 = np.einsum("ijd,de,ije->ij", diff, np.linalg.inv(metric), diff)
    iu = np.triu_indices(P.shape[0], 1)
    return float(np.sqrt(d2[iu].min()))


def mahalanobis_norms(P: np.ndarray, cov: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("id,de,ie->i", P, np.linalg.inv(cov), P))


@dataclass(frozen=True, eq=False)
class DiracMixture:
    """Weighted centroids; ``constraint=(eps, R)`` asserts membership in the separated set."""

    centroids: np.ndarray
    weights: np.ndarray
    constraint: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centroids, dtype=np.float64))
        w = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        if c.shape[0] != w.shape[0] or c.shape[0] < 1:
            raise DimensionMismatch("need one weight per centroid and at least one centroid")
        _check_simplex(w)
        if self.constraint is not None:
            eps, R = self.constraint
            if pairwise_min_distance(c) < 2 * eps - GEOM_SLACK:
                raise InvalidParameter("centroids violate the 2*eps separation constraint")
            if np.linalg.norm(c, axis=1).max() > R + GEOM_SLACK:
                raise InvalidParameter("centroids violate the radius constraint")
        object.__setattr__(self, "centroids", _frozen(c))
        object.__setattr__(self, "weights", _frozen(w))

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Gaussians sharing one known covariance; constraints are Mahalanobis."""

    means: np.ndarray
    weights: np.ndarray
    covariance: np.ndarray
    constraint: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        mu = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        w = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=np.float64))
        if mu.shape[0] != w.shape[0] or mu.shape[0] < 1:
            raise DimensionMismatch("need one weight per mean and at least one mean")
        if cov.shape != (mu.shape[1], mu.shape[1]):
            raise DimensionMismatch("covariance does not match the mean dimension")
        _check_spd(cov)
        _check_simplex(w)
        if self.constraint is not None:
            eps, R = self.constraint
            if pairwise_min_distance(mu, cov) < 2 * eps - GEOM_SLACK:
                raise InvalidParameter("means violate the 2*eps Mahalanobis separation")
            if mahalanobis_norms(mu, cov).max() > R + GEOM_SLACK:
                raise InvalidParameter("means violate the Mahalanobis radius constraint")
        object.__setattr__(self, "means", _frozen(mu))
        object.__setattr__(self, "weights", _frozen(w))
        object.__setattr__(self, "covariance", _frozen(cov))

    @property
    def k(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


@dataclass(frozen=True, eq=False)
class Subspace:
    basis: np.ndarray

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.basis, dtype=np.float64))
        if B.shape[1] > B.shape[0]:
            raise DimensionMismatch("basis must be d x k with k <= d")
        if np.abs(B.T @ B - np.eye(B.shape[1])).max() > ORTHO_TOL:
            raise InvalidParameter("basis columns must be orthonormal")
        object.__setattr__(self, "basis", _frozen(B))

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T


@dataclass(frozen=True)
class KernelProfile:
    """Scalar kernel K(u) = exp(-u^2 / (2 sigma^2)) with its class constants."""

    sigma: float
    A: float
    B: float
    C: float
    c: float = 1.0

    @property
    def coherence_bound(self) -> float:
        return 8.0 * max(self.A, 2.0 * (self.B + self.C)) / min(self.c, 1.0)

    def __call__(self, u):
        u = np.asarray(u, dtype=np.float64)
        return np.exp(-(u * u) / (2.0 * self.sigma ** 2))


class Dataset:
    """A re-iterable stream of d-dimensional samples.

    ``source`` is a zero-argument callable returning an iterator of 2-D chunks;
    each call starts a fresh traversal. ``count`` may be None when unknown
    before a full pass.
    """

    def __init__(self, dim: int, source: Callable[[], Iterator[np.ndarray]], count: Optional[int] = None):
        if dim < 1:
            raise InvalidParameter("dim must be positive")
        self.dim = int(dim)
        self.count = count
        self._source = source

    @classmethod
    def from_array(cls, X) -> "Dataset":
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.ndim != 2:
            raise DimensionMismatch("expected an (n, d) array")
        X = _frozen(X)
        return cls(X.shape[1], lambda: iter((X,)), count=X.shape[0])

    def chunks(self, chunk_size: int = 4096) -> Iterator[np.ndarray]:
        """Yield (b, dim) float64 blocks of at most ``chunk_size`` rows."""
        if chunk_size < 1:
            raise InvalidParameter("chunk_size must be positive")
        for block in self._source():
            block = np.atleast_2d(np.asarray(block, dtype=np.float64))
            if block.size == 0:
                continue
            if block.shape[1] != self.dim:
                raise DimensionMismatch(f"sample of length {block.shape[1]} in a dimension-{self.dim} dataset")
            for s in range(0, block.shape[0], chunk_size):
                yield block[s:s + chunk_size]

    def to_array(self) -> np.ndarray:
        parts = list(self.chunks(1 << 16))
        if not parts:
            return np.empty((0, self.dim))
        return np.concatenate(parts, axis=0)


def as_dataset(data) -> Dataset:
    return data if isinstance(data, Dataset) else Dataset.from_array(data)
