"""Learning hypotheses back from sketches.

Mixture decoders follow the compressive-learning OMP-with-replacement pattern:
greedily add the atom most correlated with the residual, refit nonnegative
weights, run a joint refinement, and after k atoms start replacing the weakest
one. Each atom is ``envelope * exp(i omega^T c)`` with a real per-frequency
envelope, which covers both Diracs (envelope = feature scale) and Gaussians with
a shared covariance (envelope also carries the characteristic-function decay).
"""
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.optimize

from .core import (
    DiracMixture,
    DimensionMismatch,
    FeatureKind,
    FingerprintMismatch,
    FrequencyMatrix,
    GaussianMixture,
    InvalidParameter,
    Sketch,
    Subspace,
    make_rng,
    project_simplex,
)
from .sketching import gaussian_damping

PRUNE_WEIGHT = 1e-8


@dataclass(frozen=True)
class DecoderOptions:
    restarts: int = 8
    max_outer_iters: Optional[int] = None  # None means 2k
    local_iters: int = 100
    refine_iters: int = 300
    tol: float = 1e-10
    enforce_constraints: bool = False
    seed: int = 0

    def __post_init__(self):
        counts = [self.restarts, self.local_iters, self.refine_iters]
        if self.max_outer_iters is not None:
            counts.append(self.max_outer_iters)
        if min(counts) < 1:
            raise InvalidParameter("decoder iteration counts must be >= 1")
        if not self.tol > 0:
            raise InvalidParameter("tol must be positive")


@dataclass
class DecodeResult:
    model: object
    residual: float
    history: List[float] = field(default_factory=list)

    def __iter__(self):
        # allows ``model, residual = decode_...(...)``
        return iter((self.model, self.residual))


def _stack(A):
    A = np.asarray(A)
    if np.iscomplexobj(A):
        return np.concatenate([A.real, A.imag], axis=0)
    return A


def nnls_weights(atoms, y, simplex: bool = False) -> np.ndarray:
    """Nonnegative (or simplex-constrained) least-squares weights.

    ``atoms`` is an (m, k) matrix of sketch vectors (or a list of them). Complex
    problems are solved on stacked real and imaginary parts. The simplex mode
    appends a heavily weighted sum-to-one row to the NNLS system, then
    renormalizes.
    """
    A = np.asarray(atoms)
    if A.ndim == 1:
        A = A[:, None]
    if isinstance(atoms, (list, tuple)):
        A = np.stack([np.asarray(a) for a in atoms], axis=1)
    if A.shape[1] < 1:
        raise InvalidParameter("need at least one atom")
    Ar = _stack(A)
    yr = _stack(np.asarray(y))
    if simplex:
        rho = 1e4 * max(1.0, np.linalg.norm(Ar, 2))
        Ar = np.vstack([Ar, rho * np.ones((1, Ar.shape[1]))])
        yr = np.concatenate([yr, [rho]])
    alpha, _ = scipy.optimize.nnls(Ar, yr, maxiter=50 * Ar.shape[1] + 100)
    if simplex:
        alpha = project_simplex(alpha) if alpha.sum() <= 0 else alpha / alpha.sum()
    return alpha


class _AtomFamily:
    """Atoms envelope * exp(i (omega S)^T z) in whitened coordinates z, c = S z."""

    def __init__(self, omegas, envelope, whitening):
        self.S = whitening
        self.W = omegas @ whitening  # frequencies acting on z
        self.env = envelope
        self.env_norm = np.linalg.norm(envelope)

    def atoms(self, Z):
        return self.env[:, None] * np.exp(1j * (self.W @ np.atleast_2d(Z).T))

    def correlation(self, z, r):
        """Negative normalized correlation and its gradient in z."""
        zj = self.env * np.exp(-1j * (self.W @ z)) * r
        f = -zj.sum().real / self.env_norm
        g = -(self.W.T @ zj.imag) / self.env_norm
        return f, g

    def objective(self, Z, alpha, y):
        """|y - sum alpha_l a(z_l)|^2, gradients in Z and alpha."""
        A = self.atoms(Z)
        r = y - A @ alpha
        f = np.vdot(r, r).real
        gz = -2.0 * alpha[:, None] * ((np.conj(A) * r[:, None]).imag.T @ self.W)
        ga = -2.0 * (np.conj(A).T @ r).real
        return f, gz, ga


class _GreedyDecoder:
    def __init__(self, family, y, k, eps, radius, opts):
        self.fam = family
        self.y = y
        self.k = k
        self.eps = eps
        self.R = radius
        self.opts = opts
        self.rng = make_rng(opts.seed)
        self.d = family.W.shape[1]
        self.ynorm = max(np.linalg.norm(y), 1e-300)

    # -- building blocks

    def _residual(self, Z, alpha):
        return np.linalg.norm(self.y - self.fam.atoms(Z) @ alpha) if len(alpha) else np.linalg.norm(self.y)

    def _ball_point(self):
        g = self.rng.standard_normal(self.d)
        return self.R * self.rng.random() ** (1.0 / self.d) * g / np.linalg.norm(g)

    def _find_atom(self, r):
        bounds = [(-self.R, self.R)] * self.d
        best, best_val = None, np.inf
        starts = [self._ball_point() for _ in range(self.opts.restarts)]
        for z0 in starts:
            res = scipy.optimize.minimize(
                self.fam.correlation, z0, args=(r,), jac=True, method="L-BFGS-B",
                bounds=bounds, options={"maxiter": self.opts.local_iters, "gtol": 1e-12, "ftol": 1e-15},
            )
            if res.fun < best_val:  # strict: ties keep the lowest restart index
                best, best_val = res.x, res.fun
        return best

    def _refine(self, Z, alpha, iters):
        n = len(alpha)
        d = self.d

        def fun(p):
            f, gz, ga = self.fam.objective(p[:n * d].reshape(n, d), p[n * d:], self.y)
            return f, np.concatenate([gz.ravel(), ga])

        bounds = [(-self.R, self.R)] * (n * d) + [(0.0, None)] * n
        p0 = np.concatenate([np.clip(Z, -self.R, self.R).ravel(), alpha])
        res = scipy.optimize.minimize(fun, p0, jac=True, method="L-BFGS-B", bounds=bounds,
                                      options={"maxiter": iters, "ftol": 1e-16, "gtol": 1e-14})
        Zn, an = res.x[:n * d].reshape(n, d), res.x[n * d:]
        if self._residual(Zn, an) <= self._residual(Z, alpha):
            return Zn, an
        return Z, alpha

    def _prune(self, Z, alpha):
        keep = alpha >= PRUNE_WEIGHT
        if not keep.any():
            keep[np.argmax(alpha)] = True
        return Z[keep], alpha[keep]

    # -- main loop

    def run(self):
        opts = self.opts
        Z = np.empty((0, self.d))
        alpha = np.empty(0)
        res = np.linalg.norm(self.y)
        history = [res]
        n_iter = opts.max_outer_iters or 2 * self.k
        for it in range(n_iter):
            r = self.y - (self.fam.atoms(Z) @ alpha if len(alpha) else 0.0)
            z_new = self._find_atom(r)
            Zc = np.vstack([Z, z_new])
            A = self.fam.atoms(Zc)
            if Zc.shape[0] > self.k:
                beta = nnls_weights(A / np.linalg.norm(A, axis=0), self.y)
                drop = int(np.argmin(beta))  # lowest index on ties
                Zc = np.delete(Zc, drop, axis=0)
                A = np.delete(A, drop, axis=1)
            ac = nnls_weights(A, self.y)
            Zc, ac = self._refine(Zc, ac, opts.refine_iters)
            Zc, ac = self._prune(Zc, ac)
            res_c = self._residual(Zc, ac)
            if res_c <= res:
                Z, alpha, res = Zc, ac, res_c
                history.append(res)
            if Z.shape[0] >= self.k and res <= opts.tol * self.ynorm:
                break

        if opts.enforce_constraints:
            Z, alpha = self._enforce(Z, alpha)
        alpha = nnls_weights(self.fam.atoms(Z), self.y, simplex=True)
        Z, alpha = self._polish_simplex(Z, alpha, opts.refine_iters)
        if opts.enforce_constraints:
            Z, alpha = self._enforce(Z, alpha)
            alpha = nnls_weights(self.fam.atoms(Z), self.y, simplex=True)
        Z, alpha = self._prune(Z, alpha)
        alpha = alpha / alpha.sum()
        return Z, alpha, self._residual(Z, alpha), history

    def _polish_simplex(self, Z, alpha, iters):
        """Projected gradient with backtracking; weights stay on the simplex."""
        f, gz, ga = self.fam.objective(Z, alpha, self.y)
        step = 1.0 / max(self.fam.env_norm ** 2 * (1 + np.abs(self.fam.W).max() ** 2), 1e-12)
        for _ in range(iters):
            while True:
                Zn = Z - step * gz
                if self.R is not None:
                    nz = np.linalg.norm(Zn, axis=1, keepdims=True)
                    Zn = np.where(nz > self.R, Zn * self.R / np.maximum(nz, 1e-300), Zn)
                an = project_simplex(alpha - step * ga)
                fn, gzn, gan = self.fam.objective(Zn, an, self.y)
                moved = np.sum((Zn - Z) ** 2) + np.sum((an - alpha) ** 2)
                if fn <= f - 0.5 / step * moved * 1e-4 or step < 1e-20:
                    break
                step *= 0.5
            if fn > f:
                break
            rel = (f - fn) / max(f, 1e-300)
            Z, alpha, f, gz, ga = Zn, an, fn, gzn, gan
            step *= 2.0
            if rel < self.opts.tol or f == 0.0:
                break
        return Z, alpha

    def _enforce(self, Z, alpha):
        """Merge pairs closer than 2 eps (weight-averaged), clip to the radius."""
        Z, alpha = Z.copy(), alpha.copy()
        if self.eps is not None:
            while Z.shape[0] > 1:
                D = np.linalg.norm(Z[:, None, :] - Z[None, :, :], axis=-1)
                np.fill_diagonal(D, np.inf)
                i, j = np.unravel_index(np.argmin(D), D.shape)
                if D[i, j] >= 2 * self.eps:
                    break
                i, j = min(i, j), max(i, j)
                w = alpha[i] + alpha[j]
                Z[i] = (alpha[i] * Z[i] + alpha[j] * Z[j]) / w if w > 0 else 0.5 * (Z[i] + Z[j])
                alpha[i] = w
                Z = np.delete(Z, j, axis=0)
                alpha = np.delete(alpha, j)
        nz = np.linalg.norm(Z, axis=1, keepdims=True)
        Z = np.where(nz > self.R, Z * self.R / np.maximum(nz, 1e-300), Z)
        return Z, alpha


def _check_sketch(y: Sketch, freq: FrequencyMatrix):
    if y.scheme_fingerprint != freq.fingerprint:
        raise FingerprintMismatch("sketch and frequencies come from different schemes")


def _prepare(y, freq, k, constraints):
    _check_sketch(y, freq)
    if k < 1:
        raise InvalidParameter("k must be >= 1")
    eps, radius = constraints
    if radius is None or not radius > 0:
        raise InvalidParameter("a positive search radius R is required")
    return eps, float(radius)


def decode_diracs(y: Sketch, freq: FrequencyMatrix, k: int, constraints: Tuple[Optional[float], float],
                  opts: DecoderOptions = DecoderOptions()) -> DecodeResult:
    """Mixture of at most k Diracs whose sketch best matches ``y``.

    ``constraints`` is (eps, R): centroids are searched in the R-ball and, with
    ``opts.enforce_constraints``, made 2 eps-separated.
    """
    if not freq.kind.is_fourier:
        raise InvalidParameter("Dirac decoding needs a Fourier scheme")
    eps, radius = _prepare(y, freq, k, constraints)
    fam = _AtomFamily(np.asarray(freq.omegas), freq.scale, np.eye(freq.dim))
    Z, alpha, res, hist = _GreedyDecoder(fam, np.asarray(y.values), k, eps, radius, opts).run()
    tag = (eps, radius) if (opts.enforce_constraints and eps is not None) else None
    return DecodeResult(DiracMixture(Z, alpha, constraint=tag), res, hist)


def decode_gmm(y: Sketch, freq: FrequencyMatrix, k: int, constraints: Tuple[Optional[float], float],
               opts: DecoderOptions = DecoderOptions()) -> DecodeResult:
    """Gaussian mixture with the scheme's covariance; constraints are Mahalanobis."""
    if freq.kind is not FeatureKind.PLAIN_FOURIER:
        raise InvalidParameter("GMM decoding needs plain Fourier features")
    eps, radius = _prepare(y, freq, k, constraints)
    cov = np.asarray(freq.scheme.covariance)
    S = np.linalg.cholesky(cov)
    env = freq.scale * gaussian_damping(freq, cov)
    fam = _AtomFamily(np.asarray(freq.omegas), env, S)
    Z, alpha, res, hist = _GreedyDecoder(fam, np.asarray(y.values), k, eps, radius, opts).run()
    tag = (eps, radius) if (opts.enforce_constraints and eps is not None) else None
    return DecodeResult(GaussianMixture(Z @ S.T, alpha, cov, constraint=tag), res, hist)


# ------------------------------------------------------------------ PCA

def _projectors(freq):
    if isinstance(freq, FrequencyMatrix):
        if freq.kind is not FeatureKind.QUADRATIC_MOMENT:
            raise InvalidParameter("PCA decoding needs quadratic-moment projectors")
        return np.asarray(freq.projectors)
    return np.asarray(freq)


def project_psd_rank(X, k):
    """Closest PSD matrix of rank <= k in Frobenius norm."""
    X = 0.5 * (X + X.T)
    vals, vecs = np.linalg.eigh(X)
    order = np.argsort(vals)[::-1][:k]
    v = np.maximum(vals[order], 0.0)
    U = vecs[:, order]
    return (U * v) @ U.T


def operator_norm_sq(L, iters=200, seed=0):
    """Largest eigenvalue of M^T M on symmetric matrices, by power iteration."""
    m, d, _ = L.shape
    A = L.reshape(m, d * d)
    rng = make_rng(seed)
    X = rng.standard_normal((d, d))
    X = 0.5 * (X + X.T)
    X /= np.linalg.norm(X)
    val = 0.0
    for _ in range(iters):
        Y = (A.T @ (A @ X.ravel())).reshape(d, d)
        Y = 0.5 * (Y + Y.T)
        new = np.linalg.norm(Y)
        X = Y / new
        if abs(new - val) <= 1e-12 * new:
            val = new
            break
        val = new
    return val


def top_subspace(S, k) -> Subspace:
    vals, vecs = np.linalg.eigh(0.5 * (S + S.T))
    order = np.argsort(vals, kind="stable")[::-1][:k]
    B, _ = np.linalg.qr(vecs[:, order])
    # fix column signs for determinism
    B = B * np.where(B[np.argmax(np.abs(B), axis=0), np.arange(B.shape[1])] < 0, -1.0, 1.0)
    return Subspace(B)


def decode_pca(y: Sketch, freq, k: int, max_iters: int = 20000, tol: float = 1e-15,
               check_fingerprint: bool = True) -> DecodeResult:
    """Rank-k PSD second-moment matrix fitting ``y`` and its top-k subspace.

    ``freq`` is the quadratic FrequencyMatrix (or a raw projector stack). The
    returned ``model`` is a (Sigma_hat, Subspace) pair.
    """
    L = _projectors(freq)
    if check_fingerprint and isinstance(freq, FrequencyMatrix):
        _check_sketch(y, freq)
    m, d, _ = L.shape
    if not 1 <= k <= d:
        raise InvalidParameter(f"need 1 <= k <= d, got k={k}, d={d}")
    yv = np.asarray(y.values if isinstance(y, Sketch) else y, dtype=np.float64)
    if yv.shape != (m,):
        raise DimensionMismatch("sketch length does not match the projectors")
    A = L.reshape(m, d * d)
    step = 1.0 / operator_norm_sq(L)

    def grad(X):
        G = (A.T @ (A @ X.ravel() - yv)).reshape(d, d)
        return 0.5 * (G + G.T)

    X = project_psd_rank((A.T @ yv).reshape(d, d), k)
    res = np.linalg.norm(A @ X.ravel() - yv)
    history = [res]
    for _ in range(max_iters):
        Xn = project_psd_rank(X - step * grad(X), k)
        rn = np.linalg.norm(A @ Xn.ravel() - yv)
        if rn > res:
            break
        decrease = (res - rn) / max(res, 1e-300)
        X, res = Xn, rn
        history.append(res)
        if decrease < tol or res == 0.0:
            break
    return DecodeResult((X, top_subspace(X, k)), float(res), history)
