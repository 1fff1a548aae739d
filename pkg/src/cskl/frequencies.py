"""Samplers for the random feature parameters and their normalization constants.

All samplers consume the generator stream in a fixed order: the (m, d)
block of standard normals first (row-major), then any auxiliary draws.
"""
import numpy as np

from .core import (
    FeatureKind,
    FeatureScheme,
    FrequencyMatrix,
    InvalidParameter,
    RngId,
    make_rng,
)


def _check_sizes(d, m):
    if int(d) < 1 or int(m) < 1:
        raise InvalidParameter(f"d and m must be positive, got d={d}, m={m}")


def weighted_fourier_mixture_probs(d):
    """Mixture weights of the three radial components of the reweighted Gaussian.

    Writing omega = lambda * g, the density of g is proportional to
    (1 + |g|^2/d)^2 N(g; 0, I) = [1 + 2|g|^2/d + |g|^4/d^2] N(g; 0, I), whose three
    terms integrate to 1, 2 and (d+2)/d.
    """
    p = np.array([1.0, 2.0, (d + 2.0) / d])
    return p / p.sum()


def compute_norm_const(scheme: FeatureScheme) -> float:
    """Constant making the induced kernel equal to one on the diagonal.

    Weighted features: sqrt(E_N[w(omega)^2]) under omega ~ N(0, lambda^2 I_d), i.e.
    sqrt(1 + 2 E|w|^2/(l^2 d) + E|w|^4/(l^4 d^2)) = sqrt(4 + 2/d).
    Plain features: (1 + 2 lambda^2)^(d/4).
    """
    d, lam = scheme.dim, scheme.lam
    if scheme.kind is FeatureKind.WEIGHTED_FOURIER:
        second = lam ** 2 * d
        fourth = lam ** 4 * d * (d + 2.0)
        return float(np.sqrt(1.0 + 2.0 * second / (lam ** 2 * d) + fourth / (lam ** 4 * d ** 2)))
    if scheme.kind is FeatureKind.PLAIN_FOURIER:
        return float((1.0 + 2.0 * lam ** 2) ** (d / 4.0))
    raise InvalidParameter("normalization constants exist only for Fourier schemes")


def weighted_fourier_weights(omegas, lam):
    omegas = np.atleast_2d(omegas)
    d = omegas.shape[1]
    return 1.0 + np.einsum("jd,jd->j", omegas, omegas) / (lam ** 2 * d)


def sample_weighted_fourier(lam, d, m, seed, rng_id=RngId.PHILOX) -> FrequencyMatrix:
    """Draw m frequencies from the density proportional to w(omega)^2 exp(-|omega|^2/(2 lambda^2))."""
    _check_sizes(d, m)
    if not lam > 0:
        raise InvalidParameter(f"lambda must be positive, got {lam}")
    scheme = FeatureScheme(FeatureKind.WEIGHTED_FOURIER, d, m, lam=lam, seed=seed, rng_id=rng_id)
    return _draw_weighted(scheme)


def _draw_weighted(scheme):
    d, m, lam = scheme.dim, scheme.sketch_size, scheme.lam
    rng = make_rng(scheme.seed, scheme.rng_id)
    g = rng.standard_normal((m, d))
    u = rng.random(m)
    r_mid = np.sqrt(rng.chisquare(d + 2, size=m))
    r_far = np.sqrt(rng.chisquare(d + 4, size=m))

    comp = np.searchsorted(np.cumsum(weighted_fourier_mixture_probs(d))[:-1], u, side="right")
    norms = np.linalg.norm(g, axis=1)
    direction = g / np.where(norms > 0, norms, 1.0)[:, None]
    radius = np.choose(comp, [norms, r_mid, r_far])
    omegas = lam * radius[:, None] * direction
    # component 0 keeps the raw Gaussian draw bit-for-bit
    omegas[comp == 0] = lam * g[comp == 0]
    return FrequencyMatrix(scheme, omegas, weighted_fourier_weights(omegas, lam), compute_norm_const(scheme))


def sample_plain_fourier(lam, Sigma, m, seed, rng_id=RngId.PHILOX) -> FrequencyMatrix:
    """Draw m frequencies i.i.d. from N(0, lambda^2 Sigma^{-1})."""
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=np.float64))
    _check_sizes(Sigma.shape[0], m)
    scheme = FeatureScheme(FeatureKind.PLAIN_FOURIER, Sigma.shape[0], m, lam=lam,
                           covariance=Sigma, seed=seed, rng_id=rng_id)
    return _draw_plain(scheme)


def _draw_plain(scheme):
    d, m, lam = scheme.dim, scheme.sketch_size, scheme.lam
    try:
        chol = np.linalg.cholesky(np.linalg.inv(scheme.covariance))
    except np.linalg.LinAlgError as exc:
        raise InvalidParameter("covariance is not positive definite") from exc
    g = make_rng(scheme.seed, scheme.rng_id).standard_normal((m, d))
    omegas = lam * g @ chol.T
    return FrequencyMatrix(scheme, omegas, np.ones(m), compute_norm_const(scheme))


def sample_quadratic_projectors(d, m, seed, rng_id=RngId.PHILOX) -> np.ndarray:
    """m symmetric d x d matrices with E[<L_j, M>^2] = |M|_F^2 / m for symmetric M.

    L_j = (G_j + G_j^T)/2 with G_j i.i.d. N(0, 1/m). For symmetric M,
    <L_j, M> = <G_j, M>, so no further variance correction is needed.
    """
    _check_sizes(d, m)
    G = make_rng(seed, rng_id).standard_normal((m, d, d)) / np.sqrt(m)
    return 0.5 * (G + np.transpose(G, (0, 2, 1)))


def quadratic_scheme(d, m, seed, rng_id=RngId.PHILOX) -> FrequencyMatrix:
    scheme = FeatureScheme(FeatureKind.QUADRATIC_MOMENT, d, m, seed=seed, rng_id=rng_id)
    return _draw_quadratic(scheme)


def _draw_quadratic(scheme):
    L = sample_quadratic_projectors(scheme.dim, scheme.sketch_size, scheme.seed, scheme.rng_id)
    return FrequencyMatrix(scheme, np.empty((scheme.sketch_size, 0)), np.ones(scheme.sketch_size), 1.0, projectors=L)


def draw_frequencies(scheme: FeatureScheme) -> FrequencyMatrix:
    """Regenerate the sketching operator described by ``scheme``."""
    if scheme.kind is FeatureKind.WEIGHTED_FOURIER:
        return _draw_weighted(scheme)
    if scheme.kind is FeatureKind.PLAIN_FOURIER:
        return _draw_plain(scheme)
    return _draw_quadratic(scheme)
