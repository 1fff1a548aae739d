"""Mean-map kernels, MMD between mixtures, and the constants of the recovery theory."""
import math

import numpy as np

from .core import (
    DiracMixture,
    DimensionMismatch,
    FrequencyMatrix,
    GaussianMixture,
    InvalidParameter,
    KernelProfile,
    NumericalFailure,
)
from .sketching import model_sketch

MMD_CLAMP = 1e-12


def sigma_k(k: int) -> float:
    """Gaussian bandwidth (in the normalized parameter metric) admissible for k components."""
    if k < 1:
        raise InvalidParameter("k must be >= 1")
    return (2.4 * (math.log(2 * k - 1) + 10.0)) ** -0.5


def separation_kmeans(lam: float, k: int) -> float:
    """Separation 1 / (lambda sigma_k) matched to a Fourier scale lambda."""
    if not lam > 0:
        raise InvalidParameter("lambda must be positive")
    return 1.0 / (lam * sigma_k(k))


def lambda_for_separation(eps: float, k: int) -> float:
    """Inverse of :func:`separation_kmeans`."""
    if not eps > 0:
        raise InvalidParameter("eps must be positive")
    return 1.0 / (eps * sigma_k(k))


def separation_gmm(lam: float, k: int) -> float:
    """Mahalanobis separation sqrt((2 + 1/lambda^2) / sigma_k^2)."""
    if not lam > 0:
        raise InvalidParameter("lambda must be positive")
    return math.sqrt((2.0 + lam ** -2) / sigma_k(k) ** 2)


def lambda_for_gmm_separation(eps: float, k: int) -> float:
    """Inverse of :func:`separation_gmm`; needs eps * sigma_k > sqrt(2)."""
    t = (eps * sigma_k(k)) ** 2 - 2.0
    if not t > 0:
        raise InvalidParameter(f"separation {eps} is too small for k={k}")
    return 1.0 / math.sqrt(t)


def dirac_mean_kernel(theta, theta_p, lam) -> float:
    """exp(-lambda^2 |theta - theta'|^2 / 2)."""
    a = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    b = np.atleast_1d(np.asarray(theta_p, dtype=np.float64))
    if a.shape != b.shape:
        raise DimensionMismatch("parameter dimensions differ")
    diff = a - b
    return float(np.exp(-0.5 * lam ** 2 * diff @ diff))


def _log_gmm_mean_kernel(theta1, Sigma1, theta2, Sigma2, Gamma):
    S = Sigma1 + Sigma2 + Gamma
    try:
        chol = np.linalg.cholesky(S)
        chol_g = np.linalg.cholesky(Gamma)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("Sigma1 + Sigma2 + Gamma is not positive definite") from exc
    logdet_s = 2.0 * np.log(np.diag(chol)).sum()
    logdet_g = 2.0 * np.log(np.diag(chol_g)).sum()
    z = np.linalg.solve(chol, theta1 - theta2)
    return 0.5 * (logdet_g - logdet_s) - 0.5 * z @ z


def gmm_mean_kernel(theta1, Sigma1, theta2, Sigma2, Gamma) -> float:
    """Mean kernel between N(theta1, Sigma1) and N(theta2, Sigma2) under exp(-|x-x'|^2_Gamma / 2).

    sqrt(det Gamma / det(Sigma1 + Sigma2 + Gamma)) * exp(-|theta1-theta2|^2_{Sigma1+Sigma2+Gamma} / 2),
    assembled in log space.
    """
    t1 = np.atleast_1d(np.asarray(theta1, dtype=np.float64))
    t2 = np.atleast_1d(np.asarray(theta2, dtype=np.float64))
    S1, S2, G = (np.atleast_2d(np.asarray(a, dtype=np.float64)) for a in (Sigma1, Sigma2, Gamma))
    d = t1.shape[0]
    if t2.shape != (d,) or any(a.shape != (d, d) for a in (S1, S2, G)):
        raise DimensionMismatch("inconsistent dimensions")
    return float(np.exp(_log_gmm_mean_kernel(t1, S1, t2, S2, G)))


def _lam_of(ctx):
    if isinstance(ctx, FrequencyMatrix):
        return ctx.scheme.lam
    return float(ctx)


def _dirac_gram(A, B, lam):
    diff = A[:, None, :] - B[None, :, :]
    return np.exp(-0.5 * lam ** 2 * np.einsum("ijd,ijd->ij", diff, diff))


def _gmm_gram(A, B, cov, lam):
    # Gamma = lam^-2 Sigma, Sigma1 = Sigma2 = Sigma; the C_lambda^2 prefactor cancels
    # the determinant ratio so the Gram entries reduce to a Mahalanobis RBF.
    s = 2.0 + lam ** -2
    diff = A[:, None, :] - B[None, :, :]
    q = np.einsum("ijd,de,ije->ij", diff, np.linalg.inv(cov), diff)
    return np.exp(-0.5 * q / s)


def mixture_kernel(p, q, ctx) -> float:
    """Bilinear mean-map kernel between two mixtures of the same kind.

    ``ctx`` is lambda or the FrequencyMatrix it came from. For Gaussian mixtures the
    kernel is the one induced by C_lambda-scaled plain Fourier features.
    """
    lam = _lam_of(ctx)
    if isinstance(p, DiracMixture) and isinstance(q, DiracMixture):
        G = _dirac_gram(p.centroids, q.centroids, lam)
        return float(p.weights @ G @ q.weights)
    if isinstance(p, GaussianMixture) and isinstance(q, GaussianMixture):
        if not np.allclose(p.covariance, q.covariance, rtol=1e-12, atol=1e-12):
            raise InvalidParameter("mixtures must share the covariance")
        G = _gmm_gram(p.means, q.means, p.covariance, lam)
        return float(p.weights @ G @ q.weights)
    raise InvalidParameter("mixed model kinds")


def gmm_component_kernel(theta1, theta2, cov, lam) -> float:
    """C_lambda^2 * gmm_mean_kernel with Gamma = lambda^-2 Sigma (the effective feature kernel)."""
    d = cov.shape[0]
    c2 = (1.0 + 2.0 * lam ** 2) ** (d / 2.0)
    return c2 * gmm_mean_kernel(theta1, cov, theta2, cov, cov / lam ** 2)


def mmd(p, q, ctx) -> float:
    """Maximum mean discrepancy between two mixtures under the feature kernel."""
    r = mixture_kernel(p, p, ctx) - 2.0 * mixture_kernel(p, q, ctx) + mixture_kernel(q, q, ctx)
    if r < -MMD_CLAMP:
        raise NumericalFailure(f"negative MMD radicand {r!r}")
    return math.sqrt(max(r, 0.0))


def lrip_ratio(p, q, freq: FrequencyMatrix) -> float:
    """|A(p) - A(q)|^2 / MMD(p, q)^2 for one draw of the sketching operator."""
    dist = mmd(p, q, freq)
    if dist <= 1e-10:
        raise InvalidParameter("degenerate pair: MMD is zero")
    diff = model_sketch(p, freq) - model_sketch(q, freq)
    return float(np.vdot(diff, diff).real / dist ** 2)


def gaussian_kernel_profile(sigma: float) -> KernelProfile:
    """Class constants of K(u) = exp(-u^2/(2 sigma^2)) on [1, inf)."""
    if not 0 < sigma <= 1 / math.sqrt(3) + 1e-15:
        raise InvalidParameter("sigma must lie in (0, 1/sqrt(3)]")
    s2 = sigma ** 2
    e = math.exp(-1.0 / (2.0 * s2))
    return KernelProfile(sigma=sigma, A=e, B=e / s2, C=(1.0 / s2) * (1.0 / s2 - 1.0) * e, c=1.0)


def kernel_class_condition(profile: KernelProfile, k: int) -> bool:
    """2(B+C) <= 3 / (64 (2k - 1))."""
    return 2.0 * (profile.B + profile.C) <= 3.0 / (64.0 * (2 * k - 1))


# ------------------------------------------------------------------ dipoles

def dipole_norm2(alpha, theta, profile: KernelProfile) -> float:
    """Squared kernel norm of alpha[0] pi_theta[0] - alpha[1] pi_theta[1]."""
    u = np.linalg.norm(theta[0] - theta[1])
    return alpha[0] ** 2 + alpha[1] ** 2 - 2 * alpha[0] * alpha[1] * float(profile(u))


def dipole_correlation(a1, t1, a2, t2, profile: KernelProfile) -> float:
    """|kappa(nu, nu')| / (|nu| |nu'|) for two dipoles, parameters in the normalized metric."""
    sgn = np.array([1.0, -1.0])
    D = np.linalg.norm(t1[:, None, :] - t2[None, :, :], axis=-1)
    cross = (sgn * a1) @ profile(D) @ (sgn * a2)
    n1 = dipole_norm2(a1, t1, profile)
    n2 = dipole_norm2(a2, t2, profile)
    return abs(cross) / math.sqrt(n1 * n2)


def random_separated_dipoles(rng, d, radius, n_pairs, max_tries=1000):
    """Pairs of 1-separated dipoles with in-dipole distance <= 1.

    Each dipole: theta1 uniform in the radius-ball, theta2 = theta1 + r u with r uniform
    in [0, 1] and u a uniform direction; weights uniform in [0, 1]. The second dipole is
    redrawn until all four cross distances are >= 1.
    """

    def ball_point():
        g = rng.standard_normal(d)
        return radius * rng.random() ** (1.0 / d) * g / np.linalg.norm(g)

    def dipole():
        t1 = ball_point()
        u = rng.standard_normal(d)
        t2 = t1 + rng.random() * u / np.linalg.norm(u)
        return rng.random(2), np.stack([t1, t2])

    for _ in range(n_pairs):
        a1, th1 = dipole()
        for _ in range(max_tries):
            a2, th2 = dipole()
            if np.linalg.norm(th1[:, None, :] - th2[None, :, :], axis=-1).min() >= 1.0:
                break
        else:
            raise NumericalFailure("could not draw a separated dipole; increase the radius")
        yield a1, th1, a2, th2
