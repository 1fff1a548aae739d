import math

import numpy as np
import pytest
from scipy import integrate

from cskl.core import FeatureKind, FeatureScheme, InvalidParameter, RngId
from cskl.frequencies import (
    compute_norm_const,
    draw_frequencies,
    sample_plain_fourier,
    sample_quadratic_projectors,
    sample_weighted_fourier,
    weighted_fourier_mixture_probs,
)


def radial_moment(power, lam, d):
    """E ||omega||^power under the density proportional to w(omega)^2 exp(-|omega|^2 / 2 lam^2)."""
    def dens(r):
        return r ** (d - 1) * (1 + r * r / (lam * lam * d)) ** 2 * math.exp(-r * r / (2 * lam * lam))

    z = integrate.quad(dens, 0, np.inf, epsabs=0, epsrel=1e-12)[0]
    return integrate.quad(lambda r: r ** power * dens(r), 0, np.inf, epsabs=0, epsrel=1e-12)[0] / z


def within_3se(samples, target):
    se = samples.std(ddof=1) / math.sqrt(samples.size)
    return abs(samples.mean() - target) <= 3 * se


class TestWeightedSampler:
    def test_importance_normalization(self):
        # E_Lambda[C^2 / w^2] recovers the total mass of the unweighted Gaussian
        f = sample_weighted_fourier(1.0, 1, 100_000, seed=7)
        assert within_3se(f.norm_const ** 2 / f.weights ** 2, 1.0)

    def test_second_moment_against_quadrature(self):
        f = sample_weighted_fourier(2.0, 2, 100_000, seed=1)
        r2 = np.sum(f.omegas ** 2, axis=1)
        assert within_3se(r2, radial_moment(2, 2.0, 2))

    @pytest.mark.parametrize("d", [1, 3, 7])
    def test_importance_moments(self, d):
        lam = 1.3
        f = sample_weighted_fourier(lam, d, 100_000, seed=d)
        iw = f.norm_const ** 2 / f.weights ** 2
        r2 = np.sum(f.omegas ** 2, axis=1)
        # Gaussian moments of N(0, lam^2 I_d)
        assert within_3se(iw * r2, lam ** 2 * d)
        assert within_3se(iw * r2 ** 2, lam ** 4 * d * (d + 2))

    def test_weights(self):
        f = sample_weighted_fourier(0.7, 3, 50, seed=2)
        np.testing.assert_allclose(f.weights, 1 + np.sum(f.omegas ** 2, axis=1) / (0.49 * 3), rtol=1e-14)
        assert np.all(f.weights >= 1)

    def test_seeded_determinism(self):
        a = sample_weighted_fourier(1.0, 3, 5, seed=0)
        b = sample_weighted_fourier(1.0, 3, 5, seed=0)
        np.testing.assert_array_equal(a.omegas, b.omegas)
        c = draw_frequencies(a.scheme)
        np.testing.assert_array_equal(a.omegas, c.omegas)

    def test_rng_choice_matters(self):
        a = sample_weighted_fourier(1.0, 2, 5, seed=0, rng_id=RngId.PHILOX)
        b = sample_weighted_fourier(1.0, 2, 5, seed=0, rng_id=RngId.PCG64)
        assert not np.array_equal(a.omegas, b.omegas)

    def test_mean_zero(self):
        f = sample_weighted_fourier(1.0, 2, 100_000, seed=4)
        for q in range(2):
            assert within_3se(f.omegas[:, q], 0.0)

    def test_mixture_probs(self):
        np.testing.assert_allclose(weighted_fourier_mixture_probs(2), np.array([1, 2, 2]) / 5)

    @pytest.mark.parametrize("args", [(0.0, 2, 5), (1.0, 0, 5), (1.0, 2, 0), (-1.0, 2, 5)])
    def test_invalid(self, args):
        with pytest.raises(InvalidParameter):
            sample_weighted_fourier(*args, seed=0)


class TestPlainSampler:
    def test_sample_covariance(self):
        f = sample_plain_fourier(1.0, np.eye(2), 100_000, seed=3)
        S = f.omegas.T @ f.omegas / f.m
        m = f.m
        assert abs(S[0, 0] - 1) <= 3 * math.sqrt(2 / m)
        assert abs(S[1, 1] - 1) <= 3 * math.sqrt(2 / m)
        assert abs(S[0, 1]) <= 3 * math.sqrt(1 / m)

    def test_anisotropic_covariance(self):
        Sigma = np.array([[2.0, 0.6], [0.6, 1.0]])
        f = sample_plain_fourier(0.5, Sigma, 200_000, seed=9)
        S = f.omegas.T @ f.omegas / f.m
        np.testing.assert_allclose(S, 0.25 * np.linalg.inv(Sigma), atol=0.01)

    def test_norm_const(self):
        f = sample_plain_fourier(math.sqrt(0.5), np.eye(2), 4, seed=0)
        assert f.norm_const == pytest.approx(math.sqrt(2), rel=1e-15)

    def test_single_row(self):
        f = sample_plain_fourier(1.0, np.eye(3), 1, seed=0)
        assert f.omegas.shape == (1, 3)
        np.testing.assert_array_equal(f.weights, [1.0])

    def test_non_spd(self):
        with pytest.raises(InvalidParameter):
            sample_plain_fourier(1.0, np.array([[1.0, 0.0], [0.0, -1.0]]), 4, seed=0)


class TestQuadraticProjectors:
    def test_symmetric(self):
        L = sample_quadratic_projectors(4, 30, seed=1)
        np.testing.assert_array_equal(L, np.transpose(L, (0, 2, 1)))

    def test_isometry_rank_one(self):
        L = sample_quadratic_projectors(4, 2000, seed=5)
        M = np.zeros((4, 4))
        M[0, 0] = 1.0
        assert 0.9 <= np.sum(np.einsum("jab,ab->j", L, M) ** 2) <= 1.1

    def test_isometry_rank_two(self):
        rng = np.random.default_rng(0)
        U = rng.normal(size=(4, 2))
        M = U @ np.diag([1.0, -0.5]) @ U.T
        M /= np.linalg.norm(M)
        L = sample_quadratic_projectors(4, 2000, seed=5)
        assert 0.9 <= np.sum(np.einsum("jab,ab->j", L, M) ** 2) <= 1.1

    def test_expected_isometry_exact(self):
        # E<L, M>^2 = |M|_F^2 / m, averaged over many draws
        d, m = 3, 4
        M = np.array([[1.0, 2.0, 0.0], [2.0, -1.0, 0.5], [0.0, 0.5, 3.0]])
        vals = np.concatenate([np.einsum("jab,ab->j", sample_quadratic_projectors(d, m, seed=s), M)
                               for s in range(5000)])
        assert within_3se(vals ** 2 * m, np.sum(M * M))


class TestNormConst:
    def test_weighted_d1(self):
        s = FeatureScheme(FeatureKind.WEIGHTED_FOURIER, 1, 4, lam=1.0)
        assert compute_norm_const(s) == pytest.approx(math.sqrt(6), rel=1e-15)

    def test_weighted_large_d(self):
        s = FeatureScheme(FeatureKind.WEIGHTED_FOURIER, 10 ** 6, 1, lam=1.0)
        assert compute_norm_const(s) == pytest.approx(2.0, abs=1e-6)

    @pytest.mark.parametrize("d", [1, 2, 5, 20])
    def test_weighted_matches_radial_quadrature(self, d):
        # C^2 = E_N[w^2] for omega ~ N(0, lam^2 I), with the expectation done by quadrature
        lam = 0.8
        chi = lambda r: r ** (d - 1) * math.exp(-r * r / (2 * lam * lam))
        z = integrate.quad(chi, 0, np.inf)[0]
        ew2 = integrate.quad(lambda r: (1 + r * r / (lam * lam * d)) ** 2 * chi(r), 0, np.inf)[0] / z
        s = FeatureScheme(FeatureKind.WEIGHTED_FOURIER, d, 1, lam=lam)
        assert compute_norm_const(s) == pytest.approx(math.sqrt(ew2), rel=1e-9)

    def test_plain_small_lambda(self):
        s = FeatureScheme(FeatureKind.PLAIN_FOURIER, 3, 1, lam=1e-12)
        assert compute_norm_const(s) == pytest.approx(1.0, abs=1e-12)

    def test_quadratic_rejected(self):
        with pytest.raises(InvalidParameter):
            compute_norm_const(FeatureScheme(FeatureKind.QUADRATIC_MOMENT, 3, 1))
