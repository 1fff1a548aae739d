import math

import numpy as np
import pytest
from scipy import integrate

from cskl.core import DiracMixture, GaussianMixture, InvalidParameter
from cskl.frequencies import sample_plain_fourier, sample_weighted_fourier
from cskl.kernels import (
    dipole_correlation,
    dirac_mean_kernel,
    gaussian_kernel_profile,
    gmm_component_kernel,
    gmm_mean_kernel,
    kernel_class_condition,
    lambda_for_gmm_separation,
    lambda_for_separation,
    lrip_ratio,
    mixture_kernel,
    mmd,
    random_separated_dipoles,
    separation_gmm,
    separation_kmeans,
    sigma_k,
)
from cskl.sketching import feature_map, model_sketch


class TestConstants:
    def test_sigma_one(self):
        assert sigma_k(1) ** 2 == pytest.approx(1 / 24, rel=1e-15)
        assert sigma_k(1) == pytest.approx(0.204124, abs=1e-6)

    def test_sigma_two(self):
        assert 1 / sigma_k(2) ** 2 == pytest.approx(2.4 * (math.log(3) + 10), rel=1e-14)
        assert 1 / sigma_k(2) ** 2 == pytest.approx(26.6366, abs=1e-4)

    def test_sigma_decreasing(self):
        s = [sigma_k(k) for k in range(1, 102)]
        assert all(a > b for a, b in zip(s, s[1:]))
        assert all(0 < x ** 2 <= 1 / 24 for x in s)

    def test_separation_kmeans(self):
        assert separation_kmeans(1.0, 1) == pytest.approx(math.sqrt(24), rel=1e-15)
        for k in (1, 3, 10):
            assert separation_kmeans(lambda_for_separation(2.5, k), k) == pytest.approx(2.5, rel=1e-14)
        assert separation_kmeans(2.0, 3) < separation_kmeans(1.0, 3)

    def test_separation_gmm(self):
        assert separation_gmm(math.sqrt(0.5), 1) == pytest.approx(math.sqrt(96), rel=1e-14)
        assert separation_gmm(1e8, 4) == pytest.approx(math.sqrt(2) / sigma_k(4), rel=1e-12)
        assert separation_gmm(2.0, 2) < separation_gmm(1.0, 2)
        for lam in (0.1, 1.0, 10.0):
            assert separation_gmm(lam, 3) >= math.sqrt(2) / sigma_k(3)
            assert lambda_for_gmm_separation(separation_gmm(lam, 3), 3) == pytest.approx(lam, rel=1e-10)

    def test_gmm_separation_too_small(self):
        with pytest.raises(InvalidParameter):
            lambda_for_gmm_separation(1.0, 2)


class TestDiracKernel:
    def test_identity(self):
        assert dirac_mean_kernel([1.0, 2.0], [1.0, 2.0], 3.0) == 1.0

    def test_value(self):
        assert dirac_mean_kernel([0.0, 0.0], [1.0, 1.0], 1.0) == pytest.approx(math.exp(-1), rel=1e-15)

    def test_monte_carlo(self):
        m = 100_000
        f = sample_weighted_fourier(1.0, 2, m, seed=11)
        x, xp = np.array([0.3, -0.2]), np.array([-0.5, 0.6])
        est = np.vdot(feature_map(xp, f), feature_map(x, f)).real
        assert abs(est - dirac_mean_kernel(x, xp, 1.0)) <= 5 / math.sqrt(m)


class TestGmmKernel:
    def test_self_kernel_normalized(self):
        for d, lam in [(1, 0.5), (3, math.sqrt(0.5)), (6, 2.0)]:
            cov = np.eye(d) * 1.7
            raw = gmm_mean_kernel(np.zeros(d), cov, np.zeros(d), cov, cov / lam ** 2)
            r = lam ** -2
            assert raw == pytest.approx((r / (2 + r)) ** (d / 2), rel=1e-13)
            assert gmm_component_kernel(np.zeros(d), np.zeros(d), cov, lam) == pytest.approx(1.0, rel=1e-13)

    def test_one_dimensional_value(self):
        assert gmm_mean_kernel([0.0], [[1.0]], [0.0], [[1.0]], [[1.0]]) == pytest.approx(math.sqrt(1 / 3), rel=1e-15)

    @pytest.mark.parametrize("t1,s1,t2,s2,g", [(0.0, 1.0, 0.0, 1.0, 1.0), (0.4, 0.5, -1.1, 2.0, 0.7),
                                               (2.0, 1.5, 0.0, 0.3, 3.0)])
    def test_double_integral(self, t1, s1, t2, s2, g):
        def integrand(xp, x):
            k = math.exp(-0.5 * (x - xp) ** 2 / g)
            return (k * math.exp(-0.5 * (x - t1) ** 2 / s1) / math.sqrt(2 * math.pi * s1)
                    * math.exp(-0.5 * (xp - t2) ** 2 / s2) / math.sqrt(2 * math.pi * s2))

        val = integrate.dblquad(integrand, t1 - 12 * math.sqrt(s1), t1 + 12 * math.sqrt(s1),
                                t2 - 12 * math.sqrt(s2), t2 + 12 * math.sqrt(s2), epsabs=1e-12, epsrel=1e-10)[0]
        assert gmm_mean_kernel([t1], [[s1]], [t2], [[s2]], [[g]]) == pytest.approx(val, abs=1e-6)

    def test_high_dimension_no_underflow(self):
        d = 100
        v = gmm_mean_kernel(np.zeros(d), np.eye(d), np.zeros(d), np.eye(d), np.eye(d) * 0.01)
        assert 0 < v < 1

    def test_feature_kernel_monte_carlo(self):
        m = 100_000
        cov = np.array([[1.0, 0.2], [0.2, 0.8]])
        lam = math.sqrt(0.5)
        f = sample_plain_fourier(lam, cov, m, seed=4)
        a = GaussianMixture(np.array([[0.5, 0.0]]), np.ones(1), cov)
        b = GaussianMixture(np.array([[-0.4, 0.9]]), np.ones(1), cov)
        est = np.vdot(model_sketch(b, f), model_sketch(a, f)).real
        exact = gmm_component_kernel(a.means[0], b.means[0], cov, lam)
        assert abs(est - exact) <= 5 / math.sqrt(m)
        assert mixture_kernel(a, b, f) == pytest.approx(exact, rel=1e-12)


class TestMmd:
    def test_zero_for_equal(self):
        p = DiracMixture(np.array([[0.0, 1.0], [2.0, 0.0]]), np.array([0.3, 0.7]))
        assert mmd(p, p, 1.0) <= 1e-8

    def test_far_diracs(self):
        p = DiracMixture(np.array([[0.0]]), np.ones(1))
        q = DiracMixture(np.array([[20.0]]), np.ones(1))
        assert mmd(p, q, 1.0) == pytest.approx(math.sqrt(2), abs=1e-8)

    def test_against_sketch_distance(self):
        r = np.random.default_rng(0)
        f = sample_weighted_fourier(1.0, 2, 100_000, seed=1)
        for _ in range(5):
            p = DiracMixture(r.normal(size=(3, 2)) * 2, r.dirichlet(np.ones(3)))
            q = DiracMixture(r.normal(size=(3, 2)) * 2, r.dirichlet(np.ones(3)))
            sk = np.linalg.norm(model_sketch(p, f) - model_sketch(q, f))
            assert sk == pytest.approx(mmd(p, q, f), rel=0.05)

    def test_mixed_kinds(self):
        p = DiracMixture(np.zeros((1, 2)), np.ones(1))
        q = GaussianMixture(np.zeros((1, 2)), np.ones(1), np.eye(2))
        with pytest.raises(InvalidParameter):
            mmd(p, q, 1.0)

    def test_gmm_mmd_against_sketch_distance(self):
        f = sample_plain_fourier(0.5, np.eye(2), 100_000, seed=2)
        p = GaussianMixture(np.array([[0.0, 0.0], [3.0, 1.0]]), np.array([0.5, 0.5]), np.eye(2))
        q = GaussianMixture(np.array([[1.0, 0.0], [-2.0, 1.0]]), np.array([0.2, 0.8]), np.eye(2))
        assert np.linalg.norm(model_sketch(p, f) - model_sketch(q, f)) == pytest.approx(mmd(p, q, f), rel=0.05)


class TestLrip:
    def test_far_pairs(self):
        f = sample_weighted_fourier(1.0, 2, 10_000, seed=3)
        p = DiracMixture(np.array([[-10.0, 0.0], [10.0, 0.0]]), np.array([0.5, 0.5]))
        q = DiracMixture(np.array([[0.0, -10.0], [0.0, 10.0]]), np.array([0.5, 0.5]))
        assert 0.8 <= lrip_ratio(p, q, f) <= 1.2

    def test_degenerate(self):
        f = sample_weighted_fourier(1.0, 2, 10, seed=3)
        p = DiracMixture(np.zeros((1, 2)), np.ones(1))
        with pytest.raises(InvalidParameter):
            lrip_ratio(p, p, f)

    @pytest.mark.slow
    def test_large_m_limit(self):
        r = np.random.default_rng(4)
        f = sample_weighted_fourier(1.0, 2, 100_000, seed=5)
        ok = 0
        for _ in range(100):
            p = DiracMixture(r.normal(size=(2, 2)) * 3, r.dirichlet(np.ones(2)))
            q = DiracMixture(r.normal(size=(2, 2)) * 3, r.dirichlet(np.ones(2)))
            ok += abs(lrip_ratio(p, q, f) - 1) <= 0.05
        assert ok >= 95

    def test_doubling_m_shrinks_spread(self):
        r = np.random.default_rng(6)
        pairs = [(DiracMixture(r.normal(size=(2, 2)) * 3, r.dirichlet(np.ones(2))),
                  DiracMixture(r.normal(size=(2, 2)) * 3, r.dirichlet(np.ones(2)))) for _ in range(50)]

        def spread(m):
            # seeds differ between the two sizes: equal seeds share the leading normals
            dev = [lrip_ratio(p, q, sample_weighted_fourier(1.0, 2, m, seed=m + s)) - 1
                   for s in range(60) for p, q in pairs]
            return float(np.sqrt(np.mean(np.square(dev))))

        shrink = spread(500) / spread(1000)
        assert 2 / 1.5 <= shrink <= 2 * 1.5


class TestProfile:
    def test_constants_at_sigma_one(self):
        p = gaussian_kernel_profile(sigma_k(1))
        assert 2 * (p.B + p.C) == pytest.approx(2 * math.exp(-12) * 24 ** 2, rel=1e-12)
        assert 2 * (p.B + p.C) == pytest.approx(7.08e-3, abs=5e-5)
        assert p.B + p.C == pytest.approx(p.A / sigma_k(1) ** 4, rel=1e-12)

    def test_class_condition_up_to_1000(self):
        assert all(kernel_class_condition(gaussian_kernel_profile(sigma_k(k)), k) for k in range(1, 1001))

    def test_pointwise_decay(self):
        p = gaussian_kernel_profile(sigma_k(1))
        u = np.arange(1, 11) / 10
        assert np.all(p(u) <= 1 - u ** 2 / 2)

    def test_domain(self):
        with pytest.raises(InvalidParameter):
            gaussian_kernel_profile(0.6)
        with pytest.raises(InvalidParameter):
            gaussian_kernel_profile(0.0)

    def test_coherence_bound(self):
        p = gaussian_kernel_profile(0.2)
        assert p.coherence_bound == pytest.approx(8 * max(p.A, 2 * (p.B + p.C)))

    def test_coherence_small_sample(self):
        p = gaussian_kernel_profile(sigma_k(2))
        r = np.random.default_rng(0)
        worst = max(dipole_correlation(a1, t1, a2, t2, p) for a1, t1, a2, t2 in random_separated_dipoles(r, 2, 3.0, 500))
        assert worst <= p.coherence_bound
