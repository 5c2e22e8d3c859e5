import numpy as np
import pytest
import scipy.linalg

from signal_lab.covmodel import (
    CovariateModel,
    inverse_sqrt,
    pair_products,
    population_moments,
    unwhiten,
    var_g,
    whiten,
)
from signal_lab.errors import DataError, DegenerateSubsetError, MomentError, ShapeError, WhiteningError
from signal_lab.sim import Scenario, exact_moments, response
from signal_lab.ustat import LabeledSample


def random_spd(rng, p):
    B = rng.standard_normal((p, p))
    return B @ B.T + 0.5 * np.eye(p)


class TestWhiten:
    def test_identity(self, rng):
        s = LabeledSample(rng.standard_normal((5, 3)), rng.standard_normal(5))
        out = whiten(s, np.zeros(3), np.eye(3))
        np.testing.assert_array_equal(out.X, s.X)
        np.testing.assert_array_equal(out.Y, s.Y)

    def test_scalar(self):
        out = whiten(LabeledSample(np.array([[4.0], [2.0]]), np.zeros(2)), [2.0], [[4.0]])
        np.testing.assert_allclose(out.X[:, 0], [1.0, 0.0])

    def test_against_scipy_root(self, rng):
        X = rng.standard_normal((6, 3))
        cov, mu = random_spd(rng, 3), rng.standard_normal(3)
        oracle = (X - mu) @ np.linalg.inv(np.real(scipy.linalg.sqrtm(cov))).T
        out = whiten(LabeledSample(X, np.ones(6)), mu, cov)
        np.testing.assert_allclose(out.X, oracle, rtol=1e-10, atol=1e-12)

    def test_root_is_symmetric(self, rng):
        R = inverse_sqrt(random_spd(rng, 4))
        np.testing.assert_allclose(R, R.T, atol=1e-14)

    def test_roundtrip(self, rng):
        for _ in range(20):
            p = int(rng.integers(1, 6))
            cov, mu = random_spd(rng, p), rng.standard_normal(p)
            s = LabeledSample(rng.standard_normal((8, p)), np.zeros(8))
            back = unwhiten(whiten(s, mu, cov), mu, cov)
            np.testing.assert_allclose(back.X, s.X, rtol=1e-10, atol=1e-10)

    def test_errors(self, rng):
        s = LabeledSample(rng.standard_normal((4, 2)), np.zeros(4))
        with pytest.raises(WhiteningError):
            whiten(s, np.zeros(2), [[1.0, 1.0], [1.0, 1.0]])
        with pytest.raises(WhiteningError):
            whiten(s, np.zeros(2), [[1.0, 0.5], [0.0, 1.0]])
        with pytest.raises(ShapeError):
            whiten(s, np.zeros(3), np.eye(3))
        with pytest.raises(ShapeError):
            whiten(s, np.zeros(2), np.ones((2, 3)))


class TestModel:
    def test_independent_is_whitened(self):
        m = CovariateModel.independent(4, "centered_exponential")
        assert m.is_whitened and m.independent_after_whitening

    def test_gaussian_samples(self, rng):
        cov = random_spd(rng, 3)
        m = CovariateModel.gaussian([1.0, -1.0, 0.0], cov)
        X = m.sample(200_000, rng)
        np.testing.assert_allclose(np.cov(X.T), cov, atol=0.05 * np.abs(cov).max())
        Z = m.sample_whitened(100_000, rng)
        np.testing.assert_allclose(np.cov(Z.T), np.eye(3), atol=0.02)

    def test_rejects_bad_covariance(self):
        with pytest.raises(WhiteningError):
            CovariateModel.gaussian([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])

    def test_sampler_shape_checked(self, rng):
        m = CovariateModel.empirical(lambda n, r: np.zeros((n, 5)), np.zeros(2), np.eye(2))
        with pytest.raises(ShapeError):
            m.sample(3, rng)


class TestVarG:
    def test_pair(self):
        assert var_g(CovariateModel.independent(2), (0, 1)) == 1.0

    def test_all_300(self):
        assert var_g(CovariateModel.independent(300), range(300)) == 44850

    def test_degenerate(self):
        with pytest.raises(DegenerateSubsetError):
            var_g(CovariateModel.independent(2), (0,))

    def test_pair_products_brute(self, rng):
        X = rng.standard_normal((5, 4))
        S = (0, 1, 3)
        brute = X[:, 0] * X[:, 1] + X[:, 0] * X[:, 3] + X[:, 1] * X[:, 3]
        np.testing.assert_allclose(pair_products(X, S), brute, rtol=1e-12)

    def test_closed_form_vs_mc_exponential(self):
        m = CovariateModel.independent(5, "centered_exponential")
        S = (0, 1, 2, 3, 4)
        g = pair_products(m.sample(200_000, np.random.default_rng(8)), S)
        v = g.var(ddof=1)
        c = g - g.mean()
        se = np.sqrt((np.mean(c**4) - v**2) / len(g))
        assert abs(v - var_g(m, S)) <= 4 * se

    def test_zero_mean(self):
        m = CovariateModel.independent(6, "centered_exponential")
        S = tuple(range(6))
        g = pair_products(m.sample(100_000, np.random.default_rng(9)), S)
        assert abs(g.mean()) <= 4 * np.sqrt(var_g(m, S) / 100_000)

    def test_empirical_kind_reports_stderr(self):
        # independent uniforms scaled to unit variance: the closed form still applies
        sampler = lambda n, r: r.uniform(-np.sqrt(3), np.sqrt(3), size=(n, 3))
        m = CovariateModel.empirical(sampler, np.zeros(3), np.eye(3))
        est = var_g(m, (0, 1, 2), n_moment=200_000, seed=3)
        assert est.stderr > 0
        assert abs(est - 3.0) <= 4 * est.stderr

    def test_gaussian_kind_exact(self, rng):
        m = CovariateModel.gaussian(np.ones(3), random_spd(rng, 3))
        est = var_g(m, (0, 1, 2))
        assert est == 3.0 and est.stderr == 0.0


class TestPopulationMoments:
    def test_zero_response(self):
        m = CovariateModel.independent(3)
        ms = population_moments(m, lambda X, r: np.zeros(len(X)), N=10_000, seed=1, subsets=[(0, 1)])
        assert not ms.beta.any() and not ms.A.any() and ms.mu4 == 0 and not ms.pi.any()

    def test_gaussian_linear(self):
        m = CovariateModel.independent(3)
        ms = population_moments(m, lambda X, r: X[:, 0].copy(), N=10**6, seed=2)
        z = (ms.beta - [1, 0, 0]) / ms.beta_se
        assert np.all(np.abs(z) <= 4)
        assert ms.A[0, 0] == pytest.approx(3.0, abs=0.05)  # E[X^4] = 3
        assert ms.sigma_y_sq == pytest.approx(1.0, abs=0.01)

    def test_benchmark_model(self):
        sc = Scenario(50, 300, 6, 1.0, 0.5)
        law = lambda X, r: response(sc, X, r)
        ms = population_moments(sc.covariate_model(), law, N=200_000, seed=4, subsets=[sc.theta_set])
        exact = exact_moments(sc, [sc.theta_set])
        z = (ms.beta - exact.beta) / ms.beta_se
        assert np.max(np.abs(z)) <= 4.5
        assert ms.tau_sq == pytest.approx(1.0, abs=0.05)
        assert ms.sigma_y_sq == pytest.approx(exact.sigma_y_sq, rel=0.02)
        np.testing.assert_allclose(ms.theta[sc.theta_set][:6], exact.theta[sc.theta_set][:6], atol=0.1)

    def test_deterministic(self):
        m = CovariateModel.independent(2)
        law = lambda X, r: X[:, 0] + r.standard_normal(len(X))
        a = population_moments(m, law, N=30_000, seed=5)
        b = population_moments(m, law, N=30_000, seed=5)
        np.testing.assert_array_equal(a.A, b.A)

    def test_errors(self):
        m = CovariateModel.independent(2)
        with pytest.raises(MomentError):
            population_moments(m, lambda X, r: X[:, 0], N=100)
        with pytest.raises(DataError):
            population_moments(m, lambda X, r: np.full(len(X), np.inf), N=10_000)
        with pytest.raises(MomentError):
            population_moments(m, lambda X, r: X[:, 0], N=10_000).theta_for((0, 1))
