import itertools

import numpy as np
import pytest

from signal_lab.covmodel import CovariateModel, MomentSet
from signal_lab.errors import DegenerateSubsetError, MomentError
from signal_lab.select import Selection, all_selector, fixed_selector, gap_selector
from signal_lab.sim import Scenario, exact_moments, gen_dataset
from signal_lab.ustat import LabeledSample, build_w, tau_sq_naive
from signal_lab.zeroest import (
    NO_ZERO_ESTIMATOR,
    Coefficient,
    algorithm1,
    c_hat,
    c_oracle,
    improve,
    oracle_estimate,
    selection_agreement,
    t_g_hat,
    zero_stat,
)


class TestZeroStat:
    def test_single_row(self):
        s = LabeledSample(np.array([[2.0, 3.0], [0.0, 0.0]]), np.zeros(2))
        z = zero_stat(s, (0, 1), 1.0)
        assert z.z_values[0] == 6.0 and z.z_values[1] == 0.0

    def test_triple_pairs(self, rng):
        X = rng.standard_normal((5, 4))
        z = zero_stat(LabeledSample(X, np.zeros(5)), (0, 1, 3), 3.0)
        np.testing.assert_allclose(z.z_values, X[:, 0] * X[:, 1] + X[:, 0] * X[:, 3] + X[:, 1] * X[:, 3], rtol=1e-12)

    def test_errors(self, rng):
        s = LabeledSample(rng.standard_normal((3, 3)), np.zeros(3))
        with pytest.raises(DegenerateSubsetError):
            zero_stat(s, (1,), 1.0)
        with pytest.raises(MomentError):
            zero_stat(s, (0, 1), 0.0)


class TestCoefficient:
    def test_zero_response(self, rng):
        s = LabeledSample(rng.standard_normal((6, 3)), np.zeros(6))
        assert c_hat(build_w(s), zero_stat(s, (0, 1, 2), 3.0)).value == 0.0

    def test_two_rows(self, rng):
        s = LabeledSample(rng.standard_normal((2, 3)), rng.standard_normal(2))
        z = zero_stat(s, (0, 2), 1.0)
        W = s.X * s.Y[:, None]
        expected = W[0] @ W[1] * (z.z_values[0] + z.z_values[1])
        assert c_hat(build_w(s), z).value == pytest.approx(expected, rel=1e-12)

    def test_ordered_pair_brute_force(self, rng):
        s = LabeledSample(rng.standard_normal((6, 3)), rng.standard_normal(6))
        z = zero_stat(s, (0, 1, 2), 3.0)
        W = s.X * s.Y[:, None]
        num = sum(W[a] @ W[b] * z.z_values[b] for a, b in itertools.permutations(range(6), 2))
        assert c_hat(build_w(s), z).value == pytest.approx(num / 15 / 3.0, rel=1e-12)

    def test_oracle(self):
        m = MomentSet(beta=np.array([1.0, 2.0, 0.0]), alpha=0.0, sigma_y_sq=9.0,
                      theta={(0, 1): np.array([2.0, 1.0, 0.0])})
        assert c_oracle(m, (1, 0), 1.0).value == pytest.approx(2 * 4.0)
        zero = MomentSet(beta=np.zeros(3), alpha=0.0, sigma_y_sq=1.0, theta={(0, 1): np.ones(3)})
        assert c_oracle(zero, (0, 1), 1.0).value == 0.0
        with pytest.raises(MomentError):
            c_oracle(m, (0, 2), 1.0)

    def test_benchmark_oracle_value(self):
        # beta_j = sqrt(0.3) on the set, theta_j = 5 sqrt(0.3): 2 * 6 * 5 * 0.3 / 15
        sc = Scenario(300, 300, 6, 2.0, 0.9)
        S = sc.theta_set
        assert c_oracle(exact_moments(sc, [S]), S, 15.0).value == pytest.approx(1.2, rel=1e-12)

    def test_non_finite_rejected(self):
        with pytest.raises(MomentError):
            Coefficient(float("nan"), "ustat")


def test_improve_arithmetic(rng):
    s = LabeledSample(np.array([[1.0, 1.0], [0.0, 0.0]]), np.zeros(2))
    z = zero_stat(s, (0, 1), 1.0)  # z_bar = 0.5
    assert improve(1.0, 0.5, z) == pytest.approx(0.75)
    assert improve(1.0, 0.0, z) == 1.0


class TestAlgorithm1:
    model = CovariateModel.independent(8)

    def test_all_selector_equals_t_g(self, rng):
        s = LabeledSample(rng.standard_normal((30, 8)), rng.standard_normal(30))
        a = algorithm1(s, all_selector, self.model)
        b = t_g_hat(s, self.model)
        assert a.improved == b.improved and a.subset == tuple(range(8))

    def test_zero_response(self, rng):
        s = LabeledSample(rng.standard_normal((10, 8)), np.zeros(10))
        assert algorithm1(s, gap_selector, self.model).estimate == 0.0

    def test_fallback_flag(self, rng):
        s = LabeledSample(rng.standard_normal((10, 8)), rng.standard_normal(10))
        b = algorithm1(s, fixed_selector([3]), self.model)
        assert NO_ZERO_ESTIMATOR in b.flags
        assert b.estimate == b.tau_sq_hat

    def test_bundle_fields(self, rng):
        s = LabeledSample(rng.standard_normal((30, 8)), rng.standard_normal(30))
        b = algorithm1(s, fixed_selector([0, 2, 5]), self.model)
        assert b.subset == (0, 2, 5)
        assert b.improved == pytest.approx(b.tau_sq_hat - b.coefficient * b.z_bar)
        assert b.to_dict()["subset"] == [0, 2, 5]

    def test_oracle_estimate_fallback(self, rng):
        s = LabeledSample(rng.standard_normal((10, 8)), rng.standard_normal(10))
        m = MomentSet(beta=np.zeros(8), alpha=0.0, sigma_y_sq=1.0)
        assert oracle_estimate(s, (2,), m, self.model) == tau_sq_naive(build_w(s))


def test_selection_agreement():
    sels = [Selection((0, 1), "gap"), Selection((0, 1), "gap"), Selection((2,), "gap")]
    assert selection_agreement(sels) == pytest.approx(2 / 3)


@pytest.mark.slow
def test_c_hat_converges_to_oracle():
    """The median gap to the oracle coefficient roughly halves from n = 200 to n = 800."""
    gaps = {}
    for n in (200, 800):
        sc = Scenario(n, n, 6, 2.0, 0.9, reps=200, base_seed=88)
        S = sc.theta_set
        c_star = c_oracle(exact_moments(sc, [S]), S, 15.0).value
        vals = []
        for r in range(sc.reps):
            s = gen_dataset(sc, r)
            vals.append(c_hat(build_w(s), zero_stat(s, S, 15.0)).value)
        gaps[n] = np.median(np.abs(np.array(vals) - c_star))
    assert gaps[800] <= 0.6 * gaps[200]


@pytest.mark.slow
def test_oracle_correction_never_inflates_variance():
    sc = Scenario(200, 200, 6, 2.0, 0.1, reps=1000, base_seed=89)
    S = tuple(range(sc.p))
    vg = sc.p * (sc.p - 1) / 2
    c_star = c_oracle(exact_moments(sc, [S]), S, vg).value
    naive, corrected = [], []
    for r in range(sc.reps):
        s = gen_dataset(sc, r)
        t = tau_sq_naive(build_w(s))
        naive.append(t)
        corrected.append(improve(t, c_star, zero_stat(s, S, vg)))
    v0, v1 = np.var(naive, ddof=1), np.var(corrected, ddof=1)
    band = 3 * np.sqrt(2 / (sc.reps - 1))
    assert v1 <= v0 * (1 + band)
