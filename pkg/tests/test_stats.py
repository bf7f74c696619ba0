import numpy as np
import pytest
from scipy import stats as sps

from scenesmith.analysis import (
    RankDeficientDesign,
    ZeroTotalVariance,
    ancova,
    bootstrap_ci,
    cohen_kappa,
    cronbach_alpha,
    independent_t,
    paired_t,
)


class TestCohenKappa:
    def test_symmetric_confusion(self):
        assert cohen_kappa([[40, 10], [10, 40]]) == pytest.approx(0.6, abs=1e-12)

    def test_perfect_agreement(self):
        assert cohen_kappa([[30, 0], [0, 70]]) == pytest.approx(1.0)

    def test_chance_agreement_is_zero(self):
        # marginals independent: observed equals expected agreement
        assert cohen_kappa([[25, 25], [25, 25]]) == pytest.approx(0.0, abs=1e-12)

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            cohen_kappa([[1, 2, 3], [4, 5, 6]])


class TestCronbachAlpha:
    def test_identical_items(self):
        base = np.array([3.0, 5.0, 2.0, 4.0])
        items = np.column_stack([base, base, base])
        assert cronbach_alpha(items) == pytest.approx(1.0)

    def test_two_uncorrelated_equal_variance_items(self):
        # sample covariance exactly 0, equal sample variances -> alpha = 0
        a = np.array([1.0, 2.0, 3.0, 4.0])
        b = np.array([2.0, 4.0, 1.0, 3.0])
        assert float(np.cov(a, b, ddof=1)[0, 1]) == pytest.approx(0.0, abs=1e-12)
        assert cronbach_alpha(np.column_stack([a, b])) == pytest.approx(0.0, abs=1e-12)

    def test_zero_total_variance_raises(self):
        with pytest.raises(ZeroTotalVariance):
            cronbach_alpha(np.ones((5, 3)))


class TestPairedT:
    def test_frozen_oracle(self):
        # diffs {1, 2, 2}: mean 5/3, sd 1/sqrt(3), d = 5/sqrt(3) / ... = 2.8868
        result = paired_t([2.0, 4.0, 5.0], [1.0, 2.0, 3.0])
        assert result.effect_size == pytest.approx(2.8868, abs=1e-4)
        assert result.statistic == pytest.approx(result.effect_size * np.sqrt(3), rel=1e-12)

    def test_matches_scipy(self):
        rng = np.random.default_rng(3)
        x = rng.normal(10, 2, size=40)
        y = rng.normal(9, 2, size=40)
        result = paired_t(x, y)
        t, p = sps.ttest_rel(x, y)
        assert result.statistic == pytest.approx(float(t), rel=1e-12)
        assert result.p_value == pytest.approx(float(p), rel=1e-9)
        assert result.df == 39

    def test_identity_t_equals_d_root_n(self):
        rng = np.random.default_rng(99)
        for _ in range(1000):
            n = int(rng.integers(3, 60))
            x = rng.normal(0, 1, size=n)
            y = rng.normal(0.3, 1.2, size=n)
            result = paired_t(x, y)
            assert result.statistic == pytest.approx(
                result.effect_size * np.sqrt(n), rel=1e-12, abs=1e-12)


class TestIndependentT:
    def test_matches_scipy(self):
        rng = np.random.default_rng(4)
        a = rng.normal(5, 1, size=30)
        b = rng.normal(4.5, 1, size=25)
        result = independent_t(a, b)
        t, p = sps.ttest_ind(a, b, equal_var=True)
        assert result.statistic == pytest.approx(float(t), rel=1e-12)
        assert result.p_value == pytest.approx(float(p), rel=1e-9)
        assert result.df == 53


def _normal_equations_ancova(post, pre, cond):
    """Brute-force oracle: solve X'X beta = X'y directly."""
    X = np.column_stack([np.ones(len(post)), cond, pre])
    beta = np.linalg.solve(X.T @ X, X.T @ post)
    resid = post - X @ beta
    ss_err = float(resid @ resid)
    X0 = np.column_stack([np.ones(len(post)), pre])
    beta0 = np.linalg.solve(X0.T @ X0, X0.T @ post)
    ss_err0 = float((post - X0 @ beta0) @ (post - X0 @ beta0))
    ss_cond = ss_err0 - ss_err
    f = ss_cond / (ss_err / (len(post) - 3))
    return beta, f, ss_cond / (ss_cond + ss_err)


class TestAncova:
    def test_matches_normal_equations_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            n = int(rng.integers(8, 21))
            pre = rng.normal(60, 8, size=n)
            cond = (rng.random(n) < 0.5).astype(float)
            if cond.sum() < 2 or (1 - cond).sum() < 2:
                cond[:2] = 1.0
                cond[2:4] = 0.0
            post = 20 + 0.8 * pre + 4 * cond + rng.normal(0, 3, size=n)
            result = ancova(post, pre, cond)
            beta, f, eta = _normal_equations_ancova(post, pre, cond)
            assert result.coefficients == pytest.approx(tuple(beta), abs=1e-9)
            assert result.F == pytest.approx(f, abs=1e-9)
            assert result.partial_eta_sq == pytest.approx(eta, abs=1e-9)
            assert result.df == (1, n - 3)

    def test_adjusted_means_at_grand_mean_pre(self):
        rng = np.random.default_rng(8)
        n = 20
        pre = rng.normal(60, 8, size=n)
        cond = np.array([1.0] * 10 + [0.0] * 10)
        post = 10 + 0.5 * pre + 6 * cond + rng.normal(0, 2, size=n)
        result = ancova(post, pre, cond)
        b0, b1, b2 = result.coefficients
        assert result.adjusted_means[1.0] == pytest.approx(b0 + b1 + b2 * pre.mean())
        assert result.adjusted_means[0.0] == pytest.approx(b0 + b2 * pre.mean())

    def test_rank_deficient_raises(self):
        with pytest.raises(RankDeficientDesign):
            ancova([1.0, 2.0, 3.0, 4.0], [5.0, 5.0, 5.0, 5.0], [1.0, 1.0, 0.0, 0.0])
        with pytest.raises(RankDeficientDesign):
            ancova([1.0, 2.0, 3.0, 4.0], [1.0, 2.0, 3.0, 4.0], [1.0, 1.0, 1.0, 1.0])


class TestBootstrapCI:
    def test_deterministic_and_order_free(self):
        rng = np.random.default_rng(10)
        data = list(rng.normal(5, 1, size=30))
        est = lambda units: float(np.mean(units))
        ci1 = bootstrap_ci(est, data, B=200, seed=5)
        ci2 = bootstrap_ci(est, data, B=200, seed=5)
        assert ci1 == ci2

    def test_covers_true_mean(self):
        rng = np.random.default_rng(11)
        data = list(rng.normal(5, 1, size=200))
        est = lambda units: float(np.mean(units))
        lo, hi = bootstrap_ci(est, data, B=500, seed=1)
        assert lo < 5 < hi
        assert hi - lo < 0.6

    def test_rejects_small_b(self):
        with pytest.raises(ValueError):
            bootstrap_ci(lambda u: 0.0, [1.0, 2.0], B=10, seed=0)
