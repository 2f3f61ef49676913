import numpy as np
import pytest
from numpy.testing import assert_allclose

from didcont.estimator import atet_panel, atet_rcs
from didcont.inference import (
    ScoreVector,
    ci_asymptotic,
    compute_scores,
    multiplier_bootstrap,
    multiplier_stream,
    variance_hat,
)
from didcont.model import (
    EstimandSpec,
    EstimationConfig,
    EstimationError,
    InputError,
    PanelSample,
    RepeatedCrossSectionSample,
)
from didcont.nuisance import PanelNuisances, RcsNuisances

EST = EstimandSpec(3.0, 2.0, t=1)
NOTRIM = EstimationConfig(trim_threshold=1.0, lasso_cv_folds=3)


def panel_fixture():
    d = np.array([3.0, 3.2, 2.8, 2.0, 2.2, 1.8])
    y_pre = np.array([1.0, 0.5, 1.5, 1.0, 2.0, 0.0])
    y_post = np.array([9.0, 10.0, 8.5, 4.0, 6.0, 3.0])
    return PanelSample(
        y_pre=y_pre, y_post=y_post, d=d, history=np.empty((6, 0)), x=np.zeros((6, 1))
    )


def unit_panel_nuisances(n=6):
    return PanelNuisances(m_ctrl=np.zeros(n), p_treat=np.ones(n), p_ctrl=np.ones(n))


def rcs_fixture():
    d = np.array([2.8, 3.2, 2.8, 3.2, 1.8, 2.2, 1.8, 2.2])
    period = np.array([1, 1, 0, 0, 1, 1, 0, 0], dtype=np.int64)
    y = np.array([4.0, 6.0, 1.0, 2.0, 1.5, 2.5, 0.5, 1.5])
    return RepeatedCrossSectionSample(
        y=y, d=d, period=period, history=np.empty((8, 0)), x=np.zeros((8, 1))
    )


def unit_rcs_nuisances(n=8):
    ones = np.ones(n)
    zero = np.zeros(n)
    return RcsNuisances(zero, zero, zero, ones, ones, ones, ones)


class TestComputeScores:
    def test_panel_mean_recovers_delta(self):
        s = panel_fixture()
        nu = unit_panel_nuisances()
        est = atet_panel(s, nu, EST, NOTRIM, bandwidth=0.5)
        sc = compute_scores(s, nu, EST, NOTRIM, est.delta_hat, bandwidth=0.5)
        assert abs(np.mean(sc.psi) - est.delta_hat) < 1e-10
        assert sc.design == "panel"

    def test_rcs_mean_recovers_delta(self):
        s = rcs_fixture()
        nu = unit_rcs_nuisances()
        est = atet_rcs(s, nu, EST, NOTRIM, bandwidth=0.5)
        sc = compute_scores(s, nu, EST, NOTRIM, est.delta_hat, bandwidth=0.5)
        assert abs(np.mean(sc.psi) - est.delta_hat) < 1e-10
        assert sc.design == "rcs"

    def test_pi_hat_is_full_sample_kernel_mass(self):
        s = panel_fixture()
        nu = unit_panel_nuisances()
        sc = compute_scores(s, nu, EST, NOTRIM, 0.0, bandwidth=0.5)
        assert abs(sc.pi_hat - 4.02 / 6.0) < 1e-12
        r = rcs_fixture()
        nur = unit_rcs_nuisances()
        scr = compute_scores(r, nur, EST, NOTRIM, 0.0, bandwidth=0.5)
        assert abs(scr.pi_hat - 2.52 / 8.0) < 1e-12

    def test_single_group_form(self):
        # control-dose rows get zero residual, so only the g1 term
        # survives: psi_i = kernel_i * resid_i / pi_hat
        s = panel_fixture()
        m = np.where(s.d < 2.5, s.y_post - s.y_pre, 0.0)
        nu = PanelNuisances(m_ctrl=m, p_treat=np.ones(6), p_ctrl=np.ones(6))
        est = atet_panel(s, nu, EST, NOTRIM, bandwidth=0.5)
        sc = compute_scores(s, nu, EST, NOTRIM, est.delta_hat, bandwidth=0.5)
        resid = (s.y_post - s.y_pre) - m
        assert_allclose(sc.psi, sc.kernel_treat * resid / sc.pi_hat, rtol=0, atol=1e-12)
        assert abs(np.mean(sc.psi) - est.delta_hat) < 1e-12

    def test_hand_transcribed_panel_scores(self):
        s = panel_fixture()
        nu = unit_panel_nuisances()
        est = atet_panel(s, nu, EST, NOTRIM, bandwidth=0.5)
        sc = compute_scores(s, nu, EST, NOTRIM, est.delta_hat, bandwidth=0.5)
        dy = s.y_post - s.y_pre
        norm1 = np.array([1.5, 1.26, 1.26, 0, 0, 0]) / 4.02
        norm2 = np.array([0, 0, 0, 1.5, 1.26, 1.26]) / 4.02
        assert_allclose(sc.psi, 6.0 * (norm1 - norm2) * dy, rtol=0, atol=1e-12)

    def test_trimmed_rows_contribute_zero(self):
        d = np.array([3.0, 3.45, 3.45, 3.45, 2.0, 2.1, 1.9, 2.05])
        rng = np.random.default_rng(6)
        s = PanelSample(
            y_pre=rng.normal(size=8),
            y_post=rng.normal(size=8),
            d=d,
            history=np.empty((8, 0)),
            x=np.zeros((8, 1)),
        )
        nu = unit_panel_nuisances(8)
        cfg = EstimationConfig(trim_threshold=0.4, lasso_cv_folds=3)
        est = atet_panel(s, nu, EST, cfg, bandwidth=0.5)
        assert est.n_trimmed_per_group == (1, 0)
        sc = compute_scores(s, nu, EST, cfg, est.delta_hat, bandwidth=0.5)
        assert sc.psi[0] == 0.0
        assert abs(np.mean(sc.psi) - est.delta_hat) < 1e-10

    def test_vanishing_kernel_mass_at_treated_dose(self):
        # one treated-dose row sits at the very edge of the kernel
        # support: group weights stay positive but the full-sample mass
        # underflows the guard
        d = np.array([2.5 + 1e-13, 2.0, 2.2, 1.8, 2.1, 1.9])
        rng = np.random.default_rng(7)
        s = PanelSample(
            y_pre=rng.normal(size=6),
            y_post=rng.normal(size=6),
            d=d,
            history=np.empty((6, 0)),
            x=np.zeros((6, 1)),
        )
        nu = unit_panel_nuisances()
        with pytest.raises(EstimationError, match="pi_hat below 1e-12"):
            compute_scores(s, nu, EST, NOTRIM, 0.0, bandwidth=0.5)


def plain_scores(psi, pi_hat=1.0, delta=None, kernel=None, design="panel"):
    psi = np.asarray(psi, dtype=np.float64)
    if delta is None:
        delta = float(np.mean(psi))
    if kernel is None:
        kernel = np.full(psi.shape[0], pi_hat)
    return ScoreVector(
        psi=psi, pi_hat=pi_hat, delta_hat=delta, kernel_treat=np.asarray(kernel), design=design
    )


class TestVarianceHat:
    def test_degenerate_scores_give_zero(self):
        sc = plain_scores(np.full(10, 5.0), pi_hat=0.7)
        assert variance_hat(sc) == 0.0

    def test_homogeneity(self):
        rng = np.random.default_rng(0)
        psi = rng.normal(size=50)
        psi -= psi.mean()
        base = variance_hat(plain_scores(psi, delta=0.0))
        doubled = variance_hat(plain_scores(2 * psi, delta=0.0))
        assert abs(doubled - 4 * base) < 1e-12

    def test_kernel_mass_term_enters(self):
        rng = np.random.default_rng(1)
        psi = rng.normal(size=50) + 5.0
        kernel = rng.uniform(0.0, 2.0, size=50)
        pi = float(np.mean(kernel))
        sc = plain_scores(psi, pi_hat=pi, delta=5.0, kernel=kernel)
        phi = psi - 5.0
        adj = (5.0 / pi) * (kernel - pi)
        expect = float(np.mean((phi - adj) ** 2))
        assert abs(variance_hat(sc) - expect) < 1e-12

    def test_permutation_invariance(self):
        rng = np.random.default_rng(2)
        psi = rng.normal(size=40)
        kernel = rng.uniform(0.0, 2.0, size=40)
        sc = plain_scores(psi, pi_hat=float(np.mean(kernel)), delta=1.0, kernel=kernel)
        perm = rng.permutation(40)
        sp = plain_scores(
            psi[perm], pi_hat=sc.pi_hat, delta=1.0, kernel=kernel[perm]
        )
        assert abs(variance_hat(sc) - variance_hat(sp)) < 1e-12

    def test_design_tag_checked(self):
        sc = plain_scores(np.ones(5), design="rcs")
        with pytest.raises(InputError, match="design"):
            variance_hat(sc, "panel")


class TestCiAsymptotic:
    def test_normal_quantile_arithmetic(self):
        low, high = ci_asymptotic(5.0, 4.0, 100, 0.05)
        assert abs(low - 4.608) < 1e-3
        assert abs(high - 5.392) < 1e-3

    def test_zero_variance_collapses(self):
        low, high = ci_asymptotic(3.0, 0.0, 50, 0.05)
        assert low == 3.0 and high == 3.0

    def test_near_one_alpha_shrinks(self):
        low, high = ci_asymptotic(5.0, 4.0, 100, 0.9999)
        assert high - low < 1e-3

    def test_width_scales_with_root_n(self):
        w100 = np.diff(ci_asymptotic(0.0, 1.0, 100, 0.05))[0]
        w400 = np.diff(ci_asymptotic(0.0, 1.0, 400, 0.05))[0]
        assert abs(w100 / w400 - 2.0) < 1e-10

    @pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1, 1.7])
    def test_alpha_validation(self, alpha):
        with pytest.raises(InputError, match="alpha"):
            ci_asymptotic(0.0, 1.0, 10, alpha)

    def test_negative_variance_rejected(self):
        with pytest.raises(InputError, match="sigma2_hat"):
            ci_asymptotic(0.0, -1.0, 10, 0.05)


class TestMultiplierStream:
    def test_moments_close_to_one(self):
        xi = multiplier_stream(0, 0, 100_000)
        assert abs(xi.mean() - 1.0) < 0.02
        assert abs(xi.var() - 1.0) < 0.02

    def test_deterministic_per_replication(self):
        a = multiplier_stream(3, 7, 50)
        b = multiplier_stream(3, 7, 50)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, multiplier_stream(3, 8, 50))
        assert not np.array_equal(a, multiplier_stream(4, 7, 50))

    def test_ones_hook(self):
        assert np.array_equal(multiplier_stream(0, 0, 5, "ones"), np.ones(5))

    def test_unknown_kind(self):
        with pytest.raises(InputError, match="multiplier kind"):
            multiplier_stream(0, 0, 5, "rademacher")


class TestMultiplierBootstrap:
    def test_needs_one_hundred_replications(self):
        sc = plain_scores(np.ones(10))
        with pytest.raises(InputError, match="multiplier bootstrap needs B >= 100"):
            multiplier_bootstrap(sc, 99, 0.05, seed=0)

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        sc = plain_scores(rng.normal(size=60) + 2.0)
        a = multiplier_bootstrap(sc, 200, 0.05, seed=5)
        b = multiplier_bootstrap(sc, 200, 0.05, seed=5)
        assert a == b
        c = multiplier_bootstrap(sc, 200, 0.05, seed=6)
        assert a != c

    def test_ones_hook_collapses_interval(self):
        rng = np.random.default_rng(4)
        sc = plain_scores(rng.normal(size=60) + 2.0)
        low, high = multiplier_bootstrap(sc, 100, 0.05, seed=0, multiplier="ones")
        assert high - low < 1e-10
        assert abs(low - sc.delta_hat) < 1e-10

    def test_matches_documented_construction(self):
        rng = np.random.default_rng(5)
        psi = rng.normal(size=40) + 1.0
        sc = plain_scores(psi)
        B, alpha, seed = 150, 0.1, 9
        deltas = np.array(
            [multiplier_stream(seed, b, 40) @ psi / 40.0 for b in range(B)]
        )
        diffs = deltas - sc.delta_hat
        low = sc.delta_hat - np.quantile(diffs, 1 - alpha / 2)
        high = sc.delta_hat - np.quantile(diffs, alpha / 2)
        got = multiplier_bootstrap(sc, B, alpha, seed)
        assert_allclose(got, (low, high), rtol=0, atol=1e-12)

    def test_interval_brackets_estimate_in_regular_cases(self):
        rng = np.random.default_rng(6)
        sc = plain_scores(rng.normal(size=500) + 2.0)
        low, high = multiplier_bootstrap(sc, 500, 0.05, seed=1)
        assert low < sc.delta_hat < high

    def test_alpha_validation(self):
        sc = plain_scores(np.ones(10))
        with pytest.raises(InputError, match="alpha"):
            multiplier_bootstrap(sc, 100, 1.0, seed=0)
