import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from didcont.estimator import atet_rcs
from didcont.kernels import kernel_weights, rule_of_thumb_bandwidth
from didcont.model import (
    EstimandSpec,
    EstimationConfig,
    InputError,
    RepeatedCrossSectionSample,
    relabel_lagged,
)
from didcont.nuisance import RcsNuisances
from didcont.pipeline import RunReport, estimate_atet
from didcont.simulation import simulate_panel, simulate_rcs

NOTRIM = EstimationConfig(trim_threshold=1.0, lasso_cv_folds=3)


def lagged_rcs_12():
    """Twelve rows over periods {0, 3}: outcomes three periods apart,
    treated doses near 3 and control doses near 2 in both periods."""
    d = np.array([2.8, 3.2, 3.0, 1.8, 2.2, 2.0, 2.8, 3.2, 3.0, 1.8, 2.2, 2.0])
    period = np.array([3] * 6 + [0] * 6, dtype=np.int64)
    rng = np.random.default_rng(11)
    return RepeatedCrossSectionSample(
        y=rng.normal(size=12),
        d=d,
        period=period,
        history=np.empty((12, 0)),
        x=rng.normal(size=(12, 2)),
    )


class TestLaggedEquivalence:
    def test_relabel_then_estimate_matches_direct_transcription(self):
        s = lagged_rcs_12()
        est = EstimandSpec(3.0, 2.0, t=3, lag=2)
        rng = np.random.default_rng(12)
        nu = RcsNuisances(
            mu_treat_pre=rng.normal(size=12),
            mu_ctrl_post=rng.normal(size=12),
            mu_ctrl_pre=rng.normal(size=12),
            rho_treat_post=rng.uniform(0.5, 2.0, 12),
            rho_treat_pre=rng.uniform(0.5, 2.0, 12),
            rho_ctrl_post=rng.uniform(0.5, 2.0, 12),
            rho_ctrl_pre=rng.uniform(0.5, 2.0, 12),
        )
        h = 0.5

        relabeled, flat = relabel_lagged(s, est)
        assert flat.lag == 0
        assert set(np.unique(relabeled.period)) == {2, 3}
        got = atet_rcs(relabeled, nu, flat, NOTRIM, bandwidth=h).delta_hat

        # direct evaluation of the lagged DR display on the original
        # labels: period t-s-1 = 0 plays the pre period
        post = s.period == 3
        pre = s.period == 0
        wt = kernel_weights(s.d, 3.0, h, "epanechnikov")
        wc = kernel_weights(s.d, 2.0, h, "epanechnikov")
        g1 = np.where(post, wt, 0.0)
        g2 = np.where(pre, wt * nu.rho_treat_post / nu.rho_treat_pre, 0.0)
        g3 = np.where(post, wc * nu.rho_treat_post / nu.rho_ctrl_post, 0.0)
        g4 = np.where(pre, wc * nu.rho_treat_post / nu.rho_ctrl_pre, 0.0)
        r1 = (s.y - nu.mu_ctrl_post) - (nu.mu_treat_pre - nu.mu_ctrl_pre)
        e2 = s.y - nu.mu_treat_pre
        e3 = s.y - nu.mu_ctrl_post
        e4 = s.y - nu.mu_ctrl_pre
        t1 = (g1 / g1.sum()) @ r1
        t2 = (g2 / g2.sum()) @ e2
        t3 = (g3 / g3.sum()) @ e3
        t4 = (g4 / g4.sum()) @ e4
        expect = (t1 - t2) - (t3 - t4)
        assert abs(got - expect) < 1e-12


class TestEstimateAtet:
    def test_panel_end_to_end(self):
        s = simulate_panel(240, 3, seed=1)
        est = EstimandSpec(3.0, 2.0, t=1)
        cfg = EstimationConfig(trim_threshold=1.0, lasso_cv_folds=3, seed=4)
        rep = estimate_atet(s, "panel", est, cfg)
        assert rep.design == "panel"
        assert rep.n == 240
        assert np.isfinite(rep.estimate.delta_hat)
        assert rep.estimate.se >= 0
        assert rep.estimate.ci_low <= rep.estimate.delta_hat <= rep.estimate.ci_high
        assert rep.estimate.h_used == pytest.approx(rule_of_thumb_bandwidth(240))
        assert rep.duration_s is not None and rep.duration_s > 0
        assert rep.bootstrap_b == 0 and rep.boot_ci_low is None

    def test_rcs_end_to_end_from_mapping(self):
        s = simulate_rcs(300, 3, seed=2)
        data = {"y": s.y, "d": s.d, "t": s.period}
        data.update({f"x{j+1}": s.x[:, j] for j in range(3)})
        est = EstimandSpec(3.0, 2.0, t=1)
        cfg = EstimationConfig(trim_threshold=1.0, lasso_cv_folds=3)
        rep = estimate_atet(data, "rcs", est, cfg)
        assert rep.design == "rcs"
        assert rep.n == 300
        assert len(rep.estimate.n_trimmed_per_group) == 4

    def test_bootstrap_interval_attached(self):
        s = simulate_panel(200, 2, seed=3)
        est = EstimandSpec(3.0, 2.0, t=1)
        rep = estimate_atet(s, "panel", est, NOTRIM, bootstrap=120)
        assert rep.bootstrap_b == 120
        assert rep.boot_ci_low is not None and rep.boot_ci_high is not None
        assert rep.boot_ci_low <= rep.boot_ci_high

    def test_deterministic_given_seed(self):
        s = simulate_panel(200, 2, seed=5)
        est = EstimandSpec(3.0, 2.0, t=1)
        a = estimate_atet(s, "panel", est, NOTRIM)
        b = estimate_atet(s, "panel", est, NOTRIM)
        assert a.estimate.delta_hat == b.estimate.delta_hat
        assert a.estimate.se == b.estimate.se

    def test_fold_seed_changes_estimate(self):
        s = simulate_panel(200, 2, seed=6)
        est = EstimandSpec(3.0, 2.0, t=1)
        a = estimate_atet(s, "panel", est, NOTRIM)
        b = estimate_atet(
            s, "panel", est, EstimationConfig(trim_threshold=1.0, lasso_cv_folds=3, seed=9)
        )
        assert a.estimate.delta_hat != b.estimate.delta_hat

    def test_lagged_table_selects_periods(self):
        s = simulate_rcs(300, 2, seed=7)
        period = np.where(s.period == 0, 0, 3)
        data = {"y": s.y, "d": s.d, "t": period,
                "x1": s.x[:, 0], "x2": s.x[:, 1]}
        est = EstimandSpec(3.0, 2.0, t=3, lag=2)
        rep = estimate_atet(data, "rcs", est, NOTRIM)
        assert np.isfinite(rep.estimate.delta_hat)

    def test_missing_lagged_period_errors(self):
        s = simulate_rcs(100, 2, seed=8)
        data = {"y": s.y, "d": s.d, "t": s.period + 1,
                "x1": s.x[:, 0], "x2": s.x[:, 1]}
        est = EstimandSpec(3.0, 2.0, t=2, lag=1)
        with pytest.raises(InputError, match="required period 0 absent"):
            estimate_atet(data, "rcs", est, NOTRIM)

    def test_design_validation(self):
        s = simulate_panel(60, 2, seed=9)
        with pytest.raises(InputError, match="design must be 'rcs' or 'panel'"):
            estimate_atet(s, "cohort", EstimandSpec(3.0, 2.0, t=1), NOTRIM)

    def test_alpha_validation(self):
        s = simulate_panel(60, 2, seed=10)
        with pytest.raises(InputError, match="alpha"):
            estimate_atet(s, "panel", EstimandSpec(3.0, 2.0, t=1), NOTRIM, alpha=1.0)

    def test_degenerate_contrast_through_pipeline(self):
        s = simulate_panel(200, 2, seed=11)
        est = EstimandSpec(2.5, 2.5, t=1)
        rep = estimate_atet(s, "panel", est, NOTRIM)
        assert rep.estimate.delta_hat == 0.0


class TestRunReport:
    def make_report(self):
        s = simulate_panel(200, 2, seed=12)
        return estimate_atet(
            s, "panel", EstimandSpec(3.0, 2.0, t=1), NOTRIM, bootstrap=100
        )

    def test_round_trip(self):
        rep = self.make_report()
        back = RunReport.from_record(rep.to_record())
        assert back.estimand == rep.estimand
        assert back.config == rep.config
        assert back.estimate == rep.estimate
        assert back.alpha == rep.alpha
        assert back.n == rep.n
        assert back.boot_ci_low == rep.boot_ci_low
        assert back.duration_s is None

    def test_machine_record_is_byte_stable(self):
        s = simulate_panel(200, 2, seed=13)
        est = EstimandSpec(3.0, 2.0, t=1)
        a = estimate_atet(s, "panel", est, NOTRIM)
        b = estimate_atet(s, "panel", est, NOTRIM)
        ja = json.dumps(a.to_record(), sort_keys=True)
        jb = json.dumps(b.to_record(), sort_keys=True)
        assert ja == jb

    def test_duration_withheld_from_record(self):
        rep = self.make_report()
        assert rep.duration_s is not None
        assert rep.to_record()["duration_s"] is None
