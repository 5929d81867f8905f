"""Replicated-simulation harness: aggregation identities and reproducibility.

The 4-unit decomposition oracle: treated units have (y1, y0) = (3, 1) twice,
controls have (2, 0) twice.  Arm-conditional potential-outcome means are
a1=3, a2=2, a3=1, a4=0 with treated share 0.5; the sample effect is
mean(y1) - mean(y0) = 2.  Hence observed gap 3 - 0 = 3 overshoots by 1,
entirely from the baseline difference a3 - a4 = 1; the heterogeneity term
(1 - 0.5) * ((3-1) - (2-0)) is zero.
"""

import dataclasses

import numpy as np
import pytest

from causalkit import (
    GroundTruth,
    McConfig,
    ObsDgpConfig,
    ObservationalDataset,
    dr_suite,
    error_decomposition,
    naive_dim,
    run_mc,
    scenario_feature_maps,
    summarize_estimator,
)
from causalkit.errors import ConfigError, EstimationError


class TestSummarizeEstimator:
    def test_two_value_oracle(self):
        s = summarize_estimator("e", values=[1.0, 3.0], true_value=2.0)
        assert s.mean_estimate == 2.0
        assert s.bias == 0.0
        assert s.variance == 1.0
        assert s.mse == 1.0
        assert s.mc_se_mean == 1.0

    def test_mse_identity_exact(self):
        rng = np.random.default_rng(0)
        values = rng.normal(size=101) * 3 + 1
        s = summarize_estimator("e", values=values, true_value=0.7)
        assert s.mse == s.variance + s.bias**2

    def test_identical_values_have_zero_variance(self):
        s = summarize_estimator("e", values=[2.5] * 8, true_value=2.0)
        assert s.variance == 0.0
        assert s.bias == 0.5
        assert s.mse == 0.25

    def test_coverage_fraction(self):
        s = summarize_estimator(
            "e", values=[1.0, 2.0], true_value=1.5, covered=[True, False, True, True]
        )
        assert s.coverage == 0.75

    def test_empty_values_rejected(self):
        with pytest.raises(EstimationError):
            summarize_estimator("e", values=[], true_value=0.0)


class TestErrorDecomposition:
    def test_four_unit_oracle(self):
        ds = ObservationalDataset(
            x=np.zeros((4, 0)), a=[1, 1, 0, 0], y=[3.0, 3.0, 0.0, 0.0]
        )
        truth = GroundTruth(y1=[3.0, 3.0, 2.0, 2.0], y0=[1.0, 1.0, 0.0, 0.0])
        dec = error_decomposition(ds, truth)
        assert dec.alpha1 == 3.0
        assert dec.alpha2 == 2.0
        assert dec.alpha3 == 1.0
        assert dec.alpha4 == 0.0
        assert dec.rho == 0.5
        assert dec.sample_ate == 2.0
        assert dec.total_gap == pytest.approx(1.0, abs=1e-12)
        assert dec.baseline_diff == pytest.approx(1.0, abs=1e-12)
        assert dec.het_term == pytest.approx(0.0, abs=1e-12)

    def test_decomposition_identity(self):
        rng = np.random.default_rng(5)
        for seed in range(5):
            n = 40
            y1 = rng.normal(size=n) + 2
            y0 = rng.normal(size=n)
            a = rng.integers(0, 2, size=n)
            if a.sum() in (0, n):
                a[0] = 1 - a[0]
            ds = ObservationalDataset(
                x=np.zeros((n, 0)), a=a, y=np.where(a == 1, y1, y0)
            )
            truth = GroundTruth(y1=y1, y0=y0)
            dec = error_decomposition(ds, truth)
            assert dec.total_gap == pytest.approx(
                dec.baseline_diff + dec.het_term, abs=1e-12
            )

    def test_observed_gap_matches_naive(self):
        cfg = ObsDgpConfig(n=300, d=2, confounding_strength=1.0, tau=2.0)
        from causalkit import generate_observational

        ds, truth = generate_observational(cfg, 4)
        dec = error_decomposition(ds, truth)
        naive = naive_dim(ds).psi_hat
        assert naive == pytest.approx(dec.sample_ate + dec.total_gap, abs=1e-10)


class TestScenarioFeatureMaps:
    def test_table(self):
        lin = ObsDgpConfig(n=10, propensity_form="linear", outcome_form="linear")
        quad = ObsDgpConfig(
            n=10,
            propensity_form="linear_plus_quadratic",
            outcome_form="linear_plus_quadratic",
        )
        assert scenario_feature_maps(lin, "both_correct") == ("linear", "linear")
        assert scenario_feature_maps(lin, "pi_wrong") == ("linear_plus_quadratic", "linear")
        assert scenario_feature_maps(quad, "both_correct") == (
            "linear_plus_quadratic",
            "linear_plus_quadratic",
        )
        assert scenario_feature_maps(quad, "mu_wrong") == (
            "linear_plus_quadratic",
            "linear",
        )
        assert scenario_feature_maps(quad, "both_wrong") == ("linear", "linear")

    def test_unknown_scenario_rejected(self):
        with pytest.raises(ConfigError):
            scenario_feature_maps(ObsDgpConfig(n=10), "sideways")


BASE = ObsDgpConfig(n=50, d=1, confounding_strength=0.5, tau=1.0)


class TestRunMc:
    def test_deterministic(self):
        cfg = McConfig(dgp=BASE, estimators=("naive", "aipw"), replications=4, n=200, seed=9)
        r1 = run_mc(cfg)
        r2 = run_mc(cfg)
        assert r1 == r2

    def test_estimator_subsets_share_replication_streams(self):
        full = McConfig(dgp=BASE, estimators=("naive", "aipw"), replications=4, n=200, seed=3)
        solo = dataclasses.replace(full, estimators=("naive",))
        row_full = next(r for r in run_mc(full).rows if r.estimator == "naive")
        row_solo = run_mc(solo).rows[0]
        assert row_full.mean_estimate == row_solo.mean_estimate

    def test_report_shape(self):
        cfg = McConfig(
            dgp=dataclasses.replace(BASE, tau=2.0),
            estimators=("naive", "ipw", "ipw_oracle", "gformula", "aipw"),
            replications=3,
            n=150,
            seed=0,
        )
        report = run_mc(cfg)
        assert report.true_ate == 2.0
        assert report.n == 150
        assert [r.estimator for r in report.rows] == list(cfg.estimators)
        aipw_row = next(r for r in report.rows if r.estimator == "aipw")
        assert aipw_row.n_ok == 3
        assert aipw_row.mean_clip_count is not None
        naive_row = next(r for r in report.rows if r.estimator == "naive")
        assert naive_row.mean_clip_count is None

    def test_psm_runs_and_reports_unmatched(self):
        cfg = McConfig(dgp=BASE, estimators=("psm",), replications=3, n=120, seed=2)
        row = run_mc(cfg).rows[0]
        assert row.mean_unmatched is not None

    def test_failure_ceiling_enforced(self):
        # at n=4 with 2 folds most draws leave a training half single-armed,
        # so cross-fitting fails in well over a tenth of replications
        bad = ObsDgpConfig(n=4, d=1, confounding_strength=0.0, tau=0.0)
        cfg = McConfig(dgp=bad, estimators=("aipw",), replications=5, n=4, k=2, seed=0)
        with pytest.raises(EstimationError, match="fail"):
            run_mc(cfg)

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            McConfig(dgp=BASE, estimators=("nope",), replications=3, n=100)
        with pytest.raises(ConfigError):
            McConfig(dgp=BASE, replications=1, n=100)
        with pytest.raises(ConfigError):
            McConfig(dgp=BASE, replications=3, n=100, scenario="weird")


class TestDrSuite:
    def test_scenarios_share_data_streams(self):
        base = ObsDgpConfig(
            n=100,
            d=1,
            confounding_strength=0.5,
            tau=1.0,
            outcome_form="linear_plus_quadratic",
            propensity_form="linear_plus_quadratic",
        )
        suite = dr_suite(base, replications=3, n=100, seed=7, estimators=("naive", "aipw"))
        assert set(suite) == {"both_correct", "pi_wrong", "mu_wrong", "both_wrong"}
        naive_rows = {
            k: next(r for r in rep.rows if r.estimator == "naive")
            for k, rep in suite.items()
        }
        # naive ignores the nuisance models, so its row is identical across
        # scenarios precisely because the data streams are shared
        means = {r.mean_estimate for r in naive_rows.values()}
        assert len(means) == 1
