"""Panel, discontinuity, and instrument estimators: oracles and identities.

Oracle values frozen from hand derivations:
- 2x2 cell means (pre, post) x (control, treated) = (1, 2), (3, 6):
  (6 - 3) - (2 - 1) = 2;
- Wald with E[y|z=1]=3, E[y|z=0]=1, E[a|z=1]=0.8, E[a|z=0]=0.3:
  (3 - 1) / (0.8 - 0.3) = 4;
- two-unit within transform: unit A has a=(0,1), y=(0,2), unit B constant;
  demeaned products give slope (0.5 + 0.5) / (0.25 + 0.25) = 2.
"""

import numpy as np
import pytest
from statistics import NormalDist

from causalkit import (
    IvDataset,
    ObservationalDataset,
    PanelDataset,
    PanelDgpConfig,
    RdSpec,
    did,
    did_placebo,
    fe_within,
    generate_panel,
    iv_wald,
    rd_local_linear,
    tsls,
    weak_iv_study,
)
from causalkit.errors import (
    BandwidthError,
    CellError,
    ConfigError,
    IdentificationError,
    InstrumentError,
    InsufficientDataError,
)


def make_panel(unit, period, a, y, group):
    return PanelDataset(unit_id=unit, period_id=period, a=a, y=y, group=group)


class TestDid:
    def test_cell_oracle(self):
        panel = make_panel(
            unit=[0, 0, 1, 1],
            period=[0, 1, 0, 1],
            a=[0, 0, 0, 1],
            y=[1.0, 2.0, 3.0, 6.0],
            group=[0, 0, 1, 1],
        )
        est = did(panel)
        assert est.estimate == 2.0
        assert est.cell_means == (1.0, 2.0, 3.0, 6.0)
        assert est.cell_counts == (1, 1, 1, 1)
        assert est.se is None  # singleton cells carry no variance estimate

    def test_estimate_recomputable_from_cell_means(self):
        cfg = PanelDgpConfig(
            n_units=30, n_periods=2, group_effect=1.0, time_trend=0.5, treatment_effect=2.0
        )
        panel, _, _ = generate_panel(cfg, 3)
        est = did(panel)
        m00, m01, m10, m11 = est.cell_means
        assert est.estimate == (m11 - m10) - (m01 - m00)

    def test_multi_period_uses_first_and_last(self):
        base = dict(
            unit=[0, 0, 0, 1, 1, 1],
            period=[0, 1, 2, 0, 1, 2],
            a=[0, 0, 0, 0, 0, 1],
            group=[0, 0, 0, 1, 1, 1],
        )
        panel = make_panel(y=[1.0, 99.0, 2.0, 3.0, -99.0, 6.0], **base)
        est = did(panel)
        assert est.estimate == 2.0
        assert (est.pre_period, est.post_period) == (0, 2)

    def test_empty_cell_raises(self):
        panel = make_panel(
            unit=[0, 0, 1],
            period=[0, 1, 1],
            a=[0, 0, 1],
            y=[1.0, 2.0, 6.0],
            group=[0, 0, 1],
        )
        with pytest.raises(CellError, match="group=1, period=0"):
            did(panel)

    def test_cell_variance_se(self):
        panel = make_panel(
            unit=[0, 1, 2, 3, 0, 1, 2, 3],
            period=[0, 0, 0, 0, 1, 1, 1, 1],
            a=[0, 0, 0, 0, 0, 0, 1, 1],
            y=[1.0, 3.0, 2.0, 4.0, 2.0, 4.0, 7.0, 9.0],
            group=[0, 0, 1, 1, 0, 0, 1, 1],
        )
        est = did(panel)
        # every cell has two points with sample variance 2, each mean has
        # variance 2/2 = 1, so se = sqrt(4) = 2
        assert est.se == pytest.approx(2.0, abs=1e-12)

    def test_noiseless_violation_recovered_exactly(self):
        cfg = PanelDgpConfig(
            n_units=8,
            n_periods=2,
            group_effect=1.0,
            time_trend=0.25,
            treatment_effect=2.0,
            parallel_violation=0.5,
            noise_sd=0.0,
            unit_effect_sd=0.0,
        )
        panel, _, _ = generate_panel(cfg, 0)
        est = did(panel)
        # the trend break adds violation * (post - pre) on top of the effect
        assert est.estimate == pytest.approx(2.5, abs=1e-12)


class TestDidPlacebo:
    def test_uses_last_two_pretreatment_periods(self):
        cfg = PanelDgpConfig(
            n_units=6,
            n_periods=4,
            time_trend=0.3,
            treatment_effect=2.0,
            noise_sd=0.0,
            unit_effect_sd=0.0,
            first_treated_period=3,
        )
        panel, _, _ = generate_panel(cfg, 0)
        est = did_placebo(panel)
        assert (est.pre_period, est.post_period) == (1, 2)
        assert est.estimate == pytest.approx(0.0, abs=1e-12)

    def test_detects_trend_violation_exactly(self):
        cfg = PanelDgpConfig(
            n_units=6,
            n_periods=4,
            time_trend=0.3,
            treatment_effect=2.0,
            parallel_violation=0.4,
            noise_sd=0.0,
            unit_effect_sd=0.0,
            first_treated_period=3,
        )
        panel, _, _ = generate_panel(cfg, 0)
        est = did_placebo(panel)
        assert est.estimate == pytest.approx(0.4, abs=1e-12)

    def test_two_period_panel_has_no_placebo(self):
        cfg = PanelDgpConfig(n_units=6, n_periods=2, treatment_effect=1.0)
        panel, _, _ = generate_panel(cfg, 0)
        with pytest.raises(InsufficientDataError, match="pre-treatment"):
            did_placebo(panel)


def make_rd(x, y):
    x = np.asarray(x, dtype=float)
    return ObservationalDataset(
        x=x.reshape(-1, 1), a=(x >= 0).astype(int), y=np.asarray(y, dtype=float)
    )


class TestRd:
    def test_exact_line_recovery(self):
        x = np.array([-0.8, -0.6, -0.4, -0.2, 0.1, 0.3, 0.5, 0.7])
        y = np.where(x >= 0, 3.0 + 1.0 * x, 1.0 + 0.5 * x)
        est = rd_local_linear(make_rd(x, y), RdSpec(cutoff=0.0, bandwidth=1.0))
        assert est.estimate == pytest.approx(2.0, abs=1e-10)
        assert est.slope_left == pytest.approx(0.5, abs=1e-10)
        assert est.slope_right == pytest.approx(1.0, abs=1e-10)
        assert (est.n_left, est.n_right) == (4, 4)

    def test_rectangular_equals_windowed_ols(self):
        rng = np.random.default_rng(6)
        x = rng.uniform(-1, 1, size=200)
        y = np.where(x >= 0, 2.0 + x, 0.5 * x) + rng.normal(size=200)
        h = 0.4
        est = rd_local_linear(make_rd(x, y), RdSpec(cutoff=0.0, bandwidth=h))
        jumps = []
        for side in (x < 0, x >= 0):
            mask = side & (np.abs(x) <= h)
            design = np.column_stack([np.ones(mask.sum()), x[mask]])
            beta, *_ = np.linalg.lstsq(design, y[mask], rcond=None)
            jumps.append(beta[0])
        assert est.estimate == pytest.approx(jumps[1] - jumps[0], abs=1e-10)

    def test_bandwidth_boundary_inclusive(self):
        x = np.array([-0.5, -0.2, 0.2, 0.5])
        y = np.array([0.0, 0.3, 2.2, 2.5])
        est = rd_local_linear(make_rd(x, y), RdSpec(cutoff=0.0, bandwidth=0.5))
        assert (est.n_left, est.n_right) == (2, 2)

    def test_triangular_downweights_far_points(self):
        # place an outlier near the edge: triangular deweights it, so the
        # two kernels must disagree
        x = np.array([-0.9, -0.5, -0.1, 0.1, 0.5, 0.9])
        y = np.array([0.0, 0.0, 0.0, 1.0, 1.0, 9.0])
        rect = rd_local_linear(make_rd(x, y), RdSpec(cutoff=0.0, bandwidth=1.0))
        tri = rd_local_linear(make_rd(x, y), RdSpec(cutoff=0.0, bandwidth=1.0, kernel="triangular"))
        assert rect.estimate != pytest.approx(tri.estimate, abs=1e-6)

    def test_triangular_zero_weight_at_bandwidth_excluded(self):
        x = np.array([-1.0, -0.5, -0.1, 0.1, 0.5, 1.0])
        y = np.zeros(6)
        est = rd_local_linear(
            make_rd(x, y), RdSpec(cutoff=0.0, bandwidth=1.0, kernel="triangular")
        )
        assert (est.n_left, est.n_right) == (2, 2)

    def test_too_few_points_raises(self):
        x = np.array([-0.1, 0.1, 0.2])
        y = np.zeros(3)
        with pytest.raises(BandwidthError, match="left=1"):
            rd_local_linear(make_rd(x, y), RdSpec(cutoff=0.0, bandwidth=1.0))

    def test_nonzero_cutoff(self):
        x = np.array([1.2, 1.4, 1.6, 1.8, 2.1, 2.3, 2.5, 2.7])
        a = (x >= 2.0).astype(int)
        y = np.where(x >= 2.0, 5.0, 1.0)
        ds = ObservationalDataset(x=x.reshape(-1, 1), a=a, y=y)
        est = rd_local_linear(ds, RdSpec(cutoff=2.0, bandwidth=1.0))
        assert est.estimate == pytest.approx(4.0, abs=1e-10)


def wald_dataset():
    z = np.array([1] * 5 + [0] * 10)
    a = np.array([1, 1, 1, 1, 0] + [1, 1, 1] + [0] * 7)
    y = np.array([3.0] * 5 + [1.0] * 10)
    return IvDataset(z=z, a=a, y=y)


class TestIv:
    def test_wald_hand_oracle(self):
        est = iv_wald(wald_dataset())
        assert est.late == 4.0
        assert est.first_stage == pytest.approx(0.5, abs=1e-12)
        assert est.reduced_form == pytest.approx(2.0, abs=1e-12)
        assert not est.weak_flag

    def test_ratio_identity_is_exact(self):
        rng = np.random.default_rng(3)
        z = rng.integers(0, 2, size=100)
        a = np.where(rng.random(100) < 0.3, 1 - z, z)
        y = 1.5 * a + rng.normal(size=100)
        est = iv_wald(IvDataset(z=z, a=a, y=y))
        assert est.late == est.reduced_form / est.first_stage

    def test_weak_flag_threshold(self):
        rng = np.random.default_rng(4)
        n = 4000
        z = rng.integers(0, 2, size=n)
        complier = rng.random(n) < 0.02
        a = np.where(complier, z, rng.integers(0, 2, size=n))
        y = a + rng.normal(size=n)
        est = iv_wald(IvDataset(z=z, a=a, y=y))
        assert abs(est.first_stage) < 0.05
        assert est.weak_flag

    def test_constant_instrument_rejected(self):
        with pytest.raises(InstrumentError):
            iv_wald(IvDataset(z=[1, 1, 1], a=[0, 1, 0], y=[0.0, 1.0, 0.0]))

    def test_zero_first_stage_rejected(self):
        ds = IvDataset(z=[1, 1, 0, 0], a=[1, 0, 1, 0], y=[1.0, 0.0, 1.0, 0.0])
        with pytest.raises(InstrumentError, match="first stage"):
            iv_wald(ds)

    def test_se_present_and_positive(self):
        est = iv_wald(wald_dataset())
        assert est.se is not None
        assert est.se > 0


class TestTsls:
    def test_matches_wald_when_just_identified(self):
        rng = np.random.default_rng(7)
        z = rng.integers(0, 2, size=300)
        a = np.where(rng.random(300) < 0.25, 1 - z, z)
        y = 2.0 * a + rng.normal(size=300)
        ds = IvDataset(z=z, a=a, y=y)
        w = iv_wald(ds)
        t = tsls(ds)
        assert t.late == pytest.approx(w.late, abs=1e-10)
        assert t.reduced_form == pytest.approx(t.late * t.first_stage, abs=1e-12)

    def test_exact_recovery_with_covariate(self):
        z = np.array([0, 0, 0, 0, 1, 1, 1, 1])
        x = np.array([0.0, 1.0, 2.0, 3.0, 0.0, 1.0, 2.0, 3.0])
        a = z.copy()
        y = 2.0 * a + 3.0 * x
        ds = IvDataset(z=z, a=a, y=y, x=x.reshape(-1, 1))
        est = tsls(ds)
        assert est.late == pytest.approx(2.0, abs=1e-10)

    def test_covariate_shifts_estimate_when_confounded(self):
        rng = np.random.default_rng(12)
        n = 2000
        x = rng.normal(size=n)
        z = rng.integers(0, 2, size=n)
        complier = rng.random(n) < 0.6
        a = np.where(complier, z, (x > 0).astype(int))
        y = 1.0 * a + 2.0 * x + 0.1 * rng.normal(size=n)
        with_x = tsls(IvDataset(z=z, a=a, y=y, x=x.reshape(-1, 1)))
        without_x = tsls(IvDataset(z=z, a=a, y=y))
        assert abs(with_x.late - 1.0) < abs(without_x.late - 1.0)


class TestFeWithin:
    def test_two_unit_hand_oracle(self):
        panel = make_panel(
            unit=[0, 0, 1, 1],
            period=[0, 1, 0, 1],
            a=[0, 1, 0, 0],
            y=[0.0, 2.0, 1.0, 1.0],
            group=[1, 1, 0, 0],
        )
        est = fe_within(panel)
        assert est.estimate == pytest.approx(2.0, abs=1e-12)
        assert est.n_units == 2
        assert est.n_units_identifying == 1

    def test_equals_dummy_variable_ols(self):
        rng = np.random.default_rng(9)
        n_units, n_periods = 6, 4
        unit = np.repeat(np.arange(n_units), n_periods)
        period = np.tile(np.arange(n_periods), n_units)
        a = (rng.random(n_units * n_periods) < 0.5).astype(int)
        a[unit == 5] = 0  # one never-treated unit
        alpha = rng.normal(size=n_units)
        y = alpha[unit] + 1.7 * a + rng.normal(size=n_units * n_periods)
        group = np.ones(n_units * n_periods, dtype=int)
        panel = make_panel(unit=unit, period=period, a=a, y=y, group=group)
        est = fe_within(panel)

        dummies = np.equal.outer(unit, np.arange(n_units)).astype(float)
        design = np.column_stack([dummies, a.astype(float)])
        beta, *_ = np.linalg.lstsq(design, y, rcond=None)
        assert est.estimate == pytest.approx(beta[-1], abs=1e-8)

        resid = y - design @ beta
        df = len(y) - n_units - 1
        sigma2 = resid @ resid / df
        cov = sigma2 * np.linalg.inv(design.T @ design)
        assert est.se == pytest.approx(np.sqrt(cov[-1, -1]), abs=1e-8)

    def test_no_within_variation_raises(self):
        panel = make_panel(
            unit=[0, 0, 1, 1],
            period=[0, 1, 0, 1],
            a=[1, 1, 0, 0],
            y=[1.0, 2.0, 3.0, 4.0],
            group=[1, 1, 0, 0],
        )
        with pytest.raises(IdentificationError):
            fe_within(panel)


class TestWeakIvStudy:
    def test_rows_cover_grid_in_order(self):
        rows = weak_iv_study((0.2, 0.8), n=400, reps=20, seed=0)
        assert [r.first_stage_strength for r in rows] == [0.2, 0.8]
        assert rows[1].median_ci_width < rows[0].median_ci_width

    def test_deterministic(self):
        r1 = weak_iv_study((0.5,), n=300, reps=10, seed=4)
        r2 = weak_iv_study((0.5,), n=300, reps=10, seed=4)
        assert r1[0].median_late == r2[0].median_late

    def test_invalid_grid_rejected(self):
        with pytest.raises(ConfigError):
            weak_iv_study((), n=100, reps=5)
        with pytest.raises(ConfigError):
            weak_iv_study((0.0, 0.5), n=100, reps=5)
