"""Quasi-experimental estimators: DID, RD local-linear, IV, fixed effects.

These designs trade the unconfoundedness-plus-positivity route for structural
assumptions: parallel trends (DID), continuity at a threshold (RD), exclusion
and relevance of an instrument (IV), or time-invariant unit heterogeneity
(FE).  Standard errors here are diagnostics from the usual textbook formulas,
not the package's influence-function machinery.
"""

from __future__ import annotations

from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .data_model import IvDataset, ObservationalDataset, PanelDataset
from .dgp import IvDgpConfig, generate_iv
from .errors import (
    BandwidthError,
    CellError,
    ConfigError,
    IdentificationError,
    InstrumentError,
    InsufficientDataError,
    RankDeficiencyError,
    ValidationError,
)
from .rng import child_seed

__all__ = [
    "DidEstimate",
    "RdSpec",
    "RdEstimate",
    "IvEstimate",
    "FeEstimate",
    "WeakIvRow",
    "did",
    "did_placebo",
    "rd_local_linear",
    "iv_wald",
    "tsls",
    "fe_within",
    "weak_iv_study",
]

KERNELS = ("rectangular", "triangular")

# First-stage differences below this flag the instrument as weak.  Heuristic,
# reported rather than enforced.
WEAK_IV_THRESHOLD = 0.05


@dataclass(frozen=True)
class DidEstimate:
    """Double difference of the four group-by-period cell means.

    The estimate is always (m11 - m10) - (m01 - m00) computed from the
    stored means, so it can be reproduced from them bit-for-bit.
    """

    estimate: float
    m00: float
    m01: float
    m10: float
    m11: float
    pre_period: int
    post_period: int
    se: float | None = None
    cell_counts: tuple[int, int, int, int] = (0, 0, 0, 0)

    @property
    def cell_means(self) -> tuple[float, float, float, float]:
        return (self.m00, self.m01, self.m10, self.m11)


def _did_cells(panel: PanelDataset, pre: int, post: int) -> DidEstimate:
    cells = {}
    counts = {}
    for g in (0, 1):
        for t, label in ((pre, "pre"), (post, "post")):
            mask = (panel.group == g) & (panel.period_id == t)
            if not mask.any():
                raise CellError(f"empty cell (group={g}, period={t})")
            cells[(g, label)] = panel.y[mask]
            counts[(g, label)] = int(mask.sum())
    m00 = float(cells[(0, "pre")].mean())
    m01 = float(cells[(0, "post")].mean())
    m10 = float(cells[(1, "pre")].mean())
    m11 = float(cells[(1, "post")].mean())
    estimate = (m11 - m10) - (m01 - m00)
    if all(v.size >= 2 for v in cells.values()):
        se = float(
            np.sqrt(sum(np.var(v, ddof=1) / v.size for v in cells.values()))
        )
    else:
        se = None
    return DidEstimate(
        estimate=estimate,
        m00=m00,
        m01=m01,
        m10=m10,
        m11=m11,
        pre_period=int(pre),
        post_period=int(post),
        se=se,
        cell_counts=(
            counts[(0, "pre")],
            counts[(0, "post")],
            counts[(1, "pre")],
            counts[(1, "post")],
        ),
    )


def did(panel: PanelDataset) -> DidEstimate:
    """Difference-in-differences on a two-group panel.

    With more than two periods the comparison collapses to the first and
    last period.  The standard error combines the four cell variances; no
    clustering.
    """
    periods = np.unique(panel.period_id)
    if periods.size < 2:
        raise InsufficientDataError("DID needs at least 2 periods")
    return _did_cells(panel, pre=int(periods[0]), post=int(periods[-1]))


def did_placebo(panel: PanelDataset) -> DidEstimate:
    """Pre-trend placebo: DID on the last two pre-treatment periods.

    A period counts as pre-treatment when no record in it is treated.
    Values far from zero are evidence against parallel trends.
    """
    periods = np.unique(panel.period_id)
    pre_periods = [int(t) for t in periods if not panel.a[panel.period_id == t].any()]
    if len(pre_periods) < 2:
        raise InsufficientDataError(
            f"placebo test needs at least 2 pre-treatment periods, found {len(pre_periods)}"
        )
    return _did_cells(panel, pre=pre_periods[-2], post=pre_periods[-1])


@dataclass(frozen=True)
class RdSpec:
    cutoff: float = 0.0
    bandwidth: float = 1.0
    kernel: str = "rectangular"

    def __post_init__(self) -> None:
        if self.bandwidth <= 0:
            raise ConfigError("bandwidth must be > 0")
        if self.kernel not in KERNELS:
            raise ConfigError(f"unknown kernel '{self.kernel}', expected one of {KERNELS}")


@dataclass(frozen=True)
class RdEstimate:
    estimate: float
    intercept_left: float
    intercept_right: float
    slope_left: float
    slope_right: float
    n_left: int
    n_right: int
    se: float | None = None


def _wls_line(u: np.ndarray, y: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, float | None]:
    """Weighted least squares of y on (1, u); returns coefficients and intercept se."""
    design = np.column_stack([np.ones(u.size), u])
    gram = design.T @ (design * w[:, None])
    rhs = design.T @ (w * y)
    try:
        beta = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        raise BandwidthError(
            "degenerate local fit: in-bandwidth running-variable values are not distinct"
        ) from None
    resid = y - design @ beta
    df = u.size - 2
    if df > 0:
        sigma2 = float(np.sum(w * resid * resid) / df)
        cov = sigma2 * np.linalg.inv(gram)
        se0 = float(np.sqrt(max(cov[0, 0], 0.0)))
    else:
        se0 = None
    return beta, se0


def rd_local_linear(dataset: ObservationalDataset, spec: RdSpec) -> RdEstimate:
    """Sharp regression discontinuity by local-linear fits on each side.

    The running variable is the first covariate column.  Within the
    bandwidth (inclusive), y is regressed on (1, x - cutoff) separately for
    x < cutoff and x >= cutoff; the jump is the difference of intercepts.
    The rectangular kernel weights all in-window points equally, so each
    side reduces to plain OLS on the window.
    """
    if dataset.d < 1:
        raise ValidationError("RD needs a running variable as the first covariate column")
    x = dataset.x[:, 0]
    u = x - spec.cutoff
    if spec.kernel == "rectangular":
        w = (np.abs(u) <= spec.bandwidth).astype(float)
    else:
        w = np.maximum(0.0, 1.0 - np.abs(u) / spec.bandwidth)
    left = (u < 0) & (w > 0)
    right = (u >= 0) & (w > 0)
    n_left, n_right = int(left.sum()), int(right.sum())
    if n_left < 2 or n_right < 2:
        raise BandwidthError(
            f"need at least 2 in-bandwidth points per side, got left={n_left}, right={n_right}"
        )
    beta_l, se_l = _wls_line(u[left], dataset.y[left], w[left])
    beta_r, se_r = _wls_line(u[right], dataset.y[right], w[right])
    se = float(np.sqrt(se_l**2 + se_r**2)) if se_l is not None and se_r is not None else None
    return RdEstimate(
        estimate=float(beta_r[0] - beta_l[0]),
        intercept_left=float(beta_l[0]),
        intercept_right=float(beta_r[0]),
        slope_left=float(beta_l[1]),
        slope_right=float(beta_r[1]),
        n_left=n_left,
        n_right=n_right,
        se=se,
    )


@dataclass(frozen=True)
class IvEstimate:
    """Instrumental-variable estimate with its two building blocks.

    late = reduced_form / first_stage whenever first_stage is non-zero.
    """

    late: float
    first_stage: float
    reduced_form: float
    se: float | None = None
    weak_flag: bool = False
    method: str = "wald"


def iv_wald(iv: IvDataset, weak_threshold: float = WEAK_IV_THRESHOLD) -> IvEstimate:
    """Binary-instrument Wald ratio.

    late = (E[y|z=1] - E[y|z=0]) / (E[a|z=1] - E[a|z=0]).  The weak flag
    fires when the first-stage difference is below the threshold in
    magnitude.  A zero first stage means the instrument is irrelevant.
    """
    z1 = iv.z == 1
    n1, n0 = int(z1.sum()), int((~z1).sum())
    if n1 == 0 or n0 == 0:
        raise InstrumentError("instrument takes a single value; both z=0 and z=1 are required")
    y1, y0 = iv.y[z1], iv.y[~z1]
    a1, a0 = iv.a[z1].astype(float), iv.a[~z1].astype(float)
    reduced_form = float(y1.mean()) - float(y0.mean())
    first_stage = float(a1.mean()) - float(a0.mean())
    if first_stage == 0.0:
        raise InstrumentError("zero first stage: instrument is unrelated to treatment")
    late = reduced_form / first_stage
    # delta-method se via the ratio estimator's influence function
    p = n1 / iv.n
    resid1 = (iv.y - float(y1.mean())) - late * (iv.a - float(a1.mean()))
    resid0 = (iv.y - float(y0.mean())) - late * (iv.a - float(a0.mean()))
    phi = (np.where(z1, resid1, 0.0) / p - np.where(z1, 0.0, resid0) / (1.0 - p)) / first_stage
    se = float(np.sqrt(np.var(phi, ddof=1) / iv.n)) if iv.n >= 2 else None
    return IvEstimate(
        late=late,
        first_stage=first_stage,
        reduced_form=reduced_form,
        se=se,
        weak_flag=bool(abs(first_stage) < weak_threshold),
        method="wald",
    )


def _ols(design: np.ndarray, y: np.ndarray, what: str) -> np.ndarray:
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise RankDeficiencyError(f"collinear design in {what}")
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    return beta


def tsls(iv: IvDataset, weak_threshold: float = WEAK_IV_THRESHOLD) -> IvEstimate:
    """Just-identified two-stage least squares.

    Stage 1 regresses a on (1, z, covariates); stage 2 regresses y on
    (1, fitted a, covariates).  The effect is the stage-2 coefficient on
    fitted a.  With a binary instrument and no covariates this equals the
    Wald ratio.
    """
    ones = np.ones(iv.n)
    z = iv.z.astype(float)
    a = iv.a.astype(float)
    if iv.x is not None and iv.x.shape[1] > 0:
        exog = [ones[:, None], z[:, None], iv.x]
    else:
        exog = [ones[:, None], z[:, None]]
    design1 = np.hstack(exog)
    beta1 = _ols(design1, a, "first stage")
    first_stage = float(beta1[1])
    a_hat = design1 @ beta1
    design2 = design1.copy()
    design2[:, 1] = a_hat
    if np.linalg.matrix_rank(design2) < design2.shape[1]:
        raise RankDeficiencyError(
            "collinear second stage: fitted treatment is collinear with covariates"
        )
    beta2, *_ = np.linalg.lstsq(design2, iv.y, rcond=None)
    late = float(beta2[1])
    # 2SLS residuals use the observed treatment with the stage-2 coefficients
    design_struct = design1.copy()
    design_struct[:, 1] = a
    resid = iv.y - design_struct @ beta2
    df = iv.n - design2.shape[1]
    if df > 0:
        sigma2 = float(resid @ resid) / df
        cov = sigma2 * np.linalg.inv(design2.T @ design2)
        se = float(np.sqrt(max(cov[1, 1], 0.0)))
    else:
        se = None
    return IvEstimate(
        late=late,
        first_stage=first_stage,
        reduced_form=late * first_stage,
        se=se,
        weak_flag=bool(abs(first_stage) < weak_threshold),
        method="tsls",
    )


@dataclass(frozen=True)
class FeEstimate:
    estimate: float
    n_units: int
    n_units_identifying: int
    se: float | None = None


def fe_within(panel: PanelDataset) -> FeEstimate:
    """Fixed-effects slope via the within transform.

    Outcome and treatment are demeaned within unit and the pooled slope is
    sum(a~ * y~) / sum(a~^2).  Units whose treatment never varies have a
    demeaned treatment of zero, so they contribute nothing to either sum;
    they are counted but not dropped.
    """
    units, inverse = np.unique(panel.unit_id, return_inverse=True)
    counts = np.bincount(inverse).astype(float)
    y_mean = np.bincount(inverse, weights=panel.y) / counts
    a_mean = np.bincount(inverse, weights=panel.a.astype(float)) / counts
    y_t = panel.y - y_mean[inverse]
    a_t = panel.a.astype(float) - a_mean[inverse]
    denom = float(a_t @ a_t)
    if denom == 0.0:
        raise IdentificationError(
            "treatment never varies within any unit; the within transform removes it entirely"
        )
    slope = float(a_t @ y_t) / denom
    identifying = int(np.sum(np.bincount(inverse, weights=a_t * a_t) > 0))
    resid = y_t - slope * a_t
    df = panel.n - units.size - 1
    se = float(np.sqrt((resid @ resid) / df / denom)) if df > 0 else None
    return FeEstimate(
        estimate=slope,
        n_units=int(units.size),
        n_units_identifying=identifying,
        se=se,
    )


@dataclass(frozen=True)
class WeakIvRow:
    first_stage_strength: float
    median_late: float
    median_ci_width: float
    median_bias: float
    n_failed: int = 0


def weak_iv_study(
    strengths: tuple[float, ...],
    n: int = 2000,
    reps: int = 200,
    seed: int = 0,
    complier_effect: float = 2.0,
    noise_sd: float = 1.0,
) -> list[WeakIvRow]:
    """Monte Carlo sweep over first-stage strength.

    Each strength s draws `reps` datasets with complier share s (the rest
    split evenly between always- and never-takers) and summarizes the Wald
    estimator by median estimate, median normal-CI width, and median bias
    against the true complier effect.  Replication (i, r) uses an
    independent substream of `seed`, so rows are reproducible and
    order-independent.
    """
    if not strengths:
        raise ConfigError("strengths grid must be non-empty")
    if any(not (0.0 < s <= 1.0) for s in strengths):
        raise ConfigError("each strength must lie in (0, 1]; zero is instrument irrelevance")
    z = NormalDist().inv_cdf(0.975)
    rows = []
    for i, s in enumerate(strengths):
        rest = (1.0 - s) / 2.0
        config = IvDgpConfig(
            n=n,
            p_always=rest,
            p_complier=s,
            p_never=rest,
            effect_by_type={"complier": complier_effect},
            noise_sd=noise_sd,
        )
        lates, widths = [], []
        failed = 0
        for r in range(reps):
            dataset, _, true_late = generate_iv(config, child_seed(seed, i, r))
            try:
                est = iv_wald(dataset)
            except InstrumentError:
                failed += 1
                continue
            lates.append(est.late)
            widths.append(2.0 * z * est.se if est.se is not None else np.inf)
        if not lates:
            raise InstrumentError(
                f"every replication failed at strength {s}; grid point unusable"
            )
        med = float(np.median(lates))
        rows.append(
            WeakIvRow(
                first_stage_strength=float(s),
                median_late=med,
                median_ci_width=float(np.median(widths)),
                median_bias=med - complier_effect,
                n_failed=failed,
            )
        )
    return rows
