"""Average-treatment-effect estimators: naive, IPW, g-formula, matching, AIPW.

Every estimator is a pure function returning an :class:`AteEstimate`.  Where a
per-unit influence-function vector has a standard closed form it is stored on
the estimate (centered, mean zero) and drives the standard error and normal
CI.  The doubly-robust estimator consumes out-of-fold nuisances from
:func:`causalkit.nuisance.cross_fit`.
"""

from __future__ import annotations

from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .data_model import AteEstimate, ObservationalDataset, require_both_arms
from .errors import (
    ConfigError,
    EmptyMatchError,
    InsufficientDataError,
    PositivityError,
    ValidationError,
)
from .nuisance import NuisanceFit

__all__ = [
    "MatchSpec",
    "naive_dim",
    "ipw",
    "g_formula",
    "psm_att",
    "aipw",
    "eif_closed_form",
    "variance_ci",
]


def variance_ci(eif: np.ndarray, psi_hat: float, level: float = 0.95) -> tuple[float, tuple[float, float]]:
    """Standard error and normal-quantile CI from a centered eif vector.

    se = sd(eif)/sqrt(n) with the n-1 divisor; the interval is
    psi_hat +/- z*se at the requested level.
    """
    eif = np.asarray(eif, dtype=float)
    if eif.ndim != 1 or eif.size == 0:
        raise ValidationError("eif must be a non-empty vector")
    if eif.size < 2:
        raise InsufficientDataError("need at least 2 observations for a variance estimate")
    if not (0.0 < level < 1.0):
        raise ConfigError(f"confidence level must lie in (0, 1), got {level!r}")
    se = float(np.sqrt(np.var(eif, ddof=1) / eif.size))
    z = NormalDist().inv_cdf(0.5 + level / 2.0)
    return se, (float(psi_hat - z * se), float(psi_hat + z * se))


def naive_dim(dataset: ObservationalDataset, level: float = 0.95) -> AteEstimate:
    """Difference in arm means, with the two-sample standard error."""
    require_both_arms(dataset, "naive_dim")
    treated = dataset.a == 1
    y1, y0 = dataset.y[treated], dataset.y[~treated]
    n1, n0 = y1.size, y0.size
    m1, m0 = float(y1.mean()), float(y0.mean())
    psi = m1 - m0
    rho = n1 / dataset.n
    eif = np.where(
        treated,
        (dataset.y - m1) / rho,
        -(dataset.y - m0) / (1.0 - rho),
    )
    if n1 >= 2 and n0 >= 2:
        se = float(np.sqrt(np.var(y1, ddof=1) / n1 + np.var(y0, ddof=1) / n0))
        z = NormalDist().inv_cdf(0.5 + level / 2.0)
        ci = (psi - z * se, psi + z * se)
    else:
        se, ci = None, (None, None)
    return AteEstimate(
        psi_hat=psi,
        method="naive",
        n=dataset.n,
        eif=eif,
        se=se,
        ci_low=ci[0],
        ci_high=ci[1],
        diagnostics={"treated_mean": m1, "control_mean": m0, "n_treated": n1, "n_control": n0},
    )


def ipw(
    dataset: ObservationalDataset,
    pi_hat: np.ndarray,
    normalization: str = "hajek",
    level: float = 0.95,
) -> AteEstimate:
    """Inverse-propensity weighting.

    horvitz_thompson: psi = mean(a*y/pi) - mean((1-a)*y/(1-pi)).
    hajek: the same weights renormalized to sum to one within each arm,
    which makes the estimate invariant to constant rescaling of weights.
    """
    if normalization not in ("horvitz_thompson", "hajek"):
        raise ConfigError(f"unknown normalization '{normalization}'")
    require_both_arms(dataset, "ipw")
    pi_hat = np.asarray(pi_hat, dtype=float)
    if pi_hat.shape != (dataset.n,):
        raise ValidationError(f"pi_hat must have shape ({dataset.n},), got {pi_hat.shape}")
    if np.any(pi_hat <= 0.0) or np.any(pi_hat >= 1.0):
        raise PositivityError("propensities must lie strictly inside (0, 1)")
    a = dataset.a.astype(float)
    y = dataset.y
    w1 = a / pi_hat
    w0 = (1.0 - a) / (1.0 - pi_hat)
    if normalization == "horvitz_thompson":
        psi1 = float(np.mean(w1 * y))
        psi0 = float(np.mean(w0 * y))
        eif = w1 * y - w0 * y - (psi1 - psi0)
    else:
        psi1 = float(np.sum(w1 * y) / np.sum(w1))
        psi0 = float(np.sum(w0 * y) / np.sum(w0))
        # linearized ratio-estimator influence function, arm by arm
        eif = w1 * (y - psi1) / float(np.mean(w1)) - w0 * (y - psi0) / float(np.mean(w0))
    psi = psi1 - psi0
    se, ci = variance_ci(eif, psi, level) if dataset.n >= 2 else (None, (None, None))
    return AteEstimate(
        psi_hat=psi,
        method="ipw",
        n=dataset.n,
        eif=eif,
        se=se,
        ci_low=ci[0],
        ci_high=ci[1],
        diagnostics={"normalization": normalization, "psi1_hat": psi1, "psi0_hat": psi0},
    )


def g_formula(
    dataset: ObservationalDataset,
    mu0_hat: np.ndarray,
    mu1_hat: np.ndarray,
    level: float = 0.95,
) -> AteEstimate:
    """Outcome-regression (standardization) estimator: mean(mu1 - mu0)."""
    mu0_hat = np.asarray(mu0_hat, dtype=float)
    mu1_hat = np.asarray(mu1_hat, dtype=float)
    for name, v in (("mu0_hat", mu0_hat), ("mu1_hat", mu1_hat)):
        if v.shape != (dataset.n,):
            raise ValidationError(f"{name} must have shape ({dataset.n},), got {v.shape}")
    contrast = mu1_hat - mu0_hat
    psi = float(contrast.mean())
    eif = contrast - psi
    se, ci = variance_ci(eif, psi, level) if dataset.n >= 2 else (None, (None, None))
    return AteEstimate(
        psi_hat=psi,
        method="gformula",
        n=dataset.n,
        eif=eif,
        se=se,
        ci_low=ci[0],
        ci_high=ci[1],
    )


@dataclass(frozen=True)
class MatchSpec:
    """One-to-one propensity matching options.  caliper=None means unbounded."""

    caliper: float | None = None
    with_replacement: bool = False

    def __post_init__(self) -> None:
        if self.caliper is not None and self.caliper < 0:
            raise ConfigError("caliper must be >= 0")


def psm_att(
    dataset: ObservationalDataset,
    pi_hat: np.ndarray,
    spec: MatchSpec = MatchSpec(),
    level: float = 0.95,
) -> tuple[AteEstimate, list[tuple[int, int]]]:
    """Greedy one-to-one propensity-score matching; reports the ATT.

    Treated units are visited in index order.  Each is matched to the
    control with the nearest propensity (distance <= caliper, inclusive);
    ties go to the lowest control index.  Without replacement a control is
    consumed by its first match.  Unmatched treated units are counted and
    excluded.  Returns the estimate and the match table as (treated_index,
    control_index) pairs.
    """
    require_both_arms(dataset, "psm_att")
    pi_hat = np.asarray(pi_hat, dtype=float)
    if pi_hat.shape != (dataset.n,):
        raise ValidationError(f"pi_hat must have shape ({dataset.n},), got {pi_hat.shape}")
    treated_idx = np.flatnonzero(dataset.a == 1)
    control_idx = np.flatnonzero(dataset.a == 0)
    caliper = np.inf if spec.caliper is None else float(spec.caliper)
    available = np.ones(control_idx.size, dtype=bool)
    matches: list[tuple[int, int]] = []
    for t in treated_idx:
        pool = available if not spec.with_replacement else np.ones(control_idx.size, dtype=bool)
        if not pool.any():
            continue
        dist = np.abs(pi_hat[control_idx] - pi_hat[t])
        dist = np.where(pool, dist, np.inf)
        best = int(np.argmin(dist))  # argmin takes the first minimum: lowest index wins ties
        if dist[best] <= caliper:
            matches.append((int(t), int(control_idx[best])))
            if not spec.with_replacement:
                available[best] = False
    if not matches:
        raise EmptyMatchError("no treated unit found a control within the caliper")
    t_ids = np.array([m[0] for m in matches])
    c_ids = np.array([m[1] for m in matches])
    diffs = dataset.y[t_ids] - dataset.y[c_ids]
    psi = float(diffs.mean())
    if diffs.size >= 2:
        se = float(np.sqrt(np.var(diffs, ddof=1) / diffs.size))
        z = NormalDist().inv_cdf(0.5 + level / 2.0)
        ci = (psi - z * se, psi + z * se)
    else:
        se, ci = None, (None, None)
    estimate = AteEstimate(
        psi_hat=psi,
        method="psm",
        n=dataset.n,
        se=se,
        ci_low=ci[0],
        ci_high=ci[1],
        diagnostics={
            "estimand": "att",
            "n_pairs": len(matches),
            "unmatched_count": int(treated_idx.size - len(matches)),
            "with_replacement": spec.with_replacement,
        },
    )
    return estimate, matches


def _aipw_terms(
    dataset: ObservationalDataset, pi: np.ndarray, mu0: np.ndarray, mu1: np.ndarray
) -> np.ndarray:
    a = dataset.a.astype(float)
    y = dataset.y
    return a * (y - mu1) / pi - (1.0 - a) * (y - mu0) / (1.0 - pi) + mu1 - mu0


def aipw(dataset: ObservationalDataset, nuisance: NuisanceFit, level: float = 0.95) -> AteEstimate:
    """Cross-fitted augmented IPW (doubly robust) estimator of the ATE.

    psi_hat is the full-sample mean of the per-unit doubly-robust terms;
    the centered terms are the estimated efficient influence function and
    give the standard error.  Fold-wise term means are reported alongside:
    with equal fold sizes their average equals psi_hat.
    """
    if nuisance.folds.n != dataset.n:
        raise ValidationError(
            f"nuisance fit covers {nuisance.folds.n} units, dataset has {dataset.n}"
        )
    pi = nuisance.pi_hat
    if pi.size and (pi.min() < nuisance.clip_lo or pi.max() > nuisance.clip_hi):
        raise ValidationError("propensity outside clip bounds; NuisanceFit invariant violated")
    terms = _aipw_terms(dataset, pi, nuisance.mu0_hat, nuisance.mu1_hat)
    psi = float(terms.mean())
    eif = terms - psi
    se, ci = variance_ci(eif, psi, level) if dataset.n >= 2 else (None, (None, None))
    a = dataset.a.astype(float)
    arm1 = a * (dataset.y - nuisance.mu1_hat) / pi + nuisance.mu1_hat
    arm0 = (1.0 - a) * (dataset.y - nuisance.mu0_hat) / (1.0 - pi) + nuisance.mu0_hat
    fold_means = [float(terms[nuisance.folds.indices(j)].mean()) for j in range(nuisance.folds.k)]
    return AteEstimate(
        psi_hat=psi,
        method="aipw",
        n=dataset.n,
        eif=eif,
        se=se,
        ci_low=ci[0],
        ci_high=ci[1],
        diagnostics={
            "psi1_hat": float(arm1.mean()),
            "psi0_hat": float(arm0.mean()),
            "fold_means": fold_means,
            "psi_hat_fold_avg": float(np.mean(fold_means)),
            "clip_count": nuisance.clip_count,
            "k": nuisance.folds.k,
        },
    )


def eif_closed_form(dataset: ObservationalDataset, nuisance: NuisanceFit, psi_hat: float) -> np.ndarray:
    """Closed-form per-unit influence values for the ATE at the given psi_hat.

    Equals the eif vector stored by :func:`aipw` when psi_hat is its point
    estimate.
    """
    if nuisance.folds.n != dataset.n:
        raise ValidationError(
            f"nuisance fit covers {nuisance.folds.n} units, dataset has {dataset.n}"
        )
    return _aipw_terms(dataset, nuisance.pi_hat, nuisance.mu0_hat, nuisance.mu1_hat) - float(psi_hat)
