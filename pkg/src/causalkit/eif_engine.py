"""Numerical influence-function calculus over finite discrete measures.

A statistical functional psi maps a probability measure to a real number.
Perturbing the measure along a path and differentiating at the base point
yields, point by point, the functional's influence function — numerically,
with no calculus by hand.  This module implements that machinery for finite
discrete measures:

* perturbation paths: mixture toward a point mass, and score paths
  (1 + eps*s(z)) p(z);
* Gateaux derivatives by central differences with Richardson extrapolation;
* the central identity  d/deps psi = E[phi * s]  relating the two;
* closed-form influence functions for the implemented functionals, so the
  numerical derivative can be checked against the analytic formula;
* the one-step (plug-in plus mean influence) corrected estimator;
* the exact second-order remainder of the one-step ATE estimator and its
  Cauchy-Schwarz bound.

Functionals are evaluated through a raw-array path that skips probability
validation: central differences momentarily push masses negative, and every
implemented functional is a ratio of linear forms in the masses, so those
signed evaluations are well-defined.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    ConfigError,
    EpsError,
    EvaluabilityError,
    PositivityError,
    SupportError,
    ValidationError,
)

__all__ = [
    "EPS_SCHEDULE",
    "DiscreteMeasure",
    "ScoreVector",
    "Functional",
    "Mean",
    "CondMean",
    "CounterfactualMean",
    "Ate",
    "make_functional",
    "mix",
    "score_of_path",
    "random_score",
    "factorize_score",
    "DerivativeResult",
    "gateaux_if",
    "eif_table",
    "closed_form_eif",
    "pathwise_derivative",
    "CentralIdentityReport",
    "central_identity_check",
    "one_step",
    "R2Result",
    "second_order_remainder",
]

# Central-difference epsilons, each half the previous; two Richardson stages
# collapse them to one high-order estimate whose error is the disagreement
# between stages.  Rational-in-eps functionals converge fast on this schedule.
EPS_SCHEDULE = (1e-3, 5e-4, 2.5e-4)


@dataclass(frozen=True)
class DiscreteMeasure:
    """A probability measure on finitely many named-coordinate points.

    ``support`` holds one row per point, columns ordered as ``names``.
    Points are compared by exact coordinate equality.
    """

    names: tuple[str, ...]
    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self) -> None:
        names = tuple(str(n) for n in self.names)
        if not names or len(set(names)) != len(names):
            raise ValidationError("coordinate names must be non-empty and distinct")
        support = np.asarray(self.support, dtype=float)
        if support.ndim != 2 or support.shape[1] != len(names):
            raise ValidationError(
                f"support must have shape (m, {len(names)}), got {support.shape}"
            )
        if support.shape[0] == 0:
            raise ValidationError("support must contain at least one point")
        if not np.all(np.isfinite(support)):
            raise ValidationError("support contains non-finite coordinates")
        probs = np.asarray(self.probs, dtype=float)
        if probs.shape != (support.shape[0],):
            raise ValidationError("probs must have one entry per support point")
        if np.any(probs < 0):
            raise ValidationError("probs must be non-negative")
        total = float(probs.sum())
        if abs(total - 1.0) > 1e-12:
            raise ValidationError(f"probs must sum to 1 within 1e-12, got {total!r}")
        if np.unique(support, axis=0).shape[0] != support.shape[0]:
            raise ValidationError("support points must be distinct")
        support.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)

    @property
    def m(self) -> int:
        return int(self.support.shape[0])

    def column(self, name: str) -> np.ndarray:
        try:
            return self.support[:, self.names.index(name)]
        except ValueError:
            raise ValidationError(f"measure has no coordinate '{name}'") from None

    def point(self, j: int) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, self.support[j])}

    @classmethod
    def from_data(cls, names: Sequence[str], *columns: np.ndarray) -> "DiscreteMeasure":
        """Empirical measure: distinct rows weighted by relative frequency."""
        if len(columns) != len(names):
            raise ValidationError("one column per coordinate name required")
        data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
        if data.shape[0] == 0:
            raise ValidationError("empirical measure needs at least one observation")
        points, counts = np.unique(data, axis=0, return_counts=True)
        return cls(names=tuple(names), support=points, probs=counts / data.shape[0])


def _row_key(row: np.ndarray) -> tuple[float, ...]:
    return tuple(float(v) for v in row)


def _point_as_row(measure_names: tuple[str, ...], z: Mapping[str, float] | Sequence[float]) -> np.ndarray:
    if isinstance(z, Mapping):
        missing = [n for n in measure_names if n not in z]
        if missing:
            raise ValidationError(f"point is missing coordinates {missing}")
        extra = [n for n in z if n not in measure_names]
        if extra:
            raise ValidationError(f"point has unknown coordinates {extra}")
        return np.asarray([float(z[n]) for n in measure_names])
    row = np.asarray(list(z), dtype=float)
    if row.shape != (len(measure_names),):
        raise ValidationError(f"point must have {len(measure_names)} coordinates")
    return row


# ---------------------------------------------------------------------------
# functionals


class Functional:
    """Base class: a real-valued map of discrete measures.

    Subclasses implement ``_value_arrays`` on raw (names, support, probs)
    triples.  That path performs no probability validation so that signed
    central-difference evaluations work; the public ``value`` goes through a
    validated measure.
    """

    label: str = ""

    def value(self, measure: DiscreteMeasure) -> float:
        return self._value_arrays(measure.names, measure.support, measure.probs)

    def _value_arrays(
        self, names: tuple[str, ...], support: np.ndarray, probs: np.ndarray
    ) -> float:
        raise NotImplementedError


def _coord_index(names: tuple[str, ...], coord: str) -> int:
    try:
        return names.index(coord)
    except ValueError:
        raise ValidationError(f"measure has no coordinate '{coord}'") from None


@dataclass(frozen=True)
class Mean(Functional):
    """E[coord]."""

    coord: str = "y"

    @property
    def label(self) -> str:
        return f"mean({self.coord})"

    def _value_arrays(self, names, support, probs) -> float:
        v = support[:, _coord_index(names, self.coord)]
        total = float(probs.sum())
        if total == 0.0:
            raise EvaluabilityError("total mass is zero")
        return float(probs @ v) / total


@dataclass(frozen=True)
class CondMean(Functional):
    """E[coord | conditions], conditions matched by exact equality."""

    coord: str = "y"
    conditions: tuple[tuple[str, float], ...] = ()

    @property
    def label(self) -> str:
        conds = ",".join(f"{n}={v:g}" for n, v in self.conditions)
        return f"cond_mean({self.coord}|{conds})"

    def _mask(self, names, support) -> np.ndarray:
        if not self.conditions:
            raise ValidationError("cond_mean requires at least one condition")
        mask = np.ones(support.shape[0], dtype=bool)
        for cname, cval in self.conditions:
            mask &= support[:, _coord_index(names, cname)] == cval
        return mask

    def _value_arrays(self, names, support, probs) -> float:
        mask = self._mask(names, support)
        denom = float(probs[mask].sum())
        if denom == 0.0:
            raise EvaluabilityError(
                f"conditioning event {dict(self.conditions)} has zero mass"
            )
        v = support[:, _coord_index(names, self.coord)]
        return float(probs[mask] @ v[mask]) / denom


def _causal_columns(names: tuple[str, ...]) -> tuple[int, int, list[int]]:
    a_idx = _coord_index(names, "a")
    y_idx = _coord_index(names, "y")
    x_idx = [i for i in range(len(names)) if i not in (a_idx, y_idx)]
    return a_idx, y_idx, x_idx


def _x_groups(support: np.ndarray, x_idx: list[int]) -> list[np.ndarray]:
    """Row-index groups sharing identical covariate coordinates."""
    if not x_idx:
        return [np.arange(support.shape[0])]
    _, inverse = np.unique(support[:, x_idx], axis=0, return_inverse=True)
    return [np.flatnonzero(inverse == g) for g in range(int(inverse.max()) + 1)]


@dataclass(frozen=True)
class CounterfactualMean(Functional):
    """E[E[Y | A=arm, X]]: the g-formula value of the arm-`arm` mean."""

    arm: int = 1

    def __post_init__(self) -> None:
        if self.arm not in (0, 1):
            raise ConfigError("arm must be 0 or 1")

    @property
    def label(self) -> str:
        return f"counterfactual_mean({self.arm})"

    def _value_arrays(self, names, support, probs) -> float:
        a_idx, y_idx, x_idx = _causal_columns(names)
        total = float(probs.sum())
        if total == 0.0:
            raise EvaluabilityError("total mass is zero")
        acc = 0.0
        for rows in _x_groups(support, x_idx):
            px = float(probs[rows].sum())
            arm_rows = rows[support[rows, a_idx] == self.arm]
            pax = float(probs[arm_rows].sum())
            if pax == 0.0:
                if px == 0.0:
                    continue
                raise EvaluabilityError(
                    f"cell with covariates {support[rows[0], x_idx]} has zero mass on arm {self.arm}"
                )
            mu = float(probs[arm_rows] @ support[arm_rows, y_idx]) / pax
            acc += px * mu
        return acc / total


@dataclass(frozen=True)
class Ate(Functional):
    """Average treatment effect: counterfactual mean contrast of the arms."""

    @property
    def label(self) -> str:
        return "ate"

    def _value_arrays(self, names, support, probs) -> float:
        m1 = CounterfactualMean(1)._value_arrays(names, support, probs)
        m0 = CounterfactualMean(0)._value_arrays(names, support, probs)
        return m1 - m0


_COND_MEAN_RE = re.compile(r"cond_mean\(\s*(\w+)\s*\|\s*(.+?)\s*\)")
_MEAN_RE = re.compile(r"mean\(\s*(\w+)\s*\)")
_CF_RE = re.compile(r"counterfactual_mean\(\s*([01])\s*\)")


def make_functional(label: str) -> Functional:
    """Parse a functional label: ate, mean(c), cond_mean(c|a=0,...),
    counterfactual_mean(0|1)."""
    text = label.strip()
    if text == "ate":
        return Ate()
    m = _CF_RE.fullmatch(text)
    if m:
        return CounterfactualMean(int(m.group(1)))
    m = _MEAN_RE.fullmatch(text)
    if m:
        return Mean(m.group(1))
    m = _COND_MEAN_RE.fullmatch(text)
    if m:
        conditions = []
        for clause in m.group(2).split(","):
            if "=" not in clause:
                raise ConfigError(f"malformed condition '{clause}' in '{label}'")
            cname, cval = clause.split("=", 1)
            try:
                conditions.append((cname.strip(), float(cval)))
            except ValueError:
                raise ConfigError(f"non-numeric condition value in '{label}'") from None
        return CondMean(m.group(1), tuple(conditions))
    raise ConfigError(
        f"unknown functional '{label}'; expected ate, mean(c), "
        "cond_mean(c|n=v,...), or counterfactual_mean(0|1)"
    )


# ---------------------------------------------------------------------------
# paths and scores


def _union_support(
    p_support: np.ndarray, g_support: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Union of two supports; returns (union, p_indices, g_indices)."""
    index = {_row_key(row): i for i, row in enumerate(p_support)}
    extra_rows = []
    g_pos = np.empty(g_support.shape[0], dtype=np.int64)
    next_idx = p_support.shape[0]
    for j, row in enumerate(g_support):
        key = _row_key(row)
        if key in index:
            g_pos[j] = index[key]
        else:
            index[key] = next_idx
            g_pos[j] = next_idx
            extra_rows.append(row)
            next_idx += 1
    if extra_rows:
        union = np.vstack([p_support, np.asarray(extra_rows)])
    else:
        union = p_support
    p_pos = np.arange(p_support.shape[0])
    return union, p_pos, g_pos


def mix(p: DiscreteMeasure, g: DiscreteMeasure, eps: float) -> DiscreteMeasure:
    """The mixture (1-eps) P + eps G on the union of the supports."""
    if p.names != g.names:
        raise ValidationError("measures must share coordinate names to be mixed")
    if not (0.0 <= eps <= 1.0):
        raise EpsError(f"mixture eps must lie in [0, 1], got {eps!r}")
    union, p_pos, g_pos = _union_support(p.support, g.support)
    probs = np.zeros(union.shape[0])
    np.add.at(probs, p_pos, (1.0 - eps) * p.probs)
    np.add.at(probs, g_pos, eps * g.probs)
    return DiscreteMeasure(names=p.names, support=union, probs=probs)


@dataclass(frozen=True)
class ScoreVector:
    """Per-support-point score values s(z) = ptilde(z)/p(z) - 1."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ValidationError("score values must form a vector")
        if not np.all(np.isfinite(v)):
            raise ValidationError("score values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def _score_values(s: ScoreVector | np.ndarray) -> np.ndarray:
    return s.values if isinstance(s, ScoreVector) else np.asarray(s, dtype=float)


def score_of_path(p: DiscreteMeasure, ptilde: DiscreteMeasure) -> ScoreVector:
    """Score of the likelihood-ratio path from p toward ptilde.

    Requires domination: ptilde may not place mass outside p's support.
    The result has p-mean zero by construction.
    """
    if p.names != ptilde.names:
        raise ValidationError("measures must share coordinate names")
    index = {_row_key(row): i for i, row in enumerate(p.support)}
    ratio = np.zeros(p.m)
    for j, row in enumerate(ptilde.support):
        key = _row_key(row)
        if key not in index:
            if ptilde.probs[j] > 0:
                raise SupportError(
                    f"domination violated: point {dict(zip(p.names, row))} has mass "
                    "under the target but is outside the base support"
                )
            continue
        i = index[key]
        if p.probs[i] == 0.0:
            if ptilde.probs[j] > 0:
                raise SupportError(
                    f"domination violated at {dict(zip(p.names, row))}: base mass is zero"
                )
            continue
        ratio[i] = ptilde.probs[j] / p.probs[i]
    return ScoreVector(values=ratio - 1.0)


def random_score(p: DiscreteMeasure, rng: np.random.Generator, scale: float = 1.0) -> ScoreVector:
    """A random mean-zero score, bounded so small-eps paths stay valid."""
    raw = rng.uniform(-scale, scale, size=p.m)
    centered = raw - float(p.probs @ raw)  # probs sum to 1, so this centers exactly
    return ScoreVector(values=centered)


def factorize_score(
    p: DiscreteMeasure, s: ScoreVector | np.ndarray, given: Sequence[str]
) -> tuple[ScoreVector, ScoreVector]:
    """Split a score into a marginal part and a conditional part.

    The marginal part is the conditional expectation E_p[s | given-coords],
    constant on each group; the conditional part is the remainder.  Both are
    themselves valid mean-zero scores, and the pathwise derivative along s
    is the sum of the derivatives along the parts.
    """
    values = _score_values(s)
    if values.shape != (p.m,):
        raise ValidationError("score length must match the support size")
    idx = [_coord_index(p.names, n) for n in given]
    marginal = np.empty(p.m)
    groups = _x_groups(p.support, idx) if idx else [np.arange(p.m)]
    for rows in groups:
        mass = float(p.probs[rows].sum())
        if mass == 0.0:
            marginal[rows] = 0.0
            continue
        marginal[rows] = float(p.probs[rows] @ values[rows]) / mass
    return ScoreVector(values=marginal), ScoreVector(values=values - marginal)


# ---------------------------------------------------------------------------
# derivatives


@dataclass(frozen=True)
class DerivativeResult:
    value: float
    error_estimate: float


def _validate_schedule(eps_schedule: Sequence[float]) -> tuple[float, float, float]:
    eps = tuple(float(e) for e in eps_schedule)
    if len(eps) != 3 or any(e <= 0 for e in eps):
        raise ConfigError("eps schedule must be three positive values")
    if not (eps[0] > eps[1] > eps[2]):
        raise ConfigError("eps schedule must be strictly decreasing")
    for a, b in ((eps[0], eps[1]), (eps[1], eps[2])):
        if abs(a / b - 2.0) > 1e-9:
            raise ConfigError("eps schedule must halve at each step")
    return eps


def _richardson(evaluate, eps_schedule: Sequence[float]) -> DerivativeResult:
    e1, e2, e3 = _validate_schedule(eps_schedule)
    d = [(evaluate(e) - evaluate(-e)) / (2.0 * e) for e in (e1, e2, e3)]
    r1 = (4.0 * d[1] - d[0]) / 3.0
    r1b = (4.0 * d[2] - d[1]) / 3.0
    value = (16.0 * r1b - r1) / 15.0
    return DerivativeResult(value=value, error_estimate=abs(r1b - r1))


def gateaux_if(
    f: Functional,
    p: DiscreteMeasure,
    z: Mapping[str, float] | Sequence[float],
    eps_schedule: Sequence[float] = EPS_SCHEDULE,
) -> DerivativeResult:
    """Influence of point z: d/deps f((1-eps) P + eps delta_z) at eps=0.

    Central differences on the mixture path with Richardson extrapolation;
    the error estimate is the disagreement between extrapolation stages.
    z need not lie in P's support.
    """
    row = _point_as_row(p.names, z)
    key = _row_key(row)
    match = [i for i in range(p.m) if _row_key(p.support[i]) == key]
    if match:
        support = p.support
        j = match[0]
    else:
        support = np.vstack([p.support, row])
        j = p.m
    base = np.zeros(support.shape[0])
    base[: p.m] = p.probs

    def evaluate(eps: float) -> float:
        probs = (1.0 - eps) * base
        probs[j] += eps
        return f._value_arrays(p.names, support, probs)

    return _richardson(evaluate, eps_schedule)


def eif_table(
    f: Functional, p: DiscreteMeasure, eps_schedule: Sequence[float] = EPS_SCHEDULE
) -> tuple[np.ndarray, np.ndarray]:
    """Numerical influence values and error estimates at every support point."""
    phi = np.empty(p.m)
    err = np.empty(p.m)
    for j in range(p.m):
        result = gateaux_if(f, p, p.support[j], eps_schedule)
        phi[j] = result.value
        err[j] = result.error_estimate
    return phi, err


def pathwise_derivative(
    f: Functional,
    p: DiscreteMeasure,
    s: ScoreVector | np.ndarray,
    eps_schedule: Sequence[float] = EPS_SCHEDULE,
) -> float:
    """d/deps f(measure with masses (1 + eps*s) p) at eps = 0."""
    values = _score_values(s)
    if values.shape != (p.m,):
        raise ValidationError("score length must match the support size")
    mean_s = float(p.probs @ values)
    if abs(mean_s) > 1e-10:
        raise ValidationError(f"score must have mean zero under p, got {mean_s!r}")
    eps = _validate_schedule(eps_schedule)
    worst = eps[0] * float(np.max(np.abs(values))) if values.size else 0.0
    if worst > 1.0:
        raise EpsError(
            "perturbed mass would go negative: max |eps*s| "
            f"= {worst!r} exceeds 1; shrink the score or the schedule"
        )

    def evaluate(e: float) -> float:
        return f._value_arrays(p.names, p.support, (1.0 + e * values) * p.probs)

    return _richardson(evaluate, eps_schedule).value


@dataclass(frozen=True)
class CentralIdentityReport:
    lhs: float
    rhs: float
    gap: float


def central_identity_check(
    f: Functional,
    p: DiscreteMeasure,
    s: ScoreVector | np.ndarray,
    eps_schedule: Sequence[float] = EPS_SCHEDULE,
) -> CentralIdentityReport:
    """Check d/deps psi (score path) = E[phi * s] with numerical phi."""
    lhs = pathwise_derivative(f, p, s, eps_schedule)
    phi, _ = eif_table(f, p, eps_schedule)
    rhs = float(p.probs @ (phi * _score_values(s)))
    return CentralIdentityReport(lhs=lhs, rhs=rhs, gap=abs(lhs - rhs))


# ---------------------------------------------------------------------------
# closed forms


def _exact_conditionals(
    p: DiscreteMeasure, arm: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-support-point P(A=arm|X) and E[Y|A=arm,X] from exact sums."""
    a_idx, y_idx, x_idx = _causal_columns(p.names)
    pi = np.empty(p.m)
    mu = np.empty(p.m)
    for rows in _x_groups(p.support, x_idx):
        px = float(p.probs[rows].sum())
        arm_rows = rows[p.support[rows, a_idx] == arm]
        pax = float(p.probs[arm_rows].sum())
        if px == 0.0 or pax == 0.0:
            raise PositivityError(
                f"cell with covariates {p.support[rows[0], x_idx]} has zero mass on arm {arm}"
            )
        pi[rows] = pax / px
        mu[rows] = float(p.probs[arm_rows] @ p.support[arm_rows, y_idx]) / pax
    return pi, mu


def closed_form_eif(f: Functional, p: DiscreteMeasure) -> np.ndarray:
    """The analytic influence function of f at p, per support point."""
    if isinstance(f, Mean):
        v = p.column(f.coord)
        return v - f.value(p)
    if isinstance(f, CondMean):
        mask = f._mask(p.names, p.support)
        mass = float(p.probs[mask].sum())
        if mass == 0.0:
            raise EvaluabilityError(
                f"conditioning event {dict(f.conditions)} has zero mass"
            )
        v = p.column(f.coord)
        psi = f.value(p)
        return np.where(mask, (v - psi) / mass, 0.0)
    if isinstance(f, CounterfactualMean):
        a = p.column("a")
        y = p.column("y")
        pi, mu = _exact_conditionals(p, f.arm)
        psi = f.value(p)
        ind = (a == f.arm).astype(float)
        return ind / pi * (y - mu) + mu - psi
    if isinstance(f, Ate):
        return closed_form_eif(CounterfactualMean(1), p) - closed_form_eif(
            CounterfactualMean(0), p
        )
    raise ConfigError(f"no closed form registered for functional '{f.label}'")


# ---------------------------------------------------------------------------
# one-step estimation and the second-order remainder


def one_step(
    f: Functional,
    p_est: DiscreteMeasure,
    sample: DiscreteMeasure,
    eps_schedule: Sequence[float] = EPS_SCHEDULE,
) -> float:
    """Plug-in value at p_est plus the sample mean of its influence function.

    ``sample`` is an empirical (or exact) measure; the correction term is
    the sample-weighted mean of the numerical influence function of f at
    p_est, evaluated at each sample point.
    """
    if p_est.names != sample.names:
        raise ValidationError("estimate and sample must share coordinate names")
    plug_in = f.value(p_est)
    correction = 0.0
    for j in range(sample.m):
        if sample.probs[j] == 0.0:
            continue
        phi = gateaux_if(f, p_est, sample.support[j], eps_schedule).value
        correction += float(sample.probs[j]) * phi
    return plug_in + correction


@dataclass(frozen=True)
class R2Result:
    """Second-order remainder of the one-step ATE/arm-mean estimator.

    r2 equals the exact error of the population one-step estimator.  bound
    is the Cauchy-Schwarz majorant with the inverse estimated propensity
    kept inside the first norm, so |r2| <= bound always; rate_product is
    the plain product of unweighted nuisance-error norms, the quantity that
    displays the product-of-rates behaviour.
    """

    r2: float
    bound: float
    rate_product: float
    r2_arm1: float | None = None
    r2_arm0: float | None = None
    bound_arm1: float | None = None
    bound_arm0: float | None = None


def _arm_remainder(
    p_true: DiscreteMeasure, p_est: DiscreteMeasure, arm: int
) -> tuple[float, float, float]:
    """(r2, bound, rate_product) for one counterfactual arm mean.

    All expectations are over P_true's covariate marginal; the estimated
    conditionals come from P_est.  X cells are matched by exact coordinate
    equality.
    """
    _, _, x_idx_t = _causal_columns(p_true.names)
    a_idx_e, y_idx_e, x_idx_e = _causal_columns(p_est.names)
    est_groups = {}
    for rows in _x_groups(p_est.support, x_idx_e):
        key = _row_key(p_est.support[rows[0], x_idx_e])
        est_groups[key] = rows
    r2 = 0.0
    err_pi_w2 = 0.0  # E_true[ ((pi - pi_hat)/pi_hat)^2 ]
    err_pi2 = 0.0
    err_mu2 = 0.0
    pi_true, mu_true = _exact_conditionals(p_true, arm)
    for rows in _x_groups(p_true.support, x_idx_t):
        px = float(p_true.probs[rows].sum())
        if px == 0.0:
            continue
        key = _row_key(p_true.support[rows[0], x_idx_t])
        if key not in est_groups:
            raise SupportError(
                f"estimated measure has no mass at covariates {list(key)}"
            )
        erows = est_groups[key]
        e_px = float(p_est.probs[erows].sum())
        arm_rows = erows[p_est.support[erows, a_idx_e] == arm]
        e_pax = float(p_est.probs[arm_rows].sum())
        if e_px == 0.0 or e_pax == 0.0:
            raise PositivityError(
                f"estimated measure has zero arm-{arm} mass at covariates {list(key)}"
            )
        pi_hat = e_pax / e_px
        mu_hat = float(p_est.probs[arm_rows] @ p_est.support[arm_rows, y_idx_e]) / e_pax
        d_pi = float(pi_true[rows[0]]) - pi_hat
        d_mu = float(mu_true[rows[0]]) - mu_hat
        r2 += px * d_pi * d_mu / pi_hat
        err_pi_w2 += px * (d_pi / pi_hat) ** 2
        err_pi2 += px * d_pi**2
        err_mu2 += px * d_mu**2
    bound = float(np.sqrt(err_pi_w2) * np.sqrt(err_mu2))
    rate_product = float(np.sqrt(err_pi2) * np.sqrt(err_mu2))
    return r2, bound, rate_product


def second_order_remainder(
    p_true: DiscreteMeasure, p_est: DiscreteMeasure, functional: str = "ate"
) -> R2Result:
    """Exact second-order remainder and its Cauchy-Schwarz bound.

    For one arm:  r2_a = E_true[(pi_a - pi_hat_a)(mu_a - mu_hat_a)/pi_hat_a];
    for the ATE:  r2 = r2_1 - r2_0, and the bounds add.  r2 vanishes when
    either nuisance is exact (double robustness), and equals the error of
    the population one-step estimator based at p_est.
    """
    f = make_functional(functional)
    if isinstance(f, CounterfactualMean):
        r2, bound, rate = _arm_remainder(p_true, p_est, f.arm)
        return R2Result(r2=r2, bound=bound, rate_product=rate)
    if isinstance(f, Ate):
        r2_1, bound_1, rate_1 = _arm_remainder(p_true, p_est, 1)
        r2_0, bound_0, rate_0 = _arm_remainder(p_true, p_est, 0)
        return R2Result(
            r2=r2_1 - r2_0,
            bound=bound_1 + bound_0,
            rate_product=rate_1 + rate_0,
            r2_arm1=r2_1,
            r2_arm0=r2_0,
            bound_arm1=bound_1,
            bound_arm0=bound_0,
        )
    raise ConfigError(
        "second_order_remainder supports 'ate' and 'counterfactual_mean(a)', "
        f"got '{functional}'"
    )
