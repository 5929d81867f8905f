"""Core dataset types, validation, and CSV ingestion.

Every estimator in the package consumes one of the three dataset types
defined here.  Datasets are immutable after construction (their arrays are
marked read-only) and validation is total: any input that would violate an
invariant raises a structured error instead of producing a value.

CSV is the sole file format: comma-separated, first row header, UTF-8,
"." decimal separator.  Column meaning is given by an explicit schema
mapping — there is no header inference.  Floats are written with their
shortest round-trip representation, so write(load(f)) reproduces numeric
values bit-exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    InsufficientDataError,
    ParseError,
    SchemaError,
    ValidationError,
)

__all__ = [
    "ObservationalDataset",
    "GroundTruth",
    "AteEstimate",
    "PanelDataset",
    "IvDataset",
    "Summary",
    "load_csv",
    "load_iv_csv",
    "load_panel_csv",
    "write_csv",
    "write_iv_csv",
    "write_panel_csv",
    "write_ground_truth_csv",
    "summarize",
    "format_number",
]


def format_number(v: float | int) -> str:
    """Shortest decimal string that round-trips to the same double."""
    f = float(v)
    if f == int(f) and abs(f) < 1e16 and isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(f)


def _as_float_vector(name: str, values: Sequence[float] | np.ndarray) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be a 1-d vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def _as_binary_vector(name: str, values: Sequence[float] | np.ndarray) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be a 1-d vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    if not np.all((arr == 0.0) | (arr == 1.0)):
        bad = arr[(arr != 0.0) & (arr != 1.0)][0]
        raise ValidationError(f"{name} must contain only 0/1, found {format_number(bad)}")
    return arr.astype(np.int64)


def _freeze(*arrays: np.ndarray) -> None:
    for a in arrays:
        a.setflags(write=False)


@dataclass(frozen=True)
class ObservationalDataset:
    """Cross-sectional data: covariates ``x``, binary treatment ``a``, outcome ``y``.

    ``x`` has shape (n, d) with d >= 0; all values must be finite.
    """

    x: np.ndarray
    a: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if x.ndim != 2:
            raise ValidationError(f"x must be 2-d (n, d), got shape {x.shape}")
        a = _as_binary_vector("a", self.a)
        y = _as_float_vector("y", self.y)
        if not (x.shape[0] == a.shape[0] == y.shape[0]):
            raise ValidationError(
                f"length mismatch: x has {x.shape[0]} rows, a has {a.shape[0]}, y has {y.shape[0]}"
            )
        if not np.all(np.isfinite(x)):
            raise ValidationError("x contains non-finite values")
        _freeze(x, a, y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class GroundTruth:
    """Per-unit potential outcomes and derived truth for a simulated dataset.

    ``true_ate`` is always mean(y1) - mean(y0).  ``pi`` (true propensity) and
    ``labels`` (latent compliance type or similar) are present when the
    generating process defines them; they feed the ground-truth sidecar CSV
    and oracle estimators.
    """

    y1: np.ndarray
    y0: np.ndarray
    pi: np.ndarray | None = None
    labels: tuple[str, ...] | None = None
    true_ate: float = field(init=False)

    def __post_init__(self) -> None:
        y1 = _as_float_vector("y1", self.y1)
        y0 = _as_float_vector("y0", self.y0)
        if y1.shape != y0.shape:
            raise ValidationError("y1 and y0 must have equal length")
        pi = self.pi
        if pi is not None:
            pi = _as_float_vector("pi", pi)
            if pi.shape != y1.shape:
                raise ValidationError("pi must have the same length as y1")
            if np.any(pi <= 0.0) or np.any(pi >= 1.0):
                raise ValidationError("true propensities must lie strictly in (0, 1)")
            _freeze(pi)
        if self.labels is not None and len(self.labels) != y1.shape[0]:
            raise ValidationError("labels must have the same length as y1")
        _freeze(y1, y0)
        object.__setattr__(self, "y1", y1)
        object.__setattr__(self, "y0", y0)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "true_ate", float(np.mean(y1) - np.mean(y0)) if y1.size else 0.0)

    def check_consistency(self, dataset: ObservationalDataset) -> None:
        """Verify observed y equals y1 on treated units and y0 on controls."""
        if self.y1.shape[0] != dataset.n:
            raise ValidationError("ground truth length differs from dataset size")
        expected = np.where(dataset.a == 1, self.y1, self.y0)
        if not np.array_equal(expected, dataset.y):
            raise ValidationError("observed outcomes do not match potential outcomes")


# Tolerance for the centering invariant; scaled by the eif magnitude so the
# check stays meaningful for outcomes far from unit scale.
_EIF_MEAN_TOL = 1e-10


@dataclass(frozen=True)
class AteEstimate:
    """Point estimate with optional influence-based inference.

    ``eif`` holds per-unit influence values centered by construction
    (mean zero); ``se``/``ci_low``/``ci_high`` are present when the estimator
    provides inference.  ``diagnostics`` carries estimator-specific extras
    (clip counts, fold means, unmatched counts) that the report layer emits.
    """

    psi_hat: float
    method: str
    n: int
    eif: np.ndarray | None = None
    se: float | None = None
    ci_low: float | None = None
    ci_high: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not math.isfinite(self.psi_hat):
            raise ValidationError(f"psi_hat is not finite: {self.psi_hat}")
        if self.eif is not None:
            eif = _as_float_vector("eif", self.eif)
            scale = max(1.0, float(np.max(np.abs(eif))) if eif.size else 1.0)
            if eif.size and abs(float(np.mean(eif))) > _EIF_MEAN_TOL * scale:
                raise ValidationError("eif vector is not centered (mean exceeds 1e-10)")
            _freeze(eif)
            object.__setattr__(self, "eif", eif)
        if self.se is not None and (not math.isfinite(self.se) or self.se < 0):
            raise ValidationError(f"se must be finite and >= 0, got {self.se}")
        if (self.ci_low is None) != (self.ci_high is None):
            raise ValidationError("ci_low and ci_high must be present together")
        if self.ci_low is not None:
            if not (self.ci_low <= self.psi_hat <= self.ci_high):
                raise ValidationError("confidence interval does not contain psi_hat")


@dataclass(frozen=True)
class PanelDataset:
    """Long-format panel: one record per (unit, period).

    ``group`` is the unit-level treated-group flag used by the
    difference-in-differences estimator; it must be constant within a unit.
    ``a`` is the realized treatment in that period.
    """

    unit_id: np.ndarray
    period_id: np.ndarray
    a: np.ndarray
    y: np.ndarray
    group: np.ndarray

    def __post_init__(self) -> None:
        unit = np.asarray(self.unit_id, dtype=np.int64)
        period = np.asarray(self.period_id, dtype=np.int64)
        a = _as_binary_vector("a", self.a)
        group = _as_binary_vector("group", self.group)
        y = _as_float_vector("y", self.y)
        n = y.shape[0]
        if not (unit.shape[0] == period.shape[0] == a.shape[0] == group.shape[0] == n):
            raise ValidationError("panel columns must have equal length")
        pairs = np.stack([unit, period], axis=1)
        if np.unique(pairs, axis=0).shape[0] != n:
            raise ValidationError("(unit_id, period_id) pairs must be unique")
        for u in np.unique(unit):
            g = group[unit == u]
            if np.any(g != g[0]):
                raise ValidationError(f"group flag varies within unit {u}")
        _freeze(unit, period, a, y, group)
        object.__setattr__(self, "unit_id", unit)
        object.__setattr__(self, "period_id", period)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "group", group)

    @property
    def n(self) -> int:
        return self.y.shape[0]


@dataclass(frozen=True)
class IvDataset:
    """Instrumental-variable data: binary instrument z, binary treatment a."""

    z: np.ndarray
    a: np.ndarray
    y: np.ndarray
    x: np.ndarray | None = None

    def __post_init__(self) -> None:
        z = _as_binary_vector("z", self.z)
        a = _as_binary_vector("a", self.a)
        y = _as_float_vector("y", self.y)
        if not (z.shape[0] == a.shape[0] == y.shape[0]):
            raise ValidationError("z, a, y must have equal length")
        x = self.x
        if x is not None:
            x = np.asarray(x, dtype=float)
            if x.ndim == 1:
                x = x.reshape(-1, 1)
            if x.shape[0] != y.shape[0]:
                raise ValidationError("x must have one row per unit")
            if not np.all(np.isfinite(x)):
                raise ValidationError("x contains non-finite values")
            _freeze(x)
        _freeze(z, a, y)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.y.shape[0]


@dataclass(frozen=True)
class Summary:
    n: int
    d: int
    n_treated: int
    n_control: int
    treated_mean: float | None
    control_mean: float | None


def summarize(dataset: ObservationalDataset) -> Summary:
    """Arm counts and outcome means; absent aggregates are None."""
    treated = dataset.y[dataset.a == 1]
    control = dataset.y[dataset.a == 0]
    return Summary(
        n=dataset.n,
        d=dataset.d,
        n_treated=int(treated.size),
        n_control=int(control.size),
        treated_mean=float(np.mean(treated)) if treated.size else None,
        control_mean=float(np.mean(control)) if control.size else None,
    )


def _read_rows(path: str) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            reader = csv.reader(f)
            try:
                header = next(reader)
            except StopIteration:
                raise SchemaError(f"{path}: file is empty, expected a header row") from None
            rows = [row for row in reader if row]
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    return [h.strip() for h in header], rows


def _column_index(header: list[str], column: str, path: str) -> int:
    try:
        return header.index(column)
    except ValueError:
        raise SchemaError(f"{path}: missing required column '{column}'") from None


def _parse_cell(row: list[str], idx: int, column: str, row_number: int) -> float:
    try:
        raw = row[idx]
    except IndexError:
        raise ParseError(f"row {row_number}: too few cells, no value for column '{column}'") from None
    try:
        value = float(raw)
    except ValueError:
        raise ParseError(f"row {row_number}, column '{column}': could not parse {raw!r} as a number") from None
    return value


def _parse_columns(
    path: str, columns: Sequence[str]
) -> tuple[dict[str, np.ndarray], int]:
    """Parse the named columns into float vectors.  Row numbers are 1-based data rows."""
    header, rows = _read_rows(path)
    indices = {c: _column_index(header, c, path) for c in columns}
    out: dict[str, list[float]] = {c: [] for c in columns}
    for i, row in enumerate(rows, start=1):
        for c in columns:
            out[c].append(_parse_cell(row, indices[c], c, i))
    return {c: np.asarray(v, dtype=float) for c, v in out.items()}, len(rows)


def _schema_value(schema: Mapping[str, object], key: str, path: str) -> str:
    value = schema.get(key)
    if not isinstance(value, str) or not value:
        raise SchemaError(f"{path}: schema must name the {key} column")
    return value


def _schema_covariates(schema: Mapping[str, object]) -> list[str]:
    cov = schema.get("covariates") or []
    if isinstance(cov, str):
        cov = [c for c in (p.strip() for p in cov.split(",")) if c]
    return list(cov)


def load_csv(path: str, schema: Mapping[str, object]) -> ObservationalDataset:
    """Load an observational dataset.

    ``schema`` maps roles to column names:
    ``{"treatment": ..., "outcome": ..., "covariates": [...]}``
    (covariates optional; may be a list or a comma-separated string).
    Row order is preserved.
    """
    treatment = _schema_value(schema, "treatment", path)
    outcome = _schema_value(schema, "outcome", path)
    covariates = _schema_covariates(schema)
    cols, n = _parse_columns(path, [treatment, outcome, *covariates])
    a_raw = cols[treatment]
    bad = np.nonzero((a_raw != 0.0) & (a_raw != 1.0))[0]
    if bad.size:
        raise ValidationError(
            f"row {bad[0] + 1}, column '{treatment}': treatment must be 0 or 1, "
            f"found {format_number(a_raw[bad[0]])}"
        )
    x = (
        np.column_stack([cols[c] for c in covariates])
        if covariates
        else np.empty((n, 0))
    )
    return ObservationalDataset(x=x, a=a_raw, y=cols[outcome])


def load_iv_csv(path: str, schema: Mapping[str, object]) -> IvDataset:
    """Load an IV dataset; schema keys: instrument, treatment, outcome, covariates."""
    instrument = _schema_value(schema, "instrument", path)
    treatment = _schema_value(schema, "treatment", path)
    outcome = _schema_value(schema, "outcome", path)
    covariates = _schema_covariates(schema)
    cols, n = _parse_columns(path, [instrument, treatment, outcome, *covariates])
    x = (
        np.column_stack([cols[c] for c in covariates])
        if covariates
        else None
    )
    return IvDataset(z=cols[instrument], a=cols[treatment], y=cols[outcome], x=x)


def load_panel_csv(path: str, schema: Mapping[str, object]) -> PanelDataset:
    """Load a panel; schema keys: unit, period, group, treatment, outcome."""
    unit = _schema_value(schema, "unit", path)
    period = _schema_value(schema, "period", path)
    group = _schema_value(schema, "group", path)
    treatment = _schema_value(schema, "treatment", path)
    outcome = _schema_value(schema, "outcome", path)
    cols, _ = _parse_columns(path, [unit, period, group, treatment, outcome])
    for key in (unit, period):
        if np.any(cols[key] != np.round(cols[key])):
            raise ValidationError(f"column '{key}' must contain integers")
    return PanelDataset(
        unit_id=cols[unit].astype(np.int64),
        period_id=cols[period].astype(np.int64),
        a=cols[treatment],
        y=cols[outcome],
        group=cols[group],
    )


def _write_table(path: str, header: list[str], columns: list[np.ndarray]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for i in range(columns[0].shape[0] if columns else 0):
            writer.writerow([format_number(col[i]) for col in columns])


def write_csv(dataset: ObservationalDataset, path: str, schema: Mapping[str, object] | None = None) -> None:
    """Write a dataset with shortest round-trip number formatting.

    Default column names are x1..xd, a, y; pass a schema mapping to rename.
    """
    schema = schema or {}
    treatment = schema.get("treatment", "a")
    outcome = schema.get("outcome", "y")
    covariates = _schema_covariates(schema) or [f"x{j + 1}" for j in range(dataset.d)]
    if len(covariates) != dataset.d:
        raise SchemaError(f"schema names {len(covariates)} covariates, dataset has d={dataset.d}")
    header = [*covariates, str(treatment), str(outcome)]
    columns = [dataset.x[:, j] for j in range(dataset.d)] + [dataset.a, dataset.y]
    _write_table(path, header, columns)


def write_iv_csv(dataset: IvDataset, path: str, schema: Mapping[str, object] | None = None) -> None:
    """Write an IV dataset; default column names are z, a, y, x1..xd."""
    schema = schema or {}
    d = 0 if dataset.x is None else dataset.x.shape[1]
    covariates = _schema_covariates(schema) or [f"x{j + 1}" for j in range(d)]
    if len(covariates) != d:
        raise SchemaError(f"schema names {len(covariates)} covariates, dataset has d={d}")
    header = [
        str(schema.get("instrument", "z")),
        str(schema.get("treatment", "a")),
        str(schema.get("outcome", "y")),
        *covariates,
    ]
    columns = [dataset.z, dataset.a, dataset.y]
    if dataset.x is not None:
        columns += [dataset.x[:, j] for j in range(d)]
    _write_table(path, header, columns)


def write_panel_csv(panel: PanelDataset, path: str, schema: Mapping[str, object] | None = None) -> None:
    """Write a panel; default column names are unit, period, group, a, y."""
    schema = schema or {}
    header = [
        str(schema.get("unit", "unit")),
        str(schema.get("period", "period")),
        str(schema.get("group", "group")),
        str(schema.get("treatment", "a")),
        str(schema.get("outcome", "y")),
    ]
    _write_table(path, header, [panel.unit_id, panel.period_id, panel.group, panel.a, panel.y])


def write_ground_truth_csv(truth: GroundTruth, path: str) -> None:
    """Write the ground-truth sidecar: y1, y0, plus propensity/type when known."""
    header = ["y1", "y0"]
    columns: list[np.ndarray] = [truth.y1, truth.y0]
    if truth.pi is not None:
        header.append("pi")
        columns.append(truth.pi)
    if truth.labels is not None:
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header + ["type"])
            for i in range(truth.y1.shape[0]):
                row = [format_number(col[i]) for col in columns]
                row.append(truth.labels[i])
                writer.writerow(row)
        return
    _write_table(path, header, columns)


def require_both_arms(dataset: ObservationalDataset, method: str) -> None:
    """Raise when an estimator that conditions on both arms lacks one."""
    if not np.any(dataset.a == 1) or not np.any(dataset.a == 0):
        raise InsufficientDataError(f"{method} requires at least one treated and one control unit")
