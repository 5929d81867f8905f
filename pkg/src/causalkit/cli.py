"""Command-line interface: simulate, estimate, montecarlo, eif-check.

Configuration precedence is flag > config-file key > built-in default.  The
config file is flat text, one ``key = value`` per line, ``#`` comments
allowed; keys use the canonical dotted names (``crossfit.k``,
``propensity.lambda``, ...).  Every report embeds its fully resolved config,
the seed, and the package version, and is serialized with stable key order
and shortest round-trip numbers, so identical configs reproduce reports
byte for byte.

Exit codes: 0 success, 1 usage error, 2 input/validation error,
3 numerical/estimation failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from statistics import NormalDist

import numpy as np

from . import __version__
from .ate_estimators import MatchSpec, aipw, g_formula, ipw, naive_dim, psm_att
from .data_model import (
    _parse_cell,
    _read_rows,
    format_number,
    load_csv,
    load_iv_csv,
    load_panel_csv,
    write_csv,
    write_ground_truth_csv,
    write_iv_csv,
    write_panel_csv,
)
from .dgp import (
    FORMS,
    IvDgpConfig,
    ObsDgpConfig,
    PanelDgpConfig,
    RdDgpConfig,
    generate_iv,
    generate_observational,
    generate_panel,
    generate_rd,
)
from .eif_engine import (
    Ate,
    CounterfactualMean,
    DiscreteMeasure,
    closed_form_eif,
    eif_table,
    make_functional,
    pathwise_derivative,
    random_score,
    second_order_remainder,
)
from .errors import (
    CausalKitError,
    ConfigError,
    EstimationError,
    InputError,
    SchemaError,
)
from .montecarlo import ESTIMATORS, SCENARIOS, McConfig, McReport, run_mc
from .nuisance import FEATURE_MAPS, cross_fit
from .quasi_experimental import (
    KERNELS,
    RdSpec,
    did,
    did_placebo,
    fe_within,
    iv_wald,
    rd_local_linear,
    tsls,
)
from .rng import stream

__all__ = ["main", "parse_args", "emit_report"]

PROG = "causalkit"

ATE_METHODS = ("naive", "ipw", "gformula", "psm", "aipw")
QUASI_METHODS = ("did", "rd", "iv", "tsls", "fe")

_MC_COLUMNS = (
    "estimator",
    "n_ok",
    "n_failed",
    "mean_estimate",
    "bias",
    "mc_se_mean",
    "variance",
    "mse",
    "coverage",
    "mean_se",
    "mean_clip_count",
    "mean_unmatched",
)


class UsageError(Exception):
    """Post-parse usage problem (missing or conflicting flags)."""


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# config-file handling


def _load_config_file(path: str) -> dict[str, str]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got '{raw.strip()}'")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        entries[key] = value.strip()
    return entries


def _cast_int(text: str, key: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"config key '{key}' must be an integer, got '{text}'") from None


def _cast_float(text: str, key: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"config key '{key}' must be a number, got '{text}'") from None


def _cast_bool(text: str, key: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"config key '{key}' must be a boolean, got '{text}'")


def _cast_str(text: str, key: str) -> str:
    return text


def _cast_pair(text: str, key: str) -> tuple[float, float]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise ConfigError(f"config key '{key}' must be 'lo,hi', got '{text}'")
    return (_cast_float(parts[0], key), _cast_float(parts[1], key))


def _cast_names(text: str, key: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


def _choice(value: str, key: str, choices: tuple[str, ...]) -> str:
    if value not in choices:
        raise ConfigError(f"'{key}' must be one of {choices}, got '{value}'")
    return value


class _Resolver:
    """Flag > config-file entry > default, with strict unknown-key checking."""

    def __init__(self, args: argparse.Namespace, known_keys: tuple[str, ...]):
        entries = _load_config_file(args.config) if getattr(args, "config", None) else {}
        unknown = sorted(set(entries) - set(known_keys))
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}; expected a subset of {sorted(known_keys)}")
        self.args = args
        self.entries = entries

    def get(self, dest: str, key: str, default, cast):
        flag_value = getattr(self.args, dest, None)
        if flag_value is not None and flag_value is not False:
            return flag_value
        if key in self.entries:
            return cast(self.entries[key], key)
        if flag_value is False:
            return False
        return default


def _parse_clip(value: str | tuple[float, float]) -> tuple[float, float]:
    if isinstance(value, tuple):
        return value
    return _cast_pair(value, "crossfit.clip")


# ---------------------------------------------------------------------------
# serialization


def _jsonable(value):
    """Recursively coerce to JSON-safe values; non-finite floats become null."""
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        value = float(value)
    if isinstance(value, float):
        return value if np.isfinite(value) else None
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    return value


def emit_report(result: dict, format: str = "json", path: str | None = None) -> None:
    """Serialize a report dict with stable key order.

    json: indent-2 object, shortest round-trip numbers, trailing newline.
    csv: requires a montecarlo-shaped dict (a "rows" list); fixed column
    order, empty cells for absent values.
    """
    if format == "json":
        text = json.dumps(_jsonable(result), indent=2, allow_nan=False) + "\n"
    elif format == "csv":
        rows = result.get("rows")
        if rows is None:
            raise ConfigError("csv format requires a report with a 'rows' table")
        lines = [",".join(_MC_COLUMNS)]
        for row in rows:
            cells = []
            for col in _MC_COLUMNS:
                v = row.get(col)
                if v is None:
                    cells.append("")
                elif isinstance(v, str):
                    cells.append(v)
                elif isinstance(v, (int, np.integer)) and not isinstance(v, bool):
                    cells.append(str(int(v)))
                else:
                    cells.append(format_number(float(v)))
            lines.append(",".join(cells))
        text = "\n".join(lines) + "\n"
    else:
        raise ConfigError(f"unknown report format '{format}'")
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(text)


def _ci_from_se(psi: float, se: float | None, level: float) -> tuple[float | None, float | None]:
    if se is None:
        return None, None
    z = NormalDist().inv_cdf(0.5 + level / 2.0)
    return psi - z * se, psi + z * se


# ---------------------------------------------------------------------------
# simulate


def _add_simulate_parser(sub) -> None:
    p = sub.add_parser("simulate", help="draw a synthetic dataset with ground truth")
    p.add_argument("--dgp", choices=("obs", "iv", "panel", "rd"), required=True)
    p.add_argument("--out", help="dataset CSV path (required)")
    p.add_argument("--truth-out", dest="truth_out", help="ground-truth sidecar CSV path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--confounding", type=float, default=0.0)
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument("--tau-x", dest="tau_x", help="comma-separated heterogeneous-effect coefficients")
    p.add_argument("--noise-sd", dest="noise_sd", type=float, default=1.0)
    p.add_argument("--outcome-form", dest="outcome_form", choices=FORMS, default="linear")
    p.add_argument("--propensity-form", dest="propensity_form", choices=FORMS, default="linear")
    p.add_argument("--p-always", dest="p_always", type=float, default=0.0)
    p.add_argument("--p-complier", dest="p_complier", type=float, default=1.0)
    p.add_argument("--p-never", dest="p_never", type=float, default=0.0)
    p.add_argument("--p-defier", dest="p_defier", type=float, default=0.0)
    p.add_argument("--allow-defiers", dest="allow_defiers", action="store_true")
    p.add_argument("--instrument-prob", dest="instrument_prob", type=float, default=0.5)
    p.add_argument("--complier-effect", dest="complier_effect", type=float, default=0.0)
    p.add_argument("--always-effect", dest="always_effect", type=float, default=0.0)
    p.add_argument("--never-effect", dest="never_effect", type=float, default=0.0)
    p.add_argument("--defier-effect", dest="defier_effect", type=float, default=0.0)
    p.add_argument("--n-units", dest="n_units", type=int, default=20)
    p.add_argument("--n-periods", dest="n_periods", type=int, default=2)
    p.add_argument("--group-effect", dest="group_effect", type=float, default=0.0)
    p.add_argument("--time-trend", dest="time_trend", type=float, default=0.0)
    p.add_argument("--effect", type=float, default=0.0, help="panel treatment effect")
    p.add_argument("--parallel-violation", dest="parallel_violation", type=float, default=0.0)
    p.add_argument("--unit-effect-sd", dest="unit_effect_sd", type=float, default=1.0)
    p.add_argument("--treated-fraction", dest="treated_fraction", type=float, default=0.5)
    p.add_argument("--first-treated-period", dest="first_treated_period", type=int)
    p.add_argument("--cutoff", type=float, default=0.0)
    p.add_argument("--jump", type=float, default=0.0)
    p.add_argument("--slope-left", dest="slope_left", type=float, default=0.0)
    p.add_argument("--slope-right", dest="slope_right", type=float, default=0.0)
    p.add_argument("--half-width", dest="half_width", type=float, default=1.0)
    p.set_defaults(handler=_cmd_simulate)


def _cmd_simulate(args: argparse.Namespace) -> None:
    if not args.out:
        raise UsageError("--out is required for simulate")
    seed = args.seed
    summary = {
        "subcommand": "simulate",
        "dgp": args.dgp,
        "config": {},
        "out": args.out,
        "truth_out": args.truth_out,
        "rows": 0,
        "seed": seed,
        "version": __version__,
    }
    if args.dgp == "obs":
        tau_x = None
        if args.tau_x:
            tau_x = tuple(float(v) for v in args.tau_x.split(","))
        config = ObsDgpConfig(
            n=args.n,
            d=args.d,
            confounding_strength=args.confounding,
            tau=args.tau,
            tau_x=tau_x,
            outcome_noise_sd=args.noise_sd,
            outcome_form=args.outcome_form,
            propensity_form=args.propensity_form,
        )
        dataset, truth = generate_observational(config, seed)
        write_csv(dataset, args.out)
        if args.truth_out:
            write_ground_truth_csv(truth, args.truth_out)
        summary["config"] = {
            "n": config.n,
            "d": config.d,
            "confounding": config.confounding_strength,
            "tau": config.tau,
            "tau_x": list(config.tau_x) if config.tau_x else None,
            "noise_sd": config.outcome_noise_sd,
            "outcome_form": config.outcome_form,
            "propensity_form": config.propensity_form,
        }
        summary["rows"] = dataset.n
    elif args.dgp == "iv":
        config = IvDgpConfig(
            n=args.n,
            p_always=args.p_always,
            p_complier=args.p_complier,
            p_never=args.p_never,
            p_defier=args.p_defier,
            effect_by_type={
                "always": args.always_effect,
                "complier": args.complier_effect,
                "never": args.never_effect,
                "defier": args.defier_effect,
            },
            instrument_prob=args.instrument_prob,
            allow_defiers=args.allow_defiers,
            noise_sd=args.noise_sd,
        )
        dataset, truth, true_late = generate_iv(config, seed)
        write_iv_csv(dataset, args.out)
        if args.truth_out:
            write_ground_truth_csv(truth, args.truth_out)
        summary["config"] = {
            "n": config.n,
            "p_always": config.p_always,
            "p_complier": config.p_complier,
            "p_never": config.p_never,
            "p_defier": config.p_defier,
            "instrument_prob": config.instrument_prob,
            "complier_effect": config.effect_by_type["complier"],
            "noise_sd": config.noise_sd,
            "first_stage_strength": config.first_stage_strength,
        }
        summary["rows"] = dataset.n
        summary["true_late"] = true_late
    elif args.dgp == "panel":
        config = PanelDgpConfig(
            n_units=args.n_units,
            n_periods=args.n_periods,
            group_effect=args.group_effect,
            time_trend=args.time_trend,
            treatment_effect=args.effect,
            parallel_violation=args.parallel_violation,
            noise_sd=args.noise_sd,
            unit_effect_sd=args.unit_effect_sd,
            treated_fraction=args.treated_fraction,
            first_treated_period=args.first_treated_period,
        )
        panel, true_effect, unit_effects = generate_panel(config, seed)
        write_panel_csv(panel, args.out)
        if args.truth_out:
            lines = ["unit,unit_effect,true_effect"]
            for u, alpha in enumerate(unit_effects):
                lines.append(f"{u},{format_number(float(alpha))},{format_number(true_effect)}")
            with open(args.truth_out, "w", encoding="utf-8", newline="") as f:
                f.write("\n".join(lines) + "\n")
        summary["config"] = {
            "n_units": config.n_units,
            "n_periods": config.n_periods,
            "group_effect": config.group_effect,
            "time_trend": config.time_trend,
            "effect": config.treatment_effect,
            "parallel_violation": config.parallel_violation,
            "noise_sd": config.noise_sd,
            "unit_effect_sd": config.unit_effect_sd,
            "treated_fraction": config.treated_fraction,
            "first_treated_period": config.first_treated_period,
        }
        summary["rows"] = panel.n
        summary["true_effect"] = true_effect
    else:
        config = RdDgpConfig(
            n=args.n,
            cutoff=args.cutoff,
            jump=args.jump,
            slope_left=args.slope_left,
            slope_right=args.slope_right,
            noise_sd=args.noise_sd,
            half_width=args.half_width,
        )
        dataset, truth, true_jump = generate_rd(config, seed)
        write_csv(dataset, args.out, schema={"covariates": ["x"]})
        if args.truth_out:
            write_ground_truth_csv(truth, args.truth_out)
        summary["config"] = {
            "n": config.n,
            "cutoff": config.cutoff,
            "jump": config.jump,
            "slope_left": config.slope_left,
            "slope_right": config.slope_right,
            "noise_sd": config.noise_sd,
            "half_width": config.half_width,
        }
        summary["rows"] = dataset.n
        summary["true_jump"] = true_jump
    emit_report(summary, "json", None)


# ---------------------------------------------------------------------------
# estimate


_ESTIMATE_CONFIG_KEYS = (
    "method",
    "input",
    "output",
    "treatment",
    "outcome",
    "covariates",
    "instrument",
    "unit",
    "period",
    "group",
    "running",
    "seed",
    "level",
    "normalization",
    "caliper",
    "with_replacement",
    "cutoff",
    "bandwidth",
    "kernel",
    "placebo",
    "crossfit.k",
    "crossfit.clip",
    "propensity.lambda",
    "outcome.lambda",
    "propensity.features",
    "outcome.features",
)


def _add_estimate_parser(sub) -> None:
    p = sub.add_parser("estimate", help="run an estimator on a CSV dataset")
    p.add_argument("--method", choices=ATE_METHODS + QUASI_METHODS)
    p.add_argument("--input")
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--out", help="report path (default: stdout)")
    p.add_argument("--treatment")
    p.add_argument("--outcome")
    p.add_argument("--covariates", help="comma-separated covariate column names")
    p.add_argument("--instrument")
    p.add_argument("--unit")
    p.add_argument("--period")
    p.add_argument("--group")
    p.add_argument("--running", help="running-variable column for rd")
    p.add_argument("--seed", type=int)
    p.add_argument("--level", type=float)
    p.add_argument("--normalization", choices=("horvitz_thompson", "hajek"))
    p.add_argument("--caliper", type=float)
    p.add_argument("--with-replacement", dest="with_replacement", action="store_true", default=None)
    p.add_argument("--cutoff", type=float)
    p.add_argument("--bandwidth", type=float)
    p.add_argument("--kernel", choices=KERNELS)
    p.add_argument("--placebo", action="store_true", default=None)
    p.add_argument("--k", type=int, help="cross-fitting folds")
    p.add_argument("--clip", help="propensity clip bounds 'lo,hi'")
    p.add_argument("--propensity-lambda", dest="propensity_lambda", type=float)
    p.add_argument("--outcome-lambda", dest="outcome_lambda", type=float)
    p.add_argument("--propensity-features", dest="propensity_features", choices=FEATURE_MAPS)
    p.add_argument("--outcome-features", dest="outcome_features", choices=FEATURE_MAPS)
    p.set_defaults(handler=_cmd_estimate)


def _cmd_estimate(args: argparse.Namespace) -> None:
    r = _Resolver(args, _ESTIMATE_CONFIG_KEYS)
    method = r.get("method", "method", None, _cast_str)
    if method is None:
        raise UsageError("--method is required")
    if method not in ATE_METHODS + QUASI_METHODS:
        raise ConfigError(f"unknown method '{method}'")
    input_path = r.get("input", "input", None, _cast_str)
    if input_path is None:
        raise UsageError("--input is required")
    out_path = args.out if args.out is not None else r.get("out", "output", None, _cast_str)
    treatment = r.get("treatment", "treatment", "a", _cast_str)
    outcome = r.get("outcome", "outcome", "y", _cast_str)
    covariates = r.get("covariates", "covariates", "", _cast_str)
    if isinstance(covariates, str):
        covariates = [c.strip() for c in covariates.split(",") if c.strip()]
    seed = r.get("seed", "seed", 0, _cast_int)
    level = r.get("level", "level", 0.95, _cast_float)
    config: dict = {"subcommand": "estimate", "method": method, "input": input_path}

    if method in ATE_METHODS:
        schema = {"treatment": treatment, "outcome": outcome, "covariates": covariates}
        dataset = load_csv(input_path, schema)
        config.update(
            {
                "treatment": treatment,
                "outcome": outcome,
                "covariates": list(covariates),
                "seed": seed,
                "level": level,
            }
        )
        if method == "naive":
            estimate = naive_dim(dataset, level=level)
        else:
            k = r.get("k", "crossfit.k", 5, _cast_int)
            clip = _parse_clip(r.get("clip", "crossfit.clip", (0.01, 0.99), _cast_pair))
            p_lambda = r.get("propensity_lambda", "propensity.lambda", 1e-6, _cast_float)
            o_lambda = r.get("outcome_lambda", "outcome.lambda", 1e-8, _cast_float)
            p_feat = _choice(
                r.get("propensity_features", "propensity.features", "linear", _cast_str),
                "propensity.features",
                FEATURE_MAPS,
            )
            o_feat = _choice(
                r.get("outcome_features", "outcome.features", "linear", _cast_str),
                "outcome.features",
                FEATURE_MAPS,
            )
            config.update(
                {
                    "crossfit.k": k,
                    "crossfit.clip": list(clip),
                    "propensity.lambda": p_lambda,
                    "outcome.lambda": o_lambda,
                    "propensity.features": p_feat,
                    "outcome.features": o_feat,
                }
            )
            fit = cross_fit(
                dataset,
                k=k,
                clip=clip,
                propensity_lambda=p_lambda,
                outcome_lambda=o_lambda,
                propensity_features=p_feat,
                outcome_features=o_feat,
                seed=seed,
            )
            if method == "ipw":
                normalization = r.get("normalization", "normalization", "hajek", _cast_str)
                normalization = _choice(normalization, "normalization", ("horvitz_thompson", "hajek"))
                config["normalization"] = normalization
                estimate = ipw(dataset, fit.pi_hat, normalization, level=level)
                estimate.diagnostics["clip_count"] = fit.clip_count
            elif method == "gformula":
                estimate = g_formula(dataset, fit.mu0_hat, fit.mu1_hat, level=level)
                estimate.diagnostics["clip_count"] = fit.clip_count
            elif method == "psm":
                caliper = r.get("caliper", "caliper", None, _cast_float)
                with_repl = bool(r.get("with_replacement", "with_replacement", False, _cast_bool))
                config["caliper"] = caliper
                config["with_replacement"] = with_repl
                spec = MatchSpec(caliper=caliper, with_replacement=with_repl)
                estimate, _ = psm_att(dataset, fit.pi_hat, spec, level=level)
                estimate.diagnostics["clip_count"] = fit.clip_count
            else:
                estimate = aipw(dataset, fit, level=level)
        report = {
            "method": estimate.method,
            "psi_hat": estimate.psi_hat,
            "se": estimate.se,
            "ci_low": estimate.ci_low,
            "ci_high": estimate.ci_high,
            "n": estimate.n,
            "diagnostics": estimate.diagnostics,
            "config": config,
            "version": __version__,
        }
        emit_report(report, "json", out_path)
        return

    # quasi-experimental methods
    if method in ("did", "fe"):
        unit = r.get("unit", "unit", "unit", _cast_str)
        period = r.get("period", "period", "period", _cast_str)
        group = r.get("group", "group", "group", _cast_str)
        panel = load_panel_csv(
            input_path,
            {"unit": unit, "period": period, "group": group, "treatment": treatment, "outcome": outcome},
        )
        config.update(
            {
                "unit": unit,
                "period": period,
                "group": group,
                "treatment": treatment,
                "outcome": outcome,
                "seed": seed,
                "level": level,
            }
        )
        if method == "did":
            placebo = bool(r.get("placebo", "placebo", False, _cast_bool))
            config["placebo"] = placebo
            est = did_placebo(panel) if placebo else did(panel)
            psi, se = est.estimate, est.se
            diagnostics = {
                "cell_means": list(est.cell_means),
                "cell_counts": list(est.cell_counts),
                "pre_period": est.pre_period,
                "post_period": est.post_period,
                "placebo": placebo,
            }
            n = panel.n
        else:
            est = fe_within(panel)
            psi, se = est.estimate, est.se
            diagnostics = {
                "n_units": est.n_units,
                "n_units_identifying": est.n_units_identifying,
            }
            n = panel.n
    elif method == "rd":
        running = r.get("running", "running", "x", _cast_str)
        cutoff = r.get("cutoff", "cutoff", None, _cast_float)
        if cutoff is None:
            raise UsageError("--cutoff is required for --method rd")
        bandwidth = r.get("bandwidth", "bandwidth", 1.0, _cast_float)
        kernel = _choice(r.get("kernel", "kernel", "rectangular", _cast_str), "kernel", KERNELS)
        dataset = load_csv(input_path, {"treatment": treatment, "outcome": outcome, "covariates": [running]})
        config.update(
            {
                "running": running,
                "outcome": outcome,
                "cutoff": cutoff,
                "bandwidth": bandwidth,
                "kernel": kernel,
                "seed": seed,
                "level": level,
            }
        )
        est = rd_local_linear(dataset, RdSpec(cutoff=cutoff, bandwidth=bandwidth, kernel=kernel))
        psi, se = est.estimate, est.se
        diagnostics = {
            "intercept_left": est.intercept_left,
            "intercept_right": est.intercept_right,
            "slope_left": est.slope_left,
            "slope_right": est.slope_right,
            "n_left": est.n_left,
            "n_right": est.n_right,
        }
        n = dataset.n
    else:  # iv, tsls
        instrument = r.get("instrument", "instrument", "z", _cast_str)
        iv_data = load_iv_csv(
            input_path,
            {
                "instrument": instrument,
                "treatment": treatment,
                "outcome": outcome,
                "covariates": covariates,
            },
        )
        config.update(
            {
                "instrument": instrument,
                "treatment": treatment,
                "outcome": outcome,
                "covariates": list(covariates),
                "seed": seed,
                "level": level,
            }
        )
        est = iv_wald(iv_data) if method == "iv" else tsls(iv_data)
        psi, se = est.late, est.se
        diagnostics = {
            "first_stage": est.first_stage,
            "reduced_form": est.reduced_form,
            "weak_flag": est.weak_flag,
        }
        n = iv_data.n
    ci_low, ci_high = _ci_from_se(psi, se, level)
    report = {
        "method": method,
        "psi_hat": psi,
        "se": se,
        "ci_low": ci_low,
        "ci_high": ci_high,
        "n": n,
        "diagnostics": diagnostics,
        "config": config,
        "version": __version__,
    }
    emit_report(report, "json", out_path)


# ---------------------------------------------------------------------------
# montecarlo


_MC_CONFIG_KEYS = (
    "scenario",
    "reps",
    "n",
    "seed",
    "estimators",
    "level",
    "d",
    "confounding",
    "tau",
    "noise_sd",
    "outcome_form",
    "propensity_form",
    "crossfit.k",
    "crossfit.clip",
    "propensity.lambda",
    "outcome.lambda",
)


def _add_montecarlo_parser(sub) -> None:
    p = sub.add_parser("montecarlo", help="replicated-simulation study")
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--scenario", choices=SCENARIOS)
    p.add_argument("--reps", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--estimators", help=f"comma-separated subset of {ESTIMATORS}")
    p.add_argument("--level", type=float)
    p.add_argument("--d", type=int)
    p.add_argument("--confounding", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--noise-sd", dest="noise_sd", type=float)
    p.add_argument("--outcome-form", dest="outcome_form", choices=FORMS)
    p.add_argument("--propensity-form", dest="propensity_form", choices=FORMS)
    p.add_argument("--k", type=int)
    p.add_argument("--clip")
    p.add_argument("--propensity-lambda", dest="propensity_lambda", type=float)
    p.add_argument("--outcome-lambda", dest="outcome_lambda", type=float)
    p.add_argument("--out", help="JSON report path (default: stdout)")
    p.add_argument("--csv", help="also write the row table as CSV to this path")
    p.set_defaults(handler=_cmd_montecarlo)


def _mc_report_dict(report: McReport, config: dict) -> dict:
    rows = []
    for s in report.rows:
        rows.append(
            {
                "estimator": s.estimator,
                "n_ok": s.n_ok,
                "n_failed": s.n_failed,
                "mean_estimate": s.mean_estimate,
                "bias": s.bias,
                "mc_se_mean": s.mc_se_mean,
                "variance": s.variance,
                "mse": s.mse,
                "coverage": s.coverage,
                "mean_se": s.mean_se,
                "mean_clip_count": s.mean_clip_count,
                "mean_unmatched": s.mean_unmatched,
            }
        )
    return {
        "scenario": report.scenario,
        "true_ate": report.true_ate,
        "replications": report.replications,
        "n": report.n,
        "seed": report.seed,
        "rows": rows,
        "failures": list(report.failures),
        "config": config,
        "version": __version__,
    }


def _cmd_montecarlo(args: argparse.Namespace) -> None:
    r = _Resolver(args, _MC_CONFIG_KEYS)
    scenario = _choice(r.get("scenario", "scenario", "both_correct", _cast_str), "scenario", SCENARIOS)
    reps = r.get("reps", "reps", 100, _cast_int)
    n = r.get("n", "n", 1000, _cast_int)
    seed = r.get("seed", "seed", 0, _cast_int)
    level = r.get("level", "level", 0.95, _cast_float)
    estimators = r.get("estimators", "estimators", "naive,ipw,gformula,aipw", _cast_str)
    if isinstance(estimators, str):
        estimators = tuple(e.strip() for e in estimators.split(",") if e.strip())
    d = r.get("d", "d", 1, _cast_int)
    confounding = r.get("confounding", "confounding", 0.0, _cast_float)
    tau = r.get("tau", "tau", 0.0, _cast_float)
    noise_sd = r.get("noise_sd", "noise_sd", 1.0, _cast_float)
    outcome_form = _choice(
        r.get("outcome_form", "outcome_form", "linear", _cast_str), "outcome_form", FORMS
    )
    propensity_form = _choice(
        r.get("propensity_form", "propensity_form", "linear", _cast_str), "propensity_form", FORMS
    )
    k = r.get("k", "crossfit.k", 5, _cast_int)
    clip = _parse_clip(r.get("clip", "crossfit.clip", (0.01, 0.99), _cast_pair))
    p_lambda = r.get("propensity_lambda", "propensity.lambda", 1e-6, _cast_float)
    o_lambda = r.get("outcome_lambda", "outcome.lambda", 1e-8, _cast_float)
    dgp = ObsDgpConfig(
        n=n,
        d=d,
        confounding_strength=confounding,
        tau=tau,
        outcome_noise_sd=noise_sd,
        outcome_form=outcome_form,
        propensity_form=propensity_form,
    )
    mc = McConfig(
        dgp=dgp,
        estimators=estimators,
        replications=reps,
        n=n,
        seed=seed,
        scenario=scenario,
        k=k,
        clip=clip,
        propensity_lambda=p_lambda,
        outcome_lambda=o_lambda,
        level=level,
    )
    report = run_mc(mc)
    config = {
        "subcommand": "montecarlo",
        "scenario": scenario,
        "reps": reps,
        "n": n,
        "seed": seed,
        "estimators": list(estimators),
        "level": level,
        "d": d,
        "confounding": confounding,
        "tau": tau,
        "noise_sd": noise_sd,
        "outcome_form": outcome_form,
        "propensity_form": propensity_form,
        "crossfit.k": k,
        "crossfit.clip": list(clip),
        "propensity.lambda": p_lambda,
        "outcome.lambda": o_lambda,
    }
    report_dict = _mc_report_dict(report, config)
    emit_report(report_dict, "json", args.out)
    if args.csv:
        emit_report(report_dict, "csv", args.csv)


# ---------------------------------------------------------------------------
# eif-check


def _load_measure_csv(path: str, prob_column: str = "prob") -> DiscreteMeasure:
    header, rows = _read_rows(path)
    if prob_column not in header:
        raise SchemaError(f"measure file {path} has no '{prob_column}' column")
    if len(header) < 2:
        raise SchemaError("measure file needs at least one coordinate column plus probabilities")
    prob_idx = header.index(prob_column)
    names = tuple(h for i, h in enumerate(header) if i != prob_idx)
    coord_idx = [i for i in range(len(header)) if i != prob_idx]
    support = np.empty((len(rows), len(names)))
    probs = np.empty(len(rows))
    for rnum, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise SchemaError(f"{path}: row {rnum} has {len(row)} cells, expected {len(header)}")
        for j, i in enumerate(coord_idx):
            support[rnum - 2, j] = _parse_cell(row, i, header[i], rnum)
        probs[rnum - 2] = _parse_cell(row, prob_idx, prob_column, rnum)
    return DiscreteMeasure(names=names, support=support, probs=probs)


def _add_eif_check_parser(sub) -> None:
    p = sub.add_parser("eif-check", help="numerical vs closed-form influence functions")
    p.add_argument("--measure", required=True, help="CSV: coordinate columns plus a prob column")
    p.add_argument("--functional", required=True, help="ate | mean(c) | cond_mean(c|a=0) | counterfactual_mean(0|1)")
    p.add_argument("--estimated", help="second measure CSV for the second-order remainder check")
    p.add_argument("--scores", type=int, default=20, help="random scores for the central identity")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--prob-column", dest="prob_column", default="prob")
    p.add_argument("--out", help="report path (default: stdout)")
    p.set_defaults(handler=_cmd_eif_check)


def _cmd_eif_check(args: argparse.Namespace) -> None:
    measure = _load_measure_csv(args.measure, args.prob_column)
    f = make_functional(args.functional)
    phi_num, err = eif_table(f, measure)
    phi_cf = closed_form_eif(f, measure)
    gaps = []
    for i in range(args.scores):
        s = random_score(measure, stream(args.seed, i))
        lhs = pathwise_derivative(f, measure, s)
        rhs = float(measure.probs @ (phi_num * s.values))
        gaps.append(abs(lhs - rhs))
    r2_block = None
    if args.estimated:
        if not isinstance(f, (Ate, CounterfactualMean)):
            raise ConfigError(
                "the second-order remainder check supports ate and counterfactual_mean only"
            )
        estimated = _load_measure_csv(args.estimated, args.prob_column)
        res = second_order_remainder(measure, estimated, functional=f.label)
        r2_block = {
            "r2": res.r2,
            "bound": res.bound,
            "rate_product": res.rate_product,
            "satisfied": bool(abs(res.r2) <= res.bound + 1e-12),
        }
    report = {
        "functional": f.label,
        "psi": f.value(measure),
        "support_size": measure.m,
        "phi_numerical": list(phi_num),
        "phi_closed_form": list(phi_cf),
        "phi_error_estimates": list(err),
        "max_abs_diff": float(np.max(np.abs(phi_num - phi_cf))),
        "numerical_mean": float(measure.probs @ phi_num),
        "closed_form_mean": float(measure.probs @ phi_cf),
        "central_identity": {
            "n_scores": args.scores,
            "max_gap": float(max(gaps)) if gaps else None,
        },
        "r2_check": r2_block,
        "config": {
            "subcommand": "eif-check",
            "measure": args.measure,
            "functional": args.functional,
            "estimated": args.estimated,
            "scores": args.scores,
            "seed": args.seed,
            "prob_column": args.prob_column,
        },
        "version": __version__,
    }
    emit_report(report, "json", args.out)


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> _Parser:
    parser = _Parser(prog=PROG, description="causal-effect estimation toolkit")
    parser.add_argument("--version", action="version", version=f"{PROG} {__version__}")
    sub = parser.add_subparsers(dest="subcommand", metavar="subcommand")
    _add_simulate_parser(sub)
    _add_estimate_parser(sub)
    _add_montecarlo_parser(sub)
    _add_eif_check_parser(sub)
    return parser


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "handler"):
        parser.error("a subcommand is required (simulate, estimate, montecarlo, eif-check)")
    return args


def main(argv: list[str] | None = None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.handler(args)
        return 0
    except UsageError as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1
    except EstimationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except InputError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except CausalKitError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
