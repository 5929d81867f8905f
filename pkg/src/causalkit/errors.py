"""Exception hierarchy.

Two broad families matter to callers and to the CLI exit-code contract:

* :class:`InputError` — the input data, schema, or configuration is invalid.
  The run never started in earnest.  CLI exit code 2.
* :class:`EstimationError` — inputs were well-formed but a numerical or
  statistical procedure could not produce a result (separation, rank
  deficiency, empty cells, ...).  CLI exit code 3.

Usage errors (unknown flags etc.) are handled by the CLI layer itself and
exit with code 1.
"""


class CausalKitError(Exception):
    """Base class for every error raised by this package."""


class InputError(CausalKitError):
    """Invalid input data, schema, or configuration."""


class SchemaError(InputError):
    """A required column is missing or the schema is malformed."""


class ParseError(InputError):
    """A cell could not be parsed as a number; message names the row."""


class ValidationError(InputError):
    """A constructed value would violate a type invariant."""


class ConfigError(InputError):
    """A configuration value is out of its allowed range."""


class EstimationError(CausalKitError):
    """A numerical procedure failed on well-formed input."""


class SeparationError(EstimationError):
    """Logistic MLE does not exist (degenerate treatment column, no ridge)."""


class RankDeficiencyError(EstimationError):
    """Unpenalized linear system is singular; a ridge penalty would fix it."""


class PositivityError(EstimationError):
    """A propensity or arm mass is outside (0, 1) where it must not be."""


class EmptyMatchError(EstimationError):
    """Matching produced zero pairs."""


class FoldError(EstimationError):
    """A cross-fitting training complement is degenerate; names the fold."""


class CellError(EstimationError):
    """A group x period cell required by the estimator is empty."""


class BandwidthError(EstimationError):
    """Too few in-bandwidth points on one side of the cutoff."""


class InstrumentError(EstimationError):
    """The instrument is irrelevant (zero first stage)."""


class IdentificationError(EstimationError):
    """No within-unit treatment variation anywhere in the panel."""


class EvaluabilityError(EstimationError):
    """A functional is undefined at a (perturbed) measure."""


class SupportError(EstimationError):
    """A measure assigns mass outside the dominating measure's support."""


class EpsError(EstimationError):
    """A perturbation size would produce negative probability mass."""


class InsufficientDataError(EstimationError):
    """Too few observations for the requested computation."""
