"""Exception hierarchy shared by the library and the command line.

Every error carries the exit code the CLI returns when it escapes a command:
0 ok, 2 input parse / config, 3 schema, 4 shape, 5 check failure.
"""


class OtlossError(Exception):
    """Base class for all errors raised by otloss."""

    exit_code = 1


class NumericalFailure(OtlossError):
    """A computation produced NaN or Inf."""


class InputParseError(OtlossError):
    """A file could not be parsed (malformed JSON, bad flag value)."""

    exit_code = 2


class ConfigError(OtlossError):
    """A configuration value is invalid or names something unknown."""

    exit_code = 2


class MissingComponent(OtlossError):
    """A composite objective references a loss that was not evaluated."""

    exit_code = 2


class SchemaError(OtlossError):
    """A parsed record does not follow the expected schema."""

    exit_code = 3


class UnparsableIngredient(OtlossError):
    """An ingredient line has no alphabetic content."""

    exit_code = 3


class EmptyReport(OtlossError):
    """No metric could be computed over the whole corpus."""

    exit_code = 3


class InvalidShape(OtlossError):
    """Tensor shapes are inconsistent."""

    exit_code = 4


class InvalidSpan(OtlossError):
    """A span mask falls outside its sequence."""

    exit_code = 4


class InvalidToken(OtlossError):
    """A token id falls outside the vocabulary."""

    exit_code = 4


class CheckFailure(OtlossError):
    """A gradient check exceeded its threshold."""

    exit_code = 5


class UndefinedMetric(OtlossError):
    """A metric has a zero denominator for this pair."""
