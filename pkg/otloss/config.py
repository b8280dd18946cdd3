"""Defaults, metric thresholds and small file helpers shared by every command."""

import json
import logging
import os
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path

from otloss.errors import ConfigError, InputParseError

logger = logging.getLogger(__name__)

# DEFAULT VALUES
DEFAULT_EPSILON = 0.05
DEFAULT_MAX_ITERS = 200
DEFAULT_TOLERANCE = 1e-6
DEFAULT_GAMMA = 2.0
DEFAULT_DICE_SMOOTH = 1e-6
DEFAULT_QTY_TOL = 0.01
DEFAULT_TIME_TOL = 0.10
DEFAULT_TEMP_TOL = 10.0
DEFAULT_GRAD_STEP = 1e-5

LEXICON_ENV_VAR = "OTLOSS_LEXICON"
BUILTIN_LEXICON = "actions.txt"


@dataclass(frozen=True)
class MetricThresholds:
    """Tolerances deciding when a predicted number counts as correct.

    Attributes:
        quantity_rel_tol (float): relative error allowed on ingredient quantities
        time_rel_tol (float): relative error allowed on durations (in seconds)
        temperature_abs_tol (float): absolute error allowed on temperatures (°C)
    """

    quantity_rel_tol: float = DEFAULT_QTY_TOL
    time_rel_tol: float = DEFAULT_TIME_TOL
    temperature_abs_tol: float = DEFAULT_TEMP_TOL

    def validate(self):
        """
        Check every tolerance.

        Returns:
            list: error messages, empty when the thresholds are usable
        """
        errors = []
        for name, value in asdict(self).items():
            if not value >= 0:
                errors.append(f"{name} must be non-negative, got {value}")
        return errors

    def checked(self):
        """Return self, raising ConfigError if any tolerance is invalid."""
        errors = self.validate()
        if errors:
            msg = "; ".join(errors)
            raise ConfigError(msg)
        return self


def parse_list_argument(arg_string):
    """Parse comma-separated string into list, handling empty strings."""
    if not arg_string:
        return []
    return [item.strip() for item in arg_string.split(",") if item.strip()]


def load_json(path):
    """
    Read a UTF-8 JSON file.

    Args:
        path (str | Path): file to read

    Returns:
        object: the decoded JSON value

    Raises:
        InputParseError: unreadable file or malformed JSON (with line/column)
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        msg = f"Cannot read {path}: {e.strerror}"
        raise InputParseError(msg) from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        msg = f"Malformed JSON in {path} at line {e.lineno}, column {e.colno}: {e.msg}"
        raise InputParseError(msg) from e


def resolve_lexicon_path(flag_value=None):
    """
    Pick the action lexicon file: CLI flag, then environment, then the packaged one.

    Args:
        flag_value (str, optional): value of --action-lexicon

    Returns:
        Path | None: explicit lexicon path, or None for the built-in lexicon
    """
    if flag_value:
        return Path(flag_value)
    env_value = os.environ.get(LEXICON_ENV_VAR)
    if env_value:
        logger.debug("Using action lexicon from %s=%s", LEXICON_ENV_VAR, env_value)
        return Path(env_value)
    return None


def read_builtin_lexicon():
    """Return the text of the packaged action lexicon."""
    return resources.files("otloss").joinpath("data", BUILTIN_LEXICON).read_text(
        encoding="utf-8"
    )
