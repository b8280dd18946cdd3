"""
Rule-based extraction of quantities, times, temperatures and cooking actions.

Everything is converted to metric units: quantities to g / ml / piece, times
to seconds, temperatures to degrees Celsius. The rules are deterministic, so
the same text always yields the same mentions.
"""

import logging
import re
import unicodedata
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

from otloss.config import read_builtin_lexicon, resolve_lexicon_path
from otloss.errors import ConfigError, InputParseError, UnparsableIngredient

logger = logging.getLogger(__name__)

CANONICAL_UNITS = ("g", "ml", "piece")
MIN_PLAUSIBLE_CELSIUS = -50.0
MAX_PLAUSIBLE_CELSIUS = 400.0


# ============================================================================
# MENTION TYPES
# ============================================================================


@dataclass(frozen=True)
class QuantityMention:
    """Amount converted to a canonical metric unit (g, ml or piece)."""

    value: float
    unit: str
    raw: str


@dataclass(frozen=True)
class TimeMention:
    seconds: float
    raw: str


@dataclass(frozen=True)
class TemperatureMention:
    """Temperature in °C; plausible is False outside the culinary range."""

    celsius: float
    raw: str
    plausible: bool = True


@dataclass(frozen=True)
class ActionMention:
    verb: str
    position: int


@dataclass(frozen=True)
class IngredientEntry:
    """
    One parsed ingredient line.

    Attributes:
        head (str): normalised ingredient name, e.g. "egg yolk"
        quantity (QuantityMention | None): leading amount, if any
        raw (str): source line
    """

    head: str
    quantity: QuantityMention | None
    raw: str


@dataclass(frozen=True)
class StepExtraction:
    text: str
    actions: tuple
    times: tuple
    temperatures: tuple


@dataclass(frozen=True)
class RecipeExtraction:
    ingredients: tuple
    steps: tuple

    def actions(self):
        return [mention.verb for step in self.steps for mention in step.actions]

    def times(self):
        return [mention for step in self.steps for mention in step.times]

    def temperatures(self):
        return [mention for step in self.steps for mention in step.temperatures]

    def to_dict(self):
        """JSON-ready summary, as printed by the extract command."""
        return {
            "ingredients": [
                {
                    "raw": entry.raw,
                    "head": entry.head,
                    "quantity": (
                        {"value": entry.quantity.value, "unit": entry.quantity.unit}
                        if entry.quantity
                        else None
                    ),
                }
                for entry in self.ingredients
            ],
            "steps": [
                {
                    "text": step.text,
                    "actions": [m.verb for m in step.actions],
                    "times": [m.seconds for m in step.times],
                    "temperatures": [
                        {"celsius": m.celsius, "plausible": m.plausible} for m in step.temperatures
                    ],
                }
                for step in self.steps
            ],
        }


# ============================================================================
# NUMBERS
# ============================================================================

_FRACTION_CHARS = "½⅓⅔¼¾⅕⅖⅗⅘⅙⅚⅛⅜⅝⅞"
# mixed numbers and slash fractions first, so "1/2" is not read as "1"
_NUMBER = (
    rf"(?:\d+\s+\d+\s*/\s*\d+"
    rf"|\d+\s*/\s*\d+"
    rf"|\d+(?:\.\d+)?(?:\s*[{_FRACTION_CHARS}])?"
    rf"|[{_FRACTION_CHARS}])"
)
_RANGE_SEPARATOR = r"\s*(?:-|–|—|to)\s*"


def _number_range(prefix, signed=False):
    sign = "-?" if signed else ""
    return rf"(?P<{prefix}_lo>{sign}{_NUMBER})(?:{_RANGE_SEPARATOR}(?P<{prefix}_hi>{sign}{_NUMBER}))?"


def parse_number(text):
    """
    Convert a number as written in a recipe to a float.

    Handles decimals, slash fractions ("1/2"), mixed numbers ("1 1/2"),
    unicode fractions ("½", "1½") and a leading minus sign.
    """
    text = re.sub(r"\s*/\s*", "/", text.strip())
    sign = 1.0
    if text.startswith("-"):
        sign = -1.0
        text = text[1:].strip()
    total = 0.0
    for part in text.split():
        if "/" in part:
            numerator, denominator = part.split("/")
            total += float(numerator) / float(denominator)
            continue
        digits = part.rstrip(_FRACTION_CHARS)
        if digits:
            total += float(digits)
        for char in part[len(digits) :]:
            total += unicodedata.numeric(char)
    return sign * total


def _range_value(match, prefix):
    low = parse_number(match.group(f"{prefix}_lo"))
    high_text = match.group(f"{prefix}_hi")
    if high_text is None:
        return low
    # ranges are reduced to their midpoint
    return (low + parse_number(high_text)) / 2.0


# ============================================================================
# QUANTITIES
# ============================================================================

# alias -> (canonical unit, factor to canonical)
UNIT_ALIASES = {
    "g": ("g", 1.0),
    "gr": ("g", 1.0),
    "gram": ("g", 1.0),
    "grams": ("g", 1.0),
    "gramme": ("g", 1.0),
    "grammes": ("g", 1.0),
    "kg": ("g", 1000.0),
    "kilo": ("g", 1000.0),
    "kilos": ("g", 1000.0),
    "kilogram": ("g", 1000.0),
    "kilograms": ("g", 1000.0),
    "mg": ("g", 0.001),
    "oz": ("g", 28.3495),
    "ounce": ("g", 28.3495),
    "ounces": ("g", 28.3495),
    "lb": ("g", 453.592),
    "lbs": ("g", 453.592),
    "pound": ("g", 453.592),
    "pounds": ("g", 453.592),
    "ml": ("ml", 1.0),
    "milliliter": ("ml", 1.0),
    "milliliters": ("ml", 1.0),
    "millilitre": ("ml", 1.0),
    "millilitres": ("ml", 1.0),
    "cl": ("ml", 10.0),
    "dl": ("ml", 100.0),
    "l": ("ml", 1000.0),
    "liter": ("ml", 1000.0),
    "liters": ("ml", 1000.0),
    "litre": ("ml", 1000.0),
    "litres": ("ml", 1000.0),
    "tbsp": ("ml", 15.0),
    "tbs": ("ml", 15.0),
    "tablespoon": ("ml", 15.0),
    "tablespoons": ("ml", 15.0),
    "tsp": ("ml", 5.0),
    "teaspoon": ("ml", 5.0),
    "teaspoons": ("ml", 5.0),
    "cup": ("ml", 240.0),
    "cups": ("ml", 240.0),
}

_UNIT_PATTERN = "|".join(sorted((re.escape(u) for u in UNIT_ALIASES), key=len, reverse=True))
_QUANTITY_RE = re.compile(
    rf"(?<![\w.]){_number_range('qty')}(?:\s*(?P<unit>{_UNIT_PATTERN})(?![^\W\d_]))?\.?",
    re.IGNORECASE,
)


def _quantity_from_match(match):
    value = _range_value(match, "qty")
    unit_text = match.group("unit")
    if unit_text:
        unit, factor = UNIT_ALIASES[unit_text.lower()]
    else:
        unit, factor = "piece", 1.0
    return QuantityMention(value * factor, unit, match.group(0).strip())


def extract_quantities(text):
    """Every amount mentioned in text, in order, converted to g / ml / piece."""
    mentions = []
    for match in _QUANTITY_RE.finditer(text):
        mention = _quantity_from_match(match)
        if mention.value > 0:
            mentions.append(mention)
    return mentions


# ============================================================================
# INGREDIENT HEADS
# ============================================================================

DESCRIPTORS = frozenset(
    """
    a an the of some about approximately plus more for to taste optional
    large small medium big extra whole ripe fresh freshly dried cold warm hot
    room temperature cooked uncooked raw boneless skinless lean
    chopped minced diced sliced grated shredded ground crushed cubed peeled
    beaten melted softened halved quartered coarsely finely roughly thinly
    serving garnish pinch dash handful sprig sprigs clove cloves slice slices
    piece pieces can cans package packages
    """.split()
)

SINGULAR_EXCEPTIONS = frozenset(
    ["asparagus", "couscous", "hummus", "molasses", "swiss", "grits", "series", "species"]
)

_WORD_RE = re.compile(r"[^\W\d_]+(?:['’-][^\W\d_]+)*")


def singularize(word):
    """Fold a plural noun to its singular with suffix rules only."""
    if len(word) <= 3 or word in SINGULAR_EXCEPTIONS:  # noqa: PLR2004
        return word
    if word.endswith("ies") and len(word) > 4:  # noqa: PLR2004
        return word[:-3] + "y"
    if word.endswith(("sses", "shes", "ches", "xes", "zes", "oes")):
        return word[:-2]
    if word.endswith(("ss", "us", "is")):
        return word
    if word.endswith("s"):
        return word[:-1]
    return word


def normalize_head(text):
    """
    Normalise an ingredient name: lowercase, descriptors dropped, singular.

    Normalising an already normalised head returns it unchanged.
    """
    words = [w.lower() for w in _WORD_RE.findall(text)]
    singular = [singularize(w) for w in words]
    # "pinches" is dropped like "pinch"
    kept = [s for w, s in zip(words, singular) if w not in DESCRIPTORS and s not in DESCRIPTORS]
    return " ".join(kept or singular)


def parse_ingredient(line):
    """
    Split an ingredient line into a normalised head and an optional quantity.

    Args:
        line (str): e.g. "200g Guanciale, cubed"

    Returns:
        IngredientEntry: head "guanciale", quantity 200 g

    Raises:
        UnparsableIngredient: the line has no alphabetic content
    """
    raw = line
    line = line.strip()
    if not any(char.isalpha() for char in line):
        msg = f"Ingredient line has no alphabetic content: {raw!r}"
        raise UnparsableIngredient(msg)

    quantity = None
    match = _QUANTITY_RE.search(line)
    if match is not None:
        candidate = _quantity_from_match(match)
        if candidate.value > 0:
            quantity = candidate
        line = line[: match.start()] + " " + line[match.end() :]

    name = line.split(",", 1)[0]
    name = re.sub(r"\([^)]*\)", " ", name)
    name = re.sub(r"\d+", " ", name)
    head = normalize_head(name)
    if not head:
        msg = f"Ingredient line has no ingredient name: {raw!r}"
        raise UnparsableIngredient(msg)
    return IngredientEntry(head, quantity, raw)


# ============================================================================
# TIMES
# ============================================================================

_TIME_UNITS = (
    (3600.0, ("hours", "hour", "hrs", "hr", "h")),
    (60.0, ("minutes", "minute", "mins", "min")),
    (1.0, ("seconds", "second", "secs", "sec", "s")),
)
_TIME_SCALE = {alias: scale for scale, aliases in _TIME_UNITS for alias in aliases}
_TIME_RE = re.compile(
    rf"(?<![\w.]){_number_range('time')}\s*"
    rf"(?P<unit>{'|'.join(sorted(_TIME_SCALE, key=len, reverse=True))})(?![^\W\d_])\.?",
    re.IGNORECASE,
)
_COMPOUND_GAP_RE = re.compile(r"^\s*(?:,|and)?\s*$", re.IGNORECASE)


def extract_times(step):
    """
    Durations mentioned in a step, in seconds.

    Compounds such as "1 hour 20 minutes" collapse into one mention.
    """
    mentions = []
    previous = None  # (end offset, scale) of the last mention
    for match in _TIME_RE.finditer(step):
        scale = _TIME_SCALE[match.group("unit").lower()]
        seconds = _range_value(match, "time") * scale
        if seconds <= 0:
            continue
        gap = step[previous[0] : match.start()] if previous else None
        if previous and scale < previous[1] and _COMPOUND_GAP_RE.match(gap):
            last = mentions[-1]
            mentions[-1] = TimeMention(last.seconds + seconds, f"{last.raw}{gap}{match.group(0)}")
        else:
            mentions.append(TimeMention(seconds, match.group(0)))
        previous = (match.end(), scale)
    return mentions


# ============================================================================
# TEMPERATURES
# ============================================================================

_TEMPERATURE_RE = re.compile(
    rf"""(?<![\w.]){_number_range('temp', signed=True)}\s*
    (?:
        [°º]\s*(?P<symbol_scale>[cf](?![^\W\d_]))?
      | (?:degrees|degree|deg)\.?(?:\s*(?P<word_scale>celsius|centigrade|fahrenheit|c|f)(?![^\W\d_]))?
      | (?P<name_scale>celsius|centigrade|fahrenheit)(?:\s+degrees?)?(?![^\W\d_])
    )""",
    re.IGNORECASE | re.VERBOSE,
)


def fahrenheit_to_celsius(value):
    return (value - 32.0) * 5.0 / 9.0


def extract_temperatures(step):
    """Temperatures mentioned in a step, converted to °C (bare degrees are Celsius)."""
    mentions = []
    for match in _TEMPERATURE_RE.finditer(step):
        value = _range_value(match, "temp")
        scale = (
            match.group("symbol_scale") or match.group("word_scale") or match.group("name_scale")
        )
        if scale and scale.lower().startswith("f"):
            value = fahrenheit_to_celsius(value)
        plausible = MIN_PLAUSIBLE_CELSIUS <= value <= MAX_PLAUSIBLE_CELSIUS
        if not plausible:
            logger.debug("Implausible temperature %.1f °C in %r", value, step)
        mentions.append(TemperatureMention(value, match.group(0).strip(), plausible))
    return mentions


# ============================================================================
# ACTIONS
# ============================================================================

_VOWELS = "aeiou"


def fold_accents(text):
    """Lowercase and strip combining accents ("Sauté" -> "saute")."""
    decomposed = unicodedata.normalize("NFKD", text.lower())
    return "".join(char for char in decomposed if not unicodedata.combining(char))


def _inflections(verb):
    forms = {verb, verb + "s", verb + "es", verb + "ed", verb + "ing"}
    if verb.endswith("e"):
        forms |= {verb + "d", verb[:-1] + "ing"}
    if verb.endswith("y") and len(verb) > 1 and verb[-2] not in _VOWELS:
        forms |= {verb[:-1] + "ies", verb[:-1] + "ied"}
    vowel_groups = re.findall(r"[aeiou]+", verb)
    if len(vowel_groups) == 1 and re.search(r"[^aeiou][aeiou][^aeiouwxy]$", verb):
        forms |= {verb + verb[-1] + "ed", verb + verb[-1] + "ing"}
    return forms


@dataclass(frozen=True, eq=False)
class ActionLexicon:
    """
    Cooking verbs and every surface form that maps to them.

    Attributes:
        verbs (tuple): canonical verbs as written in the lexicon file
        forms (dict): accent-folded inflected form -> canonical verb
    """

    verbs: tuple
    forms: dict = field(repr=False)

    @classmethod
    def from_verbs(cls, verbs):
        verbs = tuple(dict.fromkeys(v.strip() for v in verbs if v.strip()))
        if not verbs:
            msg = "Action lexicon is empty"
            raise ConfigError(msg)
        forms = {}
        for verb in verbs:
            for form in _inflections(fold_accents(verb)):
                forms.setdefault(form, verb)
        return cls(verbs, forms)

    def __contains__(self, verb):
        return verb in self.verbs

    def __len__(self):
        return len(self.verbs)


def parse_lexicon_text(text):
    """Verbs of a lexicon file: one per line, '#' starts a comment."""
    verbs = []
    for line in text.splitlines():
        entry = line.split("#", 1)[0].strip()
        if entry:
            verbs.append(entry)
    return ActionLexicon.from_verbs(verbs)


@lru_cache(maxsize=8)
def _load_lexicon_cached(path_text):
    if path_text is None:
        return parse_lexicon_text(read_builtin_lexicon())
    path = Path(path_text)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        msg = f"Cannot read action lexicon {path}: {e.strerror}"
        raise InputParseError(msg) from e
    lexicon = parse_lexicon_text(text)
    logger.info("Loaded %d actions from %s", len(lexicon), path)
    return lexicon


def load_lexicon(path=None):
    """
    Load an action lexicon.

    Args:
        path (str | Path, optional): lexicon file; falls back to the
            OTLOSS_LEXICON environment variable, then the packaged lexicon
    """
    resolved = resolve_lexicon_path(str(path) if path else None)
    return _load_lexicon_cached(str(resolved) if resolved else None)


_TOKEN_RE = re.compile(r"[a-z]+")


def extract_actions(step, lexicon, position=0):
    """
    Lexicon verbs occurring in a step, in order of occurrence.

    Args:
        step (str): instruction text
        lexicon (ActionLexicon): verbs to look for
        position (int): step index recorded on each mention
    """
    if not len(lexicon):
        msg = "Action lexicon is empty"
        raise ConfigError(msg)
    return [
        ActionMention(lexicon.forms[token], position)
        for token in _TOKEN_RE.findall(fold_accents(step))
        if token in lexicon.forms
    ]


# ============================================================================
# WHOLE RECIPES
# ============================================================================


def extract_step(step, lexicon, position=0):
    return StepExtraction(
        step,
        tuple(extract_actions(step, lexicon, position)),
        tuple(extract_times(step)),
        tuple(extract_temperatures(step)),
    )


def extract_recipe(recipe, lexicon):
    """
    Run every extractor over a recipe.

    Ingredient lines without alphabetic content are skipped.
    """
    ingredients = []
    for line in recipe.ingredients:
        try:
            ingredients.append(parse_ingredient(line))
        except UnparsableIngredient as e:
            logger.debug("Skipping ingredient: %s", e)
    steps = tuple(
        extract_step(step, lexicon, position) for position, step in enumerate(recipe.instructions)
    )
    return RecipeExtraction(tuple(ingredients), steps)
