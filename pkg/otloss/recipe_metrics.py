"""
Recipe-specific evaluation: ingredient recall, quantity/action/time/temperature
precision, action and step edit distances, and ROUGE-1.

Scores are percentages. A metric whose denominator is empty for a pair is
undefined: it is carried as None and left out of corpus means.
"""

import csv
import json
import logging
import operator
import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from multiprocessing import Pool

import numpy as np
import scipy.stats as st
from rouge_score import rouge_scorer, tokenizers

from otloss.config import MetricThresholds
from otloss.errors import EmptyReport, SchemaError, UndefinedMetric
from otloss.extraction import extract_recipe, load_lexicon

logger = logging.getLogger(__name__)

# column order of every report
METRIC_NAMES = ("r1", "ap", "qp", "ir", "tep", "tip", "ad", "sd")
_FLOAT_SLACK = 1e-12


# ============================================================================
# RECIPES
# ============================================================================


@dataclass(frozen=True)
class Recipe:
    """
    Structured recipe.

    Attributes:
        ingredients (tuple): ingredient lines, e.g. "200g Guanciale, cubed"
        instructions (tuple): instruction steps in order
    """

    ingredients: tuple
    instructions: tuple

    @classmethod
    def from_dict(cls, obj, record_id=None):
        """
        Build a recipe from its JSON object.

        Raises:
            SchemaError: fields missing, not lists of strings, or empty
        """
        where = f" in record {record_id!r}" if record_id is not None else ""
        if not isinstance(obj, dict):
            msg = f"Recipe must be a JSON object{where}, got {type(obj).__name__}"
            raise SchemaError(msg)
        fields = {}
        for key in ("ingredients", "instructions"):
            value = obj.get(key)
            if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
                msg = f'Recipe field "{key}" must be a list of strings{where}'
                raise SchemaError(msg)
            fields[key] = tuple(value)
        recipe = cls(**fields)
        errors = recipe.validate()
        if errors:
            msg = f"Invalid recipe{where}: " + "; ".join(errors)
            raise SchemaError(msg)
        return recipe

    def to_dict(self):
        return {"ingredients": list(self.ingredients), "instructions": list(self.instructions)}

    def validate(self):
        """
        Check the recipe shape.

        Returns:
            list: error messages, empty for a valid recipe
        """
        errors = []
        for name in ("ingredients", "instructions"):
            lines = getattr(self, name)
            if not lines:
                errors.append(f"{name} is empty")
            blank = [i for i, line in enumerate(lines) if not line.strip()]
            if blank:
                errors.append(f"{name} has blank entries at {blank}")
        return errors

    def text(self):
        return " ".join(self.ingredients + self.instructions)


def _extracted(recipe, lexicon):
    return extract_recipe(recipe, lexicon or load_lexicon())


# ============================================================================
# INGREDIENTS
# ============================================================================


def heads_match(a, b):
    """Equal heads, or one contained in the other as a whole-word phrase."""
    if a == b:
        return True
    return f" {a} " in f" {b} " or f" {b} " in f" {a} "


def match_ingredients(pred_entries, gold_entries):
    """
    Pair gold ingredients with predicted ones, greedily in gold order.

    Each predicted entry is used at most once; an unused predicted entry with
    an identical head is preferred over a phrase-containment match.

    Returns:
        list: (gold entry, predicted entry) pairs
    """
    used = set()
    pairs = []
    for gold in gold_entries:
        free = [i for i in range(len(pred_entries)) if i not in used]
        exact = [i for i in free if pred_entries[i].head == gold.head]
        loose = [i for i in free if heads_match(pred_entries[i].head, gold.head)]
        chosen = (exact or loose or [None])[0]
        if chosen is not None:
            used.add(chosen)
            pairs.append((gold, pred_entries[chosen]))
    return pairs


def _ingredient_recall(pred_x, gold_x):
    if not gold_x.ingredients:
        msg = "gold recipe has no ingredients"
        raise UndefinedMetric(msg)
    matched = match_ingredients(pred_x.ingredients, gold_x.ingredients)
    return 100.0 * len(matched) / len(gold_x.ingredients), len(gold_x.ingredients)


def _quantity_correct(pred_qty, gold_qty, tolerance):
    if pred_qty is None or pred_qty.unit != gold_qty.unit:
        return False
    return abs(pred_qty.value - gold_qty.value) / gold_qty.value <= tolerance + _FLOAT_SLACK


def _quantity_precision(pred_x, gold_x, thresholds):
    considered = [
        (gold, pred)
        for gold, pred in match_ingredients(pred_x.ingredients, gold_x.ingredients)
        if gold.quantity is not None
    ]
    if not considered:
        msg = "no recalled ingredient carries a gold quantity"
        raise UndefinedMetric(msg)
    correct = sum(
        _quantity_correct(pred.quantity, gold.quantity, thresholds.quantity_rel_tol)
        for gold, pred in considered
    )
    return 100.0 * correct / len(considered), len(considered)


def ingredient_recall(pred, gold, lexicon=None):
    """Percentage of gold ingredient heads found among the predicted ones."""
    return _ingredient_recall(_extracted(pred, lexicon), _extracted(gold, lexicon))[0]


def quantity_precision(pred, gold, thresholds=None, lexicon=None):
    """Percentage of recalled ingredients whose quantity is within tolerance."""
    thresholds = thresholds or MetricThresholds()
    return _quantity_precision(_extracted(pred, lexicon), _extracted(gold, lexicon), thresholds)[0]


# ============================================================================
# ACTIONS, TIMES AND TEMPERATURES
# ============================================================================


def _action_precision(pred_x, gold_x):
    pred_actions = Counter(pred_x.actions())
    total = sum(pred_actions.values())
    if not total:
        msg = "prediction has no cooking actions"
        raise UndefinedMetric(msg)
    overlap = sum((pred_actions & Counter(gold_x.actions())).values())
    return 100.0 * overlap / total, total


def action_precision(pred, gold, lexicon=None):
    return _action_precision(_extracted(pred, lexicon), _extracted(gold, lexicon))[0]


def _time_close(pred, gold, thresholds):
    return abs(pred.seconds - gold.seconds) / gold.seconds <= thresholds.time_rel_tol + _FLOAT_SLACK


def _temperature_close(pred, gold, thresholds):
    return abs(pred.celsius - gold.celsius) <= thresholds.temperature_abs_tol + _FLOAT_SLACK


def _mention_precision(pred_mentions, gold_mentions, close, kind):
    if not gold_mentions:
        msg = f"gold recipe mentions no {kind}"
        raise UndefinedMetric(msg)
    used = set()
    correct = 0
    for gold in gold_mentions:
        for index, pred in enumerate(pred_mentions):
            if index not in used and close(pred, gold):
                used.add(index)
                correct += 1
                break
    return 100.0 * correct / len(gold_mentions), len(gold_mentions)


def _time_precision(pred_x, gold_x, thresholds):
    return _mention_precision(
        pred_x.times(),
        gold_x.times(),
        lambda p, g: _time_close(p, g, thresholds),
        "times",
    )


def _temperature_precision(pred_x, gold_x, thresholds):
    return _mention_precision(
        pred_x.temperatures(),
        gold_x.temperatures(),
        lambda p, g: _temperature_close(p, g, thresholds),
        "temperatures",
    )


def time_precision(pred, gold, thresholds=None, lexicon=None):
    """Percentage of gold durations matched by a prediction within the relative tolerance."""
    thresholds = thresholds or MetricThresholds()
    return _time_precision(_extracted(pred, lexicon), _extracted(gold, lexicon), thresholds)[0]


def temperature_precision(pred, gold, thresholds=None, lexicon=None):
    """Percentage of gold temperatures matched by a prediction within the absolute tolerance."""
    thresholds = thresholds or MetricThresholds()
    return _temperature_precision(_extracted(pred, lexicon), _extracted(gold, lexicon), thresholds)[
        0
    ]


# ============================================================================
# EDIT DISTANCES
# ============================================================================


def levenshtein(a, b, equal=operator.eq):
    """
    Unit-cost edit distance between two sequences.

    Args:
        a (sequence): first sequence
        b (sequence): second sequence
        equal (callable): element equality, defaults to ==

    Returns:
        int: minimum number of insertions, deletions and substitutions
    """
    a = list(a)
    b = list(b)
    if not a:
        return len(b)
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, item_a in enumerate(a, start=1):
        current = [i]
        for j, item_b in enumerate(b, start=1):
            substitution = previous[j - 1] + (0 if equal(item_a, item_b) else 1)
            current.append(min(previous[j] + 1, current[j - 1] + 1, substitution))
        previous = current
    return previous[-1]


def normalized_distance(a, b, equal=operator.eq):
    """Edit distance over the longer length, on a 0-100 scale."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    return 100.0 * levenshtein(a, b, equal) / longest


def _action_distance(pred_x, gold_x):
    gold_actions = gold_x.actions()
    if not gold_actions:
        msg = "gold recipe has no cooking actions"
        raise UndefinedMetric(msg)
    pred_actions = pred_x.actions()
    return normalized_distance(pred_actions, gold_actions), max(len(pred_actions), len(gold_actions))


def action_distance(pred, gold, lexicon=None):
    return _action_distance(_extracted(pred, lexicon), _extracted(gold, lexicon))[0]


_PUNCTUATION_RE = re.compile(r"[^\w\s]")


def _normalize_step_text(text):
    return " ".join(_PUNCTUATION_RE.sub(" ", text.lower()).split())


def steps_equal(pred_step, gold_step, thresholds):
    """
    Two extracted steps are the same step when their normalised text matches,
    or when they share an action multiset (possibly empty) and every time
    and temperature mention agrees pairwise within tolerance.
    """
    if _normalize_step_text(pred_step.text) == _normalize_step_text(gold_step.text):
        return True
    pred_verbs = Counter(m.verb for m in pred_step.actions)
    if pred_verbs != Counter(m.verb for m in gold_step.actions):
        return False
    if len(pred_step.times) != len(gold_step.times):
        return False
    if len(pred_step.temperatures) != len(gold_step.temperatures):
        return False
    times_ok = all(
        _time_close(p, g, thresholds) for p, g in zip(pred_step.times, gold_step.times)
    )
    temperatures_ok = all(
        _temperature_close(p, g, thresholds)
        for p, g in zip(pred_step.temperatures, gold_step.temperatures)
    )
    return times_ok and temperatures_ok


def _step_distance(pred_x, gold_x, thresholds):
    if not gold_x.steps:
        msg = "gold recipe has no instructions"
        raise UndefinedMetric(msg)
    distance = normalized_distance(
        pred_x.steps, gold_x.steps, lambda p, g: steps_equal(p, g, thresholds)
    )
    return distance, max(len(pred_x.steps), len(gold_x.steps))


def step_distance(pred, gold, thresholds=None, lexicon=None):
    thresholds = thresholds or MetricThresholds()
    return _step_distance(_extracted(pred, lexicon), _extracted(gold, lexicon), thresholds)[0]


# ============================================================================
# ROUGE-1
# ============================================================================


class WhitespaceTokenizer(tokenizers.Tokenizer):
    """Lowercased whitespace tokens with punctuation removed; accented letters survive."""

    def tokenize(self, text):
        tokens = (_PUNCTUATION_RE.sub("", token) for token in text.lower().split())
        return [token for token in tokens if token]


@lru_cache(maxsize=1)
def _rouge_scorer():
    return rouge_scorer.RougeScorer(["rouge1"], use_stemmer=False, tokenizer=WhitespaceTokenizer())


def _rouge1(pred, gold):
    gold_text = gold.text()
    gold_tokens = len(WhitespaceTokenizer().tokenize(gold_text))
    if not gold_tokens:
        msg = "gold recipe has no text"
        raise UndefinedMetric(msg)
    score = _rouge_scorer().score(target=gold_text, prediction=pred.text())["rouge1"]
    return 100.0 * score.fmeasure, gold_tokens


def rouge1(pred, gold):
    """
    Unigram F1 between the concatenated ingredient and instruction texts.

    Tokens are lowercased whitespace-separated words with punctuation
    stripped; overlap is clipped per token.
    """
    return _rouge1(pred, gold)[0]


# ============================================================================
# REPORTS
# ============================================================================


@dataclass
class MetricReport:
    """
    Scores for one pair, or means over a corpus.

    Attributes:
        scores (dict): metric name -> percentage, None when undefined
        counts (dict): per pair, metric denominators; per corpus, the number
            of pairs each mean was taken over plus "pairs"
        conf_int (dict): metric -> 95% Student-t interval amplitude (corpus only)
        record_id (str | None): pair id, None for corpus reports
    """

    scores: dict
    counts: dict
    conf_int: dict = field(default_factory=dict)
    record_id: str | None = None

    def __getattr__(self, name):
        if name in METRIC_NAMES:
            return self.scores.get(name)
        raise AttributeError(name)

    def defined(self):
        return {name: value for name, value in self.scores.items() if value is not None}

    def to_dict(self):
        result = {"id": self.record_id}
        result.update({name: self.scores.get(name) for name in METRIC_NAMES})
        result["counts"] = dict(self.counts)
        if self.conf_int:
            result["conf_int"] = {name: self.conf_int.get(name) for name in METRIC_NAMES}
        return result

    def csv_row(self):
        row = [self.record_id or ""]
        row.extend("" if self.scores.get(n) is None else repr(self.scores[n]) for n in METRIC_NAMES)
        row.extend(self.counts.get(n, 0) for n in METRIC_NAMES)
        return row


def csv_header():
    return ["id", *METRIC_NAMES, *(f"n_{n}" for n in METRIC_NAMES)]


def score_pair(pred, gold, thresholds=None, lexicon=None, record_id=None):
    """
    Score one (prediction, gold) pair on every metric.

    Returns:
        MetricReport: undefined metrics are None with count 0
    """
    thresholds = thresholds or MetricThresholds()
    lexicon = lexicon or load_lexicon()
    pred_x = extract_recipe(pred, lexicon)
    gold_x = extract_recipe(gold, lexicon)
    computations = {
        "r1": lambda: _rouge1(pred, gold),
        "ap": lambda: _action_precision(pred_x, gold_x),
        "qp": lambda: _quantity_precision(pred_x, gold_x, thresholds),
        "ir": lambda: _ingredient_recall(pred_x, gold_x),
        "tep": lambda: _temperature_precision(pred_x, gold_x, thresholds),
        "tip": lambda: _time_precision(pred_x, gold_x, thresholds),
        "ad": lambda: _action_distance(pred_x, gold_x),
        "sd": lambda: _step_distance(pred_x, gold_x, thresholds),
    }
    scores = {}
    counts = {}
    for name in METRIC_NAMES:
        try:
            scores[name], counts[name] = computations[name]()
        except UndefinedMetric as e:
            logger.debug("%s undefined for %s: %s", name, record_id, e)
            scores[name], counts[name] = None, 0
    return MetricReport(scores, counts, record_id=record_id)


def _score_pair_args(args):
    return score_pair(*args)


def score_pairs(pairs, thresholds=None, lexicon=None, jobs=1):
    """
    Score every pair, keeping the input order.

    Args:
        pairs (list): (pred, gold) or (pred, gold, record id) tuples
        thresholds (MetricThresholds, optional): tolerances
        lexicon (ActionLexicon, optional): defaults to the resolved lexicon
        jobs (int): worker processes; 1 scores in this process
    """
    thresholds = thresholds or MetricThresholds()
    lexicon = lexicon or load_lexicon()
    args = []
    for pair in pairs:
        pred, gold, *rest = pair
        args.append((pred, gold, thresholds, lexicon, rest[0] if rest else None))
    if jobs > 1 and len(args) > 1:
        logger.info("Scoring %d pairs with %d processes", len(args), jobs)
        with Pool(processes=jobs) as pool:
            return pool.map(_score_pair_args, args)
    return [_score_pair_args(a) for a in args]


def mean_and_conf_int(values):
    """
    Mean and 95% Student-t confidence interval amplitude.

    Fewer than two values, or no spread, give an amplitude of 0.
    """
    array = np.asarray(values, dtype=float)
    mean = float(np.mean(array))
    if array.size <= 1:
        return mean, 0.0
    sem = st.sem(array)
    if np.isnan(sem) or sem == 0:
        return mean, 0.0
    low, high = st.t.interval(0.95, array.size - 1, loc=mean, scale=sem)
    return mean, float(high - low)


def aggregate(reports):
    """
    Corpus report: per-metric mean over the pairs where the metric is defined.

    Raises:
        EmptyReport: no pairs, or no metric defined for any pair
    """
    reports = list(reports)
    if not reports:
        msg = "Cannot aggregate an empty list of pairs"
        raise EmptyReport(msg)
    scores = {}
    conf_int = {}
    counts = {"pairs": len(reports)}
    for name in METRIC_NAMES:
        values = [r.scores[name] for r in reports if r.scores.get(name) is not None]
        counts[name] = len(values)
        if values:
            scores[name], conf_int[name] = mean_and_conf_int(values)
        else:
            scores[name], conf_int[name] = None, None
    if not any(counts[name] for name in METRIC_NAMES):
        msg = f"No metric is defined for any of the {len(reports)} pair(s)"
        raise EmptyReport(msg)
    return MetricReport(scores, counts, conf_int, record_id="ALL")


def score_corpus(pairs, thresholds=None, lexicon=None, jobs=1):
    """Score every pair and return the corpus means."""
    return aggregate(score_pairs(pairs, thresholds, lexicon, jobs))


# ============================================================================
# PAIR FILES AND REPORT FILES
# ============================================================================


def parse_pair_records(records):
    """
    Validate a decoded pairs file: a list of {"id", "pred", "gold"} objects.

    Returns:
        list: (pred Recipe, gold Recipe, id) tuples

    Raises:
        SchemaError: naming the offending record id (or index when it has none)
    """
    if not isinstance(records, list):
        msg = f"Pairs file must hold a JSON array, got {type(records).__name__}"
        raise SchemaError(msg)
    pairs = []
    seen = set()
    for index, record in enumerate(records):
        if not isinstance(record, dict):
            msg = f"Record #{index} must be a JSON object"
            raise SchemaError(msg)
        record_id = record.get("id")
        if not isinstance(record_id, str) or not record_id:
            msg = f'Record #{index} needs a non-empty string "id"'
            raise SchemaError(msg)
        if record_id in seen:
            msg = f"Duplicate record id {record_id!r}"
            raise SchemaError(msg)
        seen.add(record_id)
        for key in ("pred", "gold"):
            if key not in record:
                msg = f'Record {record_id!r} is missing "{key}"'
                raise SchemaError(msg)
        pred = Recipe.from_dict(record["pred"], record_id)
        gold = Recipe.from_dict(record["gold"], record_id)
        pairs.append((pred, gold, record_id))
    return pairs


def write_reports_csv(reports, corpus, out):
    """Write per-pair rows followed by the aggregate row to an open text stream."""
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(csv_header())
    for report in [*reports, corpus]:
        writer.writerow(report.csv_row())


def write_reports_json(reports, corpus, out):
    document = {"pairs": [r.to_dict() for r in reports], "aggregate": corpus.to_dict()}
    json.dump(document, out, indent=2)
    out.write("\n")
