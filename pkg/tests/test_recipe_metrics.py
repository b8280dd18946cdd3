import io
import itertools
from functools import lru_cache

import numpy as np
import pytest

from otloss.config import MetricThresholds
from otloss.errors import EmptyReport, SchemaError
from otloss.extraction import extract_step
from otloss.recipe_metrics import (
    METRIC_NAMES,
    MetricReport,
    Recipe,
    action_distance,
    action_precision,
    aggregate,
    csv_header,
    ingredient_recall,
    levenshtein,
    mean_and_conf_int,
    normalized_distance,
    parse_pair_records,
    quantity_precision,
    rouge1,
    score_pair,
    score_pairs,
    WhitespaceTokenizer,
    step_distance,
    steps_equal,
    temperature_precision,
    time_precision,
    write_reports_csv,
)


def recipe(ingredients=("Salt",), instructions=("Serve.",)):
    return Recipe(tuple(ingredients), tuple(instructions))


def reference_levenshtein(a, b):
    @lru_cache(maxsize=None)
    def dist(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(dist(i - 1, j) + 1, dist(i, j - 1) + 1, dist(i - 1, j - 1) + (a[i - 1] != b[j - 1]))

    return dist(len(a), len(b))


def test_recipe_schema(carbonara):
    assert Recipe.from_dict(carbonara.to_dict()) == carbonara
    with pytest.raises(SchemaError, match="r7"):
        Recipe.from_dict({"ingredients": ["salt"]}, "r7")
    with pytest.raises(SchemaError):
        Recipe.from_dict({"ingredients": [], "instructions": ["Serve."]})
    with pytest.raises(SchemaError):
        Recipe.from_dict({"ingredients": ["salt", 3], "instructions": ["Serve."]})
    assert recipe(["salt", " "]).validate() == ["ingredients has blank entries at [1]"]


def test_ingredient_recall_missing_items():
    gold = recipe(["pasta", "pecorino", "eggs", "pepper", "guanciale"])
    pred = recipe(["pasta", "pecorino", "eggs"])
    assert ingredient_recall(pred, gold) == pytest.approx(60.0)


def test_ingredient_recall_ignores_additions(carbonara):
    pred = recipe([*carbonara.ingredients, "1 truffle", "cream"])
    assert ingredient_recall(pred, carbonara) == 100.0
    assert ingredient_recall(carbonara, carbonara) == 100.0


def test_ingredient_recall_is_monotone(carbonara):
    rng = np.random.default_rng(3)
    gold = carbonara.ingredients
    order = rng.permutation(len(gold))
    lines = ["1 apple"]
    previous = ingredient_recall(recipe(lines), carbonara)
    for index in order:
        lines.append(gold[index])
        current = ingredient_recall(recipe(lines), carbonara)
        assert current >= previous
        previous = current
    assert previous == 100.0


def test_exact_heads_win_over_containment():
    gold = recipe(["black pepper", "pepper"])
    pred = recipe(["pepper", "black pepper"])
    assert ingredient_recall(pred, gold) == 100.0


@pytest.mark.parametrize(
    "pred_line, expected",
    [("200 g pasta", 100.0), ("200g pasta", 100.0), ("0.2 kg pasta", 100.0), ("202g pasta", 100.0), ("400g pasta", 0.0), ("200 ml pasta", 0.0), ("pasta", 0.0)],
)
def test_quantity_precision(pred_line, expected):
    gold = recipe(["200g pasta", "salt"])
    pred = recipe([pred_line, "salt"])
    assert quantity_precision(pred, gold) == expected


def test_quantity_precision_threshold_is_configurable():
    gold = recipe(["200g pasta"])
    pred = recipe(["220g pasta"])
    assert quantity_precision(pred, gold) == 0.0
    assert quantity_precision(pred, gold, MetricThresholds(quantity_rel_tol=0.1)) == 100.0


@pytest.mark.parametrize(
    "pred_steps, gold_steps, expected",
    [
        (["Boil the water.", "Fry the guanciale."], ["Boil the water.", "Fry the guanciale.", "Combine everything."], 100.0),
        (["Boil the water.", "Bake the bread."], ["Boil the water.", "Fry the bread."], 50.0),
    ],
)
def test_action_precision(pred_steps, gold_steps, expected):
    assert action_precision(recipe(instructions=pred_steps), recipe(instructions=gold_steps)) == expected


def test_time_precision_boundary_is_inclusive():
    gold = recipe(instructions=["Boil for 10 minutes."])
    assert time_precision(recipe(instructions=["Boil for 11 minutes."]), gold) == 100.0
    assert time_precision(recipe(instructions=["Boil for 12 minutes."]), gold) == 0.0


def test_temperature_precision():
    gold = recipe(instructions=["Boil pasta at 100 Celsius degrees."])
    assert temperature_precision(recipe(instructions=["Boil pasta at 80 degrees."]), gold) == 0.0
    assert temperature_precision(recipe(instructions=["Boil pasta at 212°F."]), gold) == 100.0


def test_predicted_mentions_are_used_once():
    gold = recipe(instructions=["Rest 10 minutes.", "Rest 10 minutes."])
    pred = recipe(instructions=["Rest 10 minutes."])
    assert time_precision(pred, gold) == 50.0


def test_levenshtein_examples():
    assert levenshtein(["boil", "fry"], ["boil", "fry"]) == 0
    assert levenshtein(["boil", "fry"], ["fry"]) == 1
    assert levenshtein([], ["a", "b"]) == 2
    assert levenshtein("kitten", "sitting") == 3


def test_levenshtein_against_recursive_reference():
    rng = np.random.default_rng(5)
    for _ in range(500):
        a = "".join(rng.choice(list("abc"), size=rng.integers(0, 8)))
        b = "".join(rng.choice(list("abc"), size=rng.integers(0, 8)))
        assert levenshtein(a, b) == reference_levenshtein(a, b)


def test_levenshtein_on_verb_sequences(lexicon):
    rng = np.random.default_rng(11)
    verbs = list(lexicon.verbs)
    for _ in range(500):
        a = tuple(rng.choice(verbs, size=rng.integers(0, 9)))
        b = tuple(rng.choice(verbs, size=rng.integers(0, 9)))
        assert levenshtein(list(a), list(b)) == reference_levenshtein(a, b)


def test_levenshtein_is_a_metric():
    words = ["", "a", "ab", "ba", "abc", "cab", "bca", "aabb"]
    for a, b in itertools.product(words, repeat=2):
        assert (levenshtein(a, b) == 0) == (a == b)
        assert levenshtein(a, b) == levenshtein(b, a)
    for a, b, c in itertools.product(words, repeat=3):
        assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)


def test_normalized_distance():
    assert normalized_distance([], []) == 0.0
    assert normalized_distance(["boil", "fry", "serve"], ["boil", "serve"]) == pytest.approx(100 / 3)


def test_action_distance():
    pred = recipe(instructions=["Boil water.", "Fry the onion.", "Serve."])
    gold = recipe(instructions=["Boil water.", "Serve."])
    assert action_distance(pred, gold) == pytest.approx(33.33, abs=0.01)
    assert action_distance(gold, gold) == 0.0


def test_step_distance_with_a_deleted_step(carbonara):
    steps = list(carbonara.instructions)
    del steps[2]
    pred = recipe(carbonara.ingredients, steps)
    assert step_distance(pred, carbonara) == pytest.approx(100 / 6)
    assert step_distance(carbonara, carbonara) == 0.0


def test_rephrased_step_with_same_actions_counts_as_equal():
    gold = recipe(instructions=["Boil the pasta for 10 minutes."])
    pred = recipe(instructions=["Boiling pasta, about 10 minutes"])
    assert step_distance(pred, gold) == 0.0
    worse = recipe(instructions=["Boil the pasta for 20 minutes."])
    assert step_distance(worse, gold) == 100.0


def test_steps_without_actions_are_equal(lexicon):
    thresholds = MetricThresholds()
    assert steps_equal(extract_step("Have fun.", lexicon), extract_step("Enjoy!", lexicon), thresholds)
    assert not steps_equal(extract_step("Have fun.", lexicon), extract_step("Boil water.", lexicon), thresholds)
    assert not steps_equal(
        extract_step("Wait 5 minutes.", lexicon), extract_step("Wait 20 minutes.", lexicon), thresholds
    )
    gold = recipe(instructions=["Enjoy!"])
    pred = recipe(instructions=["Have fun."])
    assert step_distance(pred, gold) == 0.0


def test_rouge1():
    assert rouge1(recipe([], ["boil the pasta"]), recipe([], ["boil pasta well"])) == pytest.approx(
        66.67, abs=0.01
    )
    assert rouge1(recipe([], ["fry eggs"]), recipe([], ["boil pasta"])) == 0.0
    assert rouge1(recipe([], ["Boil pasta."]), recipe([], ["boil pasta"])) == pytest.approx(100.0)


def f1_percent(overlap, n_pred, n_gold):
    precision = overlap / n_pred
    recall = overlap / n_gold
    return 100.0 * 2 * precision * recall / (precision + recall)


@pytest.mark.parametrize(
    ("pred", "gold", "counts"),
    [
        (recipe(["2 eggs"], ["Whisk the eggs."]), recipe(["eggs"], ["Whisk eggs well."]), (3, 5, 4)),
        (recipe([], ["Sauté the onions."]), recipe([], ["sauté onions, don't burn"]), (2, 3, 4)),
        (recipe([], ["boil boil boil water"]), recipe([], ["boil water water"]), (2, 4, 3)),
    ],
)
def test_rouge1_matches_hand_counts(pred, gold, counts):
    assert rouge1(pred, gold) == pytest.approx(f1_percent(*counts), abs=1e-9)


def test_rouge1_is_symmetric(fixture_recipes):
    for a, b in itertools.combinations(fixture_recipes, 2):
        assert rouge1(a, b) == pytest.approx(rouge1(b, a), abs=1e-12)


def test_rouge_tokens_keep_accents_and_contractions():
    assert WhitespaceTokenizer().tokenize("Don't sauté -- stir!") == ["dont", "sauté", "stir"]


def test_self_pairs_score_perfectly(fixture_recipes, lexicon):
    for r in fixture_recipes:
        report = score_pair(r, r, lexicon=lexicon)
        for name in ("r1", "ap", "qp", "ir", "tep", "tip"):
            assert report.scores[name] in (None, 100.0), name
        assert report.ir == 100.0
        assert report.r1 == pytest.approx(100.0)
        assert report.ad in (None, 0.0)
        assert report.sd == 0.0


def test_undefined_metrics_are_counted_as_zero(carbonara, lexicon):
    report = score_pair(carbonara, carbonara, lexicon=lexicon, record_id="c")
    assert report.tep is None
    assert report.tip is None
    assert report.counts["tep"] == 0
    assert report.counts["ir"] == 6
    assert report.csv_row()[0] == "c"
    assert report.to_dict()["tep"] is None


def test_corpus_mean_skips_undefined_pairs(carbonara, lexicon):
    half = recipe(["200g pasta"], ["Bake at 180°C."])
    gold = recipe(["200g pasta", "salt"], ["Bake at 180°C."])
    reports = score_pairs([(carbonara, carbonara, "a"), (half, gold, "b")], lexicon=lexicon)
    corpus = aggregate(reports)
    assert corpus.ir == pytest.approx(75.0)
    assert corpus.tep == 100.0
    assert corpus.counts["tep"] == 1
    assert corpus.counts["pairs"] == 2
    assert corpus.record_id == "ALL"
    assert corpus.conf_int["tep"] == 0.0


def test_aggregate_of_nothing_is_an_error():
    with pytest.raises(EmptyReport):
        aggregate([])
    blank = MetricReport({name: None for name in METRIC_NAMES}, {name: 0 for name in METRIC_NAMES})
    with pytest.raises(EmptyReport):
        aggregate([blank, blank])


def test_mean_and_conf_int():
    assert mean_and_conf_int([50.0]) == (50.0, 0.0)
    assert mean_and_conf_int([20.0, 20.0, 20.0]) == (20.0, 0.0)
    mean, amplitude = mean_and_conf_int([10.0, 20.0, 30.0])
    assert mean == pytest.approx(20.0)
    # t(0.975, 2) * sem * 2
    assert amplitude == pytest.approx(2 * 4.302653 * 10.0 / np.sqrt(3), rel=1e-5)


def test_parallel_scoring_matches_serial(fixture_recipes, lexicon):
    pairs = [(r, fixture_recipes[0], str(i)) for i, r in enumerate(fixture_recipes[:4])]
    assert score_pairs(pairs, lexicon=lexicon, jobs=2) == score_pairs(pairs, lexicon=lexicon)


def test_parse_pair_records(carbonara):
    carbonara_dict = carbonara.to_dict()
    good = {"id": "p1", "pred": carbonara_dict, "gold": carbonara_dict}
    ((pred, gold, record_id),) = parse_pair_records([good])
    assert record_id == "p1"
    assert pred == gold
    with pytest.raises(SchemaError, match="p2"):
        parse_pair_records([good, {"id": "p2", "pred": carbonara_dict}])
    with pytest.raises(SchemaError, match="p3"):
        parse_pair_records([{"id": "p3", "pred": {"ingredients": "salt"}, "gold": carbonara_dict}])
    with pytest.raises(SchemaError, match="Duplicate"):
        parse_pair_records([good, good])
    with pytest.raises(SchemaError):
        parse_pair_records({"pairs": []})


def test_csv_report(carbonara, lexicon):
    reports = score_pairs([(carbonara, carbonara, "x")], lexicon=lexicon)
    out = io.StringIO()
    write_reports_csv(reports, aggregate(reports), out)
    lines = out.getvalue().splitlines()
    assert lines[0] == ",".join(csv_header())
    assert lines[1].startswith("x,100.0,")
    assert lines[2].startswith("ALL,")
    assert len(lines) == 3
