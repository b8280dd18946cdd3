import dataclasses
import io
import os
import sys
from pathlib import Path

import numpy as np
import pytest

import otloss.toy_trainer as toy_trainer
from otloss.errors import ConfigError, InvalidShape, NumericalFailure
from otloss.tensor_math import Tensor
from otloss.token_losses import NAMED_OBJECTIVES, LossResult
from otloss.toy_trainer import (
    ACTION_TOKENS,
    INGREDIENT_TOKENS,
    MAX_VOCAB,
    TOKEN_IDS,
    VOCAB,
    TrainConfig,
    ToyModel,
    decode_greedy,
    evaluate_toy,
    forward,
    init_model,
    model_from_json,
    model_to_json,
    read_trajectory_csv,
    synth_corpus,
    tokens_to_recipe,
    train,
    write_trajectory_csv,
)

GOLDEN_DIR = Path(__file__).parent / "golden"


def trajectory_text(trajectory):
    out = io.StringIO()
    write_trajectory_csv(trajectory, out)
    return out.getvalue()


def check_golden(name, text):
    """Compare with a committed file; rewrite it only when OTLOSS_UPDATE_GOLDEN=1."""
    path = GOLDEN_DIR / name
    if os.environ.get("OTLOSS_UPDATE_GOLDEN") == "1":
        path.parent.mkdir(exist_ok=True)
        path.write_text(text, encoding="utf-8")
        return
    if not path.exists():
        pytest.fail(
            f"missing golden file tests/golden/{name}; generate it with "
            "OTLOSS_UPDATE_GOLDEN=1 pytest -m slow tests/test_toy_trainer.py and commit it"
        )
    assert text == path.read_text(encoding="utf-8")


def test_vocabulary_fits_the_model_limits():
    assert len(VOCAB) == len(set(VOCAB))
    assert len(VOCAB) <= MAX_VOCAB
    assert set(INGREDIENT_TOKENS).isdisjoint(ACTION_TOKENS)


def test_synth_corpus_is_deterministic():
    assert synth_corpus(7, 1) == synth_corpus(7, 1)
    assert synth_corpus(7, 8) == synth_corpus(7, 8)
    assert synth_corpus(7, 8) != synth_corpus(8, 8)


def test_synth_corpus_covers_several_dishes():
    corpus = synth_corpus(3, 20)
    assert len(corpus) == 20
    assert len({sample.dish for sample in corpus}) >= 3
    for sample in corpus:
        tokens = sample.tokens()
        assert tokens[0] == "<ing>"
        assert tokens[-1] == "<eos>"
        spanned = tokens[sample.span.start : sample.span.end]
        assert spanned
        assert all(token in INGREDIENT_TOKENS for token in spanned)


def test_synth_corpus_rejects_empty_size():
    with pytest.raises(ConfigError):
        synth_corpus(0, 0)


def test_model_shapes_are_checked():
    model = init_model(0, dim=4)
    assert model.vocab_size == len(VOCAB)
    assert model.dim == 4
    with pytest.raises(InvalidShape):
        ToyModel(model.embeddings, Tensor(np.zeros((3, len(VOCAB)))))
    with pytest.raises(InvalidShape):
        init_model(0, dim=17)
    sample = synth_corpus(0, 1)[0]
    assert forward(model, sample).shape == (len(sample.target), len(VOCAB))
    with pytest.raises(InvalidShape):
        forward(dataclasses.replace(model, context=4), sample)


def test_tokens_to_recipe():
    ids = [TOKEN_IDS[t] for t in ["<ing>", "egg", "rice", "</ing>", "<steps>", "fry", "serve", "<eos>", "salt"]]
    recipe = tokens_to_recipe(ids)
    assert recipe.ingredients == ("egg", "rice")
    assert recipe.instructions == ("fry", "serve")


def test_decoding_stops_at_context():
    model = init_model(1, dim=4, context=5)
    assert len(decode_greedy(model, synth_corpus(1, 1)[0])) <= 5


def test_zero_steps_leave_the_model_unchanged():
    model = init_model(7)
    corpus = synth_corpus(7, 2)
    trained, trajectory = train(model, corpus, TrainConfig(steps=0))
    assert trajectory == []
    assert trained == model
    assert trajectory_text(trajectory) == "step,total,ce,dice,topo,focal\n"


def test_training_is_deterministic():
    cfg = TrainConfig(steps=3, objective=NAMED_OBJECTIVES["topo_dice"], n_samples=2)
    runs = [train(init_model(cfg.seed), synth_corpus(cfg.seed, cfg.n_samples), cfg) for _ in range(2)]
    assert runs[0][0] == runs[1][0]
    assert trajectory_text(runs[0][1]) == trajectory_text(runs[1][1])


def test_total_is_the_weighted_sum_of_components():
    cfg = TrainConfig(steps=2, objective=NAMED_OBJECTIVES["topo_dice"], n_samples=3)
    _, trajectory = train(init_model(cfg.seed), synth_corpus(cfg.seed, 3), cfg)
    for record in trajectory:
        expected = 0.6 * record.ce + 0.2 * record.dice + 0.2 * record.topo
        assert record.total == pytest.approx(expected, abs=1e-12)


def test_small_steps_never_increase_the_loss():
    cfg = TrainConfig(steps=15, learning_rate=1e-3, n_samples=4)
    _, trajectory = train(init_model(cfg.seed), synth_corpus(cfg.seed, 4), cfg)
    totals = [record.total for record in trajectory]
    assert all(b <= a + 1e-12 for a, b in zip(totals, totals[1:]))


def test_non_finite_loss_names_the_step(monkeypatch):
    calls = {"n": 0}
    real_cross_entropy = toy_trainer.cross_entropy

    def exploding(logits, targets):
        calls["n"] += 1
        result = real_cross_entropy(logits, targets)
        if calls["n"] > 2:
            return LossResult(float("inf"), result.grad)
        return result

    monkeypatch.setattr(toy_trainer, "cross_entropy", exploding)
    cfg = TrainConfig(steps=3, n_samples=2)
    with pytest.raises(NumericalFailure, match="step 1"):
        train(init_model(cfg.seed), synth_corpus(cfg.seed, 2), cfg)


@pytest.mark.parametrize(
    "document",
    [
        {"steps": -1},
        {"lr": 0.0},
        {"objective": "mse"},
        {"objective": {"ce": 0.5, "mse": 0.5}},
        {"objective": {"ce": -1.0}},
        {"dim": 32},
        {"epochs": 3},
        {"sinkhorn": {"epsilon": 0.0}},
        [1, 2],
    ],
)
def test_invalid_configs(document):
    with pytest.raises(ConfigError):
        TrainConfig.from_dict(document)


def test_config_from_dict():
    cfg = TrainConfig.from_dict(
        {"steps": 5, "lr": 0.05, "objective": {"ce": 0.6, "topo": 0.4}, "sinkhorn": {"epsilon": 0.1}}
    )
    assert cfg.steps == 5
    assert cfg.learning_rate == 0.05
    assert cfg.objective.active() == ["ce", "topo"]
    assert cfg.sinkhorn.epsilon == 0.1
    assert TrainConfig.from_dict({"objective": "topo_dice"}).objective == NAMED_OBJECTIVES["topo_dice"]
    assert TrainConfig.from_dict(cfg.to_dict()).objective.to_dict() == cfg.objective.to_dict()


def test_trajectory_and_model_files(tmp_path):
    cfg = TrainConfig(steps=2, n_samples=2, dim=4)
    model, trajectory = train(init_model(cfg.seed, cfg.dim), synth_corpus(cfg.seed, 2), cfg)
    path = tmp_path / "trajectory.csv"
    path.write_text(trajectory_text(trajectory), encoding="utf-8")
    assert read_trajectory_csv(path) == trajectory
    assert model_from_json(model_to_json(model)) == model
    with pytest.raises(InvalidShape):
        model_from_json({"embeddings": model_to_json(model)["embeddings"]})


def test_evaluation_of_untrained_model():
    corpus = synth_corpus(7, 4)
    report = evaluate_toy(init_model(7), corpus)
    assert report.counts["pairs"] == 4
    assert 0.0 <= report.ir <= 100.0


@pytest.mark.slow
def test_memorising_one_sample_recovers_every_ingredient():
    corpus = synth_corpus(5, 1)
    cfg = TrainConfig(steps=300, learning_rate=0.3, n_samples=1)
    trained, trajectory = train(init_model(5), corpus, cfg)
    assert trajectory[-1].ce < 0.1
    report = evaluate_toy(trained, corpus)
    assert report.ir == 100.0
    assert report.ad == 0.0


@pytest.mark.slow
def test_ce_training_halves_the_loss():
    cfg = TrainConfig(steps=200, learning_rate=0.1, seed=7, n_samples=8)
    _, trajectory = train(init_model(7), synth_corpus(7, 8), cfg)
    assert len(trajectory) == 200
    assert trajectory[-1].ce < 0.5 * trajectory[0].ce
    check_golden("trajectory_ce_seed7.csv", trajectory_text(trajectory))


@pytest.mark.slow
def test_mixed_training_reduces_the_topological_term():
    cfg = TrainConfig(steps=200, learning_rate=0.1, seed=7, objective=NAMED_OBJECTIVES["topo_dice"])
    _, trajectory = train(init_model(7), synth_corpus(7, 8), cfg)
    assert trajectory[-1].topo < trajectory[0].topo
    check_golden("trajectory_mixed_seed7.csv", trajectory_text(trajectory))


def test_missing_golden_file_fails(monkeypatch, tmp_path):
    monkeypatch.setattr(sys.modules[__name__], "GOLDEN_DIR", tmp_path)
    monkeypatch.delenv("OTLOSS_UPDATE_GOLDEN", raising=False)
    with pytest.raises(pytest.fail.Exception, match="OTLOSS_UPDATE_GOLDEN=1"):
        check_golden("absent.csv", "step\n")
    assert not (tmp_path / "absent.csv").exists()


def test_golden_file_is_written_only_on_request(monkeypatch, tmp_path):
    monkeypatch.setattr(sys.modules[__name__], "GOLDEN_DIR", tmp_path)
    monkeypatch.setenv("OTLOSS_UPDATE_GOLDEN", "1")
    check_golden("fresh.csv", "step\n")
    monkeypatch.delenv("OTLOSS_UPDATE_GOLDEN")
    check_golden("fresh.csv", "step\n")
    with pytest.raises(AssertionError):
        check_golden("fresh.csv", "step,total\n")
