"""
Desk-scale training of a tiny token model under the composite objectives.

The model embeds the previous token and the dish token, sums the two
embeddings and decodes the sum linearly into the vocabulary. Logits are
teacher-forced, so every loss of otloss.token_losses and the topological loss
of otloss.geometry_losses can be trained with plain full-batch gradient descent.
"""

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from tqdm import tqdm

from otloss.errors import ConfigError, InvalidShape, NumericalFailure, UndefinedMetric
from otloss.extraction import load_lexicon
from otloss.geometry_losses import SinkhornConfig, topological_loss
from otloss.recipe_metrics import (
    METRIC_NAMES,
    MetricReport,
    Recipe,
    action_distance,
    aggregate,
    ingredient_recall,
    mean_and_conf_int,
)
from otloss.soft_embedding import SpanMask
from otloss.tensor_math import Tensor, tensor_from_json, tensor_to_json
from otloss.token_losses import (
    NAMED_OBJECTIVES,
    CompositeSpec,
    composite,
    cross_entropy,
    dice,
    focal,
)

logger = logging.getLogger(__name__)

MAX_VOCAB = 64
MAX_DIM = 16
MAX_CONTEXT = 32
DEFAULT_DIM = 16
DEFAULT_CONTEXT = 16
DEFAULT_STEPS = 200
DEFAULT_LEARNING_RATE = 0.1
DEFAULT_SAMPLES = 8

TRAJECTORY_COLUMNS = ("step", "total", "ce", "dice", "topo", "focal")


# ============================================================================
# VOCABULARY AND CORPUS
# ============================================================================

SPECIAL_TOKENS = ("<pad>", "<bos>", "<ing>", "</ing>", "<steps>", "<eos>")

# dish -> (required ingredients, optional ingredients, actions)
DISH_TEMPLATES = {
    "carbonara": (
        ("spaghetti", "guanciale", "egg", "pecorino"),
        ("pepper", "salt"),
        ("boil", "fry", "combine", "serve"),
    ),
    "amatriciana": (
        ("bucatini", "guanciale", "tomato", "pecorino"),
        ("chili", "onion"),
        ("boil", "fry", "simmer", "serve"),
    ),
    "risotto": (
        ("rice", "butter", "onion", "parmesan"),
        ("wine", "broth"),
        ("melt", "toast", "simmer", "stir", "serve"),
    ),
    "panino": (
        ("bread", "ham", "cheese"),
        ("tomato", "basil"),
        ("slice", "toast", "assemble", "serve"),
    ),
    "fried_rice": (
        ("rice", "egg", "garlic", "scallion"),
        ("soy", "pea"),
        ("boil", "fry", "stir", "serve"),
    ),
}


def _ordered_unique(groups):
    return tuple(dict.fromkeys(item for group in groups for item in group))


DISH_TOKENS = tuple(DISH_TEMPLATES)
INGREDIENT_TOKENS = _ordered_unique(req + opt for req, opt, _ in DISH_TEMPLATES.values())
ACTION_TOKENS = _ordered_unique(actions for _, _, actions in DISH_TEMPLATES.values())
VOCAB = SPECIAL_TOKENS + DISH_TOKENS + INGREDIENT_TOKENS + ACTION_TOKENS
TOKEN_IDS = {token: index for index, token in enumerate(VOCAB)}


@dataclass(frozen=True)
class ToySample:
    """
    One micro-recipe.

    Attributes:
        dish (str): template name
        prompt (tuple): token ids [<bos>, dish]
        target (tuple): token ids <ing> ingredients </ing> <steps> actions <eos>
        span (SpanMask): target positions holding the ingredients
    """

    dish: str
    prompt: tuple
    target: tuple
    span: SpanMask

    def tokens(self):
        return [VOCAB[t] for t in self.target]


def _make_sample(dish, ingredients, actions):
    prompt = (TOKEN_IDS["<bos>"], TOKEN_IDS[dish])
    target = (
        TOKEN_IDS["<ing>"],
        *(TOKEN_IDS[i] for i in ingredients),
        TOKEN_IDS["</ing>"],
        TOKEN_IDS["<steps>"],
        *(TOKEN_IDS[a] for a in actions),
        TOKEN_IDS["<eos>"],
    )
    return ToySample(dish, prompt, target, SpanMask(1, 1 + len(ingredients)))


def synth_corpus(seed, n):
    """
    Deterministic templated micro-recipes.

    Dishes cycle through a seeded permutation of the templates; each sample
    keeps a seeded subset of its template's optional ingredients.

    Args:
        seed (int): generator seed
        n (int): number of samples, >= 1
    """
    if n < 1:
        msg = f"Corpus size must be >= 1, got {n}"
        raise ConfigError(msg)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(DISH_TOKENS))
    corpus = []
    for index in range(n):
        dish = DISH_TOKENS[order[index % len(order)]]
        required, optional, actions = DISH_TEMPLATES[dish]
        keep = rng.random(len(optional)) < 0.5  # noqa: PLR2004
        ingredients = required + tuple(o for o, k in zip(optional, keep) if k)
        corpus.append(_make_sample(dish, ingredients, actions))
    return corpus


# ============================================================================
# MODEL
# ============================================================================


@dataclass(frozen=True)
class ToyModel:
    """
    Attributes:
        embeddings (Tensor): (V, d) token embeddings
        decoder (Tensor): (d, V) linear read-out
        context (int): longest target sequence the model decodes
    """

    embeddings: Tensor
    decoder: Tensor
    context: int = DEFAULT_CONTEXT

    def __post_init__(self):
        vocab, dim = self.embeddings.shape
        if self.decoder.shape != (dim, vocab):
            msg = f"Decoder {self.decoder.shape} does not match embeddings {self.embeddings.shape}"
            raise InvalidShape(msg)
        if vocab > MAX_VOCAB or dim > MAX_DIM or not 1 <= self.context <= MAX_CONTEXT:
            msg = (
                f"Toy model too large: V={vocab}, d={dim}, T={self.context} "
                f"(limits {MAX_VOCAB}, {MAX_DIM}, {MAX_CONTEXT})"
            )
            raise InvalidShape(msg)

    @property
    def vocab_size(self):
        return self.embeddings.rows

    @property
    def dim(self):
        return self.embeddings.cols


def init_model(seed, dim=DEFAULT_DIM, context=DEFAULT_CONTEXT):
    """Random model: embeddings ~ N(0, 1), decoder ~ N(0, 1/d)."""
    rng = np.random.default_rng(seed)
    embeddings = rng.normal(0.0, 1.0, size=(len(VOCAB), dim))
    decoder = rng.normal(0.0, 1.0 / np.sqrt(dim), size=(dim, len(VOCAB)))
    return ToyModel(Tensor(embeddings), Tensor(decoder), context)


def _context_ids(sample):
    full = sample.prompt + sample.target
    start = len(sample.prompt) - 1
    return np.asarray(full[start : len(full) - 1]), sample.prompt[-1]


def _features(embeddings, previous, dish):
    return embeddings[previous] + embeddings[dish][None, :]


def forward(model, sample):
    """
    Teacher-forced logits of a sample.

    Row t scores target position t from the token before it plus the dish.

    Returns:
        Tensor: (len(target), V) logits
    """
    if len(sample.target) > model.context:
        msg = f"Sample of length {len(sample.target)} exceeds the model context {model.context}"
        raise InvalidShape(msg)
    previous, dish = _context_ids(sample)
    hidden = _features(model.embeddings.values, previous, dish)
    return Tensor(hidden @ model.decoder.values)


def decode_greedy(model, sample):
    """Free-running argmax decoding from the sample prompt, up to <eos> or the context length."""
    embeddings = model.embeddings.values
    decoder = model.decoder.values
    dish = sample.prompt[-1]
    previous = sample.prompt[-1]
    tokens = []
    for _ in range(model.context):
        logits = (embeddings[previous] + embeddings[dish]) @ decoder
        previous = int(np.argmax(logits))
        tokens.append(previous)
        if previous == TOKEN_IDS["<eos>"]:
            break
    return tokens


def tokens_to_recipe(token_ids):
    """
    Map decoded ids to a recipe: ingredient tokens before <steps> become
    ingredient lines, action tokens after it become one-verb steps.
    """
    ingredients = []
    instructions = []
    in_steps = False
    for token_id in token_ids:
        token = VOCAB[token_id]
        if token == "<steps>":
            in_steps = True
        elif token == "<eos>":
            break
        elif token in ACTION_TOKENS and in_steps:
            instructions.append(token)
        elif token in INGREDIENT_TOKENS and not in_steps:
            ingredients.append(token)
    return Recipe(tuple(ingredients), tuple(instructions))


# ============================================================================
# TRAINING
# ============================================================================


@dataclass(frozen=True)
class TrainConfig:
    """
    Attributes:
        steps (int): gradient steps, >= 0
        learning_rate (float): step size, > 0
        seed (int): seeds both the corpus and the initial model
        objective (CompositeSpec): loss mix
        sinkhorn (SinkhornConfig): settings of the topological term
        n_samples (int): corpus size
        dim (int): embedding width
    """

    steps: int = DEFAULT_STEPS
    learning_rate: float = DEFAULT_LEARNING_RATE
    seed: int = 7
    objective: CompositeSpec = field(default_factory=lambda: NAMED_OBJECTIVES["ce"])
    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig)
    n_samples: int = DEFAULT_SAMPLES
    dim: int = DEFAULT_DIM

    def validate(self):
        """Returns a list of error messages, empty when the config is usable."""
        errors = []
        if not (isinstance(self.steps, int) and self.steps >= 0):
            errors.append(f"steps must be an integer >= 0, got {self.steps!r}")
        if not self.learning_rate > 0:
            errors.append(f"learning_rate must be > 0, got {self.learning_rate}")
        if not (isinstance(self.n_samples, int) and self.n_samples >= 1):
            errors.append(f"n_samples must be an integer >= 1, got {self.n_samples!r}")
        if not (isinstance(self.dim, int) and 1 <= self.dim <= MAX_DIM):
            errors.append(f"dim must be an integer in [1, {MAX_DIM}], got {self.dim!r}")
        return errors

    @classmethod
    def from_dict(cls, obj):
        """
        Build a config from its JSON object.

        "objective" is either a named configuration (ce, focal, dice, topo,
        topo_dice) or a mapping of loss weights.

        Raises:
            ConfigError: unknown keys, unknown loss names or invalid values
        """
        if not isinstance(obj, dict):
            msg = "Training config must be a JSON object"
            raise ConfigError(msg)
        known = {"steps", "learning_rate", "lr", "seed", "objective", "sinkhorn", "n_samples", "dim"}
        unknown = sorted(set(obj) - known)
        if unknown:
            msg = f"Unknown training setting(s): {', '.join(unknown)}"
            raise ConfigError(msg)
        kwargs = {k: obj[k] for k in ("steps", "seed", "n_samples", "dim") if k in obj}
        if "learning_rate" in obj or "lr" in obj:
            kwargs["learning_rate"] = float(obj.get("learning_rate", obj.get("lr")))
        if "objective" in obj:
            kwargs["objective"] = parse_objective(obj["objective"])
        if "sinkhorn" in obj:
            kwargs["sinkhorn"] = SinkhornConfig.from_dict(obj["sinkhorn"])
        cfg = cls(**kwargs)
        errors = cfg.validate()
        if errors:
            msg = "Invalid training config: " + "; ".join(errors)
            raise ConfigError(msg)
        return cfg

    def to_dict(self):
        return {
            "steps": self.steps,
            "learning_rate": self.learning_rate,
            "seed": self.seed,
            "objective": self.objective.to_dict(),
            "n_samples": self.n_samples,
            "dim": self.dim,
        }


def parse_objective(value):
    """A named configuration or a weight mapping, as a CompositeSpec."""
    if isinstance(value, str):
        if value not in NAMED_OBJECTIVES:
            msg = f"Unknown objective {value!r} (known: {', '.join(NAMED_OBJECTIVES)})"
            raise ConfigError(msg)
        return NAMED_OBJECTIVES[value]
    return CompositeSpec.from_mapping(value)


@dataclass(frozen=True)
class StepRecord:
    """Full-batch loss values measured before the update of one step."""

    step: int
    total: float
    ce: float
    dice: float
    topo: float
    focal: float

    def row(self):
        return [self.step, *(repr(getattr(self, c)) for c in TRAJECTORY_COLUMNS[1:])]


def _sample_losses(logits, sample, embeddings, sinkhorn_cfg):
    target = sample.target
    return {
        "ce": cross_entropy(logits, target),
        "focal": focal(logits, target),
        "dice": dice(logits, target),
        "topo": topological_loss(
            logits, target, Tensor(embeddings), sample.span, sample.span, sinkhorn_cfg
        ),
    }


def train(model, corpus, cfg):
    """
    Full-batch gradient descent on the composite objective.

    The topological term compares each sample's ingredient span with the
    embeddings of its gold ingredients; the embedding matrix it measures
    distances with is held constant within a step.

    Args:
        model (ToyModel): starting point
        corpus (list): ToySample list
        cfg (TrainConfig): training settings

    Returns:
        tuple: (trained ToyModel, list of StepRecord, one per step)

    Raises:
        NumericalFailure: a loss or gradient became non-finite, naming the step
    """
    errors = cfg.validate()
    if errors:
        msg = "Invalid training config: " + "; ".join(errors)
        raise ConfigError(msg)
    embeddings = model.embeddings.values.copy()
    decoder = model.decoder.values.copy()
    spec = cfg.objective
    n = len(corpus)
    trajectory = []

    for step in range(cfg.steps):
        grad_embeddings = np.zeros_like(embeddings)
        grad_decoder = np.zeros_like(decoder)
        sums = {"ce": 0.0, "focal": 0.0, "dice": 0.0, "topo": 0.0}
        try:
            for sample in corpus:
                previous, dish = _context_ids(sample)
                hidden = _features(embeddings, previous, dish)
                logits = Tensor(hidden @ decoder)
                parts = _sample_losses(logits, sample, embeddings, cfg.sinkhorn)
                for name, part in parts.items():
                    sums[name] += part.value
                grad_logits = composite(spec, parts).grad.values / n
                grad_decoder += hidden.T @ grad_logits
                grad_hidden = grad_logits @ decoder.T
                np.add.at(grad_embeddings, previous, grad_hidden)
                grad_embeddings[dish] += grad_hidden.sum(axis=0)
        except NumericalFailure as e:
            msg = f"Training diverged at step {step}: {e}"
            raise NumericalFailure(msg) from e

        means = {name: value / n for name, value in sums.items()}
        total = sum(spec.weight(name) * means[name] for name in spec.active())
        gradients_finite = np.all(np.isfinite(grad_decoder)) and np.all(np.isfinite(grad_embeddings))
        if not (np.isfinite(total) and gradients_finite):
            msg = f"Training diverged at step {step}: non-finite loss or gradient"
            raise NumericalFailure(msg)
        trajectory.append(
            StepRecord(step, total, means["ce"], means["dice"], means["topo"], means["focal"])
        )
        logger.debug("step %d total %.6f %s", step, total, means)

        embeddings -= cfg.learning_rate * grad_embeddings
        decoder -= cfg.learning_rate * grad_decoder

    if trajectory:
        logger.info(
            "Trained %d steps: total loss %.4f -> %.4f",
            cfg.steps,
            trajectory[0].total,
            trajectory[-1].total,
        )
    return ToyModel(Tensor(embeddings), Tensor(decoder), model.context), trajectory


# ============================================================================
# EVALUATION
# ============================================================================


def evaluate_toy(model, corpus, lexicon=None):
    """
    Greedy-decode every sample and score ingredient recall and action distance.

    Returns:
        MetricReport: corpus means of ir and ad (other metrics absent)
    """
    lexicon = lexicon or load_lexicon()
    reports = []
    for index, sample in enumerate(corpus):
        predicted = tokens_to_recipe(decode_greedy(model, sample))
        gold = tokens_to_recipe(sample.target)
        scores = dict.fromkeys(METRIC_NAMES)
        counts = dict.fromkeys(METRIC_NAMES, 0)
        for name, metric in (("ir", ingredient_recall), ("ad", action_distance)):
            try:
                scores[name] = metric(predicted, gold, lexicon=lexicon)
                counts[name] = 1
            except UndefinedMetric:
                logger.debug("%s undefined for sample %d", name, index)
        reports.append(MetricReport(scores, counts, record_id=f"{sample.dish}-{index}"))
    return aggregate(reports)


def compare_objectives(
    objectives,
    seeds,
    steps=DEFAULT_STEPS,
    learning_rate=DEFAULT_LEARNING_RATE,
    n=DEFAULT_SAMPLES,
    sinkhorn=None,
    progress=False,
):
    """
    Train one model per (objective, seed) and average the toy IR and AD.

    Args:
        objectives (dict): name -> CompositeSpec
        seeds (list): seeds; each seeds both corpus and model
        progress (bool): show a progress bar

    Returns:
        list: one dict per objective with ir / ad means and confidence intervals
    """
    sinkhorn = sinkhorn or SinkhornConfig()
    lexicon = load_lexicon()
    runs = [(name, seed) for name in objectives for seed in seeds]
    results = {name: {"ir": [], "ad": []} for name in objectives}
    for name, seed in tqdm(runs, desc="objectives", disable=not progress):
        cfg = TrainConfig(steps, learning_rate, seed, objectives[name], sinkhorn, n)
        corpus = synth_corpus(seed, n)
        trained, _ = train(init_model(seed, cfg.dim), corpus, cfg)
        report = evaluate_toy(trained, corpus, lexicon)
        results[name]["ir"].append(report.scores["ir"])
        results[name]["ad"].append(report.scores["ad"])
    rows = []
    for name in objectives:
        ir_mean, ir_conf_int = mean_and_conf_int(results[name]["ir"])
        ad_mean, ad_conf_int = mean_and_conf_int(results[name]["ad"])
        rows.append(
            {
                "objective": name,
                "seeds": len(seeds),
                "ir": ir_mean,
                "ir_conf_int": ir_conf_int,
                "ad": ad_mean,
                "ad_conf_int": ad_conf_int,
            }
        )
    return rows


# ============================================================================
# FILES
# ============================================================================


def write_trajectory_csv(trajectory, out):
    """Write step, total, ce, dice, topo, focal rows to an open text stream."""
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(TRAJECTORY_COLUMNS)
    for record in trajectory:
        writer.writerow(record.row())


def read_trajectory_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        return [
            StepRecord(int(row["step"]), *(float(row[c]) for c in TRAJECTORY_COLUMNS[1:]))
            for row in reader
        ]


def model_to_json(model):
    return {"embeddings": tensor_to_json(model.embeddings), "decoder": tensor_to_json(model.decoder)}


def model_from_json(obj):
    if not isinstance(obj, dict) or "embeddings" not in obj or "decoder" not in obj:
        msg = 'Model JSON needs "embeddings" and "decoder"'
        raise InvalidShape(msg)
    return ToyModel(tensor_from_json(obj["embeddings"]), tensor_from_json(obj["decoder"]))
