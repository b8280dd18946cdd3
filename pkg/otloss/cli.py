"""
Command line entry point: score recipe corpora, evaluate losses on tensor
dumps, run gradient checks and the toy trainer.

Exit codes: 0 ok, 1 generic or numerical failure (NaN or Inf), 2 input
parse / config, 3 schema, 4 shape, 5 check failure.
"""

import argparse
import contextlib
import csv
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from otloss import __version__
from otloss.config import (
    DEFAULT_EPSILON,
    DEFAULT_GAMMA,
    DEFAULT_MAX_ITERS,
    DEFAULT_QTY_TOL,
    DEFAULT_TEMP_TOL,
    DEFAULT_TIME_TOL,
    DEFAULT_TOLERANCE,
    MetricThresholds,
    load_json,
    parse_list_argument,
)
from otloss.errors import ConfigError, InputParseError, OtlossError
from otloss.extraction import extract_recipe, load_lexicon
from otloss.geometry_losses import SinkhornConfig, topological_loss
from otloss.gradcheck import ensure_passed, run_gradcheck
from otloss.graphs import plot_objective_comparison, plot_trajectories
from otloss.recipe_metrics import (
    Recipe,
    aggregate,
    parse_pair_records,
    score_pairs,
    write_reports_csv,
    write_reports_json,
)
from otloss.soft_embedding import SpanMask
from otloss.tensor_math import load_tensor
from otloss.token_losses import NAMED_OBJECTIVES, composite, cross_entropy, dice, focal
from otloss.toy_trainer import (
    DEFAULT_LEARNING_RATE,
    DEFAULT_SAMPLES,
    DEFAULT_STEPS,
    TrainConfig,
    compare_objectives,
    init_model,
    model_to_json,
    parse_objective,
    read_trajectory_csv,
    synth_corpus,
    train,
    write_trajectory_csv,
)

logger = logging.getLogger(__name__)

# DEFAULT VALUES
DEFAULT_FORMAT = "csv"
DEFAULT_OBJECTIVE = "ce"
DEFAULT_TRAIN_OUT = os.path.join("out", "train-toy")
DEFAULT_COMPARE_OUT = os.path.join("out", "compare")
DEFAULT_COMPARE_SEEDS = 5
DEFAULT_PLOT_OUT = os.path.join("out", "trajectories.png")


@contextlib.contextmanager
def _output(path):
    """Open path for writing, or yield stdout for "-"."""
    if path in (None, "-"):
        yield sys.stdout
        return
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        yield f


def _sinkhorn_from_args(args):
    return SinkhornConfig(epsilon=args.epsilon, max_iters=args.max_iters, tolerance=args.tolerance)


# ============================================================================
# COMMANDS
# ============================================================================


def cmd_score(args):
    """Score every pair of a pairs file, then append the aggregate row."""
    thresholds = MetricThresholds(args.qty_tol, args.time_tol, args.temp_tol).checked()
    pairs = parse_pair_records(load_json(args.pairs))
    lexicon = load_lexicon(args.action_lexicon)
    reports = score_pairs(pairs, thresholds, lexicon, jobs=args.jobs)
    corpus = aggregate(reports)
    with _output(args.out) as out:
        if args.format == "json":
            write_reports_json(reports, corpus, out)
        else:
            write_reports_csv(reports, corpus, out)
    logger.info("Scored %d pair(s): IR %s, AD %s", len(reports), corpus.ir, corpus.ad)
    return 0


def _load_objective(text):
    if text in NAMED_OBJECTIVES:
        return NAMED_OBJECTIVES[text]
    if os.path.isfile(text):
        return parse_objective(load_json(text))
    try:
        value = json.loads(text)
    except json.JSONDecodeError as e:
        msg = f"--spec must be a named objective, a JSON file or inline JSON, got {text!r}"
        raise InputParseError(msg) from e
    return parse_objective(value)


def _load_targets(path):
    value = load_json(path)
    if isinstance(value, dict):
        value = value.get("targets")
    if not isinstance(value, list) or not all(
        isinstance(t, int) and not isinstance(t, bool) for t in value
    ):
        msg = f"{path}: targets must be a JSON array of integer token ids"
        raise InputParseError(msg)
    return value


def cmd_loss(args):
    """Evaluate a composite objective on a logits dump and print it as JSON."""
    spec = _load_objective(args.spec)
    logits = load_tensor(args.logits)
    targets = _load_targets(args.targets)
    span = SpanMask.parse(args.span) if args.span else SpanMask.full(logits.rows)

    evaluators = {
        "ce": lambda: cross_entropy(logits, targets),
        "focal": lambda: focal(logits, targets, args.gamma),
        "dice": lambda: dice(logits, targets),
    }
    if spec.weight("topo") > 0:
        if not args.embeddings:
            msg = "--embeddings is required when the objective includes topo"
            raise ConfigError(msg)
        embeddings = load_tensor(args.embeddings)
        cfg = _sinkhorn_from_args(args)
        evaluators["topo"] = lambda: topological_loss(logits, targets, embeddings, span, span, cfg)

    parts = {name: evaluators[name]() for name in spec.active()}
    result = composite(spec, parts)
    document = {
        "value": result.value,
        "components": {name: part.value for name, part in parts.items()},
        "grad_norm": float(np.linalg.norm(result.grad.values)),
    }
    print(json.dumps(document, indent=2))
    return 0


def cmd_gradcheck(args):
    """Compare analytic and finite-difference gradients; exit 5 on any breach."""
    seeds = range(args.seed, args.seed + args.count)
    results = run_gradcheck(args.which, seeds)
    for result in results:
        print(result.line())
    ensure_passed(results)
    return 0


def cmd_train_toy(args):
    """Train the toy model and write trajectory.csv and model.json."""
    cfg = TrainConfig.from_dict(load_json(args.config))
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    corpus = synth_corpus(cfg.seed, cfg.n_samples)
    model, trajectory = train(init_model(cfg.seed, cfg.dim), corpus, cfg)

    os.makedirs(args.out, exist_ok=True)
    trajectory_path = os.path.join(args.out, "trajectory.csv")
    model_path = os.path.join(args.out, "model.json")
    with _output(trajectory_path) as out:
        write_trajectory_csv(trajectory, out)
    Path(model_path).write_text(json.dumps(model_to_json(model)) + "\n", encoding="utf-8")
    print(f"Saving file in {trajectory_path}")
    print(f"Saving file in {model_path}")
    return 0


def cmd_extract(args):
    """Print what the extractors find in one recipe."""
    recipe = Recipe.from_dict(load_json(args.recipe))
    lexicon = load_lexicon(args.action_lexicon)
    print(json.dumps(extract_recipe(recipe, lexicon).to_dict(), indent=2, ensure_ascii=False))
    return 0


def _run_label(path):
    # train-toy writes <run>/trajectory.csv, so the folder names the run
    path = Path(path)
    return path.parent.name if path.stem == "trajectory" and path.parent.name else path.stem


def cmd_plot(args):
    trajectories = {}
    for path in args.trajectories:
        label = _run_label(path)
        if label in trajectories:
            label = str(path)
        trajectories[label] = read_trajectory_csv(path)
    plot_trajectories(trajectories, args.out, column=args.column)
    print(f"Saving file in {args.out}")
    return 0


def cmd_compare(args):
    """Train every objective over several seeds and chart toy IR and AD."""
    names = args.objectives or list(NAMED_OBJECTIVES)
    unknown = [name for name in names if name not in NAMED_OBJECTIVES]
    if unknown:
        msg = f"Unknown objective(s): {', '.join(unknown)} (known: {', '.join(NAMED_OBJECTIVES)})"
        raise ConfigError(msg)
    seeds = list(range(args.seed, args.seed + args.seeds))
    rows = compare_objectives(
        {name: NAMED_OBJECTIVES[name] for name in names},
        seeds,
        steps=args.steps,
        learning_rate=args.lr,
        n=args.samples,
        sinkhorn=_sinkhorn_from_args(args),
        progress=args.verbose,
    )

    os.makedirs(args.out, exist_ok=True)
    table_path = os.path.join(args.out, "comparison.csv")
    columns = ["objective", "seeds", "ir", "ir_conf_int", "ad", "ad_conf_int"]
    with _output(table_path) as out:
        writer = csv.DictWriter(out, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    for metric in ("ir", "ad"):
        plot_objective_comparison(rows, metric, os.path.join(args.out, f"comparison_{metric}.png"))

    for row in rows:
        print(f"{row['objective']:<10} IR {row['ir']:6.2f} ± {row['ir_conf_int']:.2f}   AD {row['ad']:6.2f} ± {row['ad_conf_int']:.2f}")
    print(f"Saving file in {table_path}")
    return 0


# ============================================================================
# ARGUMENTS
# ============================================================================


def _add_threshold_arguments(parser):
    parser.add_argument(
        "--qty-tol",
        type=float,
        default=DEFAULT_QTY_TOL,
        help=f"Relative tolerance on ingredient quantities (default: {DEFAULT_QTY_TOL})",
    )
    parser.add_argument(
        "--time-tol",
        type=float,
        default=DEFAULT_TIME_TOL,
        help=f"Relative tolerance on durations (default: {DEFAULT_TIME_TOL})",
    )
    parser.add_argument(
        "--temp-tol",
        type=float,
        default=DEFAULT_TEMP_TOL,
        help=f"Absolute tolerance on temperatures in °C (default: {DEFAULT_TEMP_TOL})",
    )


def _add_sinkhorn_arguments(parser):
    parser.add_argument(
        "--epsilon",
        type=float,
        default=DEFAULT_EPSILON,
        help=f"Sinkhorn entropic regularisation (default: {DEFAULT_EPSILON})",
    )
    parser.add_argument(
        "--max-iters",
        type=int,
        default=DEFAULT_MAX_ITERS,
        help=f"Sinkhorn iteration budget (default: {DEFAULT_MAX_ITERS})",
    )
    parser.add_argument(
        "--tolerance",
        type=float,
        default=DEFAULT_TOLERANCE,
        help=f"Sinkhorn marginal tolerance (default: {DEFAULT_TOLERANCE})",
    )


def _add_lexicon_argument(parser):
    parser.add_argument(
        "--action-lexicon",
        type=str,
        default=None,
        help="Action lexicon file, one verb per line (default: $OTLOSS_LEXICON, else the built-in one)",
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="otloss",
        description="Composite recipe-generation losses and recipe metrics",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s score --pairs pairs.json --format json --out report.json
  %(prog)s loss --logits logits.json --targets targets.json --embeddings emb.json --span 1:5 --spec topo
  %(prog)s gradcheck --which all --seed 0 --count 20
  %(prog)s train-toy --config toy.json --out out/ce
  %(prog)s compare --seeds 5 --steps 200
        """,
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Enable verbose output")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    score = commands.add_parser("score", help="Score a file of prediction/gold recipe pairs")
    score.add_argument("--pairs", required=True, help="JSON array of {id, pred, gold} records")
    score.add_argument("--out", default="-", help="Report file (default: stdout)")
    score.add_argument("--format", choices=["csv", "json"], default=DEFAULT_FORMAT)
    score.add_argument("--jobs", type=int, default=1, help="Worker processes (default: 1)")
    _add_threshold_arguments(score)
    _add_lexicon_argument(score)
    score.set_defaults(func=cmd_score)

    loss = commands.add_parser("loss", help="Evaluate a composite objective on tensor dumps")
    loss.add_argument("--logits", required=True, help="Tensor JSON of (T, V) logits")
    loss.add_argument("--targets", required=True, help="JSON array of T target ids")
    loss.add_argument("--embeddings", help="Tensor JSON of (V, d) embeddings (needed for topo)")
    loss.add_argument("--span", help="Ingredient span start:end (default: whole sequence)")
    loss.add_argument(
        "--spec",
        default=DEFAULT_OBJECTIVE,
        help=f"Named objective ({', '.join(NAMED_OBJECTIVES)}), weight JSON or JSON file (default: {DEFAULT_OBJECTIVE})",
    )
    loss.add_argument("--gamma", type=float, default=DEFAULT_GAMMA, help="Focal gamma")
    _add_sinkhorn_arguments(loss)
    loss.set_defaults(func=cmd_loss)

    gradcheck = commands.add_parser("gradcheck", help="Finite-difference gradient checks")
    gradcheck.add_argument("--which", default="all", help="ce, focal, dice, topo or all")
    gradcheck.add_argument("--seed", type=int, default=0, help="First seed (default: 0)")
    gradcheck.add_argument("--count", type=int, default=1, help="Number of seeds (default: 1)")
    gradcheck.set_defaults(func=cmd_gradcheck)

    train_toy = commands.add_parser("train-toy", help="Train the toy model from a JSON config")
    train_toy.add_argument("--config", required=True, help="Training config JSON")
    train_toy.add_argument("--seed", type=int, default=None, help="Override the config seed")
    train_toy.add_argument("--out", default=DEFAULT_TRAIN_OUT, help=f"Output folder (default: {DEFAULT_TRAIN_OUT})")
    train_toy.set_defaults(func=cmd_train_toy)

    extract = commands.add_parser("extract", help="Show what the extractors find in a recipe")
    extract.add_argument("--recipe", required=True, help="Recipe JSON {ingredients, instructions}")
    _add_lexicon_argument(extract)
    extract.set_defaults(func=cmd_extract)

    plot = commands.add_parser("plot", help="Chart loss trajectories")
    plot.add_argument("trajectories", nargs="+", help="trajectory.csv files")
    plot.add_argument("--out", default=DEFAULT_PLOT_OUT, help=f"Image file (default: {DEFAULT_PLOT_OUT})")
    plot.add_argument("--column", default="total", choices=["total", "ce", "dice", "topo", "focal"])
    plot.set_defaults(func=cmd_plot)

    compare = commands.add_parser("compare", help="Compare objectives on the toy task over seeds")
    compare.add_argument("--objectives", type=parse_list_argument, default=None, help="Comma-separated objective names (default: all)")
    compare.add_argument("--seeds", type=int, default=DEFAULT_COMPARE_SEEDS, help=f"Number of seeds (default: {DEFAULT_COMPARE_SEEDS})")
    compare.add_argument("--seed", type=int, default=0, help="First seed (default: 0)")
    compare.add_argument("--steps", type=int, default=DEFAULT_STEPS)
    compare.add_argument("--lr", type=float, default=DEFAULT_LEARNING_RATE)
    compare.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    compare.add_argument("--out", default=DEFAULT_COMPARE_OUT, help=f"Output folder (default: {DEFAULT_COMPARE_OUT})")
    _add_sinkhorn_arguments(compare)
    compare.set_defaults(func=cmd_compare)

    return parser


def main(argv=None):
    """Main entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )

    try:
        return args.func(args)
    except OtlossError as e:
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code
    except KeyboardInterrupt:
        print("\nOperation cancelled by user.", file=sys.stderr)
        return 1
    except Exception as e:
        logger.debug("Unexpected failure", exc_info=True)
        print(f"Error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
