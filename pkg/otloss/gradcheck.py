"""
Finite-difference checks of every analytic loss gradient.

Each suite draws a small random instance from its seed, evaluates the loss
gradient analytically and by central differences, and reports the largest
entrywise relative error against the loss threshold. A suite whose loss
relies on an iterative solver also reports whether the solver converged;
an unconverged instance fails whatever its error.
"""

import logging
from dataclasses import dataclass

import numpy as np

from otloss.errors import CheckFailure, ConfigError
from otloss.geometry_losses import SinkhornConfig, topological_loss
from otloss.soft_embedding import SpanMask
from otloss.tensor_math import Tensor, finite_diff_grad, max_relative_error
from otloss.token_losses import cross_entropy, dice, focal

logger = logging.getLogger(__name__)

GRADCHECK_STEP = 1e-4
THRESHOLDS = {"ce": 1e-5, "focal": 1e-5, "dice": 1e-4, "topo": 1e-3}

# small instances: 20 seeds per suite
SEQUENCE_LENGTH = 4
VOCAB_SIZE = 5
EMBEDDING_DIM = 3
# eps of the order of the largest cost, so every solve converges long before max_iters
GRADCHECK_SINKHORN = SinkhornConfig(epsilon=0.5, max_iters=2000, tolerance=1e-13)


@dataclass(frozen=True)
class GradcheckResult:
    name: str
    seed: int
    max_rel_error: float
    threshold: float
    converged: bool = True

    @property
    def passed(self):
        return self.converged and self.max_rel_error < self.threshold

    def line(self):
        status = "ok" if self.passed else "FAIL"
        note = "" if self.converged else " (solver not converged)"
        return (
            f"{self.name:<6} seed {self.seed:<3} max rel error {self.max_rel_error:.3e} "
            f"(< {self.threshold:.0e}) {status}{note}"
        )


def _token_instance(seed):
    rng = np.random.default_rng(seed)
    logits = Tensor(rng.normal(0.0, 1.0, size=(SEQUENCE_LENGTH, VOCAB_SIZE)))
    targets = rng.integers(0, VOCAB_SIZE, size=SEQUENCE_LENGTH).tolist()
    return rng, logits, targets


def _check_ce(seed):
    _, logits, targets = _token_instance(seed)
    analytic = cross_entropy(logits, targets).grad
    numeric = finite_diff_grad(lambda z: cross_entropy(z, targets).value, logits, GRADCHECK_STEP)
    return analytic, numeric, True


def _check_focal(seed):
    _, logits, targets = _token_instance(seed)
    analytic = focal(logits, targets).grad
    numeric = finite_diff_grad(lambda z: focal(z, targets).value, logits, GRADCHECK_STEP)
    return analytic, numeric, True


def _check_dice(seed):
    _, logits, targets = _token_instance(seed)
    analytic = dice(logits, targets).grad
    numeric = finite_diff_grad(lambda z: dice(z, targets).value, logits, GRADCHECK_STEP)
    return analytic, numeric, True


def _check_topo(seed):
    rng, logits, targets = _token_instance(seed)
    embeddings = Tensor(rng.normal(0.0, 0.3, size=(VOCAB_SIZE, EMBEDDING_DIM)))
    span = SpanMask(1, SEQUENCE_LENGTH)
    evaluations = []

    def value(z):
        result = topological_loss(z, targets, embeddings, span, span, GRADCHECK_SINKHORN)
        evaluations.append(result.converged)
        return result.value

    analytic = topological_loss(logits, targets, embeddings, span, span, GRADCHECK_SINKHORN)
    numeric = finite_diff_grad(value, logits, GRADCHECK_STEP)
    return analytic.grad, numeric, analytic.converged and all(evaluations)


SUITES = {"ce": _check_ce, "focal": _check_focal, "dice": _check_dice, "topo": _check_topo}


def check_loss(name, seed):
    """Run one suite on one seed."""
    analytic, numeric, converged = SUITES[name](seed)
    result = GradcheckResult(name, seed, max_relative_error(analytic, numeric), THRESHOLDS[name], converged)
    logger.debug(result.line())
    return result


def run_gradcheck(which="all", seeds=(0,)):
    """
    Run the selected suites over the given seeds.

    Args:
        which (str): a loss name or "all"
        seeds (iterable of int): seeds to draw instances from

    Returns:
        list: one GradcheckResult per (loss, seed)
    """
    if which == "all":
        names = list(SUITES)
    elif which in SUITES:
        names = [which]
    else:
        msg = f"Unknown loss {which!r} (expected one of: all, {', '.join(SUITES)})"
        raise ConfigError(msg)
    return [check_loss(name, seed) for name in names for seed in seeds]


def ensure_passed(results):
    """Raise CheckFailure listing every result over its threshold."""
    failed = [r for r in results if not r.passed]
    if failed:
        msg = "Gradient check failed:\n" + "\n".join(r.line() for r in failed)
        raise CheckFailure(msg)
    return results
