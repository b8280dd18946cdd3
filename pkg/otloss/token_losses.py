"""
Token-level objectives and the composite mixer.

Each loss returns its value together with the analytic gradient with respect
to the logits. Sequence reductions are means over positions, so magnitudes
do not depend on the sequence length.
"""

import logging
from dataclasses import dataclass

import numpy as np

from otloss.config import DEFAULT_DICE_SMOOTH, DEFAULT_GAMMA
from otloss.errors import ConfigError, InvalidShape, InvalidToken, MissingComponent
from otloss.tensor_math import Tensor, as_tensor, log_softmax_rows

logger = logging.getLogger(__name__)

COMPONENTS = ("ce", "focal", "dice", "topo")


@dataclass(frozen=True)
class LossResult:
    """
    Scalar loss value plus its gradient with respect to the logits.

    Attributes:
        value (float): loss value
        grad (Tensor): gradient, shaped like the logits
        converged (bool): every Sinkhorn solve behind the value converged;
            always True for the closed-form losses
    """

    value: float
    grad: Tensor
    converged: bool = True


@dataclass(frozen=True)
class CompositeSpec:
    """
    Non-negative mixing weights over the named losses ce, focal, dice and topo.

    Attributes:
        weights (dict): name -> weight; names missing from the mapping weigh 0
    """

    weights: dict

    def __post_init__(self):
        unknown = sorted(set(self.weights) - set(COMPONENTS))
        if unknown:
            msg = f"Unknown loss name(s): {', '.join(unknown)} (expected {', '.join(COMPONENTS)})"
            raise ConfigError(msg)
        negative = [name for name, weight in self.weights.items() if not weight >= 0]
        if negative:
            msg = f"Loss weights must be non-negative: {', '.join(sorted(negative))}"
            raise ConfigError(msg)
        if not any(weight > 0 for weight in self.weights.values()):
            msg = "A composite objective needs at least one positive weight"
            raise ConfigError(msg)

    @classmethod
    def from_mapping(cls, mapping):
        """Build from a {"ce": 0.6, "topo": 0.4} style mapping."""
        if not isinstance(mapping, dict):
            msg = f"Objective must be a JSON object of weights, got {type(mapping).__name__}"
            raise ConfigError(msg)
        try:
            weights = {str(name): float(weight) for name, weight in mapping.items()}
        except (TypeError, ValueError) as e:
            msg = f"Loss weights must be numbers: {mapping!r}"
            raise ConfigError(msg) from e
        return cls(weights)

    def weight(self, name):
        return self.weights.get(name, 0.0)

    def active(self):
        """Names with a positive weight, in canonical order."""
        return [name for name in COMPONENTS if self.weight(name) > 0]

    def scaled(self, alpha):
        return CompositeSpec({name: alpha * weight for name, weight in self.weights.items()})

    def to_dict(self):
        return {name: self.weight(name) for name in COMPONENTS}


# Objectives compared in the experiments: single custom losses mixed 0.6/0.4
# with CE, and the mixed Topo+Dice configuration.
NAMED_OBJECTIVES = {
    "ce": CompositeSpec({"ce": 1.0}),
    "focal": CompositeSpec({"ce": 0.6, "focal": 0.4}),
    "dice": CompositeSpec({"ce": 0.6, "dice": 0.4}),
    "topo": CompositeSpec({"ce": 0.6, "topo": 0.4}),
    "topo_dice": CompositeSpec({"ce": 0.6, "dice": 0.2, "topo": 0.2}),
}


def _check_targets(logits, targets):
    targets = np.asarray(list(targets), dtype=np.int64)
    if logits.rows == 0 or logits.cols == 0:
        msg = f"Loss needs non-empty logits, got shape {logits.shape}"
        raise InvalidShape(msg)
    if targets.shape != (logits.rows,):
        msg = f"Expected {logits.rows} targets for logits {logits.shape}, got {targets.size}"
        raise InvalidShape(msg)
    bad = np.flatnonzero((targets < 0) | (targets >= logits.cols))
    if bad.size:
        position = int(bad[0])
        msg = f"Target {int(targets[position])} at position {position} is outside vocabulary of size {logits.cols}"
        raise InvalidToken(msg)
    return targets


def _one_hot(targets, vocab):
    one_hot = np.zeros((targets.size, vocab))
    one_hot[np.arange(targets.size), targets] = 1.0
    return one_hot


def cross_entropy(logits, targets):
    """
    Mean negative log-likelihood of the targets.

    Args:
        logits (Tensor): (T, V) scores
        targets (sequence of int): T token ids

    Returns:
        LossResult: value and gradient (softmax - one_hot) / T
    """
    logits = as_tensor(logits)
    targets = _check_targets(logits, targets)
    log_probs = log_softmax_rows(logits).values
    positions = np.arange(targets.size)
    value = float(-np.mean(log_probs[positions, targets]))
    grad = (np.exp(log_probs) - _one_hot(targets, logits.cols)) / targets.size
    return LossResult(value, Tensor(grad))


def focal(logits, targets, gamma=DEFAULT_GAMMA):
    """
    Focal loss: cross-entropy scaled by (1 - p_t)^gamma.

    gamma = 0 reduces exactly to cross_entropy.
    """
    if not gamma >= 0:
        msg = f"Focal gamma must be >= 0, got {gamma}"
        raise ConfigError(msg)
    logits = as_tensor(logits)
    targets = _check_targets(logits, targets)
    log_probs = log_softmax_rows(logits).values
    probs = np.exp(log_probs)
    positions = np.arange(targets.size)
    log_pt = log_probs[positions, targets]
    pt = probs[positions, targets]
    one_minus = 1.0 - pt
    modulating = one_minus**gamma
    value = float(np.mean(modulating * -log_pt))

    # d loss_t / d z = coefficient_t * (p - one_hot), with
    # coefficient_t = (1-p)^gamma - gamma * p * (1-p)^(gamma-1) * log p
    if gamma == 0:
        coefficient = np.ones_like(pt)
    else:
        safe = np.where(one_minus > 0, one_minus, 1.0)
        correction = np.where(one_minus > 0, gamma * pt * safe ** (gamma - 1) * log_pt, 0.0)
        coefficient = modulating - correction
    grad = coefficient[:, None] * (probs - _one_hot(targets, logits.cols)) / targets.size
    return LossResult(value, Tensor(grad))


def dice(logits, targets, smooth=DEFAULT_DICE_SMOOTH):
    """
    Soft Dice loss over the flattened (T*V) probability and one-hot arrays.

    coeff = (2 sum(p*g) + smooth) / (sum(p) + sum(g) + smooth), value = 1 - coeff.
    """
    if not smooth > 0:
        msg = f"Dice smoothing must be > 0, got {smooth}"
        raise ConfigError(msg)
    logits = as_tensor(logits)
    targets = _check_targets(logits, targets)
    probs = np.exp(log_softmax_rows(logits).values)
    one_hot = _one_hot(targets, logits.cols)
    numerator = 2.0 * np.sum(probs * one_hot) + smooth
    denominator = np.sum(probs) + np.sum(one_hot) + smooth
    coeff = numerator / denominator
    value = float(1.0 - coeff)

    grad_probs = -(2.0 * one_hot * denominator - numerator) / denominator**2
    inner = np.sum(probs * grad_probs, axis=1, keepdims=True)
    grad = probs * (grad_probs - inner)
    return LossResult(value, Tensor(grad))


def composite(spec, parts):
    """
    Weighted sum of pre-evaluated losses.

    Args:
        spec (CompositeSpec): mixing weights
        parts (dict): name -> LossResult; every positively weighted name must be present

    Returns:
        LossResult: sum of w * value and sum of w * grad
    """
    missing = [name for name in spec.active() if name not in parts]
    if missing:
        msg = f"Composite objective is missing evaluated component(s): {', '.join(missing)}"
        raise MissingComponent(msg)
    value = 0.0
    grad = None
    for name in spec.active():
        weight = spec.weight(name)
        part = parts[name]
        if grad is None:
            grad = weight * part.grad.values
        else:
            if part.grad.shape != grad.shape:
                msg = f"Component {name} gradient {part.grad.shape} does not match {grad.shape}"
                raise InvalidShape(msg)
            grad = grad + weight * part.grad.values
        value += weight * part.value
    logger.debug("composite %s -> %.6g", spec.to_dict(), value)
    converged = all(parts[name].converged for name in spec.active())
    return LossResult(value, Tensor(grad), converged)
