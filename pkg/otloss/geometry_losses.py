"""
Entropic optimal transport between point clouds.

Log-domain Sinkhorn iterations, the debiased Sinkhorn divergence
S_eps(a, b) = OT(a, b) - OT(a, a)/2 - OT(b, b)/2, and the topological loss
that compares the soft-embedding cloud of the predicted ingredient span with
the embedding cloud of the gold span.

OT values are the transport cost <plan, C> of the entropic plan unless
SinkhornConfig.include_entropy is set, in which case the eps*KL term is added.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from otloss.config import DEFAULT_EPSILON, DEFAULT_MAX_ITERS, DEFAULT_TOLERANCE
from otloss.errors import ConfigError, InvalidShape, NumericalFailure
from otloss.soft_embedding import hard_cloud, soft_cloud, soft_cloud_vjp
from otloss.tensor_math import Tensor
from otloss.token_losses import LossResult

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SinkhornConfig:
    """
    Sinkhorn solver settings.

    Attributes:
        epsilon (float): entropic regularisation, in squared-distance units
        max_iters (int): iteration budget
        tolerance (float): L1 violation of the column marginal that counts as converged
        include_entropy (bool): report <P, C> + eps*KL(P | a x b) instead of <P, C>
    """

    epsilon: float = DEFAULT_EPSILON
    max_iters: int = DEFAULT_MAX_ITERS
    tolerance: float = DEFAULT_TOLERANCE
    include_entropy: bool = False

    def __post_init__(self):
        errors = []
        if not self.epsilon > 0:
            errors.append(f"epsilon must be > 0, got {self.epsilon}")
        if not (isinstance(self.max_iters, int) and self.max_iters >= 1):
            errors.append(f"max_iters must be an integer >= 1, got {self.max_iters!r}")
        if not self.tolerance > 0:
            errors.append(f"tolerance must be > 0, got {self.tolerance}")
        if errors:
            msg = "Invalid Sinkhorn config: " + "; ".join(errors)
            raise ConfigError(msg)

    @classmethod
    def from_dict(cls, obj):
        if not isinstance(obj, dict):
            msg = "sinkhorn settings must be a JSON object"
            raise ConfigError(msg)
        known = {"epsilon", "max_iters", "tolerance", "include_entropy"}
        unknown = sorted(set(obj) - known)
        if unknown:
            msg = f"Unknown sinkhorn setting(s): {', '.join(unknown)}"
            raise ConfigError(msg)
        return cls(**obj)


@dataclass(frozen=True)
class TransportResult:
    """
    Outcome of one Sinkhorn solve.

    Attributes:
        cost (float): OT value under the configured convention
        plan (Tensor): (n, m) entropic coupling
        f (np.ndarray): (n,) dual potential of the source
        g (np.ndarray): (m,) dual potential of the target
        iterations_used (int): iterations actually run
        converged (bool): marginal violation fell under the tolerance
    """

    cost: float
    plan: Tensor
    f: np.ndarray
    g: np.ndarray
    iterations_used: int
    converged: bool

    def transposed(self):
        return TransportResult(
            self.cost,
            Tensor(self.plan.values.T),
            self.g,
            self.f,
            self.iterations_used,
            self.converged,
        )


# ============================================================================
# COST MATRIX
# ============================================================================


def _squared_distances(x, y):
    difference = x[:, None, :] - y[None, :, :]
    return np.sum(difference * difference, axis=2)


def cost_matrix(a, b):
    """
    Squared Euclidean cost between every point of a and every point of b.

    Args:
        a (PointCloud): source cloud, n points
        b (PointCloud): target cloud, m points

    Returns:
        Tensor: (n, m) non-negative costs
    """
    if a.dim != b.dim:
        msg = f"Point clouds live in different dimensions: {a.dim} vs {b.dim}"
        raise InvalidShape(msg)
    return Tensor(_squared_distances(a.points.values, b.points.values))


def cost_matrix_vjp(x, y, grad_cost):
    """
    Chain a gradient on C[i][j] = |x_i - y_j|^2 to the two point sets.

    Returns:
        tuple: (gradient on x (n, d), gradient on y (m, d))
    """
    grad_cost = np.asarray(grad_cost)
    grad_x = 2.0 * (x * grad_cost.sum(axis=1)[:, None] - grad_cost @ y)
    grad_y = 2.0 * (y * grad_cost.sum(axis=0)[:, None] - grad_cost.T @ x)
    return grad_x, grad_y


# ============================================================================
# SINKHORN
# ============================================================================


def _solve(a_weights, b_weights, cost, cfg):
    if not np.all(np.isfinite(cost)):
        msg = "Cost matrix contains non-finite entries"
        raise NumericalFailure(msg)
    eps = cfg.epsilon
    log_a = np.log(a_weights)
    log_b = np.log(b_weights)
    f = np.zeros(cost.shape[0])
    g = np.zeros(cost.shape[1])
    plan = None
    converged = False
    iterations = 0
    for iterations in range(1, cfg.max_iters + 1):  # noqa: B007
        g = -eps * logsumexp(log_a[:, None] + (f[:, None] - cost) / eps, axis=0)
        f = -eps * logsumexp(log_b[None, :] + (g[None, :] - cost) / eps, axis=1)
        plan = np.exp(log_a[:, None] + log_b[None, :] + (f[:, None] + g[None, :] - cost) / eps)
        violation = float(np.sum(np.abs(plan.sum(axis=0) - b_weights)))
        if violation < cfg.tolerance:
            converged = True
            break
    if not converged:
        logger.warning(
            "Sinkhorn did not converge in %d iterations (marginal violation %.3e, eps=%g)",
            cfg.max_iters,
            violation,
            eps,
        )
    else:
        logger.debug("Sinkhorn converged in %d iterations", iterations)

    value = float(np.sum(plan * cost))
    if cfg.include_entropy:
        value += float(np.sum(plan * (f[:, None] + g[None, :] - cost)))
    if not np.isfinite(value):
        msg = f"Sinkhorn produced a non-finite cost after {iterations} iterations"
        raise NumericalFailure(msg)
    return TransportResult(value, Tensor(plan), f, g, iterations, converged)


def sinkhorn(a, b, cfg=None):
    """
    Entropic OT between two weighted point clouds.

    Args:
        a (PointCloud): source cloud
        b (PointCloud): target cloud
        cfg (SinkhornConfig, optional): solver settings, defaults when omitted

    Returns:
        TransportResult: cost, plan, potentials and convergence status. An
        unconverged solve is still returned, with converged=False.
    """
    cfg = cfg or SinkhornConfig()
    return _solve(a.weights, b.weights, cost_matrix(a, b).values, cfg)


def _cloud_key(cloud):
    return (cloud.size, cloud.dim, cloud.points.values.tobytes(), cloud.weights.tobytes())


def _cross_transport(a, b, cfg):
    # operands in a fixed order so S(a, b) and S(b, a) run the same arithmetic
    if _cloud_key(a) <= _cloud_key(b):
        return sinkhorn(a, b, cfg)
    return sinkhorn(b, a, cfg).transposed()


def transport_cost_grad(result, cost, cfg):
    """
    Gradient of the reported OT value with respect to the cost matrix.

    With the entropic term included the plan itself is the gradient. Without
    it, the plan's own dependence on C is differentiated implicitly through
    the converged potentials:
    dOT/dC_ij = P_ij * (1 - C_ij/eps + (u_i + v_j)/eps), where (u, v) solves
    [[diag(P 1), P], [P^T, diag(P^T 1)]] (u, v) = ((P*C) 1, (P*C)^T 1).

    Args:
        result (TransportResult): converged solve
        cost (np.ndarray): the (n, m) cost matrix that was solved
        cfg (SinkhornConfig): settings used for the solve

    Returns:
        np.ndarray: (n, m) gradient
    """
    plan = result.plan.values
    if cfg.include_entropy:
        return plan.copy()
    cost = np.asarray(cost)
    eps = cfg.epsilon
    n, m = plan.shape
    system = np.zeros((n + m, n + m))
    system[:n, :n] = np.diag(plan.sum(axis=1))
    system[n:, n:] = np.diag(plan.sum(axis=0))
    system[:n, n:] = plan
    system[n:, :n] = plan.T
    weighted = plan * cost
    rhs = np.concatenate([weighted.sum(axis=1), weighted.sum(axis=0)])
    solution = np.linalg.lstsq(system, rhs, rcond=None)[0]
    u, v = solution[:n], solution[n:]
    return plan * (1.0 - cost / eps + (u[:, None] + v[None, :]) / eps)


def sinkhorn_divergence(a, b, cfg=None):
    """
    Debiased Sinkhorn divergence OT(a, b) - OT(a, a)/2 - OT(b, b)/2.

    Zero when a == b, symmetric in its arguments, and equal to the squared
    distance for two single-point clouds.
    """
    cfg = cfg or SinkhornConfig()
    cross = _cross_transport(a, b, cfg).cost
    self_a = sinkhorn(a, a, cfg).cost
    self_b = sinkhorn(b, b, cfg).cost
    value = cross - 0.5 * (self_a + self_b)
    if value < -cfg.tolerance:
        logger.debug("Sinkhorn divergence slightly negative: %.3e", value)
    return value


# ============================================================================
# TOPOLOGICAL LOSS
# ============================================================================


def topological_loss(logits, target_ids, embeddings, span_pred, span_target, cfg=None):
    """
    Sinkhorn divergence between the predicted and gold clouds of a token span.

    Args:
        logits (Tensor): (T, V) scores
        target_ids (sequence of int): gold token ids
        embeddings (Tensor): (V, d) embedding matrix shared by both clouds
        span_pred (SpanMask): logits rows forming the predicted cloud
        span_target (SpanMask): target positions forming the gold cloud
        cfg (SinkhornConfig, optional): solver settings

    Returns:
        LossResult: divergence value and its gradient with respect to logits
        (zero outside span_pred rows). The gradient assumes converged solves;
        converged is False when any of the three runs hit max_iters.
    """
    cfg = cfg or SinkhornConfig()
    predicted = soft_cloud(logits, embeddings, span_pred)
    target = hard_cloud(target_ids, embeddings, span_target)
    x = predicted.points.values
    y = target.points.values

    cross_cost = _squared_distances(x, y)
    self_cost = _squared_distances(x, x)
    cross = _cross_transport(predicted, target, cfg)
    self_pred = sinkhorn(predicted, predicted, cfg)
    self_target = sinkhorn(target, target, cfg)
    value = cross.cost - 0.5 * (self_pred.cost + self_target.cost)

    grad_x, _ = cost_matrix_vjp(x, y, transport_cost_grad(cross, cross_cost, cfg))
    self_grad = transport_cost_grad(self_pred, self_cost, cfg)
    grad_self_rows, grad_self_cols = cost_matrix_vjp(x, x, self_grad)
    grad_x = grad_x - 0.5 * (grad_self_rows + grad_self_cols)

    grad = soft_cloud_vjp(logits, embeddings, span_pred, grad_x)
    logger.debug(
        "topological loss %.6g (converged: cross=%s self=%s/%s)",
        value,
        cross.converged,
        self_pred.converged,
        self_target.converged,
    )
    converged = cross.converged and self_pred.converged and self_target.converged
    return LossResult(value, Tensor(grad), converged)
