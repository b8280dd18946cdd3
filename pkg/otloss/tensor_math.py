"""
Dense 2-D float64 tensors and the handful of operations the losses need.

Tensors wrap a read-only numpy array; shapes are validated when an
operation is entered. The finite-difference checker in this module is the
reference every analytic gradient in the package is tested against.
"""

import json
import logging
import math
from pathlib import Path

import numpy as np
from scipy.special import log_softmax, softmax

from otloss.config import DEFAULT_GRAD_STEP, load_json
from otloss.errors import ConfigError, InvalidShape, NumericalFailure

logger = logging.getLogger(__name__)


# ============================================================================
# TENSOR TYPE
# ============================================================================


class Tensor:
    """
    Immutable dense matrix of 64-bit floats.

    Attributes:
        rows (int): number of rows
        cols (int): number of columns
        values (np.ndarray): read-only (rows, cols) float64 array
    """

    __slots__ = ("_values",)

    def __init__(self, values):
        """
        Build a tensor from anything numpy can turn into a 2-D float array.

        Args:
            values: nested sequence or array of shape (rows, cols)

        Raises:
            InvalidShape: input is not two-dimensional
            NumericalFailure: input contains NaN or Inf
        """
        array = np.array(values, dtype=np.float64)
        if array.ndim != 2:  # noqa: PLR2004
            msg = f"Tensor must be 2-D, got shape {array.shape}"
            raise InvalidShape(msg)
        if not np.all(np.isfinite(array)):
            msg = f"Tensor of shape {array.shape} contains non-finite entries"
            raise NumericalFailure(msg)
        array.setflags(write=False)
        self._values = array

    @classmethod
    def from_flat(cls, rows, cols, data):
        """Build a tensor from row-major flat data, rejecting length mismatches."""
        data = list(data)
        if rows < 0 or cols < 0 or len(data) != rows * cols:
            msg = f"Shape [{rows}, {cols}] expects {rows * cols} values, got {len(data)}"
            raise InvalidShape(msg)
        return cls(np.asarray(data, dtype=np.float64).reshape(rows, cols))

    @classmethod
    def zeros(cls, rows, cols):
        return cls(np.zeros((rows, cols)))

    @property
    def values(self):
        return self._values

    @property
    def rows(self):
        return self._values.shape[0]

    @property
    def cols(self):
        return self._values.shape[1]

    @property
    def shape(self):
        return self._values.shape

    @property
    def data(self):
        """Row-major flat tuple of the entries."""
        return tuple(self._values.ravel().tolist())

    def __eq__(self, other):
        if not isinstance(other, Tensor):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self._values, other._values))

    def __hash__(self):
        return hash((self.shape, self._values.tobytes()))

    def __repr__(self):
        return f"Tensor({self.rows}x{self.cols})"

    def __str__(self):
        return f"Tensor({self._values.tolist()})"


def as_tensor(value):
    """Return value unchanged if it is a Tensor, else wrap it."""
    return value if isinstance(value, Tensor) else Tensor(value)


# ============================================================================
# TENSOR FILE FORMAT
# ============================================================================


def tensor_to_json(tensor):
    """Return the {"shape": [r, c], "data": [...]} representation."""
    return {"shape": [tensor.rows, tensor.cols], "data": list(tensor.data)}


def tensor_from_json(obj):
    """
    Parse the tensor JSON representation.

    Raises:
        InvalidShape: missing keys, malformed shape, or shape/data length mismatch
    """
    if not isinstance(obj, dict) or "shape" not in obj or "data" not in obj:
        msg = 'Tensor JSON must be an object with "shape" and "data"'
        raise InvalidShape(msg)
    shape = obj["shape"]
    if not isinstance(shape, list) or len(shape) != 2:  # noqa: PLR2004
        msg = f"Tensor shape must be [rows, cols], got {shape!r}"
        raise InvalidShape(msg)
    rows, cols = (int(s) for s in shape)
    return Tensor.from_flat(rows, cols, [float(v) for v in obj["data"]])


def save_tensor(tensor, path):
    Path(path).write_text(json.dumps(tensor_to_json(tensor)), encoding="utf-8")


def load_tensor(path):
    return tensor_from_json(load_json(path))


# ============================================================================
# OPERATIONS
# ============================================================================


def _require_non_empty(tensor, what):
    if tensor.rows == 0 or tensor.cols == 0:
        msg = f"{what} needs a non-empty tensor, got shape {tensor.shape}"
        raise InvalidShape(msg)


def softmax_rows(logits):
    """
    Row-wise softmax with per-row max subtraction.

    Args:
        logits (Tensor): (rows, cols) scores

    Returns:
        Tensor: same shape, each row a probability vector
    """
    logits = as_tensor(logits)
    _require_non_empty(logits, "softmax_rows")
    return Tensor(softmax(logits.values, axis=1))


def log_softmax_rows(logits):
    logits = as_tensor(logits)
    _require_non_empty(logits, "log_softmax_rows")
    return Tensor(log_softmax(logits.values, axis=1))


def matmul(a, b):
    """
    Matrix product a·b.

    Raises:
        InvalidShape: a.cols != b.rows
    """
    a = as_tensor(a)
    b = as_tensor(b)
    if a.cols != b.rows:
        msg = f"matmul shape mismatch: {a.shape} x {b.shape}"
        raise InvalidShape(msg)
    return Tensor(a.values @ b.values)


def finite_diff_grad(f, x, h=DEFAULT_GRAD_STEP):
    """
    Central finite-difference gradient of a scalar function of a tensor.

    Args:
        f (callable): maps a Tensor to a float
        x (Tensor): evaluation point
        h (float): step size, > 0

    Returns:
        Tensor: (f(x + h e_ij) - f(x - h e_ij)) / 2h for every entry

    Raises:
        ConfigError: h is not positive
        NumericalFailure: f returned a non-finite value
    """
    x = as_tensor(x)
    if not h > 0:
        msg = f"finite_diff_grad step must be positive, got {h}"
        raise ConfigError(msg)
    base = x.values
    grad = np.zeros_like(base)
    for index in np.ndindex(base.shape):
        shifted = base.copy()
        shifted[index] = base[index] + h
        f_plus = float(f(Tensor(shifted)))
        shifted[index] = base[index] - h
        f_minus = float(f(Tensor(shifted)))
        if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
            msg = f"Non-finite function value at entry {index}: {f_plus}, {f_minus}"
            raise NumericalFailure(msg)
        grad[index] = (f_plus - f_minus) / (2 * h)
    return Tensor(grad)


def max_relative_error(analytic, numeric, floor=1e-8):
    """
    Largest entrywise relative error between two gradients.

    The denominator is max(|analytic|, |numeric|, floor) so entries where both
    gradients vanish do not blow up.
    """
    analytic = as_tensor(analytic).values
    numeric = as_tensor(numeric).values
    if analytic.shape != numeric.shape:
        msg = f"Gradient shapes differ: {analytic.shape} vs {numeric.shape}"
        raise InvalidShape(msg)
    if analytic.size == 0:
        return 0.0
    denominator = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denominator))
