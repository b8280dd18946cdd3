"""
Point clouds in embedding space built from a token span.

Predicted clouds use soft embeddings softmax(logits)·E, target clouds use
plain embedding lookups. Every point carries the same weight.
"""

from dataclasses import dataclass

import numpy as np

from otloss.errors import InputParseError, InvalidShape, InvalidSpan, InvalidToken
from otloss.tensor_math import Tensor, as_tensor, matmul, softmax_rows


@dataclass(frozen=True)
class SpanMask:
    """Half-open token range [start, end)."""

    start: int
    end: int

    @classmethod
    def parse(cls, text):
        """Parse the CLI form "start:end"."""
        try:
            start_text, end_text = text.split(":")
            return cls(int(start_text), int(end_text))
        except ValueError as e:
            msg = f"Span must look like start:end, got {text!r}"
            raise InputParseError(msg) from e

    @classmethod
    def full(cls, length):
        return cls(0, length)

    def __len__(self):
        return self.end - self.start

    def validate(self, length):
        """Raise InvalidSpan unless 0 <= start < end <= length."""
        if not 0 <= self.start < self.end <= length:
            msg = f"Span [{self.start}, {self.end}) is not inside a sequence of length {length}"
            raise InvalidSpan(msg)
        return self


@dataclass(frozen=True)
class PointCloud:
    """
    Uniformly weighted set of points.

    Attributes:
        points (Tensor): (n, d), one embedded token per row
        weights (np.ndarray): (n,) non-negative, summing to 1
    """

    points: Tensor
    weights: np.ndarray

    @classmethod
    def uniform(cls, points):
        points = as_tensor(points)
        if points.rows < 1:
            msg = "A point cloud needs at least one point"
            raise InvalidShape(msg)
        weights = np.full(points.rows, 1.0 / points.rows)
        weights.setflags(write=False)
        return cls(points, weights)

    @property
    def size(self):
        return self.points.rows

    @property
    def dim(self):
        return self.points.cols


def soft_cloud(logits, embeddings, span):
    """
    Soft-embedding cloud of the predicted tokens inside span.

    Args:
        logits (Tensor): (T, V) scores
        embeddings (Tensor): (V, d) token embedding matrix
        span (SpanMask): rows of logits to embed

    Returns:
        PointCloud: len(span) points softmax(logits_t)·E
    """
    logits = as_tensor(logits)
    embeddings = as_tensor(embeddings)
    if logits.cols != embeddings.rows:
        msg = f"logits {logits.shape} do not match embeddings {embeddings.shape}"
        raise InvalidShape(msg)
    span.validate(logits.rows)
    probabilities = softmax_rows(logits.values[span.start : span.end])
    return PointCloud.uniform(matmul(probabilities, embeddings))


def hard_cloud(token_ids, embeddings, span):
    """
    Embedding-lookup cloud of the target tokens inside span.

    Args:
        token_ids (sequence of int): target sequence
        embeddings (Tensor): (V, d) token embedding matrix
        span (SpanMask): positions of token_ids to embed
    """
    embeddings = as_tensor(embeddings)
    ids = list(token_ids)
    span.validate(len(ids))
    vocab = embeddings.rows
    for position, token in enumerate(ids):
        if not 0 <= token < vocab:
            msg = f"Token id {token} at position {position} is outside vocabulary of size {vocab}"
            raise InvalidToken(msg)
    rows = embeddings.values[ids[span.start : span.end]]
    return PointCloud.uniform(rows)


def soft_cloud_vjp(logits, embeddings, span, grad_points):
    """
    Pull a gradient on the soft-cloud points back to the logits.

    Args:
        logits (Tensor): (T, V) scores used to build the cloud
        embeddings (Tensor): (V, d) embedding matrix
        span (SpanMask): span the cloud was built from
        grad_points (np.ndarray): (len(span), d) gradient on the points

    Returns:
        np.ndarray: (T, V) gradient, zero outside the span rows
    """
    logits = as_tensor(logits)
    embeddings = as_tensor(embeddings)
    probabilities = softmax_rows(logits.values[span.start : span.end]).values
    grad_probabilities = np.asarray(grad_points) @ embeddings.values.T
    inner = np.sum(probabilities * grad_probabilities, axis=1, keepdims=True)
    grad = np.zeros(logits.shape)
    grad[span.start : span.end] = probabilities * (grad_probabilities - inner)
    return grad
