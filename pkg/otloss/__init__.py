"""Composite recipe-generation losses and recipe-specific evaluation metrics."""

__version__ = "0.1.0"
