"""Evaluation metrics for predicted route flight counts."""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError, UndefinedCorrelationError


def pearson(actual, predicted) -> float:
    """Sample Pearson correlation, clamped to [-1, 1]."""
    x = np.asarray(actual, dtype=float)
    y = np.asarray(predicted, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise InvalidInputError("pearson needs two equal-length vectors of length >= 2")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("zero variance")
    return float(np.clip((dx @ dy) / np.sqrt(sxx * syy), -1.0, 1.0))


def pearson_or_none(actual, predicted) -> float | None:
    try:
        return pearson(actual, predicted)
    except UndefinedCorrelationError:
        return None


def norm_of_error(actual, predicted) -> float:
    """Euclidean norm of the difference between two probability vectors."""
    a = np.asarray(actual, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if a.shape != p.shape:
        raise InvalidInputError(f"dimension mismatch: {a.shape} vs {p.shape}")
    return float(np.linalg.norm(p - a))
