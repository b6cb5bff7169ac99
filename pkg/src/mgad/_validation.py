"""Input validation helpers shared by the estimator and the pipeline."""

import numbers

import numpy as np


class ValidationError(ValueError):
    """Raised when user-supplied input or configuration is rejected."""


def check_node_ids(ids, n):
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise ValidationError(f"node ids must lie in [0, {n})")
    return ids


def check_fraction(value, name, *, low=0.0, high=1.0, low_inclusive=True):
    if not isinstance(value, numbers.Real):
        raise ValidationError(f"{name} must be a real number, got {value!r}")
    ok_low = value >= low if low_inclusive else value > low
    if not (ok_low and value <= high):
        bracket = "[" if low_inclusive else "("
        raise ValidationError(f"{name} must lie in {bracket}{low}, {high}], got {value}")
    return float(value)


def check_int_range(value, name, low, high=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ValidationError(f"{name} must be an integer, got {value!r}")
    if value < low or (high is not None and value > high):
        span = f"[{low}, {high}]" if high is not None else f">= {low}"
        raise ValidationError(f"{name} must be {span}, got {value}")
    return int(value)


def check_graph(graph):
    """Verify the structural invariants of an :class:`AttributedGraph`."""
    from .graph import AttributedGraph

    if not isinstance(graph, AttributedGraph):
        raise ValidationError(f"expected an AttributedGraph, got {type(graph).__name__}")
    adj = graph.adjacency
    n = adj.shape[0]
    if adj.shape != (n, n):
        raise ValidationError("adjacency must be square")
    if graph.attributes.ndim != 2 or graph.attributes.shape[0] != n:
        raise ValidationError(
            f"attribute matrix has {graph.attributes.shape[0]} rows, expected {n}"
        )
    if adj.diagonal().any():
        raise ValidationError("adjacency stores self-loops")
    if (adj != adj.T).nnz:
        raise ValidationError("adjacency is not symmetric")
    if graph.labels.shape != (n,):
        raise ValidationError("label vector length does not match node count")
    return graph


def check_finite(array, what):
    if not np.all(np.isfinite(array)):
        raise FloatingPointError(f"non-finite values in {what}")
    return array
