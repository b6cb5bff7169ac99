"""Attributed graph container and adjacency normalization."""

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from ._validation import ValidationError, check_node_ids

#: Label type of a node revealed as a known anomaly.
O = "O"
#: Label type of a node whose status is unknown.
X = "X"
LABEL_TYPES = (O, X)


@dataclass(frozen=True, eq=False)
class AttributedGraph:
    """Undirected, unweighted graph with dense node attributes.

    Parameters
    ----------
    adjacency : scipy.sparse.csr_matrix of shape (n, n)
        Symmetric 0/1 matrix without stored self-loops.
    attributes : ndarray of shape (n, d)
    labels : ndarray of shape (n,), dtype bool
        ``True`` where the node carries label type O (known anomaly), ``False``
        for type X.
    truth : ndarray of shape (n,), dtype bool, or None
        Ground-truth anomaly flags; only evaluation reads them.
    """

    adjacency: sp.csr_matrix
    attributes: np.ndarray
    labels: np.ndarray
    truth: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_nodes(self):
        return self.adjacency.shape[0]

    @property
    def n_edges(self):
        return self.adjacency.nnz // 2

    @property
    def n_features(self):
        return self.attributes.shape[1]

    def label_types(self):
        """Per-node label type as a list of ``"O"``/``"X"`` strings."""
        return [O if flag else X for flag in self.labels]

    def edges(self):
        """Upper-triangular edge list as an ``(m, 2)`` int array, sorted."""
        upper = sp.triu(self.adjacency, k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        return np.column_stack([upper.row[order], upper.col[order]]).astype(np.int64)

    def with_(self, **changes):
        changes.setdefault("meta", dict(self.meta))
        return replace(self, **changes)

    def __eq__(self, other):
        if not isinstance(other, AttributedGraph):
            return NotImplemented
        if self.adjacency.shape != other.adjacency.shape:
            return False
        same_truth = (self.truth is None and other.truth is None) or (
            self.truth is not None
            and other.truth is not None
            and np.array_equal(self.truth, other.truth)
        )
        return (
            (self.adjacency != other.adjacency).nnz == 0
            and np.array_equal(self.attributes, other.attributes)
            and np.array_equal(self.labels, other.labels)
            and same_truth
        )

    __hash__ = None


def _adjacency_from_edges(edges, n):
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        bad = edges[(edges < 0).any(axis=1) | (edges >= n).any(axis=1)][0]
        raise ValidationError(f"edge ({bad[0]}, {bad[1]}) references a node outside [0, {n})")
    edges = edges[edges[:, 0] != edges[:, 1]]
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    adj = sp.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n)).tocsr()
    adj.sum_duplicates()
    adj.data[:] = 1.0
    adj.sort_indices()
    return adj


def build_graph(edges, attributes, labels=None, truth=None, n_nodes=None):
    """Build an :class:`AttributedGraph` from an edge list.

    Edges are symmetrized and deduplicated; self-edges are dropped. ``labels``
    may be a boolean mask (``True`` = O) or a sequence of ``"O"``/``"X"``
    strings; it defaults to all X.
    """
    attributes = np.array(attributes, dtype=np.float64, copy=True)
    if attributes.ndim == 1:
        attributes = attributes.reshape(-1, 1)
    if attributes.ndim != 2:
        raise ValidationError("attributes must be a 2-D matrix")
    if not np.all(np.isfinite(attributes)):
        raise ValidationError("attributes contain non-finite values")
    n = attributes.shape[0]
    if n_nodes is not None and n_nodes != n:
        raise ValidationError(f"attribute matrix has {n} rows, expected {n_nodes}")
    adj = _adjacency_from_edges(edges, n)
    return AttributedGraph(
        adjacency=adj,
        attributes=attributes,
        labels=_coerce_labels(labels, n),
        truth=None if truth is None else _coerce_mask(truth, n, "truth"),
    )


def _coerce_mask(mask, n, name):
    mask = np.asarray(mask)
    if mask.shape != (n,):
        raise ValidationError(f"{name} has {mask.shape[0] if mask.ndim else 0} entries, expected {n}")
    return mask.astype(bool)


def _coerce_labels(labels, n):
    if labels is None:
        return np.zeros(n, dtype=bool)
    labels = list(labels) if not isinstance(labels, np.ndarray) else labels
    if len(labels) and isinstance(labels[0], str):
        upper = [str(t).upper() for t in labels]
        bad = [t for t in upper if t not in LABEL_TYPES]
        if bad:
            raise ValidationError(f"unknown label type {bad[0]!r}")
        labels = np.array([t == O for t in upper], dtype=bool)
    return _coerce_mask(labels, n, "labels")


def sym_normalize(adjacency):
    """Return ``D^-1/2 (A + I) D^-1/2`` as CSR, with ``D_ii = 1 + deg(i)``.

    Accepts an :class:`AttributedGraph` or a sparse adjacency matrix.
    """
    if isinstance(adjacency, AttributedGraph):
        adjacency = adjacency.adjacency
    adj = sp.csr_matrix(adjacency, dtype=np.float64)
    n = adj.shape[0]
    a_tilde = (adj + sp.identity(n, format="csr")).tocsr()
    a_tilde.sort_indices()
    deg = np.asarray(a_tilde.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(deg)
    row_idx = np.repeat(np.arange(n), np.diff(a_tilde.indptr))
    # fixed factor order so (i, j) and (j, i) round identically
    lo = np.minimum(row_idx, a_tilde.indices)
    hi = np.maximum(row_idx, a_tilde.indices)
    data = a_tilde.data * (inv_sqrt[lo] * inv_sqrt[hi])
    return sp.csr_matrix((data, a_tilde.indices.copy(), a_tilde.indptr.copy()), shape=(n, n))


def neighbors(graph, v):
    """Sorted neighbor list of node ``v`` (never includes ``v`` itself)."""
    n = graph.n_nodes
    if not 0 <= int(v) < n:
        raise IndexError(f"node {v} outside [0, {n})")
    adj = graph.adjacency
    return adj.indices[adj.indptr[v]:adj.indptr[v + 1]].tolist()


def induced_subgraph(graph, nodes):
    """Induced subgraph over ``nodes``.

    Returns ``(subgraph, index_map)`` where ``index_map[i]`` is the parent id
    of subgraph node ``i``. Nodes are kept in ascending parent order.
    """
    index_map = np.unique(np.asarray(list(nodes), dtype=np.int64))
    check_node_ids(index_map, graph.n_nodes)
    adj = graph.adjacency[index_map][:, index_map].tocsr()
    adj.sort_indices()
    sub = AttributedGraph(
        adjacency=adj,
        attributes=graph.attributes[index_map].copy(),
        labels=graph.labels[index_map].copy(),
        truth=None if graph.truth is None else graph.truth[index_map].copy(),
    )
    return sub, index_map
