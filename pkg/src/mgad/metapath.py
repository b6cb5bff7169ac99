"""Label-typed metapath random walks and anomaly-subgraph generation.

Nodes carry one of two label types: O (revealed anomaly) or X (unknown). A
metapath schema such as ``XOX`` constrains which random walks are kept; the
anomaly subgraph is the induced subgraph over every node of every kept walk.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ._validation import ValidationError, check_int_range
from .graph import LABEL_TYPES, O, X, induced_subgraph

DEFAULT_SCHEMAS = {3: ("XOX",), 4: ("XOOX",), 5: ("XOXOX",)}


@dataclass(frozen=True)
class MetapathSchema:
    """Ordered pattern of label types, e.g. ``MetapathSchema(("X", "O", "X"))``."""

    pattern: tuple

    def __post_init__(self):
        if len(self.pattern) < 2:
            raise ValidationError("a metapath schema needs at least two node types")
        if any(t not in LABEL_TYPES for t in self.pattern):
            raise ValidationError(f"schema {self.pattern!r} uses types outside O/X")

    def __len__(self):
        return len(self.pattern)

    def __str__(self):
        return "".join(self.pattern)

    @property
    def mask(self):
        """Boolean pattern, ``True`` at O positions."""
        return np.array([t == O for t in self.pattern], dtype=bool)

    @property
    def has_anomaly(self):
        return O in self.pattern


def parse_schema(text, permissive=False):
    """Parse a schema string like ``"XOX"`` (case-insensitive).

    All-X patterns cannot anchor an anomaly subgraph and are rejected unless
    ``permissive`` is set.
    """
    cleaned = str(text).strip().upper().replace("-", "")
    if not cleaned:
        raise ValidationError("empty metapath schema")
    bad = sorted(set(cleaned) - set(LABEL_TYPES))
    if bad:
        raise ValidationError(f"illegal character {bad[0]!r} in schema {text!r}")
    schema = MetapathSchema(tuple(cleaned))
    if not schema.has_anomaly and not permissive:
        raise ValidationError(f"schema {text!r} contains no O type")
    return schema


def parse_schemas(text, permissive=False):
    """Parse a comma-separated list such as ``"XOX,OXO"``."""
    parts = [p for p in str(text).split(",") if p.strip()]
    if not parts:
        raise ValidationError("no metapath schema given")
    return tuple(parse_schema(p, permissive=permissive) for p in parts)


@dataclass(frozen=True)
class SamplerConfig:
    """Settings of the anomaly-subgraph sampler.

    ``strategy="rejection"`` draws each step uniformly among all neighbors and
    filters finished walks by schema. ``"constrained"`` draws each step only
    among neighbors of the type the schema requires next.
    """

    walks_per_node: int = 1
    walk_length: int = 3
    schemas: tuple = None
    seed: int = 0
    strategy: str = "rejection"
    min_length: int = 3
    max_length: int = 5
    permissive: bool = False

    def __post_init__(self):
        check_int_range(self.walks_per_node, "walks_per_node", 1, 5)
        check_int_range(self.walk_length, "walk_length", self.min_length, self.max_length)
        if self.strategy not in ("rejection", "constrained"):
            raise ValidationError(f"unknown sampling strategy {self.strategy!r}")
        schemas = self.schemas
        if schemas is None:
            schemas = DEFAULT_SCHEMAS.get(self.walk_length)
            if schemas is None:
                raise ValidationError(f"no default schema for walk length {self.walk_length}")
        if isinstance(schemas, (str, MetapathSchema)):
            schemas = (schemas,)
        parsed = tuple(
            s if isinstance(s, MetapathSchema) else parse_schema(s, permissive=self.permissive)
            for s in schemas
        )
        if not parsed:
            raise ValidationError("at least one schema is required")
        for s in parsed:
            if len(s) != self.walk_length:
                raise ValidationError(
                    f"schema {s} has length {len(s)} but walk_length is {self.walk_length}"
                )
            if not s.has_anomaly and not self.permissive:
                raise ValidationError(f"schema {s} contains no O type")
        object.__setattr__(self, "schemas", parsed)


@dataclass
class AnomalySubgraph:
    """Induced subgraph over the nodes of all accepted walks."""

    graph: object
    index_map: np.ndarray
    walks: np.ndarray
    schemas: tuple = ()
    n_steps: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_nodes(self):
        return len(self.index_map)

    @property
    def is_empty(self):
        return len(self.index_map) == 0


def node_rng(seed, v):
    """Independent random stream for walks started at node ``v``."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, int(v)])


def random_walk(graph, start, length, rng):
    """Uniform random walk of exactly ``length`` nodes starting at ``start``.

    Returns the walk as a list, or ``None`` when a node that must be stepped
    from has no neighbors (dead end). Walks may revisit nodes.
    """
    walk, _ = _walk(graph.adjacency.indptr, graph.adjacency.indices, start, length, rng)
    return walk


def _walk(indptr, indices, start, length, rng):
    walk = [int(start)]
    cur = int(start)
    steps = 0
    for _ in range(length - 1):
        lo, hi = indptr[cur], indptr[cur + 1]
        if hi == lo:
            return None, steps
        cur = int(indices[lo + rng.integers(hi - lo)])
        walk.append(cur)
        steps += 1
    return walk, steps


def _constrained_walk(indptr, indices, labels, start, schema_mask, rng):
    if labels[start] != schema_mask[0]:
        return None, 0
    walk = [int(start)]
    cur = int(start)
    steps = 0
    for want in schema_mask[1:]:
        nbrs = indices[indptr[cur]:indptr[cur + 1]]
        nbrs = nbrs[labels[nbrs] == want]
        if nbrs.size == 0:
            return None, steps
        cur = int(nbrs[rng.integers(nbrs.size)])
        walk.append(cur)
        steps += 1
    return walk, steps


def matches_schema(walk, labels, schema):
    """True when the label types along ``walk`` equal ``schema`` position-wise."""
    if len(walk) != len(schema):
        raise ValidationError(f"walk of length {len(walk)} vs schema of length {len(schema)}")
    labels = np.asarray(labels)
    if labels.dtype != bool:
        labels = np.array([str(t).upper() == O for t in labels])
    return bool(np.array_equal(labels[np.asarray(walk, dtype=np.int64)], schema.mask))


def _sample_nodes(graph, config, nodes):
    adj = graph.adjacency
    indptr, indices = adj.indptr, adj.indices
    labels = graph.labels
    masks = [s.mask for s in config.schemas]
    accepted = []
    steps = 0
    for v in nodes:
        rng = node_rng(config.seed, v)
        for _ in range(config.walks_per_node):
            if config.strategy == "rejection":
                walk, k = _walk(indptr, indices, v, config.walk_length, rng)
                steps += k
                if walk is None:
                    continue
                types = labels[walk]
                if any(np.array_equal(types, m) for m in masks):
                    accepted.append(walk)
            else:
                for m in masks:
                    walk, k = _constrained_walk(indptr, indices, labels, v, m, rng)
                    steps += k
                    if walk is not None:
                        accepted.append(walk)
    return accepted, steps


def generate_anomaly_subgraph(graph, config, n_jobs=1):
    """Sample metapath-conforming walks from every node and induce a subgraph.

    Each node ``v`` gets ``config.walks_per_node`` attempts drawn from its own
    random stream, so the result does not depend on ``n_jobs``.
    """
    n = graph.n_nodes
    if n_jobs is None or n_jobs <= 1 or n < 2:
        accepted, steps = _sample_nodes(graph, config, range(n))
    else:
        chunks = np.array_split(np.arange(n), n_jobs)
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(lambda c: _sample_nodes(graph, config, c), chunks))
        accepted = [w for part, _ in parts for w in part]
        steps = sum(s for _, s in parts)
    walks = np.array(accepted, dtype=np.int64).reshape(-1, config.walk_length)
    sub, index_map = induced_subgraph(graph, np.unique(walks))
    return AnomalySubgraph(
        graph=sub, index_map=index_map, walks=walks, schemas=config.schemas, n_steps=steps
    )


def ego_net_subgraph(graph):
    """Union of the 1-hop ego networks around every O-labeled node."""
    anchors = np.flatnonzero(graph.labels)
    adj = graph.adjacency
    members = set(anchors.tolist())
    for v in anchors:
        members.update(adj.indices[adj.indptr[v]:adj.indptr[v + 1]].tolist())
    sub, index_map = induced_subgraph(graph, sorted(members))
    return AnomalySubgraph(
        graph=sub, index_map=index_map, walks=np.empty((0, 0), dtype=np.int64),
        meta={"kind": "ego-net"},
    )


def empty_subgraph(graph):
    sub, index_map = induced_subgraph(graph, [])
    return AnomalySubgraph(graph=sub, index_map=index_map, walks=np.empty((0, 0), dtype=np.int64))


def subgraph_from_nodes(graph, nodes, walks=None):
    sub, index_map = induced_subgraph(graph, nodes)
    if walks is None:
        walks = np.empty((0, 0), dtype=np.int64)
    return AnomalySubgraph(graph=sub, index_map=index_map, walks=np.asarray(walks, dtype=np.int64))


def typed_transition_probability(graph, from_type, to_type, labels=None):
    """Row-normalized typed adjacency ``D^-1 W`` between two label types.

    ``W`` keeps only edges from ``from_type`` nodes to ``to_type`` nodes; rows
    without any such edge stay zero. The result is an ``n x n`` CSR matrix in
    parent indexing.
    """
    labels = graph.labels if labels is None else np.asarray(labels, dtype=bool)
    for t in (from_type, to_type):
        if t not in LABEL_TYPES:
            raise ValidationError(f"unknown label type {t!r}")
    src = labels == (from_type == O)
    dst = labels == (to_type == O)
    w = sp.diags(src.astype(np.float64)) @ graph.adjacency @ sp.diags(dst.astype(np.float64))
    w = sp.csr_matrix(w)
    w.eliminate_zeros()
    deg = np.asarray(w.sum(axis=1)).ravel()
    inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    p = sp.csr_matrix(sp.diags(inv) @ w)
    p.sort_indices()
    return p


def write_walks(path, walks):
    with open(path, "w") as fh:
        for walk in walks:
            fh.write(" ".join(str(int(v)) for v in walk) + "\n")


def read_walks(path):
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rows.append([int(tok) for tok in line.split()])
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: walk must be integers") from None
    if not rows:
        return np.empty((0, 0), dtype=np.int64)
    if len({len(r) for r in rows}) != 1:
        raise ValidationError(f"{path}: walks have mixed lengths")
    return np.array(rows, dtype=np.int64)


__all__ = [
    "O", "X", "MetapathSchema", "SamplerConfig", "AnomalySubgraph", "parse_schema",
    "parse_schemas", "random_walk", "matches_schema", "generate_anomaly_subgraph",
    "typed_transition_probability", "ego_net_subgraph",
]
