"""Dataset files, anomaly injection and label revelation.

Bundle directory layout::

    edges.txt        "u v" per line, '#' comments allowed
    attributes.txt   one whitespace-separated row per node
    truth.txt        one anomalous node id per line
    labels.txt       one O-labeled node id per line
    provenance.txt   "key = value" lines (seed, counts, clique size, ratio)
"""

import hashlib
import math
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ._rng import derive_seed
from ._validation import ValidationError, check_fraction, check_int_range
from .graph import AttributedGraph, build_graph

EDGE_FILE = "edges.txt"
ATTRIBUTE_FILE = "attributes.txt"
TRUTH_FILE = "truth.txt"
LABEL_FILE = "labels.txt"
PROVENANCE_FILE = "provenance.txt"


@dataclass
class DatasetBundle:
    graph: AttributedGraph
    name: str = "dataset"
    provenance: dict = field(default_factory=dict)


@dataclass(frozen=True)
class InjectionConfig:
    """How many anomalies to plant and with which random seed.

    ``num_structural`` nodes are split into cliques of ``clique_size``; the
    same number of nodes get a donor's attribute row. With ``donor_candidates``
    > 1 the donor is the farthest (Euclidean) of that many random candidates
    instead of a single random draw.
    """

    num_structural: int = 0
    num_attribute: int | None = None
    clique_size: int = 15
    seed: int = 0
    donor_candidates: int = 1
    order: str = "attribute-first"

    def __post_init__(self):
        check_int_range(self.clique_size, "clique_size", 1)
        check_int_range(self.num_structural, "num_structural", 0)
        if self.num_attribute is None:
            object.__setattr__(self, "num_attribute", self.num_structural)
        check_int_range(self.num_attribute, "num_attribute", 0)
        check_int_range(self.donor_candidates, "donor_candidates", 1)
        if self.num_structural % self.clique_size:
            raise ValidationError(
                f"num_structural={self.num_structural} is not a multiple of clique_size={self.clique_size}"
            )
        if self.order not in ("attribute-first", "structural-first"):
            raise ValidationError(f"unknown injection order {self.order!r}")

    @classmethod
    def for_total(cls, total, **kw):
        """Config producing ``total`` anomalies split evenly between both kinds."""
        if total % 2:
            raise ValidationError("total anomaly count must be even")
        return cls(num_structural=total // 2, num_attribute=total // 2, **kw)


# parsing ---------------------------------------------------------------------

def _data_lines(path):
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if text and not text.startswith("#"):
                yield lineno, text


def read_edges(path):
    edges = []
    for lineno, text in _data_lines(path):
        parts = text.split()
        if len(parts) != 2:
            raise ValidationError(f"{path}:{lineno}: expected 'u v', got {text!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: node ids must be integers") from None
        if u < 0 or v < 0:
            raise ValidationError(f"{path}:{lineno}: negative node id")
        edges.append((u, v))
    return np.array(edges, dtype=np.int64).reshape(-1, 2)


def read_attributes(path):
    rows = []
    width = None
    for lineno, text in _data_lines(path):
        try:
            row = [float(tok) for tok in text.split()]
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: non-numeric attribute value") from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ValidationError(f"{path}:{lineno}: expected {width} values, got {len(row)}")
        rows.append(row)
    if not rows:
        raise ValidationError(f"{path}: no attribute rows")
    return np.array(rows, dtype=np.float64)


def read_node_ids(path):
    ids = []
    for lineno, text in _data_lines(path):
        try:
            ids.append(int(text.split()[0]))
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: node id must be an integer") from None
    return np.array(ids, dtype=np.int64)


def _mask_from_ids(ids, n, path):
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise ValidationError(f"{path}: node id outside [0, {n})")
    mask = np.zeros(n, dtype=bool)
    mask[ids] = True
    return mask


def load_dataset(edge_path, attribute_path, truth_path=None, labels_path=None, name=None):
    """Load a dataset from plain-text files; labels default to all X."""
    edges = read_edges(edge_path)
    attributes = read_attributes(attribute_path)
    n = attributes.shape[0]
    if edges.size and edges.max() >= n:
        raise ValidationError(
            f"{edge_path}: edge references node {edges.max()} but {attribute_path} has {n} rows"
        )
    truth = None if truth_path is None else _mask_from_ids(read_node_ids(truth_path), n, truth_path)
    labels = None if labels_path is None else _mask_from_ids(read_node_ids(labels_path), n, labels_path)
    graph = build_graph(edges, attributes, labels=labels, truth=truth)
    graph.meta["edge_records"] = int(len(edges))
    if name is None:
        name = os.path.splitext(os.path.basename(str(edge_path)))[0]
    return DatasetBundle(graph=graph, name=name)


def load_linqs(content_path, cites_path, name=None):
    """Load a LINQS citation dataset (``.content`` + ``.cites``, e.g. Cora).

    Document ids are remapped to ``0..n-1`` in ``.content`` order; the class
    column is kept in ``meta["classes"]``. ``meta["edge_records"]`` is the raw
    citation line count, which can exceed ``n_edges`` because duplicate and
    reciprocal citations collapse to one undirected edge.
    """
    ids, rows, classes = [], [], []
    for lineno, text in _data_lines(content_path):
        parts = text.split()
        if len(parts) < 3:
            raise ValidationError(f"{content_path}:{lineno}: expected 'id features... class'")
        try:
            rows.append([float(t) for t in parts[1:-1]])
        except ValueError:
            raise ValidationError(f"{content_path}:{lineno}: non-numeric feature") from None
        ids.append(parts[0])
        classes.append(parts[-1])
    if not rows:
        raise ValidationError(f"{content_path}: no rows")
    if len({len(r) for r in rows}) != 1:
        raise ValidationError(f"{content_path}: rows have different feature counts")
    index = {pid: i for i, pid in enumerate(ids)}
    if len(index) != len(ids):
        raise ValidationError(f"{content_path}: duplicate document id")
    edges = []
    for lineno, text in _data_lines(cites_path):
        parts = text.split()
        if len(parts) != 2:
            raise ValidationError(f"{cites_path}:{lineno}: expected 'cited citing'")
        try:
            edges.append((index[parts[0]], index[parts[1]]))
        except KeyError as exc:
            raise ValidationError(f"{cites_path}:{lineno}: unknown document id {exc.args[0]!r}") from None
    graph = build_graph(np.array(edges, dtype=np.int64).reshape(-1, 2), np.array(rows))
    graph.meta["edge_records"] = len(edges)
    graph.meta["classes"] = np.array(classes)
    if name is None:
        name = os.path.splitext(os.path.basename(str(content_path)))[0]
    return DatasetBundle(graph=graph, name=name)


def _fmt(value):
    if isinstance(value, (list, tuple)):
        return ",".join(_fmt(v) for v in value)
    return str(value)


def save_dataset(bundle, path):
    """Write ``bundle`` as a directory; reloading gives a bit-identical graph."""
    os.makedirs(path, exist_ok=True)
    g = bundle.graph
    with open(os.path.join(path, EDGE_FILE), "w") as fh:
        for u, v in g.edges():
            fh.write(f"{u} {v}\n")
    np.savetxt(os.path.join(path, ATTRIBUTE_FILE), g.attributes, fmt="%.17g")
    if g.truth is not None:
        _write_ids(os.path.join(path, TRUTH_FILE), np.flatnonzero(g.truth))
    _write_ids(os.path.join(path, LABEL_FILE), np.flatnonzero(g.labels))
    prov = {"name": bundle.name, "n_nodes": g.n_nodes, "n_edges": g.n_edges,
            "n_features": g.n_features, **bundle.provenance}
    with open(os.path.join(path, PROVENANCE_FILE), "w") as fh:
        for key in sorted(prov):
            fh.write(f"{key} = {_fmt(prov[key])}\n")


def _write_ids(path, ids):
    with open(path, "w") as fh:
        for i in ids:
            fh.write(f"{int(i)}\n")


def read_provenance(path):
    prov = {}
    for lineno, text in _data_lines(path):
        if "=" not in text:
            raise ValidationError(f"{path}:{lineno}: expected 'key = value'")
        key, value = text.split("=", 1)
        prov[key.strip()] = _parse_value(value.strip())
    return prov


def _parse_value(text):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def load_bundle(path):
    """Load a directory written by :func:`save_dataset`."""
    def opt(fname):
        p = os.path.join(path, fname)
        return p if os.path.exists(p) else None

    edge_path = os.path.join(path, EDGE_FILE)
    attr_path = os.path.join(path, ATTRIBUTE_FILE)
    for p in (edge_path, attr_path):
        if not os.path.exists(p):
            raise ValidationError(f"bundle {path} is missing {os.path.basename(p)}")
    prov = read_provenance(opt(PROVENANCE_FILE)) if opt(PROVENANCE_FILE) else {}
    name = prov.pop("name", os.path.basename(os.path.normpath(path)))
    for key in ("n_nodes", "n_edges", "n_features"):
        prov.pop(key, None)
    bundle = load_dataset(edge_path, attr_path, opt(TRUTH_FILE), opt(LABEL_FILE), name=name)
    bundle.provenance = prov
    return bundle


def bundle_checksum(path):
    """SHA-256 over the bundle files in a fixed order."""
    digest = hashlib.sha256()
    for fname in (EDGE_FILE, ATTRIBUTE_FILE, TRUTH_FILE, LABEL_FILE, PROVENANCE_FILE):
        p = os.path.join(path, fname)
        if os.path.exists(p):
            digest.update(fname.encode())
            with open(p, "rb") as fh:
                digest.update(fh.read())
    return digest.hexdigest()


# injection -------------------------------------------------------------------

def _truth(graph):
    return np.zeros(graph.n_nodes, dtype=bool) if graph.truth is None else graph.truth.copy()


def inject_structural_anomalies(graph, count, clique_size, rng):
    """Turn ``count / clique_size`` random groups of normal nodes into cliques.

    Returns ``(new_graph, anomaly_nodes)``; only missing edges are added.
    """
    check_int_range(count, "count", 0)
    check_int_range(clique_size, "clique_size", 1)
    if count > graph.n_nodes:
        raise ValidationError(f"cannot make {count} structural anomalies in {graph.n_nodes} nodes")
    if count % clique_size:
        raise ValidationError(f"count={count} is not a multiple of clique_size={clique_size}")
    truth = _truth(graph)
    pool = np.flatnonzero(~truth)
    if count > pool.size:
        raise ValidationError(f"only {pool.size} non-anomalous nodes left for {count} structural anomalies")
    if count == 0:
        return graph.with_(truth=truth), np.empty(0, dtype=np.int64)
    chosen = rng.choice(pool, size=count, replace=False)
    rows, cols = [], []
    for group in chosen.reshape(-1, clique_size):
        r, c = np.meshgrid(group, group, indexing="ij")
        off = r != c
        rows.append(r[off])
        cols.append(c[off])
    n = graph.n_nodes
    clique = sp.csr_matrix((np.ones(sum(len(r) for r in rows)), (np.concatenate(rows), np.concatenate(cols))),
                           shape=(n, n))
    adj = (graph.adjacency + clique).tocsr()
    adj.data[:] = 1.0
    adj.sort_indices()
    truth[chosen] = True
    return graph.with_(adjacency=adj, truth=truth), np.sort(chosen)


def inject_attribute_anomalies(graph, count, rng, donor_candidates=1):
    """Overwrite ``count`` random normal nodes' attributes with donor rows.

    Donors are never the target and never an anomaly (already flagged or
    selected in this call). With ``donor_candidates > 1`` the donor is the
    candidate farthest from the target's original row.
    """
    check_int_range(count, "count", 0)
    truth = _truth(graph)
    pool = np.flatnonzero(~truth)
    if count > pool.size:
        raise ValidationError(f"only {pool.size} non-anomalous nodes left for {count} attribute anomalies")
    if count == 0:
        return graph.with_(truth=truth), np.empty(0, dtype=np.int64)
    targets = rng.choice(pool, size=count, replace=False)
    blocked = truth.copy()
    blocked[targets] = True
    donors_pool = np.flatnonzero(~blocked)
    if donors_pool.size == 0:
        raise ValidationError("no eligible donor nodes remain")
    original = graph.attributes
    attrs = original.copy()
    for t in targets:
        k = min(donor_candidates, donors_pool.size)
        cands = rng.choice(donors_pool, size=k, replace=False)
        if k > 1:
            dist = np.linalg.norm(original[cands] - original[t], axis=1)
            donor = cands[int(np.argmax(dist))]
        else:
            donor = cands[0]
        attrs[t] = original[donor]
    truth[targets] = True
    return graph.with_(attributes=attrs, truth=truth), np.sort(targets)


def inject_anomalies(graph, config):
    """Plant both anomaly kinds as configured; returns ``(graph, provenance)``."""
    rng_struct = np.random.default_rng(derive_seed(config.seed, "inject-structural"))
    rng_attr = np.random.default_rng(derive_seed(config.seed, "inject-attribute"))

    def structural(g):
        return inject_structural_anomalies(g, config.num_structural, config.clique_size, rng_struct)

    def attribute(g):
        return inject_attribute_anomalies(g, config.num_attribute, rng_attr, config.donor_candidates)

    if config.order == "attribute-first":
        graph, attr_nodes = attribute(graph)
        graph, struct_nodes = structural(graph)
    else:
        graph, struct_nodes = structural(graph)
        graph, attr_nodes = attribute(graph)
    provenance = {
        "seed": config.seed,
        "clique_size": config.clique_size,
        "num_structural": config.num_structural,
        "num_attribute": config.num_attribute,
        "donor_candidates": config.donor_candidates,
        "order": config.order,
    }
    graph.meta["structural_anomalies"] = struct_nodes
    graph.meta["attribute_anomalies"] = attr_nodes
    return graph, provenance


def n_revealed(ratio, n_anomalies):
    # round first: 0.1 * 150 is 15.000000000000002 in binary floating point
    return math.ceil(round(ratio * n_anomalies, 9))


def reveal_labels(graph, ratio, rng):
    """Mark ``ceil(ratio * |truth|)`` random true anomalies as label O."""
    check_fraction(ratio, "ratio", low=0.0, low_inclusive=False)
    if graph.truth is None or not graph.truth.any():
        raise ValidationError("graph has no ground-truth anomalies to reveal")
    anomalies = np.flatnonzero(graph.truth)
    k = n_revealed(ratio, anomalies.size)
    chosen = rng.choice(anomalies, size=k, replace=False)
    labels = np.zeros(graph.n_nodes, dtype=bool)
    labels[chosen] = True
    return graph.with_(labels=labels)


# synthetic benchmark ---------------------------------------------------------

def make_community_graph(n_nodes=300, n_blocks=2, groups_per_block=10, n_features=64,
                         p_group=0.4, p_block=0.01, p_out=0.002, noise=0.5, rng=None):
    """Two-level planted-partition graph with group-dependent Gaussian attributes.

    Nodes are split into ``n_blocks`` communities, each divided into
    ``groups_per_block`` groups. Edge probability is ``p_group`` inside a group,
    ``p_block`` across groups of one community and ``p_out`` across
    communities. Each group draws a random +/-1 mean vector; node attributes are
    that mean plus Gaussian noise.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    n_groups = n_blocks * groups_per_block
    group = np.repeat(np.arange(n_groups), int(np.ceil(n_nodes / n_groups)))[:n_nodes]
    block = group // groups_per_block
    iu, ju = np.triu_indices(n_nodes, k=1)
    prob = np.where(group[iu] == group[ju], p_group, np.where(block[iu] == block[ju], p_block, p_out))
    keep = rng.random(iu.size) < prob
    edges = np.column_stack([iu[keep], ju[keep]])
    means = rng.choice([-1.0, 1.0], size=(n_groups, n_features))
    attributes = means[group] + noise * rng.standard_normal((n_nodes, n_features))
    graph = build_graph(edges, attributes)
    graph.meta["block"] = block
    graph.meta["group"] = group
    return graph


def make_synthetic_benchmark(seed=0, n_nodes=300, clique_size=15, num_attribute=15,
                             reveal_ratio=0.10, **graph_kw):
    """Community graph with one planted clique, attribute swaps and revealed labels."""
    base = make_community_graph(n_nodes=n_nodes, rng=np.random.default_rng(derive_seed(seed, "graph")), **graph_kw)
    config = InjectionConfig(num_structural=clique_size, num_attribute=num_attribute,
                             clique_size=clique_size, seed=derive_seed(seed, "inject"))
    graph, prov = inject_anomalies(base, config)
    graph = reveal_labels(graph, reveal_ratio, np.random.default_rng(derive_seed(seed, "reveal")))
    prov["reveal_ratio"] = reveal_ratio
    prov["benchmark_seed"] = seed
    return DatasetBundle(graph=graph, name=f"synthetic-{seed}", provenance=prov)
