"""Dual-encoder graph autoencoder with reconstruction-error anomaly scores.

Two GCN encoders run side by side: one over the whole graph and one over the
metapath anomaly subgraph. The subgraph embeddings are lifted back to parent
indexing (zeros for nodes outside the subgraph) and concatenated with the
whole-graph embeddings. An inner-product decoder reconstructs the adjacency and
a GCN decoder reconstructs the attributes. Gradients are derived by hand.

The reconstructed adjacency is never held in memory as a whole: every quantity
that touches it is accumulated over row blocks of ``block_size`` rows.
"""

import json
import struct
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ._validation import ValidationError, check_finite, check_fraction, check_int_range
from .graph import sym_normalize
from .nn import (
    AdamState,
    GCNLayer,
    adam_step,
    sigmoid,
    stack_backward,
    stack_forward,
)


@dataclass
class MGADConfig:
    alpha: float = 0.8
    graph_encoder_dims: tuple = (64, 64)
    subgraph_encoder_dims: tuple = (64, 64)
    attr_decoder_dims: tuple = (64,)
    hidden_activation: str = "relu"
    embedding_activation: str = "identity"
    attr_activation: str = "identity"
    epochs: int = 300
    lr: float = 5e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    block_size: int = 1024
    seed: int = 0

    def __post_init__(self):
        check_fraction(self.alpha, "alpha")
        for name in ("graph_encoder_dims", "subgraph_encoder_dims", "attr_decoder_dims"):
            dims = tuple(int(d) for d in getattr(self, name))
            if any(d < 1 for d in dims):
                raise ValidationError(f"{name} must contain positive sizes")
            setattr(self, name, dims)
        if not self.graph_encoder_dims or not self.subgraph_encoder_dims:
            raise ValidationError("encoders need at least one layer")
        check_int_range(self.epochs, "epochs", 0)
        check_int_range(self.block_size, "block_size", 1)
        if self.lr <= 0:
            raise ValidationError("lr must be positive")

    @property
    def fused_dim(self):
        return self.graph_encoder_dims[-1] + self.subgraph_encoder_dims[-1]

    def to_dict(self):
        return asdict(self)


def _layer_stack(d_in, dims, rng, hidden_act, final_act, prefix):
    layers = []
    sizes = (d_in,) + tuple(dims)
    for i in range(len(dims)):
        act = final_act if i == len(dims) - 1 else hidden_act
        layers.append(GCNLayer.init(sizes[i], sizes[i + 1], rng, activation=act, name=f"{prefix}.{i}"))
    return layers


class MGADModel:
    """Weights of the two encoders and the attribute decoder."""

    def __init__(self, graph_encoder, subgraph_encoder, attr_decoder):
        self.graph_encoder = list(graph_encoder)
        self.subgraph_encoder = list(subgraph_encoder)
        self.attr_decoder = list(attr_decoder)
        dg = self.graph_encoder[-1].d_out
        ds = self.subgraph_encoder[-1].d_out
        if self.graph_encoder[0].d_in != self.subgraph_encoder[0].d_in:
            raise ValidationError("encoders disagree on the attribute dimension")
        if self.attr_decoder[0].d_in != dg + ds:
            raise ValidationError(
                f"attribute decoder expects {self.attr_decoder[0].d_in} inputs, fused dim is {dg + ds}"
            )
        if self.attr_decoder[-1].d_out != self.graph_encoder[0].d_in:
            raise ValidationError("attribute decoder must output the attribute dimension")
        for stack in (self.graph_encoder, self.subgraph_encoder, self.attr_decoder):
            for a, b in zip(stack, stack[1:]):
                if a.d_out != b.d_in:
                    raise ValidationError(f"layer chain breaks between {a} and {b}")

    @property
    def n_features(self):
        return self.graph_encoder[0].d_in

    @property
    def graph_dim(self):
        return self.graph_encoder[-1].d_out

    @property
    def subgraph_dim(self):
        return self.subgraph_encoder[-1].d_out

    def layers(self):
        return self.graph_encoder + self.subgraph_encoder + self.attr_decoder

    def parameters(self):
        return [layer.weight for layer in self.layers()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def copy(self):
        def clone(stack):
            return [GCNLayer(l.weight.value.copy(), l.activation, l.weight.name.rsplit(".", 1)[0]) for l in stack]

        return MGADModel(clone(self.graph_encoder), clone(self.subgraph_encoder), clone(self.attr_decoder))


def init_model(config, d, rng):
    """Xavier-initialized model for ``d``-dimensional attributes."""
    check_int_range(d, "attribute dimension", 1)
    h, e = config.hidden_activation, config.embedding_activation
    genc = _layer_stack(d, config.graph_encoder_dims, rng, h, e, "graph_encoder")
    senc = _layer_stack(d, config.subgraph_encoder_dims, rng, h, e, "subgraph_encoder")
    dec = _layer_stack(
        config.fused_dim, tuple(config.attr_decoder_dims) + (d,), rng, h, config.attr_activation, "attr_decoder"
    )
    return MGADModel(genc, senc, dec)


# data prepared once per (graph, subgraph) pair -------------------------------

class GraphData:
    """Normalized adjacencies and attribute views consumed by the network."""

    def __init__(self, graph, subgraph=None):
        self.graph = graph
        self.adjacency = graph.adjacency.tocsr()
        self.norm_adj = sym_normalize(graph.adjacency)
        self.attributes = graph.attributes
        self.n = graph.n_nodes
        if subgraph is None or subgraph.n_nodes == 0:
            self.index_map = np.empty(0, dtype=np.int64)
            self.sub_norm_adj = None
            self.sub_attributes = None
        else:
            self.index_map = np.asarray(subgraph.index_map, dtype=np.int64)
            if self.index_map.max() >= self.n or self.index_map.min() < 0:
                raise ValidationError("subgraph index map points outside the parent graph")
            self.sub_norm_adj = sym_normalize(subgraph.graph.adjacency)
            # subgraph encoder reads the parent attribute rows of its nodes
            self.sub_attributes = graph.attributes[self.index_map]

    def dense_rows(self, start, stop):
        return self.adjacency[start:stop].toarray()


class ForwardState:
    __slots__ = ("z", "z_graph", "h_lifted", "x_hat", "graph_caches", "sub_caches", "dec_caches")

    def __init__(self, **kw):
        for k in self.__slots__:
            setattr(self, k, kw.get(k))


def encode_graph(model, norm_adj, attributes):
    z, _ = stack_forward(norm_adj, attributes, model.graph_encoder)
    return z


def encode_subgraph(model, data):
    """Subgraph-encoder output lifted to parent indexing (zeros outside)."""
    h, _ = _encode_subgraph(model, data)
    return h


def _encode_subgraph(model, data):
    lifted = np.zeros((data.n, model.subgraph_dim))
    if data.sub_norm_adj is None:
        return lifted, None
    h, caches = stack_forward(data.sub_norm_adj, data.sub_attributes, model.subgraph_encoder)
    lifted[data.index_map] = h
    return lifted, caches


def fuse(z_graph, h_lifted):
    """Row-wise concatenation of whole-graph and subgraph embeddings."""
    if z_graph.shape[0] != h_lifted.shape[0]:
        raise ValidationError(f"cannot fuse {z_graph.shape[0]} rows with {h_lifted.shape[0]} rows")
    return np.hstack([z_graph, h_lifted])


def decode_structure_block(z, start, stop):
    """Rows ``start:stop`` of the reconstructed adjacency ``sigmoid(Z Z^T)``."""
    return sigmoid(z[start:stop] @ z.T)


def decode_attributes(model, norm_adj, z):
    x_hat, _ = stack_forward(norm_adj, z, model.attr_decoder)
    return x_hat


def forward(model, data):
    z_graph, gc = stack_forward(data.norm_adj, data.attributes, model.graph_encoder)
    h_lifted, sc = _encode_subgraph(model, data)
    z = fuse(z_graph, h_lifted)
    x_hat, dc = stack_forward(data.norm_adj, z, model.attr_decoder)
    return ForwardState(
        z=z, z_graph=z_graph, h_lifted=h_lifted, x_hat=x_hat,
        graph_caches=gc, sub_caches=sc, dec_caches=dc,
    )


def _blocks(n, block_size):
    for start in range(0, n, block_size):
        yield start, min(start + block_size, n)


def structure_error(data, z, block_size):
    """Squared Frobenius norm ``||A - sigmoid(Z Z^T)||^2`` accumulated by row block."""
    total = 0.0
    for start, stop in _blocks(data.n, block_size):
        resid = data.dense_rows(start, stop) - decode_structure_block(z, start, stop)
        total += float(np.sum(resid * resid))
    return total


def loss(data, state, alpha, block_size=1024):
    """Joint reconstruction loss of a forward pass."""
    attr = float(np.sum((data.attributes - state.x_hat) ** 2))
    struct_term = 0.0 if alpha == 1.0 else structure_error(data, state.z, block_size)
    value = (1.0 - alpha) * struct_term + alpha * attr
    if not np.isfinite(value):
        raise FloatingPointError("non-finite loss")
    return value


def structure_grad(data, z, alpha, block_size):
    """Gradient of ``(1 - alpha) ||A - sigmoid(Z Z^T)||^2`` with respect to ``Z``."""
    grad = np.zeros_like(z)
    if alpha == 1.0:
        return grad
    for start, stop in _blocks(data.n, block_size):
        s = decode_structure_block(z, start, stop)
        g = 2.0 * (1.0 - alpha) * (s - data.dense_rows(start, stop)) * s * (1.0 - s)
        # Z Z^T is symmetric, so each block feeds both z_i and z_j: factor 2
        grad[start:stop] = 2.0 * (g @ z)
    return grad


def backward(model, data, state, alpha, block_size=1024):
    """Populate the gradients of every weight for the loss of ``state``."""
    model.zero_grad()
    d_xhat = -2.0 * alpha * (data.attributes - state.x_hat)
    d_z = stack_backward(state.dec_caches, d_xhat)
    d_z = d_z + structure_grad(data, state.z, alpha, block_size)
    dg = model.graph_dim
    stack_backward(state.graph_caches, d_z[:, :dg], need_input_grad=False)
    if state.sub_caches is not None:
        # lifted zero rows are constants: only subgraph rows carry gradient back
        stack_backward(state.sub_caches, d_z[data.index_map, dg:], need_input_grad=False)


@dataclass
class TrainHistory:
    loss: list = field(default_factory=list)
    seconds: list = field(default_factory=list)

    def __len__(self):
        return len(self.loss)


def train(graph, subgraph, config, model=None, data=None, verbose=False):
    """Full-batch Adam training; returns ``(model, history)``."""
    data = GraphData(graph, subgraph) if data is None else data
    if model is None:
        model = init_model(config, graph.n_features, np.random.default_rng(config.seed))
    if model.n_features != graph.n_features:
        raise ValidationError("model and graph disagree on the attribute dimension")
    params = model.parameters()
    opt = AdamState(params, lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.adam_eps)
    history = TrainHistory()
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        state = forward(model, data)
        try:
            value = loss(data, state, config.alpha, config.block_size)
        except FloatingPointError:
            raise FloatingPointError(f"training diverged at epoch {epoch}") from None
        backward(model, data, state, config.alpha, config.block_size)
        try:
            adam_step(params, opt)
        except FloatingPointError as exc:
            raise FloatingPointError(f"epoch {epoch}: {exc}") from None
        history.loss.append(value)
        history.seconds.append(time.perf_counter() - t0)
        if verbose and (epoch % 50 == 0 or epoch == config.epochs - 1):
            print(f"epoch {epoch:4d}  loss {value:.6f}")
    return model, history


@dataclass
class ScoreReport:
    scores: np.ndarray
    ranking: np.ndarray
    structure_residual: np.ndarray = None
    attribute_residual: np.ndarray = None

    def to_dict(self):
        return {"scores": self.scores.tolist(), "ranking": self.ranking.tolist()}


def rank_scores(scores):
    """Node ids by descending score; ties keep ascending node id."""
    return np.lexsort((np.arange(len(scores)), -np.asarray(scores)))


def anomaly_scores(model, data, alpha, block_size=1024, state=None):
    """Per-node ``(1 - alpha) ||a_i - a_hat_i|| + alpha ||x_i - x_hat_i||``."""
    state = forward(model, data) if state is None else state
    struct_res = np.empty(data.n)
    for start, stop in _blocks(data.n, block_size):
        resid = data.dense_rows(start, stop) - decode_structure_block(state.z, start, stop)
        struct_res[start:stop] = np.sqrt(np.sum(resid * resid, axis=1))
    attr_res = np.sqrt(np.sum((data.attributes - state.x_hat) ** 2, axis=1))
    scores = check_finite((1.0 - alpha) * struct_res + alpha * attr_res, "anomaly scores")
    return ScoreReport(scores=scores, ranking=rank_scores(scores),
                       structure_residual=struct_res, attribute_residual=attr_res)


# checkpoint ------------------------------------------------------------------

_MAGIC = b"MGADCKPT"
_VERSION = 1


def save_checkpoint(path, model, config):
    """Write config and weights.

    Layout (little-endian): 8-byte magic ``MGADCKPT``; uint32 version; uint64
    length + UTF-8 JSON config echo (including per-layer activations); uint32
    matrix count; per matrix: uint32 name length + UTF-8 name, uint64 rows,
    uint64 cols, rows*cols float64 row-major.
    """
    header = dict(config.to_dict())
    header["layers"] = {
        "graph_encoder": [l.activation for l in model.graph_encoder],
        "subgraph_encoder": [l.activation for l in model.subgraph_encoder],
        "attr_decoder": [l.activation for l in model.attr_decoder],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        params = model.parameters()
        fh.write(struct.pack("<I", len(params)))
        for p in params:
            name = p.name.encode()
            fh.write(struct.pack("<I", len(name)))
            fh.write(name)
            rows, cols = p.value.shape
            fh.write(struct.pack("<QQ", rows, cols))
            fh.write(np.ascontiguousarray(p.value, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(model, config)``."""
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValidationError(f"{path} is not an MGAD checkpoint")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _VERSION:
            raise ValidationError(f"unsupported checkpoint version {version}")
        (size,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(size).decode())
        (count,) = struct.unpack("<I", fh.read(4))
        weights = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<I", fh.read(4))
            name = fh.read(nlen).decode()
            rows, cols = struct.unpack("<QQ", fh.read(16))
            buf = fh.read(rows * cols * 8)
            if len(buf) != rows * cols * 8:
                raise ValidationError(f"{path}: truncated weight {name}")
            weights[name] = np.frombuffer(buf, dtype="<f8").reshape(rows, cols).astype(np.float64)
    acts = header.pop("layers")
    config = MGADConfig(**header)

    def stack(prefix):
        return [
            GCNLayer(weights[f"{prefix}.{i}.weight"], activation=a, name=f"{prefix}.{i}")
            for i, a in enumerate(acts[prefix])
        ]

    model = MGADModel(stack("graph_encoder"), stack("subgraph_encoder"), stack("attr_decoder"))
    return model, config
