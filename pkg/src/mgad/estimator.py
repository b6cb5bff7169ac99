"""scikit-learn style front end for the dual-encoder anomaly detector."""

import numpy as np
from sklearn.base import BaseEstimator, OutlierMixin
from sklearn.utils.validation import check_is_fitted

from ._rng import derive_seed
from ._validation import ValidationError, check_fraction, check_graph
from .ingest import DatasetBundle
from .metapath import (
    SamplerConfig,
    empty_subgraph,
    ego_net_subgraph,
    generate_anomaly_subgraph,
)
from .model import (
    GraphData,
    MGADConfig,
    anomaly_scores,
    forward,
    init_model,
    train,
)

SUBGRAPH_MODES = ("metapath", "ego-net", "none")


def _as_graph(G):
    if isinstance(G, DatasetBundle):
        G = G.graph
    return check_graph(G)


class MGAD(OutlierMixin, BaseEstimator):
    """Semi-supervised node anomaly detector driven by metapath subgraphs.

    ``fit`` takes an :class:`~mgad.graph.AttributedGraph` whose O labels mark
    the few known anomalies. Scores are transductive: they are computed for
    the nodes of the fitted graph.

    Parameters
    ----------
    alpha : float, default=0.8
        Weight of the attribute term; the structure term gets ``1 - alpha``.
    graph_encoder_dims, subgraph_encoder_dims : tuple of int, default=(64, 64)
        Output sizes of the GCN layers of each encoder.
    attr_decoder_dims : tuple of int, default=(64,)
        Hidden sizes of the attribute decoder (its last layer always outputs
        the attribute dimension).
    attr_activation : {"identity", "sigmoid"}, default="identity"
        Output activation of the attribute decoder; "sigmoid" suits 0/1
        bag-of-words attributes.
    epochs, lr : training length and Adam step size.
    walk_length, walks_per_node, schemas, sampling :
        Sampler settings; ``schemas=None`` picks the default for the length.
    subgraph : {"metapath", "ego-net", "none"}, default="metapath"
        Community fed to the second encoder.
    block_size : int, default=1024
        Rows per block when streaming the reconstructed adjacency.
    contamination : float, default=0.1
        Fraction of nodes ``predict`` flags as anomalous.
    random_state : int, default=0
    n_jobs : int, default=1
        Worker threads for walk sampling (results do not depend on it).
    """

    def __init__(self, alpha=0.8, graph_encoder_dims=(64, 64), subgraph_encoder_dims=(64, 64),
                 attr_decoder_dims=(64,), attr_activation="identity", epochs=300, lr=5e-3,
                 walk_length=3, walks_per_node=1, schemas=None, sampling="rejection",
                 subgraph="metapath", block_size=1024, contamination=0.1, random_state=0,
                 n_jobs=1, verbose=False):
        self.alpha = alpha
        self.graph_encoder_dims = graph_encoder_dims
        self.subgraph_encoder_dims = subgraph_encoder_dims
        self.attr_decoder_dims = attr_decoder_dims
        self.attr_activation = attr_activation
        self.epochs = epochs
        self.lr = lr
        self.walk_length = walk_length
        self.walks_per_node = walks_per_node
        self.schemas = schemas
        self.sampling = sampling
        self.subgraph = subgraph
        self.block_size = block_size
        self.contamination = contamination
        self.random_state = random_state
        self.n_jobs = n_jobs
        self.verbose = verbose

    def _model_config(self):
        return MGADConfig(
            alpha=self.alpha,
            graph_encoder_dims=self.graph_encoder_dims,
            subgraph_encoder_dims=self.subgraph_encoder_dims,
            attr_decoder_dims=self.attr_decoder_dims,
            attr_activation=self.attr_activation,
            epochs=self.epochs,
            lr=self.lr,
            block_size=self.block_size,
            seed=derive_seed(self.random_state, "init"),
        )

    def _sampler_config(self):
        return SamplerConfig(
            walks_per_node=self.walks_per_node,
            walk_length=self.walk_length,
            schemas=self.schemas,
            strategy=self.sampling,
            seed=derive_seed(self.random_state, "sampling"),
        )

    def build_subgraph(self, G):
        """Community for the second encoder, per the ``subgraph`` setting."""
        G = _as_graph(G)
        if self.subgraph == "metapath":
            return generate_anomaly_subgraph(G, self._sampler_config(), n_jobs=self.n_jobs)
        if self.subgraph == "ego-net":
            return ego_net_subgraph(G)
        if self.subgraph == "none":
            return empty_subgraph(G)
        raise ValidationError(f"subgraph must be one of {SUBGRAPH_MODES}, got {self.subgraph!r}")

    def fit(self, G, y=None, subgraph=None):
        """Sample the anomaly subgraph (unless given) and train.

        ``y`` is ignored; known anomalies come from the graph's O labels.
        """
        G = _as_graph(G)
        check_fraction(self.contamination, "contamination", low=0.0, high=0.5, low_inclusive=False)
        config = self._model_config()
        self.subgraph_ = self.build_subgraph(G) if subgraph is None else subgraph
        self.data_ = GraphData(G, self.subgraph_)
        model = init_model(config, G.n_features, np.random.default_rng(config.seed))
        self.model_, self.history_ = train(G, self.subgraph_, config, model=model,
                                           data=self.data_, verbose=self.verbose)
        self.config_ = config
        self.n_features_in_ = G.n_features
        report = anomaly_scores(self.model_, self.data_, config.alpha, config.block_size)
        self.report_ = report
        self.decision_scores_ = report.scores
        self.threshold_ = float(np.quantile(report.scores, 1.0 - self.contamination))
        self.labels_ = (report.scores > self.threshold_).astype(int)
        return self

    def _data_for(self, G):
        check_is_fitted(self, "model_")
        if G is None:
            return self.data_
        G = _as_graph(G)
        if G is self.data_.graph:
            return self.data_
        if G.n_nodes != self.data_.n or G.n_features != self.n_features_in_:
            raise ValidationError("scoring is transductive: pass the fitted graph (or a same-sized variant)")
        return GraphData(G, self.subgraph_)

    def decision_function(self, G=None):
        """Anomaly score per node; larger means more anomalous."""
        data = self._data_for(G)
        if data is self.data_:
            return self.decision_scores_.copy()
        return anomaly_scores(self.model_, data, self.config_.alpha, self.config_.block_size).scores

    def score_samples(self, G=None):
        # sklearn convention: lower means more abnormal
        return -self.decision_function(G)

    def predict(self, G=None):
        """1 for nodes scoring above the contamination threshold, else 0."""
        return (self.decision_function(G) > self.threshold_).astype(int)

    def transform(self, G=None):
        """Fused node embeddings (whole-graph part, then subgraph part)."""
        return forward(self.model_, self._data_for(G)).z

    def fit_transform(self, G, y=None, **fit_params):
        return self.fit(G, y, **fit_params).transform()

    def ranking(self):
        check_is_fitted(self, "model_")
        return self.report_.ranking.copy()
