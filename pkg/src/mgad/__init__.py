"""Semi-supervised graph anomaly detection with metapath anomaly subgraphs."""

from .estimator import MGAD
from .evaluation import auc, precision_at_k
from .graph import AttributedGraph, build_graph, induced_subgraph, neighbors, sym_normalize
from .ingest import (
    DatasetBundle,
    InjectionConfig,
    inject_anomalies,
    load_bundle,
    load_dataset,
    load_linqs,
    make_synthetic_benchmark,
    reveal_labels,
    save_dataset,
)
from .metapath import MetapathSchema, SamplerConfig, generate_anomaly_subgraph, parse_schema
from .model import MGADConfig, MGADModel

__version__ = "0.1.0"

__all__ = [
    "MGAD", "MGADConfig", "MGADModel", "AttributedGraph", "DatasetBundle", "InjectionConfig",
    "MetapathSchema", "SamplerConfig", "auc", "build_graph", "generate_anomaly_subgraph",
    "induced_subgraph", "inject_anomalies", "load_bundle", "load_dataset", "load_linqs", "make_synthetic_benchmark",
    "neighbors", "parse_schema", "precision_at_k", "reveal_labels", "save_dataset", "sym_normalize",
]
