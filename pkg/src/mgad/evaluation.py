"""Ranking metrics and the experiment runners (parameter, sensitivity, ablation)."""

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from ._rng import derive_seed
from ._validation import ValidationError
from .estimator import MGAD
from .ingest import n_revealed, reveal_labels


def auc(scores, truth):
    """ROC AUC via the Mann-Whitney statistic with average ranks for ties.

    Equals ``P(s_anomaly > s_normal) + 0.5 * P(s_anomaly == s_normal)``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=bool)
    if scores.shape != truth.shape:
        raise ValidationError("scores and truth differ in length")
    n_pos = int(truth.sum())
    n_neg = truth.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("AUC needs at least one anomalous and one normal node")
    ranks = rankdata(scores, method="average")
    return float((ranks[truth].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def precision_at_k(ranking, truth, k):
    """Fraction of true anomalies among the first ``k`` ranked nodes."""
    truth = np.asarray(truth, dtype=bool)
    ranking = np.asarray(ranking, dtype=np.int64)
    if not 1 <= k <= ranking.size:
        raise ValidationError(f"k must lie in [1, {ranking.size}], got {k}")
    return float(truth[ranking[:k]].mean())


@dataclass
class EvalResult:
    auc: float
    precision_at_k: dict = field(default_factory=dict)
    seed: int | None = None
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "auc": self.auc,
            "precision_at_k": {str(k): v for k, v in self.precision_at_k.items()},
            "seed": self.seed,
            "config": self.config,
        }


def evaluate(scores, truth, ks=None, seed=None, config=None):
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=bool)
    ranking = np.lexsort((np.arange(scores.size), -scores))
    if ks is None:
        ks = sorted({k for k in (10, 50, 100, int(truth.sum())) if 1 <= k <= scores.size})
    return EvalResult(
        auc=auc(scores, truth),
        precision_at_k={int(k): precision_at_k(ranking, truth, int(k)) for k in ks},
        seed=seed,
        config=dict(config or {}),
    )


# runners ---------------------------------------------------------------------

DEFAULT_SEEDS = (0, 1, 2, 3, 4)


def _prepare(graph, ratio, seed):
    if ratio is None:
        return graph
    return reveal_labels(graph, ratio, np.random.default_rng(derive_seed(seed, "reveal")))


def run_single(graph, seed, reveal_ratio=None, **params):
    """Reveal labels (optional), fit, and score one configuration."""
    if graph.truth is None:
        raise ValidationError("evaluation needs ground-truth anomaly flags")
    g = _prepare(graph, reveal_ratio, seed)
    est = MGAD(random_state=seed, **params).fit(g)
    result = evaluate(est.decision_scores_, g.truth, seed=seed)
    return {
        "seed": seed,
        "auc": result.auc,
        "n_labeled": int(g.labels.sum()),
        "subgraph_nodes": int(est.subgraph_.n_nodes),
        "accepted_walks": int(len(est.subgraph_.walks)),
        "final_loss": float(est.history_.loss[-1]) if len(est.history_) else float("nan"),
    }


def _run_cells(graph, cells, seeds, reveal_ratio, params):
    rows = []
    for cell in cells:
        cell_params = dict(params)
        ratio = cell.pop("reveal_ratio", reveal_ratio)
        cell_params.update(cell)
        for seed in seeds:
            record = run_single(graph, seed, reveal_ratio=ratio, **cell_params)
            rows.append({**cell, "reveal_ratio": ratio, **record})
    return rows


def run_param_study(graph, l_values=(3, 4, 5), n_values=(1, 3, 5), seeds=DEFAULT_SEEDS,
                    reveal_ratio=0.10, **params):
    """AUC per (walk length, walks per node, seed)."""
    cells = [{"walk_length": l, "walks_per_node": n} for l in l_values for n in n_values]
    return _run_cells(graph, cells, seeds, reveal_ratio, params)


def run_sensitivity(graph, ratios=(0.01, 0.03, 0.05, 0.10), seeds=DEFAULT_SEEDS, **params):
    """AUC per label-revelation ratio and seed."""
    cells = [{"reveal_ratio": r} for r in ratios]
    rows = _run_cells(graph, cells, seeds, None, params)
    n_true = int(graph.truth.sum())
    for row in rows:
        row["expected_labeled"] = n_revealed(row["reveal_ratio"], n_true)
    return rows


ABLATION_ROWS = (("no-subgraph", "none"), ("ego-net", "ego-net"), ("anomaly-subgraph", "metapath"))


def run_ablation(graph, seeds=DEFAULT_SEEDS, reveal_ratio=0.10, **params):
    """Same seeds trained with no subgraph, 1-hop ego nets, and metapath subgraphs."""
    cells = [{"variant": name, "subgraph": mode} for name, mode in ABLATION_ROWS]
    rows = []
    for cell in cells:
        p = dict(params, subgraph=cell["subgraph"])
        for seed in seeds:
            record = run_single(graph, seed, reveal_ratio=reveal_ratio, **p)
            rows.append({"variant": cell["variant"], "reveal_ratio": reveal_ratio, **record})
    return rows


def summarize(rows, keys):
    """Mean/min/max AUC per group of ``keys``, in first-seen order."""
    groups = {}
    for row in rows:
        groups.setdefault(tuple(row[k] for k in keys), []).append(row["auc"])
    out = []
    for key, values in groups.items():
        values = np.asarray(values)
        out.append({**dict(zip(keys, key)), "runs": int(values.size), "mean_auc": float(values.mean()),
                    "min_auc": float(values.min()), "max_auc": float(values.max())})
    return out


def write_csv(path, rows):
    if not rows:
        raise ValidationError("nothing to write")
    fields = list(rows[0])
    for row in rows[1:]:
        fields += [k for k in row if k not in fields]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell(row.get(k)) for k in fields})


def _cell(value):
    if isinstance(value, float):
        return repr(value)
    return "" if value is None else value


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
