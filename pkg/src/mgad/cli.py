"""Command-line pipeline: inject -> sample -> train -> score -> eval, plus experiments.

Every option can come from a ``key = value`` config file (``--config``) or a
flag; flags win. Each command writes ``config.resolved.txt`` with the full
resolved configuration into its output directory. Wall-clock timings go to
``run.log`` only, so all other artifacts are byte-identical across re-runs.
"""

import argparse
import csv
import json
import os
import sys
import time

import numpy as np
from threadpoolctl import threadpool_limits

from ._rng import derive_seed
from ._validation import ValidationError
from .evaluation import (
    evaluate,
    run_ablation,
    run_param_study,
    run_sensitivity,
    summarize,
    write_csv,
    write_json,
)
from .ingest import (
    DatasetBundle,
    InjectionConfig,
    inject_anomalies,
    load_bundle,
    load_dataset,
    load_linqs,
    make_synthetic_benchmark,
    read_node_ids,
    reveal_labels,
    save_dataset,
)
from .metapath import SamplerConfig, generate_anomaly_subgraph, read_walks, subgraph_from_nodes, write_walks
from .model import (
    GraphData,
    MGADConfig,
    anomaly_scores,
    forward,
    init_model,
    load_checkpoint,
    save_checkpoint,
    train,
)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_VALIDATION = 2


def _int_list(text):
    return tuple(int(t) for t in str(text).split(",") if t.strip())


def _float_list(text):
    return tuple(float(t) for t in str(text).split(",") if t.strip())


def _opt_float(text):
    return None if str(text).lower() in ("", "none") else float(text)


def _opt_int(text):
    return None if str(text).lower() in ("", "none") else int(text)


def _opt_str(text):
    return None if str(text).lower() in ("", "none") else str(text)


# key -> (parser, default)
OPTIONS = {
    "seed": (int, 0),
    "threads": (int, 1),
    "out": (_opt_str, None),
    # inputs
    "edges": (_opt_str, None),
    "attributes": (_opt_str, None),
    "truth": (_opt_str, None),
    "content": (_opt_str, None),
    "cites": (_opt_str, None),
    "bundle": (_opt_str, None),
    "subgraph": (_opt_str, None),
    "checkpoint": (_opt_str, None),
    "scores": (_opt_str, None),
    "name": (_opt_str, None),
    # injection
    "num_structural": (int, 0),
    "num_attribute": (_opt_int, None),
    "clique_size": (int, 15),
    "donor_candidates": (int, 1),
    "injection_order": (str, "attribute-first"),
    # sampling
    "walk_length": (int, 3),
    "walks_per_node": (int, 1),
    "schemas": (_opt_str, None),
    "sampling": (str, "rejection"),
    "reveal_ratio": (_opt_float, None),
    # model
    "alpha": (float, 0.8),
    "graph_encoder_dims": (_int_list, (64, 64)),
    "subgraph_encoder_dims": (_int_list, (64, 64)),
    "attr_decoder_dims": (_int_list, (64,)),
    "attr_activation": (str, "identity"),
    "epochs": (int, 300),
    "lr": (float, 5e-3),
    "beta1": (float, 0.9),
    "beta2": (float, 0.999),
    "adam_eps": (float, 1e-8),
    "block_size": (int, 1024),
    # evaluation / experiments
    "k": (_int_list, ()),
    "study": (str, "ablation"),
    "seeds": (_int_list, (0, 1, 2, 3, 4)),
    "l_values": (_int_list, (3, 4, 5)),
    "n_values": (_int_list, (1, 3, 5)),
    "ratios": (_float_list, (0.01, 0.03, 0.05, 0.10)),
    "embeddings": (lambda t: str(t).lower() in ("1", "true", "yes"), False),
}


def read_config_file(path):
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ValidationError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in text.split("=", 1))
            key = key.replace("-", "_")
            if key not in OPTIONS:
                raise ValidationError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = value
    return values


def resolve(args):
    """Merge defaults, config file and flags into one dict of parsed values."""
    raw = {}
    if args.config:
        raw.update(read_config_file(args.config))
    for key in OPTIONS:
        flag = getattr(args, key, None)
        if flag is not None:
            raw[key] = flag
    cfg = {}
    for key, (parse, default) in OPTIONS.items():
        if key in raw:
            try:
                cfg[key] = parse(raw[key])
            except (TypeError, ValueError):
                raise ValidationError(f"bad value for {key}: {raw[key]!r}") from None
        else:
            cfg[key] = default
    if cfg["threads"] < 1:
        raise ValidationError("threads must be >= 1")
    return cfg


def _fmt(value):
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    return "none" if value is None else str(value)


def write_resolved(cfg, out, command):
    with open(os.path.join(out, "config.resolved.txt"), "w") as fh:
        fh.write(f"# mgad {command}\n")
        for key in sorted(cfg):
            fh.write(f"{key} = {_fmt(cfg[key])}\n")


def _require(cfg, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise ValidationError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _out_dir(cfg):
    _require(cfg, "out")
    os.makedirs(cfg["out"], exist_ok=True)
    return cfg["out"]


def model_config(cfg):
    return MGADConfig(
        alpha=cfg["alpha"], graph_encoder_dims=cfg["graph_encoder_dims"],
        subgraph_encoder_dims=cfg["subgraph_encoder_dims"], attr_decoder_dims=cfg["attr_decoder_dims"],
        attr_activation=cfg["attr_activation"], epochs=cfg["epochs"], lr=cfg["lr"], beta1=cfg["beta1"],
        beta2=cfg["beta2"], adam_eps=cfg["adam_eps"], block_size=cfg["block_size"],
        seed=derive_seed(cfg["seed"], "init"),
    )


def sampler_config(cfg):
    schemas = None if cfg["schemas"] is None else tuple(s for s in cfg["schemas"].split(",") if s.strip())
    return SamplerConfig(walks_per_node=cfg["walks_per_node"], walk_length=cfg["walk_length"],
                         schemas=schemas, strategy=cfg["sampling"], seed=derive_seed(cfg["seed"], "sampling"))


def _log(out, message):
    with open(os.path.join(out, "run.log"), "a") as fh:
        fh.write(f"{time.strftime('%Y-%m-%dT%H:%M:%S')} {message}\n")


# commands --------------------------------------------------------------------

def cmd_inject(cfg):
    if cfg["content"] is None:
        _require(cfg, "edges", "attributes")
    else:
        _require(cfg, "cites")
    inj = InjectionConfig(num_structural=cfg["num_structural"], num_attribute=cfg["num_attribute"],
                          clique_size=cfg["clique_size"], seed=derive_seed(cfg["seed"], "injection"),
                          donor_candidates=cfg["donor_candidates"], order=cfg["injection_order"])
    out = _out_dir(cfg)
    if cfg["content"] is None:
        bundle = load_dataset(cfg["edges"], cfg["attributes"], cfg["truth"], name=cfg["name"])
    else:
        bundle = load_linqs(cfg["content"], cfg["cites"], name=cfg["name"])
    graph, prov = inject_anomalies(bundle.graph, inj)
    prov["root_seed"] = cfg["seed"]
    prov["edge_records"] = bundle.graph.meta["edge_records"]
    save_dataset(DatasetBundle(graph=graph, name=bundle.name, provenance=prov), out)
    write_resolved(cfg, out, "inject")
    n_truth = 0 if graph.truth is None else int(graph.truth.sum())
    print(f"wrote {out}: n={graph.n_nodes} m={graph.n_edges} d={graph.n_features} anomalies={n_truth}")


def cmd_synthetic(cfg):
    out = _out_dir(cfg)
    ratio = 0.10 if cfg["reveal_ratio"] is None else cfg["reveal_ratio"]
    bundle = make_synthetic_benchmark(seed=cfg["seed"], reveal_ratio=ratio)
    save_dataset(bundle, out)
    write_resolved(cfg, out, "synthetic")
    g = bundle.graph
    print(f"wrote {out}: n={g.n_nodes} m={g.n_edges} anomalies={int(g.truth.sum())} labeled={int(g.labels.sum())}")


def cmd_sample(cfg):
    _require(cfg, "bundle")
    sampler = sampler_config(cfg)
    out = _out_dir(cfg)
    graph = load_bundle(cfg["bundle"]).graph
    if cfg["reveal_ratio"] is not None:
        graph = reveal_labels(graph, cfg["reveal_ratio"], np.random.default_rng(derive_seed(cfg["seed"], "reveal")))
    if not graph.labels.any():
        raise ValidationError("bundle has no O-labeled nodes; pass --reveal-ratio")
    t0 = time.perf_counter()
    sub = generate_anomaly_subgraph(graph, sampler, n_jobs=cfg["threads"])
    write_walks(os.path.join(out, "walks.txt"), sub.walks)
    with open(os.path.join(out, "subgraph_nodes.txt"), "w") as fh:
        fh.writelines(f"{int(v)}\n" for v in sub.index_map)
    with open(os.path.join(out, "labels.txt"), "w") as fh:
        fh.writelines(f"{int(v)}\n" for v in np.flatnonzero(graph.labels))
    write_json(os.path.join(out, "sample.json"), {
        "accepted_walks": int(len(sub.walks)), "subgraph_nodes": int(sub.n_nodes),
        "subgraph_edges": int(sub.graph.n_edges), "walk_steps": int(sub.n_steps),
        "schemas": [str(s) for s in sampler.schemas], "labeled": int(graph.labels.sum()),
    })
    write_resolved(cfg, out, "sample")
    _log(out, f"sample: {len(sub.walks)} walks in {time.perf_counter() - t0:.3f}s")
    print(f"accepted {len(sub.walks)} walks, subgraph of {sub.n_nodes} nodes")


def _load_subgraph(graph, path):
    nodes_path = os.path.join(path, "subgraph_nodes.txt") if os.path.isdir(path) else path
    nodes = read_node_ids(nodes_path)
    walks_path = os.path.join(os.path.dirname(nodes_path), "walks.txt")
    walks = read_walks(walks_path) if os.path.exists(walks_path) else None
    return subgraph_from_nodes(graph, nodes, walks)


def cmd_train(cfg):
    _require(cfg, "bundle", "subgraph")
    config = model_config(cfg)
    out = _out_dir(cfg)
    graph = load_bundle(cfg["bundle"]).graph
    sub = _load_subgraph(graph, cfg["subgraph"])
    model = init_model(config, graph.n_features, np.random.default_rng(config.seed))
    model, history = train(graph, sub, config, model=model)
    save_checkpoint(os.path.join(out, "checkpoint.bin"), model, config)
    with open(os.path.join(out, "subgraph_nodes.txt"), "w") as fh:
        fh.writelines(f"{int(v)}\n" for v in sub.index_map)
    with open(os.path.join(out, "history.csv"), "w") as fh:
        fh.write("epoch,loss\n")
        for i, value in enumerate(history.loss):
            fh.write(f"{i},{value!r}\n")
    write_resolved(cfg, out, "train")
    _log(out, f"train: {len(history)} epochs in {sum(history.seconds):.3f}s")
    if len(history):
        print(f"trained {len(history)} epochs, loss {history.loss[0]:.4f} -> {history.loss[-1]:.4f}")


def cmd_score(cfg):
    _require(cfg, "bundle", "checkpoint")
    out = _out_dir(cfg)
    graph = load_bundle(cfg["bundle"]).graph
    model, config = load_checkpoint(cfg["checkpoint"])
    sub_path = cfg["subgraph"] or os.path.join(os.path.dirname(os.path.abspath(cfg["checkpoint"])), "subgraph_nodes.txt")
    sub = _load_subgraph(graph, sub_path)
    data = GraphData(graph, sub)
    state = forward(model, data)
    report = anomaly_scores(model, data, config.alpha, config.block_size, state=state)
    with open(os.path.join(out, "scores.csv"), "w") as fh:
        fh.write("node_id,score,truth\n")
        for v, s in enumerate(report.scores):
            t = "" if graph.truth is None else int(graph.truth[v])
            fh.write(f"{v},{float(s)!r},{t}\n")
    write_json(os.path.join(out, "report.json"), {"alpha": config.alpha, **report.to_dict()})
    if cfg["embeddings"]:
        np.savetxt(os.path.join(out, "embeddings.txt"), state.z, fmt="%.17g")
    write_resolved(cfg, out, "score")
    print(f"scored {graph.n_nodes} nodes; top 5: {report.ranking[:5].tolist()}")


def read_scores(path):
    scores, truth = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"node_id", "score"} <= set(reader.fieldnames):
            raise ValidationError(f"{path}: expected columns node_id,score[,truth]")
        rows = sorted(reader, key=lambda r: int(r["node_id"]))
    for i, row in enumerate(rows):
        if int(row["node_id"]) != i:
            raise ValidationError(f"{path}: node ids must cover 0..n-1")
        scores.append(float(row["score"]))
        truth.append(row.get("truth", ""))
    return np.array(scores), truth


def cmd_eval(cfg):
    _require(cfg, "scores")
    out = _out_dir(cfg)
    scores, truth_col = read_scores(cfg["scores"])
    if cfg["bundle"] is not None:
        graph = load_bundle(cfg["bundle"]).graph
        if graph.truth is None:
            raise ValidationError("bundle has no truth file")
        if graph.n_nodes != scores.size:
            raise ValidationError("score file and bundle differ in node count")
        truth = graph.truth
    else:
        if any(t == "" for t in truth_col):
            raise ValidationError("score file lacks truth values; pass --bundle")
        truth = np.array([int(t) for t in truth_col], dtype=bool)
    result = evaluate(scores, truth, ks=cfg["k"] or None, seed=cfg["seed"])
    write_json(os.path.join(out, "eval.json"), result.to_dict())
    write_resolved(cfg, out, "eval")
    print(f"AUC {result.auc:.4f}")


def cmd_experiment(cfg):
    _require(cfg, "bundle")
    out = _out_dir(cfg)
    graph = load_bundle(cfg["bundle"]).graph
    params = dict(alpha=cfg["alpha"], graph_encoder_dims=cfg["graph_encoder_dims"],
                  subgraph_encoder_dims=cfg["subgraph_encoder_dims"], attr_decoder_dims=cfg["attr_decoder_dims"],
                  attr_activation=cfg["attr_activation"], epochs=cfg["epochs"], lr=cfg["lr"],
                  block_size=cfg["block_size"], schemas=cfg["schemas"], sampling=cfg["sampling"],
                  n_jobs=cfg["threads"])
    seeds = cfg["seeds"]
    study = cfg["study"]
    t0 = time.perf_counter()
    if study == "param":
        rows = run_param_study(graph, cfg["l_values"], cfg["n_values"], seeds,
                               reveal_ratio=cfg["reveal_ratio"], **params)
        keys = ("walk_length", "walks_per_node")
    elif study == "sensitivity":
        rows = run_sensitivity(graph, cfg["ratios"], seeds,
                               walk_length=cfg["walk_length"], walks_per_node=cfg["walks_per_node"], **params)
        keys = ("reveal_ratio",)
    elif study == "ablation":
        rows = run_ablation(graph, seeds, reveal_ratio=cfg["reveal_ratio"],
                            walk_length=cfg["walk_length"], walks_per_node=cfg["walks_per_node"], **params)
        keys = ("variant",)
    else:
        raise ValidationError(f"study must be param, sensitivity or ablation, got {study!r}")
    write_csv(os.path.join(out, "results.csv"), rows)
    summary = summarize(rows, keys)
    write_json(os.path.join(out, "summary.json"), {"study": study, "cells": summary})
    write_resolved(cfg, out, "experiment")
    _log(out, f"experiment {study}: {len(rows)} runs in {time.perf_counter() - t0:.3f}s")
    for cell in summary:
        label = " ".join(f"{k}={cell[k]}" for k in keys)
        print(f"{label}: mean AUC {cell['mean_auc']:.4f} [{cell['min_auc']:.4f}, {cell['max_auc']:.4f}]")


COMMANDS = {
    "inject": (cmd_inject, "inject structural and attribute anomalies into a base dataset"),
    "synthetic": (cmd_synthetic, "write the planted-anomaly community benchmark as a bundle"),
    "sample": (cmd_sample, "generate the metapath anomaly subgraph"),
    "train": (cmd_train, "train the autoencoder on a bundle and subgraph"),
    "score": (cmd_score, "score nodes with a trained checkpoint"),
    "eval": (cmd_eval, "compute AUC and precision@k from a score file"),
    "experiment": (cmd_experiment, "run the parameter, sensitivity or ablation study"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="mgad", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key = value configuration file")
        for key in OPTIONS:
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None, metavar="VALUE")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        with threadpool_limits(limits=cfg["threads"]):
            COMMANDS[args.command][0](cfg)
    except ValidationError as exc:
        print(f"mgad {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, FloatingPointError, RuntimeError) as exc:
        print(f"mgad {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        print(f"mgad {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
