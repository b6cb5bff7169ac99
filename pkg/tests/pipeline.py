"""Run the full command-line pipeline inside a working directory."""

import os

from mgad.cli import main

FAST = ["--epochs", "40", "--graph-encoder-dims", "16,16", "--subgraph-encoder-dims", "16,16",
        "--attr-decoder-dims", "16", "--threads", "1"]


def run_pipeline(workdir, extra=()):
    old = os.getcwd()
    os.chdir(workdir)
    try:
        codes = [
            main(["synthetic", "--out", "bench", "--seed", "3"]),
            main(["inject", "--edges", "bench/edges.txt", "--attributes", "bench/attributes.txt",
                  "--num-structural", "15", "--seed", "5", "--out", "injected"]),
            main(["sample", "--bundle", "bench", "--out", "sample", "--walks-per-node", "3", "--seed", "1"]),
            main(["train", "--bundle", "bench", "--subgraph", "sample", "--out", "train", *FAST, *extra]),
            main(["score", "--bundle", "bench", "--checkpoint", "train/checkpoint.bin", "--out", "score",
                  "--embeddings", "true"]),
            main(["eval", "--scores", "score/scores.csv", "--out", "eval"]),
            main(["experiment", "--bundle", "bench", "--study", "ablation", "--seeds", "0",
                  "--reveal-ratio", "0.1", "--out", "exp", *FAST]),
        ]
    finally:
        os.chdir(old)
    return codes


def artifacts(workdir):
    """Relative path -> bytes for every file except the timing log."""
    out = {}
    for root, _, files in os.walk(workdir):
        for name in files:
            if name == "run.log":
                continue
            path = os.path.join(root, name)
            with open(path, "rb") as fh:
                out[os.path.relpath(path, workdir)] = fh.read()
    return out
