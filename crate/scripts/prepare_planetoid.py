#!/usr/bin/env python3
"""Convert Planetoid citation data (Cora, Citeseer, Pubmed) into the layout subcr reads.

Download the raw files first, e.g. from https://github.com/kimiyoung/planetoid
(directory `data/`): ind.<name>.{x,tx,allx,graph,test.index} (y, ty and ally are
class labels and are not needed).

Output, in --out (default data/<name>):

    edges.txt       one undirected edge per line, "src dst", 0-based ids
    attributes.csv  one row per node, comma separated, no header
    SHA256SUMS      checksums of the two files above

No labels.txt is written: class labels are not anomaly labels. `subcr run`
injects anomalies (Cora/Citeseer 150, Pubmed 600) when labels are absent, or
`subcr inject` writes a labeled copy.

Node counts after conversion: cora 2708, citeseer 3327 (15 test ids missing
from the raw files become zero-attribute isolated rows), pubmed 19717.
Feature counts: 1433, 3703, 500.

Requires numpy and scipy (the raw files are pickled scipy matrices).
"""

import argparse
import hashlib
import pickle
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sp

EXPECTED = {"cora": (2708, 1433), "citeseer": (3327, 3703), "pubmed": (19717, 500)}


def load(raw: Path, name: str, part: str):
    with open(raw / f"ind.{name}.{part}", "rb") as f:
        return pickle.load(f, encoding="latin1")


def convert(raw: Path, name: str):
    allx, tx = load(raw, name, "allx"), load(raw, name, "tx")
    graph = load(raw, name, "graph")
    test_index = [int(line) for line in open(raw / f"ind.{name}.test.index")]
    test_sorted = np.sort(test_index)

    if name == "citeseer":
        # some test ids are absent; pad tx so ids stay contiguous
        full = range(test_sorted.min(), test_sorted.max() + 1)
        padded = sp.lil_matrix((len(full), tx.shape[1]))
        padded[test_sorted - test_sorted.min(), :] = tx
        tx = padded

    x = sp.vstack((allx, tx)).tolil()
    x[test_index, :] = x[test_sorted, :]
    x = x.toarray()

    n = x.shape[0]
    edges = set()
    for src, dsts in graph.items():
        for dst in dsts:
            if src != dst and src < n and dst < n:
                edges.add((min(src, dst), max(src, dst)))
    return x, sorted(edges)


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("name", choices=sorted(EXPECTED))
    parser.add_argument("--raw", type=Path, required=True, help="directory with ind.<name>.* files")
    parser.add_argument("--out", type=Path, help="output directory (default data/<name>)")
    args = parser.parse_args()

    out = args.out or Path("data") / args.name
    out.mkdir(parents=True, exist_ok=True)
    x, edges = convert(args.raw, args.name)
    if x.shape != EXPECTED[args.name]:
        print(f"unexpected shape {x.shape}, wanted {EXPECTED[args.name]}", file=sys.stderr)
        return 1

    with open(out / "edges.txt", "w") as f:
        f.writelines(f"{a} {b}\n" for a, b in edges)
    fmt = "%d" if np.all(x == np.round(x)) else "%.10g"
    np.savetxt(out / "attributes.csv", x, fmt=fmt, delimiter=",")
    sums = [f"{sha256(out / n)}  {n}\n" for n in ("edges.txt", "attributes.csv")]
    (out / "SHA256SUMS").write_text("".join(sums))
    print(f"{args.name}: {x.shape[0]} nodes, {len(edges)} edges, {x.shape[1]} features -> {out}")
    print("".join(sums), end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
