#!/usr/bin/env python3
"""Convert a Planetoid citation dataset (ind.<name>.* pickles) to the
canonical directory format read by `gcnmf::data::load_dataset`.

    python3 scripts/convert_planetoid.py path/to/planetoid/data cora out/cora

Uses the fixed public split: the first 20 labelled nodes per class of the
training pool (140 for Cora), the next 500 (--val) for validation, and the 1000
test.index nodes. Duplicate and self-loop citations are dropped, since the
loader rejects them; Cora keeps 5278 of its 5429 raw links. Features are
row-normalized unless --raw is given.
"""

import argparse
import json
import pickle
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sp


def load(folder: Path, name: str, part: str):
    with open(folder / f"ind.{name}.{part}", "rb") as f:
        return pickle.load(f, encoding="latin1")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("folder", type=Path)
    ap.add_argument("name")
    ap.add_argument("out", type=Path)
    ap.add_argument("--raw", action="store_true", help="keep unnormalized features")
    ap.add_argument("--val", type=int, default=500, help="validation nodes after the training pool")
    args = ap.parse_args()

    x, y, tx, ty, allx, ally, graph = (load(args.folder, args.name, p) for p in ("x", "y", "tx", "ty", "allx", "ally", "graph"))
    test_index = [int(l) for l in open(args.folder / f"ind.{args.name}.test.index")]
    order = np.sort(test_index)

    features = sp.vstack((allx, tx)).tolil()
    features[test_index, :] = features[order, :]
    labels = np.vstack((ally, ty))
    labels[test_index, :] = labels[order, :]
    features = sp.csr_matrix(features, dtype=np.float64)
    if not args.raw:
        sums = np.asarray(features.sum(axis=1)).ravel()
        sums[sums == 0] = 1.0
        features = sp.diags(1.0 / sums) @ features
    n, d = features.shape
    classes = labels.argmax(axis=1)

    edges = set()
    for i, nbrs in graph.items():
        for j in nbrs:
            if i != j:
                edges.add((min(i, j), max(i, j)))

    split = {"train": list(range(y.shape[0])), "val": list(range(y.shape[0], y.shape[0] + args.val)), "test": sorted(test_index)}

    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "edges.tsv", "w") as f:
        for i, j in sorted(edges):
            f.write(f"{i}\t{j}\n")
    coo = features.tocoo()
    with open(out / "features.tsv", "w") as f:
        f.write(f"{n}\t{d}\n")
        for i, j, v in sorted(zip(coo.row, coo.col, coo.data)):
            f.write(f"{i}\t{j}\t{float(v)!r}\n")
    with open(out / "labels.tsv", "w") as f:
        for i, c in enumerate(classes):
            f.write(f"{i}\t{c}\n")
    with open(out / "split.json", "w") as f:
        f.write(json.dumps(split, separators=(",", ":")) + "\n")
    with open(out / "meta", "w") as f:
        f.write(f"name\t{args.name}\nnodes\t{n}\nedges\t{len(edges)}\nfeatures\t{d}\nclasses\t{classes.max() + 1}\n")
    print(f"{args.name}: {n} nodes, {len(edges)} edges, {d} features -> {out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
