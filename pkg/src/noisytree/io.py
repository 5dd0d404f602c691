"""Serialization: Newick and JSON trees, distance matrices, sample batches,
model and noise files."""
from __future__ import annotations

import csv
import io
import json
import math
import re
from pathlib import Path

import numpy as np

from .metrics import DistanceMatrix
from .models import (
    BetaChannel,
    CorruptionSpec,
    DiscreteTreeModel,
    GaussianChannel,
    IsingParams,
    LinearTreeModel,
    SampleBatch,
    StochasticChannel,
    UniformFlip,
    flip_for_length,
    from_symmetric,
    ising_to_discrete,
)
from .tree import NOISY_OFFSET, LabeledTree, _edge

# ------------------------------------------------------------------- trees


def tree_to_dict(tree: LabeledTree) -> dict:
    edges = sorted(tree.edges)
    return {
        "nodes": sorted(tree.nodes),
        "edges": [list(e) for e in edges],
        "lengths": [tree.lengths[e] for e in edges] if tree.has_lengths else None,
        "noisy_offset": tree.noisy_offset,
    }


def tree_from_dict(d: dict) -> LabeledTree:
    edges = [tuple(e) for e in d["edges"]]
    lengths = d.get("lengths")
    if lengths is not None:
        lengths = dict(zip(edges, lengths))
    return LabeledTree(frozenset(d["nodes"]), edges, lengths, d.get("noisy_offset"))


def to_newick(tree: LabeledTree, root=None) -> str:
    """Newick string with every node labelled and lengths when present."""
    if root is None:
        root = min(tree.inner) if tree.inner else min(tree.nodes)
    par = tree.parents(root)
    kids = {v: [] for v in par}
    for v, p in par.items():
        if p is not None:
            kids[p].append(v)

    def fmt(v):
        s = str(v)
        if par[v] is not None and tree.has_lengths:
            s += ":" + repr(tree.length(v, par[v]))
        return s

    def walk(v):
        if not kids[v]:
            return fmt(v)
        return "(" + ",".join(walk(c) for c in sorted(kids[v])) + ")" + fmt(v)

    return walk(root) + ";"


_TOKEN = re.compile(r"\s*([(),:;]|[^(),:;\s]+)")


def from_newick(text: str) -> LabeledTree:
    """Parse Newick with integer labels; unlabelled nodes get negative labels."""
    tokens = [m.group(1) for m in _TOKEN.finditer(text.strip())]
    if not tokens or tokens[-1] != ";":
        raise ValueError("Newick string must end with ';'")
    pos = 0
    edges, lengths = [], {}
    nodes = []
    fresh = [-1]

    def peek():
        return tokens[pos] if pos < len(tokens) else None

    def node():
        nonlocal pos
        children = []
        if peek() == "(":
            pos += 1
            while True:
                children.append(node())
                tok = peek()
                pos += 1
                if tok == ")":
                    break
                if tok != ",":
                    raise ValueError(f"unexpected token {tok!r} in Newick")
        label = None
        if peek() not in ("(", ")", ",", ":", ";", None):
            try:
                label = int(tokens[pos])
            except ValueError:
                raise ValueError(f"node label {tokens[pos]!r} is not an integer")
            pos += 1
        length = None
        if peek() == ":":
            pos += 1
            length = float(tokens[pos])
            pos += 1
        if label is None:
            label = fresh[0]
            fresh[0] -= 1
        nodes.append(label)
        for c, cl in children:
            edges.append((label, c))
            if cl is not None:
                lengths[_edge(label, c)] = cl
        return label, length

    node()
    if tokens[pos] != ";":
        raise ValueError("trailing tokens after Newick tree")
    taken = {v for v in nodes if v >= 0}
    if len(taken) != len([v for v in nodes if v >= 0]):
        raise ValueError("duplicate node labels in Newick")
    use_lengths = lengths if lengths and len(lengths) == len(edges) else None
    return LabeledTree(frozenset(nodes), edges, use_lengths)


def read_tree(path) -> LabeledTree:
    text = Path(path).read_text().strip()
    if text.startswith("{"):
        return tree_from_dict(json.loads(text))
    return from_newick(text)


def write_tree(tree: LabeledTree, path):
    path = Path(path)
    if path.suffix == ".json":
        path.write_text(json.dumps(tree_to_dict(tree), indent=1))
    else:
        path.write_text(to_newick(tree) + "\n")


# ---------------------------------------------------------- distance files


def infer_offset(labels):
    """Noisy-copy offset implied by file labels, or ``None``.

    Labels ``offset + i`` with ``0 < i < offset`` and ``offset`` a power of
    ten at least 1000 are read as noisy copies.
    """
    labels = list(labels)
    if not labels or min(labels) <= NOISY_OFFSET:
        return None
    offset = 10 ** int(math.log10(min(labels)))
    if all(offset < v < 2 * offset for v in labels):
        return offset
    return None


def distances_to_csv(D: DistanceMatrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([""] + list(D.labels))
    for lab, row in zip(D.labels, D.values):
        w.writerow([lab] + [repr(float(x)) for x in row])
    return buf.getvalue()


def distances_from_csv(text: str, noisy_offset=None) -> DistanceMatrix:
    rows = list(csv.reader(io.StringIO(text)))
    labels = [int(x) for x in rows[0][1:]]
    values = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
    if [int(r[0]) for r in rows[1:]] != labels:
        raise ValueError("row labels must match the header")
    if noisy_offset is None:
        noisy_offset = infer_offset(labels)
    return DistanceMatrix(tuple(labels), values, "file", noisy_offset=noisy_offset)


def distances_to_phylip(D: DistanceMatrix) -> str:
    """Lower-triangular PHYLIP matrix."""
    lines = [str(len(D.labels))]
    for k, lab in enumerate(D.labels):
        vals = " ".join(f"{x:.10g}" for x in D.values[k, :k])
        lines.append(f"{lab:<10}{(' ' + vals) if vals else ''}".rstrip())
    return "\n".join(lines) + "\n"


def distances_from_phylip(text: str, noisy_offset=None) -> DistanceMatrix:
    lines = [l for l in text.splitlines() if l.strip()]
    n = int(lines[0].split()[0])
    labels, V = [], np.zeros((n, n))
    for k, line in enumerate(lines[1 : n + 1]):
        parts = line.split()
        labels.append(int(parts[0]))
        vals = [float(x) for x in parts[1:]]
        if len(vals) == n:
            V[k] = vals
        else:
            V[k, :k] = vals
            V[:k, k] = vals
    if noisy_offset is None:
        noisy_offset = infer_offset(labels)
    return DistanceMatrix(tuple(labels), V, "file", noisy_offset=noisy_offset)


# ----------------------------------------------------------- sample batches


def batch_to_csv(batch: SampleBatch) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(batch.labels)
    if batch.kind == "discrete":
        w.writerows(batch.data.tolist())
    else:
        w.writerows([[repr(float(x)) for x in row] for row in batch.data])
    return buf.getvalue()


def batch_manifest(batch: SampleBatch) -> dict:
    return {
        "kind": batch.kind,
        "r": batch.r,
        "n": batch.n,
        "labels": list(batch.labels),
        "seed": batch.seed,
        "noisy_offset": batch.noisy_offset,
    }


def write_batch(batch: SampleBatch, path):
    """CSV with a header of node labels plus a ``.json`` sidecar manifest."""
    path = Path(path)
    path.write_text(batch_to_csv(batch))
    path.with_suffix(".json").write_text(json.dumps(batch_manifest(batch), indent=1))


def read_batch(path, kind=None, r=None) -> SampleBatch:
    path = Path(path)
    meta = {}
    side = path.with_suffix(".json")
    if side.exists():
        meta = json.loads(side.read_text())
    rows = list(csv.reader(io.StringIO(path.read_text())))
    labels = tuple(int(x) for x in rows[0])
    data = np.array([[float(x) for x in r_] for r_ in rows[1:]])
    kind = kind or meta.get("kind")
    if kind is None:
        kind = "discrete" if np.all(data == np.round(data)) else "continuous"
    if kind == "discrete":
        r = r or meta.get("r") or int(data.max()) + 1
    return SampleBatch(data, labels, kind, r if kind == "discrete" else None,
                       meta.get("seed"), meta.get("noisy_offset"))


# -------------------------------------------------------------- model files


def _matrices(d):
    return {tuple(int(x) for x in k.split("->")): np.array(v, dtype=float) for k, v in d.items()}


def model_from_dict(d: dict):
    """Build a model from ``{type, tree, params}``."""
    kind = d.get("type")
    tree = tree_from_dict(d["tree"])
    p = d.get("params", {})
    root = p.get("root")
    if kind == "symmetric":
        thetas = p["theta"]
        if isinstance(thetas, dict):
            thetas = {tuple(int(x) for x in k.split("-")): v for k, v in thetas.items()}
        return from_symmetric(tree, int(p["r"]), thetas, root)
    if kind == "discrete":
        return DiscreteTreeModel(tree, int(root), np.array(p["root_dist"]), _matrices(p["transitions"]))
    if kind == "ising":
        h = {int(k): v for k, v in p.get("h", {}).items()}
        b = {tuple(int(x) for x in k.split("-")): v for k, v in p["beta"].items()}
        return ising_to_discrete(IsingParams(tree, h, b, p.get("encoding", "binary")), root)
    if kind == "linear":
        lam = {tuple(int(x) for x in k.split("->")): v for k, v in p["coeffs"].items()}
        nv = {tuple(int(x) for x in k.split("->")): v for k, v in p["noise_vars"].items()}
        return LinearTreeModel(tree, int(root), float(p.get("root_mean", 0.0)),
                               float(p.get("root_var", 1.0)), lam, nv)
    raise ValueError(f"unknown model type {kind!r}")


def model_to_dict(model) -> dict:
    tree = tree_to_dict(model.tree)
    if isinstance(model, DiscreteTreeModel):
        return {
            "type": "discrete",
            "tree": tree,
            "params": {
                "root": model.root,
                "root_dist": model.root_dist.tolist(),
                "transitions": {f"{u}->{v}": M.tolist() for (u, v), M in model.transitions.items()},
            },
        }
    if isinstance(model, LinearTreeModel):
        return {
            "type": "linear",
            "tree": tree,
            "params": {
                "root": model.root,
                "root_mean": model.root_mean,
                "root_var": model.root_var,
                "coeffs": {f"{u}->{v}": x for (u, v), x in model.edge_coeffs.items()},
                "noise_vars": {f"{u}->{v}": x for (u, v), x in model.noise_vars.items()},
            },
        }
    raise TypeError(type(model).__name__)


def channel_from_dict(d: dict, r=None, marginal=None):
    kind = d.get("kind")
    if kind == "stochastic":
        return StochasticChannel(np.array(d["matrix"], dtype=float))
    if kind == "uniform_flip":
        return UniformFlip(float(d["q"]))
    if kind == "flip_length":
        return flip_for_length(float(d["ell"]), int(d.get("r", r or 2)), marginal)
    if kind == "beta":
        if "a" in d:
            return BetaChannel.symmetric(float(d["a"]))
        return BetaChannel(d["alpha0"], d["beta0"], d["alpha1"], d["beta1"])
    if kind == "gaussian":
        return GaussianChannel(float(d["variance"]))
    raise ValueError(f"unknown channel kind {kind!r}")


def noise_from_dict(d: dict, nodes, r=None) -> CorruptionSpec:
    """``{"default": channel, "channels": {label: channel}}``."""
    per = {int(k): v for k, v in d.get("channels", {}).items()}
    out = {}
    for v in nodes:
        entry = per.get(v, d.get("default"))
        if entry is None:
            raise ValueError(f"no channel for node {v}")
        out[v] = channel_from_dict(entry, r)
    return CorruptionSpec(out)
