"""Structure recovery from distance matrices.

The pipeline for corrupted data is: estimate distances between the noisy
copies, run Neighbor-Joining, contract spurious short internal edges, then
(optionally) turn the suppressed augmented tree back into a tree on the
original nodes by promoting the closest noisy copy at every inner node.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import AmbiguousMinimumWarning, NotReducible, TooFewTaxa
from .metrics import DistanceMatrix, distance_matrix_empirical, mutual_information
from .models import SampleBatch
from .tree import (
    LabeledTree,
    SemiLabeledTree,
    _edge,
    robinson_foulds_normalized,
    semi_labeled_equal,
    suppressed_augmented,
)

TIE_TOL = 1e-9


# ----------------------------------------------------------------- Chow-Liu


def _kruskal(labels, W, decimals):
    """Minimum spanning tree; ties broken by (rounded weight, label pair)."""
    n = len(labels)
    cand = []
    for a, b in itertools.combinations(range(n), 2):
        u, v = _edge(labels[a], labels[b])
        cand.append((round(float(W[a, b]), decimals), u, v, float(W[a, b])))
    cand.sort()
    parent = {v: v for v in labels}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    edges, lengths = [], {}
    for _, u, v, w in cand:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
            edges.append((u, v))
            lengths[(u, v)] = w
            if len(edges) == n - 1:
                break
    return edges, lengths


def chow_liu(D: DistanceMatrix, decimals: int = 10) -> LabeledTree:
    """Minimum-weight spanning tree of the complete graph weighted by ``D``.

    Weights are compared after rounding to ``decimals`` places so that
    floating-point noise does not decide ties; remaining ties go to the
    lexicographically smaller label pair.
    """
    edges, lengths = _kruskal(list(D.labels), D.values, decimals)
    return LabeledTree(frozenset(D.labels), edges, lengths, D.noisy_offset)


def mutual_information_matrix(batch: SampleBatch, smoothing: float = 0.0) -> np.ndarray:
    X = batch.data.astype(np.int64)
    r = batch.r
    n = len(batch.labels)
    M = np.zeros((n, n))
    for a, b in itertools.combinations(range(n), 2):
        P = np.bincount(X[:, a] * r + X[:, b], minlength=r * r).reshape(r, r) + smoothing
        M[a, b] = M[b, a] = mutual_information(P)
    return M


def chow_liu_mi(batch: SampleBatch, smoothing: float = 0.0, decimals: int = 12) -> LabeledTree:
    """Classical Chow-Liu: maximum-weight spanning tree on pairwise MI."""
    M = mutual_information_matrix(batch, smoothing)
    edges, _ = _kruskal(list(batch.labels), -M, decimals)
    return LabeledTree(frozenset(batch.labels), edges, None, batch.noisy_offset)


@dataclass(frozen=True)
class ChowLiuConsistency:
    consistent_strict: bool
    consistent_weak: bool
    violations: tuple

    @property
    def indeterminate(self) -> bool:
        """Weak condition holds but with at least one equality."""
        return self.consistent_weak and not self.consistent_strict


def check_chow_liu_consistency(tstar: LabeledTree, ells, tol: float = 0.0) -> ChowLiuConsistency:
    """Test ``d_uv ≥ ℓ_u - ℓ_v`` over directed edges ``u -> v`` with ``u`` inner.

    The weak (≥) form is necessary for Chow-Liu on noisy distances to return
    ``tstar``; the strict form is sufficient. ``violations`` lists directed
    edges where the weak form fails.
    """
    strict, weak, bad = True, True, []
    leaves = tstar.leaves
    for a, b in sorted(tstar.edges):
        d = tstar.length(a, b)
        for u, v in ((a, b), (b, a)):
            if u in leaves:
                continue
            gap = d - (ells[u] - ells[v])
            if gap < -tol:
                weak = strict = False
                bad.append((u, v))
            elif gap <= tol:
                strict = False
    return ChowLiuConsistency(strict, weak, tuple(bad))


def cycle_property_violations(tree: LabeledTree, D: DistanceMatrix, tol: float = 0.0) -> list:
    """Non-tree pairs lighter than the heaviest edge on their tree path."""
    out = []
    for a, b in itertools.combinations(D.labels, 2):
        if _edge(a, b) in tree.edges:
            continue
        p = tree.path(a, b)
        heaviest = max(D[x, y] for x, y in zip(p, p[1:]))
        if D[a, b] < heaviest - tol:
            out.append((a, b))
    return out


# ------------------------------------------------------------ Neighbor-Joining


def _neighbor_joining(D: DistanceMatrix):
    labels = list(D.labels)
    n0 = len(labels)
    if n0 < 3:
        raise TooFewTaxa(f"need at least 3 taxa, got {n0}")
    next_label = min(min(labels), 0) - 1
    active = sorted(labels)
    order = [D.index(v) for v in active]
    M = np.array(D.values, dtype=float)[np.ix_(order, order)]
    edges, lengths, clamped = [], {}, []

    def attach(child, parent, length):
        e = _edge(child, parent)
        if length < 0:
            clamped.append(e)
            length = 0.0
        edges.append(e)
        lengths[e] = float(length)

    while len(active) > 3:
        n = len(active)
        R = M.sum(axis=1)
        Q = (n - 2) * M - R[:, None] - R[None, :]
        iu = np.triu_indices(n, 1)
        k = int(np.argmin(Q[iu]))
        i, j = int(iu[0][k]), int(iu[1][k])
        li = 0.5 * M[i, j] + (R[i] - R[j]) / (2 * (n - 2))
        lj = M[i, j] - li
        w = next_label
        next_label -= 1
        attach(active[i], w, li)
        attach(active[j], w, lj)
        new = 0.5 * (M[i] + M[j] - M[i, j])
        M[i, :] = new
        M[:, i] = new
        M[i, i] = 0.0
        M = np.delete(np.delete(M, j, axis=0), j, axis=1)
        active[i] = w
        del active[j]

    a, b, c = active
    w = next_label
    attach(a, w, 0.5 * (M[0, 1] + M[0, 2] - M[1, 2]))
    attach(b, w, 0.5 * (M[0, 1] + M[1, 2] - M[0, 2]))
    attach(c, w, 0.5 * (M[0, 2] + M[1, 2] - M[0, 1]))
    nodes = set(labels) | {x for e in edges for x in e}
    tree = LabeledTree(frozenset(nodes), edges, lengths, D.noisy_offset)
    return tree, clamped


def neighbor_joining(D: DistanceMatrix) -> LabeledTree:
    """Saitou-Nei Neighbor-Joining; inner nodes get fresh negative labels.

    Negative branch lengths are set to zero.
    """
    return _neighbor_joining(D)[0]


# ----------------------------------------------------------------- shrinking


def _contract(adj, lengths, u, v):
    """Merge ``v`` into ``u`` (in place)."""
    adj[u].discard(v)
    lengths.pop(_edge(u, v))
    for w in adj.pop(v):
        if w == u:
            continue
        adj[w].discard(v)
        adj[w].add(u)
        adj[u].add(w)
        lengths[_edge(u, w)] = lengths.pop(_edge(v, w))


def _internal_edges(adj, lengths):
    return sorted(
        (l, e) for e, l in lengths.items() if len(adj[e[0]]) > 1 and len(adj[e[1]]) > 1
    )


def _rebuild(adj, lengths, offset):
    return LabeledTree(frozenset(adj), list(lengths), dict(lengths), offset)


def _require_lengths(tree):
    if not tree.has_lengths:
        raise ValueError("shrinking needs edge lengths")


def shrink_edges_with_log(tree, epsilon: float):
    """Like :func:`shrink_edges` but also return the contracted edges."""
    tree = tree.underlying if isinstance(tree, SemiLabeledTree) else tree
    _require_lengths(tree)
    adj = {v: set(n) for v, n in tree._adj.items()}
    lengths = dict(tree.lengths)
    done = []
    while True:
        short = [(l, e) for l, e in _internal_edges(adj, lengths) if l < epsilon]
        if not short:
            break
        length, (u, v) = short[0]
        _contract(adj, lengths, u, v)
        done.append((u, v, length))
    return _rebuild(adj, lengths, tree.noisy_offset), done


def shrink_edges(tree, epsilon: float) -> SemiLabeledTree:
    """Contract every internal edge shorter than ``epsilon`` (strictly).

    Leaf edges are never contracted. Contraction runs in ascending length
    order, ties by label pair.
    """
    return SemiLabeledTree(shrink_edges_with_log(tree, epsilon)[0])


def shrink_to_binary_prior_with_log(tree):
    tree = tree.underlying if isinstance(tree, SemiLabeledTree) else tree
    _require_lengths(tree)
    adj = {v: set(n) for v, n in tree._adj.items()}
    lengths = dict(tree.lengths)
    n_leaves = sum(1 for v in adj if len(adj[v]) <= 1)
    if n_leaves < 4 or n_leaves % 2:
        raise NotReducible(f"{n_leaves} leaves cannot form the target shape")
    done = []
    while True:
        inner = [v for v in adj if len(adj[v]) > 1]
        if any(len(adj[v]) > 4 for v in inner):
            raise NotReducible("an inner node already has degree above 4")
        if all(len(adj[v]) == 4 for v in inner):
            break
        cand = [
            (l, e) for l, e in _internal_edges(adj, lengths)
            if len(adj[e[0]]) == 3 and len(adj[e[1]]) == 3
        ]
        if not cand:
            raise NotReducible("no pair of adjacent degree-3 nodes left to merge")
        length, (u, v) = cand[0]
        _contract(adj, lengths, u, v)
        done.append((u, v, length))
    return _rebuild(adj, lengths, tree.noisy_offset), done


def shrink_to_binary_prior(tree) -> SemiLabeledTree:
    """Contract shortest internal edges until the tree has the shape implied
    by a binary underlying tree: every inner node of degree exactly 4 (its
    own noisy copy plus three neighbours).

    Only edges joining two degree-3 nodes are eligible, so each contraction
    produces one finished degree-4 node.
    """
    return SemiLabeledTree(shrink_to_binary_prior_with_log(tree)[0])


# ------------------------------------------------------------- T* extraction


def refit_terminal_lengths(tbar_e, D: DistanceMatrix) -> LabeledTree:
    """Re-estimate every terminal edge length on a fixed topology.

    After contraction the pendant lengths left by NJ are measured to nodes
    that no longer exist. For leaf ``x`` hanging off ``u``, each pair of
    leaves ``y, z`` reached through two different other branches of ``u``
    gives ``(d_xy + d_xz - d_yz) / 2``; the estimate is their mean.
    """
    t = tbar_e.underlying if isinstance(tbar_e, SemiLabeledTree) else tbar_e
    leaves = t.leaves
    if len(leaves) < 3 or not t.inner:
        return t
    lengths = dict(t.lengths) if t.has_lengths else {e: 0.0 for e in t.edges}
    for u in t.inner:
        par = t.parents(u)
        branch = {}
        for v in leaves:
            w = v
            while par[w] != u:
                w = par[w]
            branch.setdefault(w, []).append(D.index(v))
        for x in t.neighbors(u):
            if x not in leaves:
                continue
            ix = D.index(x)
            near = [min(g, key=lambda j: D.values[ix, j]) for w, g in branch.items() if w != x]
            est = [(D.values[ix, y] + D.values[ix, z] - D.values[y, z]) / 2
                   for y, z in itertools.combinations(near, 2)]
            lengths[_edge(x, u)] = max(float(np.mean(est)), 0.0)
    return t.with_lengths(lengths)


def extract_tstar_with_ties(tbar_e, offset: int | None = None):
    t = tbar_e.underlying if isinstance(tbar_e, SemiLabeledTree) else tbar_e
    _require_lengths(t)
    if offset is None:
        offset = t.noisy_offset if t.noisy_offset is not None else 0
    leaves = t.leaves
    inner = sorted(t.inner)
    strip = lambda x: x - offset  # noqa: E731
    if not inner:
        return LabeledTree(frozenset(strip(x) for x in t.nodes),
                           [(strip(a), strip(b)) for a, b in t.edges]), []
    name, ties = {}, []
    for w in inner:
        cand = sorted((t.length(w, x), x) for x in t.neighbors(w) if x in leaves)
        if not cand:
            raise NotReducible(f"inner node {w} has no attached leaf")
        best_len, best = cand[0]
        tied = [x for l, x in cand if l - best_len <= TIE_TOL]
        if len(tied) > 1:
            best = min(tied)
            ties.append((w, tuple(tied)))
            warnings.warn(
                f"terminal edges {tied} at node {w} tie; keeping {best}",
                AmbiguousMinimumWarning,
                stacklevel=3,
            )
        name[w] = strip(best)
    promoted = {name[w] + offset for w in inner}
    edges = []
    for a, b in t.edges:
        if a in leaves and b in leaves:
            raise NotReducible("tree has a leaf-leaf edge and inner nodes")
        if a in leaves or b in leaves:
            leaf, w = (a, b) if a in leaves else (b, a)
            if leaf in promoted:
                continue
            edges.append((strip(leaf), name[w]))
        else:
            edges.append((name[a], name[b]))
    nodes = {strip(x) for x in leaves}
    return LabeledTree(frozenset(nodes), edges), ties


def extract_tstar(tbar_e, offset: int | None = None) -> LabeledTree:
    """Recover the original tree from the suppressed augmented tree.

    At each inner node the leaf with the shortest terminal edge is taken to
    be that node's own noisy copy; its label (minus ``offset``) names the
    node. Ties within 1e-9 emit :class:`AmbiguousMinimumWarning` and keep the
    lowest label.
    """
    return extract_tstar_with_ties(tbar_e, offset)[0]


def leaf_errors(recovered: LabeledTree, tstar: LabeledTree) -> int:
    """Leaves of ``tstar`` that are not attached to the same neighbour in
    ``recovered``."""
    out = 0
    for v in tstar.leaves:
        if v not in recovered.nodes or recovered.neighbors(v) != tstar.neighbors(v):
            out += 1
    return out


# -------------------------------------------------------------- orchestration


@dataclass(frozen=True)
class RecoveryConfig:
    method: str = "neighbor_joining"
    epsilon: float = 0.5
    binary_prior: bool = False
    target: str = "tbar_e"
    kind: str | None = None
    smoothing: float = 0.0
    decimals: int = 10

    def __post_init__(self):
        if self.method not in ("chow_liu", "neighbor_joining"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.target not in ("tbar_e", "tstar"):
            raise ValueError(f"unknown target {self.target!r}")
        if not np.isfinite(self.epsilon) or self.epsilon < 0:
            raise ValueError("epsilon must be finite and nonnegative")


@dataclass
class RecoveryResult:
    tree: SemiLabeledTree
    shrunk_edges: list = field(default_factory=list)
    tstar: LabeledTree | None = None
    raw_tree: LabeledTree | None = None
    diagnostics: dict = field(default_factory=dict)


def recover(data, config: RecoveryConfig = RecoveryConfig(), reference: LabeledTree | None = None) -> RecoveryResult:
    """Run estimation, reconstruction, shrinking and optional T* extraction.

    ``data`` is a :class:`SampleBatch` or a :class:`DistanceMatrix` over the
    noisy copies. ``reference`` is the true tree on the original labels;
    when given, RF distance to its suppressed augmented tree and exact T*
    recovery are reported.
    """
    if isinstance(data, SampleBatch):
        D = distance_matrix_empirical(data, config.kind, config.smoothing)
    else:
        D = data
    offset = D.noisy_offset if D.noisy_offset is not None else 0
    diag = {"flags": sorted(D.flags), "degenerate": bool(D.flags)}

    if config.method == "chow_liu":
        raw = chow_liu(D, config.decimals)
        stripped = raw.relabel({x: x - offset for x in raw.nodes})
        tstar = LabeledTree(stripped.nodes, stripped.edges)
        result = RecoveryResult(SemiLabeledTree(raw), [], tstar, raw, diag)
        if reference is not None:
            diag["tstar_exact"] = tstar == reference
            diag["leaf_errors"] = leaf_errors(tstar, reference)
        return result

    raw, clamped = _neighbor_joining(D)
    diag["clamped_edges"] = clamped
    if config.binary_prior:
        shrunk_tree, shrunk = shrink_to_binary_prior_with_log(raw)
    else:
        shrunk_tree, shrunk = shrink_edges_with_log(raw, config.epsilon)
    result = RecoveryResult(SemiLabeledTree(shrunk_tree), shrunk, None, raw, diag)
    if reference is not None:
        ref = suppressed_augmented(reference, offset=offset or None)
        diag["rf_normalized"] = robinson_foulds_normalized(shrunk_tree, ref)
        diag["tbar_e_exact"] = semi_labeled_equal(shrunk_tree, ref)
    if config.target == "tstar":
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", AmbiguousMinimumWarning)
                refit = refit_terminal_lengths(shrunk_tree, D)
                tstar, ties = extract_tstar_with_ties(refit, offset)
            result.tstar = tstar
            diag["ties"] = ties
        except NotReducible as exc:
            diag["extract_error"] = str(exc)
        if reference is not None:
            ok = result.tstar is not None and result.tstar == reference
            diag["tstar_exact"] = ok
            diag["leaf_errors"] = (
                leaf_errors(result.tstar, reference) if result.tstar is not None
                else len(reference.leaves)
            )
    return result
