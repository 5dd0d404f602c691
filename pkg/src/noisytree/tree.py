"""Tree data structures and combinatorial operations.

Trees are undirected, immutable, and labelled by integers. The noisy copy
``i^e`` of a node ``i`` lives in a disjoint label namespace: its label is
``i + offset``, where the offset is recorded on every tree produced by
:func:`augment` so the pairing can be undone later.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import Iterable, Mapping

from .errors import (
    CycleDetected,
    DegenerateClassWarning,
    Disconnected,
    DuplicateEdge,
    InvalidTree,
    LeafSetMismatch,
)

NOISY_OFFSET = 1000

Edge = tuple[int, int]


def _edge(u, v) -> Edge:
    u, v = int(u), int(v)
    return (u, v) if u <= v else (v, u)


@dataclass(frozen=True, eq=False)
class LabeledTree:
    """Undirected tree on integer labels with optional edge lengths.

    Equality and hashing look at nodes and edges only; lengths and the noisy
    label offset are carried along but do not take part in comparisons.
    """

    nodes: frozenset
    edges: frozenset
    lengths: Mapping[Edge, float] | None = None
    noisy_offset: int | None = None
    _adj: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        nodes = frozenset(int(v) for v in self.nodes)
        if not nodes:
            raise InvalidTree("a tree needs at least one node")
        edges = []
        seen = set()
        for pair in self.edges:
            u, v = pair
            if u == v:
                raise InvalidTree(f"self-loop at node {u}")
            e = _edge(u, v)
            if e in seen:
                raise DuplicateEdge(f"edge {e} listed twice")
            if e[0] not in nodes or e[1] not in nodes:
                raise InvalidTree(f"edge {e} references an unknown node")
            seen.add(e)
            edges.append(e)

        parent = {v: v for v in nodes}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for u, v in edges:
            ru, rv = find(u), find(v)
            if ru == rv:
                raise CycleDetected(f"edge {(u, v)} closes a cycle")
            parent[ru] = rv
        if len({find(v) for v in nodes}) > 1:
            raise Disconnected("edges do not connect all nodes")

        lengths = self.lengths
        if lengths is not None:
            norm = {}
            for key, val in lengths.items():
                norm[_edge(*key)] = float(val)
            missing = seen - norm.keys()
            if missing:
                raise InvalidTree(f"missing edge lengths for {sorted(missing)}")
            extra = norm.keys() - seen
            if extra:
                raise InvalidTree(f"lengths given for non-edges {sorted(extra)}")
            for e, val in norm.items():
                if not math.isfinite(val) or val < 0:
                    raise InvalidTree(f"edge {e} has invalid length {val}")
            lengths = MappingProxyType(norm)

        adj = {v: [] for v in nodes}
        for u, v in edges:
            adj[u].append(v)
            adj[v].append(u)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", frozenset(edges))
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "_adj", {v: tuple(sorted(n)) for v, n in adj.items()})

    @classmethod
    def _trusted(cls, nodes, edges, lengths=None, noisy_offset=None) -> "LabeledTree":
        # Skips validation; callers guarantee a tree with normalized edges.
        self = object.__new__(cls)
        adj = {v: [] for v in nodes}
        for u, v in edges:
            adj[u].append(v)
            adj[v].append(u)
        object.__setattr__(self, "nodes", frozenset(nodes))
        object.__setattr__(self, "edges", frozenset(edges))
        object.__setattr__(
            self, "lengths", MappingProxyType(lengths) if lengths is not None else None
        )
        object.__setattr__(self, "noisy_offset", noisy_offset)
        object.__setattr__(self, "_adj", {v: tuple(sorted(n)) for v, n in adj.items()})
        return self

    def __eq__(self, other):
        if not isinstance(other, LabeledTree):
            return NotImplemented
        return self.nodes == other.nodes and self.edges == other.edges

    def __hash__(self):
        return hash((self.nodes, self.edges))

    def __repr__(self):
        return f"LabeledTree(nodes={sorted(self.nodes)}, edges={sorted(self.edges)})"

    def neighbors(self, v) -> tuple:
        return self._adj[v]

    def degree(self, v) -> int:
        return len(self._adj[v])

    @cached_property
    def leaves(self) -> frozenset:
        return frozenset(v for v, n in self._adj.items() if len(n) <= 1)

    @cached_property
    def inner(self) -> frozenset:
        return self.nodes - self.leaves

    def length(self, u, v) -> float:
        if self.lengths is None:
            raise InvalidTree("tree has no edge lengths")
        return self.lengths[_edge(u, v)]

    @property
    def has_lengths(self) -> bool:
        return self.lengths is not None

    def is_internal_edge(self, u, v) -> bool:
        return self.degree(u) > 1 and self.degree(v) > 1

    def path(self, source, target) -> list:
        """Node sequence of the unique path from ``source`` to ``target``."""
        prev = {source: None}
        stack = [source]
        while stack:
            x = stack.pop()
            if x == target:
                break
            for y in self._adj[x]:
                if y not in prev:
                    prev[y] = x
                    stack.append(y)
        out = [target]
        while out[-1] != source:
            out.append(prev[out[-1]])
        return out[::-1]

    def path_length(self, source, target) -> float:
        p = self.path(source, target)
        return sum(self.length(a, b) for a, b in zip(p, p[1:]))

    def parents(self, root) -> dict:
        """Map each node to its parent when the tree hangs from ``root``."""
        par = {root: None}
        order = [root]
        for x in order:
            for y in self._adj[x]:
                if y not in par:
                    par[y] = x
                    order.append(y)
        return par

    def bfs_order(self, root) -> list:
        return list(self.parents(root))

    def relabel(self, mapping: Mapping[int, int]) -> "LabeledTree":
        m = lambda v: mapping.get(v, v)  # noqa: E731
        lengths = None
        if self.lengths is not None:
            lengths = {(m(u), m(v)): l for (u, v), l in self.lengths.items()}
        return LabeledTree(
            {m(v) for v in self.nodes},
            [(m(u), m(v)) for u, v in self.edges],
            lengths,
            self.noisy_offset,
        )

    def without_lengths(self) -> "LabeledTree":
        return LabeledTree(self.nodes, self.edges, None, self.noisy_offset)

    def with_lengths(self, lengths) -> "LabeledTree":
        return LabeledTree(self.nodes, self.edges, lengths, self.noisy_offset)


def validate_tree(nodes: Iterable[int], edges: Iterable[Edge], lengths=None, noisy_offset=None) -> LabeledTree:
    """Build a :class:`LabeledTree`, raising on cycles, gaps or duplicates."""
    return LabeledTree(frozenset(nodes), list(edges), lengths, noisy_offset)


@dataclass(frozen=True, eq=False)
class SemiLabeledTree:
    """A tree whose inner-node labels carry no identity.

    Two semi-labelled trees are equal when they have the same topology and
    the same leaf labels.
    """

    underlying: LabeledTree

    @property
    def labeled_leaves(self) -> frozenset:
        return self.underlying.leaves

    @property
    def anonymous_inner(self) -> frozenset:
        return self.underlying.inner

    @cached_property
    def _key(self):
        return canonical_form(self.underlying, leaf_labels=True)

    def __eq__(self, other):
        if isinstance(other, LabeledTree):
            other = SemiLabeledTree(other)
        if not isinstance(other, SemiLabeledTree):
            return NotImplemented
        return self._key == other._key

    def __hash__(self):
        return hash(self._key)


@dataclass(frozen=True)
class TreeSplit:
    """Bipartition of the leaf set induced by one internal edge."""

    left: frozenset
    right: frozenset

    def __post_init__(self):
        if not self.left or not self.right:
            raise ValueError("both sides of a split must be nonempty")
        if self.left & self.right:
            raise ValueError("split sides overlap")

    @classmethod
    def from_side(cls, side, leaves) -> "TreeSplit":
        side = frozenset(side)
        other = frozenset(leaves) - side
        if min(other) < min(side):
            side, other = other, side
        return cls(side, other)

    def __str__(self):
        fmt = lambda s: ",".join(map(str, sorted(s)))  # noqa: E731
        return f"{fmt(self.left)}|{fmt(self.right)}"


def _as_tree(t) -> LabeledTree:
    return t.underlying if isinstance(t, SemiLabeledTree) else t


def suppress_degree_two(tree: LabeledTree) -> LabeledTree:
    """Remove every degree-2 node, joining its two neighbours directly.

    With edge lengths present, the new edge gets the sum of the lengths it
    replaces.
    """
    adj = {v: set(n) for v, n in tree._adj.items()}
    lengths = dict(tree.lengths) if tree.lengths is not None else None
    for v in sorted(tree.nodes):
        if len(adj[v]) != 2:
            continue
        a, b = sorted(adj.pop(v))
        adj[a].discard(v)
        adj[b].discard(v)
        adj[a].add(b)
        adj[b].add(a)
        if lengths is not None:
            lengths[_edge(a, b)] = lengths.pop(_edge(a, v)) + lengths.pop(_edge(b, v))
    edges = {_edge(u, w) for u, ns in adj.items() for w in ns}
    return LabeledTree._trusted(adj, edges, lengths, tree.noisy_offset)


def choose_offset(labels: Iterable[int]) -> int:
    """Smallest power of ten ≥ ``NOISY_OFFSET`` that exceeds every |label|."""
    top = max((abs(int(v)) for v in labels), default=0)
    offset = NOISY_OFFSET
    while offset <= top:
        offset *= 10
    return offset


def noisy_label(i: int, offset: int = NOISY_OFFSET) -> int:
    return int(i) + offset


def clean_label(label: int, offset: int = NOISY_OFFSET) -> int:
    return int(label) - offset


def augment(tstar: LabeledTree, terminal_lengths: Mapping[int, float] | None = None, offset: int | None = None) -> LabeledTree:
    """Attach a noisy copy ``i + offset`` to every node ``i`` of ``tstar``.

    Lengths are kept only when ``tstar`` has lengths and ``terminal_lengths``
    supplies one for every node.
    """
    if offset is None:
        offset = tstar.noisy_offset or choose_offset(tstar.nodes)
    if any(abs(v) >= offset for v in tstar.nodes):
        raise InvalidTree(f"labels must satisfy |label| < offset={offset}")
    nodes = set(tstar.nodes) | {v + offset for v in tstar.nodes}
    edges = list(tstar.edges) + [_edge(v, v + offset) for v in tstar.nodes]
    lengths = None
    if tstar.lengths is not None and terminal_lengths is not None:
        lengths = dict(tstar.lengths)
        for v in tstar.nodes:
            lengths[(v, v + offset)] = terminal_lengths[v]
    return LabeledTree._trusted(nodes, edges, lengths, offset)


def suppressed_augmented(tstar: LabeledTree, terminal_lengths=None, offset=None) -> LabeledTree:
    """The tree T̄^e: augment then suppress degree-2 nodes."""
    return suppress_degree_two(augment(tstar, terminal_lengths, offset))


def mothers(tstar: LabeledTree) -> frozenset:
    leaves = tstar.leaves
    return frozenset(
        u for u in tstar.inner if any(w in leaves for w in tstar.neighbors(u))
    )


def mother_leaves(tstar: LabeledTree) -> dict:
    """Map each mother to the sorted tuple of its adjacent leaves."""
    leaves = tstar.leaves
    return {
        u: tuple(w for w in tstar.neighbors(u) if w in leaves)
        for u in sorted(mothers(tstar))
    }


def equivalence_class_size(tstar: LabeledTree) -> int:
    return math.prod(len(ls) + 1 for ls in mother_leaves(tstar).values())


def equivalence_class(tstar: LabeledTree) -> frozenset:
    """All trees indistinguishable from ``tstar`` given only noisy data.

    Each mother may independently trade its label with one of its adjacent
    leaves (or keep it).
    """
    groups = mother_leaves(tstar)
    if not tstar.inner:
        warnings.warn(
            "tree has no inner node; returning the singleton class",
            DegenerateClassWarning,
            stacklevel=2,
        )
        return frozenset({tstar.without_lengths()})
    options = [[None, *ls] for ls in groups.values()]
    out = set()
    base = tstar.without_lengths()
    for choice in itertools.product(*options):
        mapping = {}
        for u, leaf in zip(groups, choice):
            if leaf is not None:
                mapping[u] = leaf
                mapping[leaf] = u
        out.add(base.relabel(mapping))
    return frozenset(out)


def _split_masks(tree: LabeledTree) -> tuple[list, frozenset]:
    """Nontrivial splits of an already-suppressed tree as leaf bitmasks."""
    leaves = sorted(tree.leaves)
    if len(leaves) < 4:
        return leaves, frozenset()
    index = {v: k for k, v in enumerate(leaves)}
    root = leaves[0]
    par = tree.parents(root)
    order = list(par)
    mask = dict.fromkeys(order, 0)
    out = set()
    for v in reversed(order):
        if v in index:
            mask[v] |= 1 << index[v]
        p = par[v]
        if p is None:
            continue
        mask[p] |= mask[v]
        if v not in index and p != root:
            out.add(mask[v])
    return leaves, frozenset(out)


def splits(tree) -> frozenset:
    """Nontrivial leaf bipartitions of ``tree`` (suppressed first)."""
    t = suppress_degree_two(_as_tree(tree))
    leaves, masks = _split_masks(t)
    out = set()
    for m in masks:
        side = [leaves[k] for k in range(len(leaves)) if m >> k & 1]
        out.add(TreeSplit.from_side(side, leaves))
    return frozenset(out)


def robinson_foulds(a, b) -> tuple[int, int]:
    """Return (splits in exactly one tree, total splits of both trees)."""
    ta, tb = suppress_degree_two(_as_tree(a)), suppress_degree_two(_as_tree(b))
    if ta.leaves != tb.leaves:
        raise LeafSetMismatch(
            f"leaf sets differ: {sorted(ta.leaves ^ tb.leaves)}"
        )
    _, sa = _split_masks(ta)
    _, sb = _split_masks(tb)
    return len(sa ^ sb), len(sa) + len(sb)


def robinson_foulds_normalized(a, b) -> float:
    """Fraction of internal splits present in only one of the two trees."""
    diff, total = robinson_foulds(a, b)
    return diff / total if total else 0.0


def semi_labeled_equal(a, b) -> bool:
    return SemiLabeledTree(_as_tree(a)) == SemiLabeledTree(_as_tree(b))


def centroids(tree: LabeledTree) -> list:
    n = len(tree.nodes)
    root = min(tree.nodes)
    par = tree.parents(root)
    size = dict.fromkeys(par, 1)
    for v in reversed(list(par)):
        if par[v] is not None:
            size[par[v]] += size[v]
    best, out = n + 1, []
    for v in par:
        worst = n - size[v]
        for w in tree.neighbors(v):
            if par.get(w) == v:
                worst = max(worst, size[w])
        if worst < best:
            best, out = worst, [v]
        elif worst == best:
            out.append(v)
    return sorted(out)


def _encode(tree: LabeledTree, root, leaf_labels: bool) -> str:
    par = tree.parents(root)
    code = {}
    for v in reversed(list(par)):
        kids = sorted(code[w] for w in tree.neighbors(v) if par.get(w) == v)
        if not kids and tree.degree(v) <= 1:
            code[v] = f"L{v}" if leaf_labels else "L"
        else:
            code[v] = "(" + ",".join(kids) + ")"
    return code[root]


def canonical_form(tree, leaf_labels: bool = False) -> str:
    """Centroid-rooted encoding; inner labels are always ignored.

    With ``leaf_labels=False`` the result identifies the unlabelled tree.
    """
    t = _as_tree(tree)
    return min(_encode(t, c, leaf_labels) for c in centroids(t))


def prufer_decode(seq, labels) -> LabeledTree:
    """Labelled tree for a Prüfer sequence over the sorted ``labels``."""
    labels = sorted(labels)
    n = len(labels)
    if n == 1:
        return LabeledTree(frozenset(labels), [])
    degree = [1] * n
    for k in seq:
        degree[k] += 1
    edges = []
    for k in seq:
        leaf = next(j for j in range(n) if degree[j] == 1)
        edges.append((labels[leaf], labels[k]))
        degree[leaf] -= 1
        degree[k] -= 1
    u, w = [j for j in range(n) if degree[j] == 1]
    edges.append((labels[u], labels[w]))
    return LabeledTree._trusted(labels, [_edge(*e) for e in edges])


def all_labeled_trees(labels):
    """Yield every labelled tree on ``labels`` (n^(n-2) of them)."""
    labels = sorted(labels)
    n = len(labels)
    if n <= 2:
        yield LabeledTree(frozenset(labels), [tuple(labels)] if n == 2 else [])
        return
    for seq in itertools.product(range(n), repeat=n - 2):
        yield prufer_decode(seq, labels)


def random_tree(n: int, rng, labels=None) -> LabeledTree:
    """Uniform random labelled tree via a random Prüfer sequence."""
    labels = list(range(1, n + 1)) if labels is None else list(labels)
    if n <= 2:
        return LabeledTree(frozenset(labels), [tuple(labels)] if n == 2 else [])
    seq = rng.integers(0, n, size=n - 2)
    return prufer_decode([int(k) for k in seq], labels)
