"""Determinant-based similarities, tree distances and mutual information."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    AssumptionViolated,
    DegenerateColumn,
    EmptyBatch,
    NotPositiveDefinite,
    SingularMarginal,
    SpecMismatch,
)
from .models import (
    CorruptionSpec,
    DiscreteTreeModel,
    GaussianChannel,
    LinearTreeModel,
    SampleBatch,
    augment_model,
    binary_moments,
    check_assumptions,
    pair_marginal,
)
from .tree import LabeledTree, choose_offset

D_MAX = 50.0
TAU2_CLAMP = 1.0 - 1e-12


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Symmetric distances ``-log τ²`` with zero diagonal over ordered labels.

    ``flags`` holds label pairs whose entry was clamped during estimation.
    """

    labels: tuple
    values: np.ndarray
    provenance: str = "exact"
    flags: frozenset = frozenset()
    noisy_offset: int | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        n = len(self.labels)
        if v.shape != (n, n):
            raise ValueError(f"values must be {n}x{n}")
        if not np.allclose(v, v.T, atol=1e-12, rtol=0):
            raise ValueError("distance matrix must be symmetric")
        if not np.isfinite(v).all() or (v < 0).any():
            raise ValueError("distances must be finite and nonnegative")
        v = 0.5 * (v + v.T)
        np.fill_diagonal(v, 0.0)
        v.setflags(write=False)
        object.__setattr__(self, "labels", tuple(int(x) for x in self.labels))
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "flags", frozenset(self.flags))

    def __len__(self):
        return len(self.labels)

    def index(self, label) -> int:
        return self.labels.index(label)

    def __getitem__(self, pair) -> float:
        i, j = pair
        return float(self.values[self.index(i), self.index(j)])

    def relabel(self, mapping) -> "DistanceMatrix":
        m = lambda x: mapping.get(x, x)  # noqa: E731
        flags = frozenset((m(a), m(b)) for a, b in self.flags)
        return DistanceMatrix(tuple(m(x) for x in self.labels), self.values, self.provenance, flags)

    def strip_noisy(self) -> "DistanceMatrix":
        """Relabel ``i + offset`` back to ``i``."""
        if self.noisy_offset is None:
            return self
        return self.relabel({x: x - self.noisy_offset for x in self.labels})

    def subset(self, labels) -> "DistanceMatrix":
        idx = [self.index(x) for x in labels]
        return DistanceMatrix(tuple(labels), self.values[np.ix_(idx, idx)], self.provenance,
                              frozenset(p for p in self.flags if set(p) <= set(labels)),
                              self.noisy_offset)


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    """Signed τ values with ones on the diagonal."""

    labels: tuple
    values: np.ndarray
    provenance: str = "exact"
    noisy_offset: int | None = None

    def to_distances(self) -> DistanceMatrix:
        t2 = np.asarray(self.values, dtype=float) ** 2
        off = ~np.eye(len(self.labels), dtype=bool)
        if ((t2[off] <= 0) | (t2[off] >= 1)).any():
            raise AssumptionViolated("tau in (0, 1)", "some |tau| is 0 or 1")
        d = np.where(off, -np.log(np.where(off, t2, 1.0)), 0.0)
        return DistanceMatrix(self.labels, d, self.provenance, noisy_offset=self.noisy_offset)


def tau_from_joint(P) -> float:
    """``det(P) / sqrt(det diag(row sums) * det diag(column sums))``."""
    P = np.asarray(P, dtype=float)
    pu, pv = P.sum(axis=1), P.sum(axis=0)
    if (pu <= 0).any() or (pv <= 0).any():
        raise SingularMarginal("joint table has a zero marginal probability")
    tau = np.linalg.det(P) / math.sqrt(np.prod(pu) * np.prod(pv))
    return float(np.clip(tau, -1.0, 1.0))


def _inv_sqrt(S):
    w, V = np.linalg.eigh(S)
    if (w <= 0).any():
        raise NotPositiveDefinite("covariance block is not positive definite")
    return (V / np.sqrt(w)) @ V.T


def tau_linear(S_uv, S_uu, S_vv) -> float:
    """``det(S_uu^-1/2 S_uv S_vv^-1/2)``; Pearson correlation for scalars."""
    S_uv, S_uu, S_vv = (np.atleast_2d(np.asarray(x, dtype=float)) for x in (S_uv, S_uu, S_vv))
    return float(np.linalg.det(_inv_sqrt(S_uu) @ S_uv @ _inv_sqrt(S_vv)))


def mutual_information(P) -> float:
    """Mutual information of a joint table in nats (``0 log 0 = 0``)."""
    P = np.asarray(P, dtype=float)
    P = P / P.sum()
    outer = P.sum(axis=1)[:, None] * P.sum(axis=0)[None, :]
    mask = P > 0
    return float(max(0.0, np.sum(P[mask] * np.log(P[mask] / outer[mask]))))


def _check_discrete(model: DiscreteTreeModel):
    rep = check_assumptions(model)
    for cond in ("A1", "A2"):
        if not rep[cond]:
            where = [e for c, e in rep["failures"] if c == cond]
            raise AssumptionViolated(cond, f"edges {where}")


def similarity_exact(model, noise: CorruptionSpec | None = None) -> SimilarityMatrix:
    """Exact τ over clean nodes, or over corrupted copies when ``noise`` is given."""
    if isinstance(model, LinearTreeModel):
        return _similarity_linear(model, noise)
    _check_discrete(model)
    nodes = sorted(model.tree.nodes)
    if noise is not None and not noise.covers(nodes):
        raise SpecMismatch("corruption spec must cover every node")
    if noise is None or noise.all_discrete:
        m = model if noise is None else augment_model(model, noise)
        off = m.tree.noisy_offset if noise is not None else None
        labels = nodes if noise is None else [v + off for v in nodes]
        n = len(labels)
        t = np.eye(n)
        for a, b in itertools.combinations(range(n), 2):
            t[a, b] = t[b, a] = tau_from_joint(pair_marginal(m, labels[a], labels[b]))
        return SimilarityMatrix(tuple(labels), t, "exact", off)
    # Continuous channels on binary data: second moments only.
    if model.r != 2:
        raise SpecMismatch("non-discrete channels need binary variables")
    marg = model.marginals()
    mom = {v: binary_moments(noise[v]) for v in nodes}
    var = {}
    for v in nodes:
        (m0, v0), (m1, v1) = mom[v]
        p = marg[v]
        var[v] = p[0] * v0 + p[1] * v1 + p[0] * p[1] * (m1 - m0) ** 2
    off = choose_offset(nodes)
    n = len(nodes)
    t = np.eye(n)
    for a, b in itertools.combinations(range(n), 2):
        u, v = nodes[a], nodes[b]
        cov = np.linalg.det(pair_marginal(model, u, v))
        du = mom[u][1][0] - mom[u][0][0]
        dv = mom[v][1][0] - mom[v][0][0]
        t[a, b] = t[b, a] = du * dv * cov / math.sqrt(var[u] * var[v])
    return SimilarityMatrix(tuple(v + off for v in nodes), t, "exact", off)


def _similarity_linear(model: LinearTreeModel, noise):
    rep = model.check_assumptions()
    for cond in ("AL1", "AL2"):
        if not rep[cond]:
            raise AssumptionViolated(cond)
    labels = model.labels()
    S = model.covariance()
    off = None
    if noise is not None:
        if not noise.covers(labels):
            raise SpecMismatch("corruption spec must cover every node")
        extra = []
        for v in labels:
            ch = noise[v]
            if not isinstance(ch, GaussianChannel):
                raise SpecMismatch("linear models take Gaussian channels")
            extra.append(ch.variance)
        S = S + np.diag(extra)
        off = choose_offset(labels)
        labels = [v + off for v in labels]
    s = np.sqrt(np.diag(S))
    return SimilarityMatrix(tuple(labels), S / np.outer(s, s), "exact", off)


def distance_matrix_exact(model, noise: CorruptionSpec | None = None) -> DistanceMatrix:
    """Model-implied distance matrix, over corrupted copies when ``noise`` is given."""
    return similarity_exact(model, noise).to_distances()


def path_metric(tree: LabeledTree, labels=None, ells=None) -> DistanceMatrix:
    """Distances read off a tree with edge lengths, plus optional per-node offsets.

    With ``ells`` this is the noisy metric ``d_ij + ℓ_i + ℓ_j``.
    """
    labels = sorted(tree.nodes) if labels is None else list(labels)
    n = len(labels)
    v = np.zeros((n, n))
    for a, b in itertools.combinations(range(n), 2):
        d = tree.path_length(labels[a], labels[b])
        if ells is not None:
            d += ells[labels[a]] + ells[labels[b]]
        v[a, b] = v[b, a] = d
    return DistanceMatrix(tuple(labels), v, "exact")


def _contingency(x, y, r, smoothing):
    P = np.bincount(x * r + y, minlength=r * r).reshape(r, r).astype(float)
    P += smoothing
    return P / P.sum()


def similarity_empirical(batch: SampleBatch, kind: str | None = None, smoothing: float = 0.0):
    """Plug-in τ estimates; returns the matrix and the set of flagged pairs."""
    kind = kind or batch.kind
    if batch.n < 1:
        raise EmptyBatch("batch has no rows")
    X = batch.data
    labels = batch.labels
    for k, v in enumerate(labels):
        if np.all(X[:, k] == X[0, k]):
            raise DegenerateColumn(f"column {v} is constant")
    n = len(labels)
    flags = set()
    if kind == "continuous":
        with np.errstate(invalid="ignore", divide="ignore"):
            t = np.corrcoef(X, rowvar=False)
        t = np.atleast_2d(t)
    elif kind == "discrete":
        if batch.kind != "discrete":
            raise ValueError("discrete estimator needs a discrete batch")
        r = batch.r
        X = X.astype(np.int64)
        t = np.eye(n)
        for a, b in itertools.combinations(range(n), 2):
            P = _contingency(X[:, a], X[:, b], r, smoothing)
            t[a, b] = t[b, a] = tau_from_joint(P)
    else:
        raise ValueError("kind must be 'discrete' or 'continuous'")
    for a, b in itertools.combinations(range(n), 2):
        if t[a, b] ** 2 >= TAU2_CLAMP or t[a, b] == 0:
            flags.add((labels[a], labels[b]))
    provenance = f"empirical(n={batch.n}, estimator={kind}{', smoothing=%g' % smoothing if smoothing else ''})"
    sim = SimilarityMatrix(labels, t, provenance, batch.noisy_offset)
    return sim, frozenset(flags)


def distance_matrix_empirical(batch: SampleBatch, kind: str | None = None, smoothing: float = 0.0,
                              d_max: float = D_MAX) -> DistanceMatrix:
    """Plug-in distance estimates from data.

    Entries with ``τ̂² ≥ 1`` are clamped just below 1 and entries with
    ``τ̂ = 0`` (or a distance beyond ``d_max``) are set to ``d_max``; both are
    recorded in ``flags``.
    """
    sim, flags = similarity_empirical(batch, kind, smoothing)
    t2 = np.minimum(np.asarray(sim.values) ** 2, TAU2_CLAMP)
    n = len(sim.labels)
    d = np.zeros((n, n))
    flags = set(flags)
    for a, b in itertools.combinations(range(n), 2):
        if t2[a, b] <= 0:
            val = d_max
        else:
            val = -math.log(t2[a, b])
            if val > d_max:
                val = d_max
                flags.add((sim.labels[a], sim.labels[b]))
        d[a, b] = d[b, a] = val
    return DistanceMatrix(sim.labels, d, sim.provenance, frozenset(flags), batch.noisy_offset)


def four_point_violation(D: DistanceMatrix, labels=None) -> float:
    """Largest gap between the two largest pairwise sums over all quadruples."""
    labels = D.labels if labels is None else labels
    idx = [D.index(x) for x in labels]
    V = D.values
    worst = 0.0
    for i, j, k, l in itertools.combinations(idx, 4):
        s = sorted((V[i, j] + V[k, l], V[i, k] + V[j, l], V[i, l] + V[j, k]))
        worst = max(worst, s[2] - s[1])
    return worst


def mi_from_distance_symmetric(d: float, r: int = 2) -> float:
    """Mutual information of the symmetric r-state pair at distance ``d``."""
    theta = (1.0 - math.exp(-d / (2 * (r - 1)))) / r
    P = np.full((r, r), theta / r)
    np.fill_diagonal(P, (1 - (r - 1) * theta) / r)
    return mutual_information(P)
