"""Tree-structured distributions, their samplers, and corruption channels.

Discrete models use the rooted parameterization: a root distribution plus a
row-stochastic transition matrix ``M[u, v][a, b] = P(X_v = b | X_u = a)`` on
every edge directed away from the root. Linear models are scalar Gaussian
structural equations ``X_v = lam * X_u + eps_v``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .errors import (
    DegenerateChannel,
    InvalidTree,
    NotPositiveDefinite,
    SpecMismatch,
    StateSpaceTooLarge,
    ThetaOutOfRange,
    TreeTooLarge,
)
from .tree import LabeledTree, _edge, augment, choose_offset

ROW_TOL = 1e-12


def _as_seedseq(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def _seed_record(seed):
    ss = _as_seedseq(seed)
    return {"entropy": ss.entropy, "spawn_key": list(ss.spawn_key)}


def _check_stochastic(M, what):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{what}: expected a square matrix, got shape {M.shape}")
    if (M < 0).any() or np.abs(M.sum(axis=1) - 1).max() > ROW_TOL:
        raise ValueError(f"{what}: rows must be nonnegative and sum to 1")
    return M


def symmetric_matrix(r: int, theta: float) -> np.ndarray:
    """Jukes-Cantor style matrix: ``1-(r-1)θ`` on the diagonal, ``θ`` elsewhere."""
    M = np.full((r, r), float(theta))
    np.fill_diagonal(M, 1.0 - (r - 1) * theta)
    return M


def condition_number(M) -> float:
    """Ratio of the largest to the smallest singular value."""
    s = np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False)
    return float(s[0] / s[-1]) if s[-1] > 0 else math.inf


# ---------------------------------------------------------------- channels


@dataclass(frozen=True)
class StochasticChannel:
    """General discrete corruption ``P(X^e = l | X = k) = matrix[k, l]``."""

    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _check_stochastic(self.matrix, "channel"))

    @property
    def r(self):
        return self.matrix.shape[0]

    def as_matrix(self, r):
        if r != self.r:
            raise SpecMismatch(f"channel has {self.r} states, data has {r}")
        return self.matrix


@dataclass(frozen=True)
class UniformFlip:
    """Corrupt with probability ``q`` to a uniformly chosen other state."""

    q: float

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"flip probability must lie in [0, 1], got {self.q}")

    def as_matrix(self, r):
        return symmetric_matrix(r, self.q / (r - 1))


@dataclass(frozen=True)
class BetaChannel:
    """Continuous corruption of a binary variable: ``X^e | X=k ~ Beta(a_k, b_k)``."""

    alpha0: float
    beta0: float
    alpha1: float
    beta1: float
    check_ratio: bool = True

    def __post_init__(self):
        if min(self.alpha0, self.beta0, self.alpha1, self.beta1) <= 0:
            raise ValueError("Beta parameters must be positive")
        if self.check_ratio and not (
            self.alpha0 / self.beta0 < 1 < self.alpha1 / self.beta1
        ):
            raise ValueError("need alpha0/beta0 < 1 < alpha1/beta1")

    @classmethod
    def symmetric(cls, a: float) -> "BetaChannel":
        """Beta(1, a) for state 0 and Beta(a, 1) for state 1."""
        return cls(1.0, a, a, 1.0)

    def moments(self):
        """Conditional means and variances given X = 0 and X = 1."""
        out = []
        for a, b in ((self.alpha0, self.beta0), (self.alpha1, self.beta1)):
            s = a + b
            out.append((a / s, a * b / (s * s * (s + 1))))
        return out


@dataclass(frozen=True)
class GaussianChannel:
    """Additive noise ``X^e = X + N(0, variance)`` for continuous data."""

    variance: float

    def __post_init__(self):
        if not self.variance >= 0:
            raise ValueError("noise variance must be nonnegative")


Channel = Union[StochasticChannel, UniformFlip, BetaChannel, GaussianChannel]
DISCRETE_CHANNELS = (StochasticChannel, UniformFlip)


def binary_moments(channel, r=2):
    """Conditional (mean, variance) of X^e for X = 0, 1 under any binary-input channel."""
    if isinstance(channel, BetaChannel):
        return channel.moments()
    if isinstance(channel, DISCRETE_CHANNELS):
        M = channel.as_matrix(r)
        if r != 2:
            raise SpecMismatch("moment form requires binary variables")
        return [(M[k, 1], M[k, 1] * (1 - M[k, 1])) for k in (0, 1)]
    raise SpecMismatch(f"{type(channel).__name__} is not a binary-input channel")


@dataclass(frozen=True)
class CorruptionSpec:
    """One noise channel per node label."""

    channels: Mapping[int, Channel]

    def __post_init__(self):
        object.__setattr__(self, "channels", {int(k): v for k, v in self.channels.items()})

    @classmethod
    def uniform(cls, nodes, channel) -> "CorruptionSpec":
        return cls({v: channel for v in nodes})

    def __getitem__(self, node):
        return self.channels[node]

    def covers(self, nodes) -> bool:
        return set(nodes) <= set(self.channels)

    @property
    def all_discrete(self) -> bool:
        return all(isinstance(c, DISCRETE_CHANNELS) for c in self.channels.values())


def edge_length_of_channel(channel, marginal) -> float:
    """Noise edge length ``-log τ²`` between a node and its corrupted copy.

    ``marginal`` is the clean node's distribution (a probability vector) or,
    for a :class:`GaussianChannel`, the clean node's variance.
    """
    if isinstance(channel, GaussianChannel):
        var = float(marginal)
        tau2 = var / (var + channel.variance)
    elif isinstance(channel, BetaChannel):
        p = np.asarray(marginal, dtype=float)
        (m0, v0), (m1, v1) = channel.moments()
        vx = p[0] * p[1]
        var_e = p[0] * v0 + p[1] * v1 + vx * (m1 - m0) ** 2
        tau2 = vx * (m1 - m0) ** 2 / var_e
    else:
        p = np.asarray(marginal, dtype=float)
        M = channel.as_matrix(len(p))
        pe = p @ M
        if (pe <= 0).any():
            raise DegenerateChannel("corrupted marginal has a zero entry")
        tau2 = np.prod(p) * np.linalg.det(M) ** 2 / np.prod(pe)
    if not 0 < tau2 < 1 - 1e-15:
        raise DegenerateChannel(f"tau^2 = {tau2} is outside (0, 1)")
    return float(-math.log(tau2))


def flip_for_length(ell: float, r: int, marginal=None) -> UniformFlip:
    """Uniform flip channel whose noise edge length is exactly ``ell``.

    For uniform marginals this solves ``(1 - rθ)^(r-1) = exp(-ℓ/2)``; otherwise
    the length is matched numerically.
    """
    if ell <= 0:
        raise ValueError("edge length must be positive")
    if marginal is None or np.allclose(marginal, 1.0 / r):
        theta = (1.0 - math.exp(-ell / (2 * (r - 1)))) / r
        return UniformFlip(theta * (r - 1))
    p = np.asarray(marginal, dtype=float)
    hi = (r - 1) / r
    f = lambda q: edge_length_of_channel(UniformFlip(q), p) - ell  # noqa: E731
    q = brentq(f, 1e-14, hi * (1 - 1e-12), xtol=1e-15)
    return UniformFlip(q)


def gaussian_for_length(ell: float, variance: float) -> GaussianChannel:
    """Additive Gaussian noise giving ``-log ρ² = ell`` against a clean variance."""
    return GaussianChannel(variance * (math.exp(ell) - 1.0))


# ------------------------------------------------------------ discrete models


def _check_root(tree, root, allow_leaf_root):
    if root not in tree.nodes:
        raise InvalidTree(f"root {root} is not a node")
    if not allow_leaf_root and len(tree.nodes) > 2 and root in tree.leaves:
        raise InvalidTree(f"root {root} must be an inner node")


def default_root(tree: LabeledTree) -> int:
    return min(tree.inner) if tree.inner else min(tree.nodes)


@dataclass(frozen=True, eq=False)
class DiscreteTreeModel:
    """General Markov model on a tree, rooted at an inner node."""

    tree: LabeledTree
    root: int
    root_dist: np.ndarray
    transitions: Mapping[tuple, np.ndarray]
    allow_leaf_root: bool = False
    _parent: dict = field(init=False, repr=False)

    def __post_init__(self):
        _check_root(self.tree, self.root, self.allow_leaf_root)
        p = np.asarray(self.root_dist, dtype=float)
        if (p <= 0).any() or abs(p.sum() - 1) > ROW_TOL:
            raise ValueError("root distribution must be strictly positive and sum to 1")
        par = self.tree.parents(self.root)
        trans = {}
        for v, u in par.items():
            if u is None:
                continue
            M = self.transitions.get((u, v))
            if M is None:
                raise ValueError(f"missing transition for edge {u}->{v}")
            M = _check_stochastic(M, f"transition {u}->{v}")
            if M.shape[0] != len(p):
                raise ValueError(f"transition {u}->{v} has wrong size")
            trans[(u, v)] = M
        object.__setattr__(self, "root_dist", p)
        object.__setattr__(self, "transitions", trans)
        object.__setattr__(self, "_parent", par)

    @property
    def r(self) -> int:
        return len(self.root_dist)

    @property
    def order(self) -> list:
        """Nodes in breadth-first order from the root."""
        return list(self._parent)

    def parent(self, v):
        return self._parent[v]

    def marginals(self) -> dict:
        out = {self.root: self.root_dist}
        for v in self.order[1:]:
            u = self._parent[v]
            out[v] = out[u] @ self.transitions[(u, v)]
        return out

    def transition(self, u, v) -> np.ndarray:
        """``P(X_v | X_u)`` for adjacent ``u``, ``v`` in either direction."""
        if (u, v) in self.transitions:
            return self.transitions[(u, v)]
        M = self.transitions[(v, u)]
        pv = self.marginals()[v]
        joint = pv[:, None] * M
        return joint.T / joint.sum(axis=0)[:, None]


def from_symmetric(tree: LabeledTree, r: int, thetas, root=None, allow_leaf_root=False) -> DiscreteTreeModel:
    """Fully symmetric model with uniform marginals.

    ``thetas`` is one off-diagonal probability for all edges or a mapping
    edge -> θ; each must lie strictly inside ``(0, 1/r)``.
    """
    root = default_root(tree) if root is None else root
    if not isinstance(thetas, Mapping):
        thetas = {e: thetas for e in tree.edges}
    thetas = {_edge(*e): float(t) for e, t in thetas.items()}
    trans = {}
    for v, u in tree.parents(root).items():
        if u is None:
            continue
        th = thetas[_edge(u, v)]
        if not 0 < th < 1.0 / r:
            raise ThetaOutOfRange(f"theta={th} on edge {(u, v)} not in (0, 1/{r})")
        trans[(u, v)] = symmetric_matrix(r, th)
    return DiscreteTreeModel(tree, root, np.full(r, 1.0 / r), trans, allow_leaf_root)


def symmetric_edge_length(r: int, theta: float) -> float:
    """``-2(r-1) log(1 - rθ)``, the distance across one symmetric edge."""
    return -2.0 * (r - 1) * math.log(1.0 - r * theta)


def theta_for_length(r: int, d: float) -> float:
    """Inverse of :func:`symmetric_edge_length`."""
    return (1.0 - math.exp(-d / (2 * (r - 1)))) / r


def random_discrete_model(tree: LabeledTree, r: int, rng, root=None, mix=(0.3, 0.9)) -> DiscreteTreeModel:
    """Random model whose transitions are diagonal-heavy mixtures.

    Each transition is ``w I + (1-w) D`` with ``D`` Dirichlet rows and ``w``
    drawn from ``mix``; this keeps matrices invertible and far from
    permutations.
    """
    root = default_root(tree) if root is None else root
    p = rng.dirichlet(np.full(r, 2.0))
    p = 0.5 * p + 0.5 / r
    trans = {}
    for v, u in tree.parents(root).items():
        if u is None:
            continue
        w = rng.uniform(*mix)
        D = rng.dirichlet(np.ones(r), size=r)
        trans[(u, v)] = w * np.eye(r) + (1 - w) * D
    return DiscreteTreeModel(tree, root, p, trans, allow_leaf_root=True)


def _log_transitions_ising(params, root):
    tree = params.tree
    s = params.spin_values
    par = tree.parents(root)
    order = list(par)
    children = {v: [] for v in order}
    for v in order[1:]:
        children[par[v]].append(v)
    log_msg = {}
    for v in reversed(order[1:]):
        u = par[v]
        b = params.couplings[_edge(u, v)]
        inner = params.external_field[v] * s + sum(log_msg[c] for c in children[v])
        log_msg[v] = logsumexp(inner[None, :] + b * np.outer(s, s), axis=1)
    root_log = params.external_field[root] * s + sum(log_msg[c] for c in children[root])
    log_z = float(logsumexp(root_log))
    trans = {}
    for v in order[1:]:
        u = par[v]
        b = params.couplings[_edge(u, v)]
        inner = params.external_field[v] * s + sum(log_msg[c] for c in children[v])
        logits = inner[None, :] + b * np.outer(s, s)
        trans[(u, v)] = np.exp(logits - logsumexp(logits, axis=1, keepdims=True))
    return np.exp(root_log - log_z), trans, log_z


@dataclass(frozen=True, eq=False)
class IsingParams:
    """Binary tree model ``p(x) ∝ exp(Σ h_i s(x_i) + Σ β_ij s(x_i) s(x_j))``.

    ``encoding="binary"`` uses ``s(x) = x ∈ {0, 1}``; ``encoding="spin"`` uses
    ``s(x) = 2x - 1 ∈ {-1, +1}``.
    """

    tree: LabeledTree
    external_field: Mapping[int, float]
    couplings: Mapping[tuple, float]
    encoding: str = "binary"
    max_nodes: int = 25

    def __post_init__(self):
        if self.encoding not in ("binary", "spin"):
            raise ValueError("encoding must be 'binary' or 'spin'")
        h = {v: float(self.external_field.get(v, 0.0)) for v in self.tree.nodes}
        b = {_edge(*e): float(x) for e, x in self.couplings.items()}
        if set(b) != set(self.tree.edges):
            raise ValueError("couplings must be given for exactly the tree edges")
        object.__setattr__(self, "external_field", h)
        object.__setattr__(self, "couplings", b)

    @property
    def spin_values(self) -> np.ndarray:
        return np.array([0.0, 1.0]) if self.encoding == "binary" else np.array([-1.0, 1.0])

    @property
    def log_normalizer(self) -> float:
        if len(self.tree.nodes) > self.max_nodes:
            raise TreeTooLarge(f"more than {self.max_nodes} nodes")
        return _log_transitions_ising(self, default_root(self.tree))[2]

    @property
    def normalizer(self) -> float:
        return math.exp(self.log_normalizer)


def ising_to_discrete(params: IsingParams, root=None) -> DiscreteTreeModel:
    """Rooted parameterization of an Ising model via exact message passing."""
    if len(params.tree.nodes) > params.max_nodes:
        raise TreeTooLarge(f"more than {params.max_nodes} nodes")
    root = default_root(params.tree) if root is None else root
    p_root, trans, _ = _log_transitions_ising(params, root)
    return DiscreteTreeModel(params.tree, root, p_root, trans)


def symmetric_ising(tree: LabeledTree, theta) -> IsingParams:
    """Zero-field spin Ising model equivalent to a symmetric binary model."""
    if not isinstance(theta, Mapping):
        theta = {e: theta for e in tree.edges}
    coup = {e: 0.5 * math.log((1 - t) / t) for e, t in theta.items()}
    return IsingParams(tree, {}, coup, encoding="spin")


# ---------------------------------------------------------- exact inference


def exact_joint(model: DiscreteTreeModel, max_states: int = 2**22) -> np.ndarray:
    """Full joint table with one axis per node in sorted label order."""
    labels = sorted(model.tree.nodes)
    d, r = len(labels), model.r
    if r**d > max_states:
        raise StateSpaceTooLarge(f"{r}^{d} states exceeds {max_states}")
    axis = {v: k for k, v in enumerate(labels)}
    table = np.ones((r,) * d)

    def along(vec_or_mat, nodes):
        shape = [1] * d
        for k, v in enumerate(nodes):
            shape[axis[v]] = r
        if len(nodes) == 2 and axis[nodes[0]] > axis[nodes[1]]:
            vec_or_mat = vec_or_mat.T
        return vec_or_mat.reshape(shape)

    table = table * along(model.root_dist, [model.root])
    for (u, v), M in model.transitions.items():
        table = table * along(M, [u, v])
    return table


def marginalize(table: np.ndarray, labels, keep) -> np.ndarray:
    """Sum out every axis not in ``keep``; axes come back in ``keep`` order."""
    labels = list(labels)
    idx = [labels.index(k) for k in keep]
    drop = tuple(a for a in range(table.ndim) if a not in idx)
    out = table.sum(axis=drop)
    remaining = sorted(idx)
    return np.transpose(out, [remaining.index(a) for a in idx])


def pair_marginal(model: DiscreteTreeModel, i, j) -> np.ndarray:
    """Joint table of ``(X_i, X_j)`` by multiplying transitions along the path."""
    if i == j:
        raise ValueError("pair_marginal needs two distinct nodes")
    for v in (i, j):
        if v not in model.tree.nodes:
            raise KeyError(v)
    anc_i = [i]
    while model.parent(anc_i[-1]) is not None:
        anc_i.append(model.parent(anc_i[-1]))
    on_i = set(anc_i)
    anc_j = [j]
    while anc_j[-1] not in on_i:
        anc_j.append(model.parent(anc_j[-1]))
    top = anc_j[-1]
    anc_i = anc_i[: anc_i.index(top) + 1]
    r = model.r

    def down(chain):
        A = np.eye(r)
        for child, par in zip(chain[-2::-1], chain[:0:-1]):
            A = A @ model.transitions[(par, child)]
        return A

    p_top = model.marginals()[top]
    return down(anc_i).T @ (p_top[:, None] * down(anc_j))


def augment_model(model: DiscreteTreeModel, spec: CorruptionSpec) -> DiscreteTreeModel:
    """The model on T^e: attach each corrupted copy through its channel."""
    if not spec.covers(model.tree.nodes):
        raise SpecMismatch("corruption spec must cover every node")
    if not spec.all_discrete:
        raise SpecMismatch("augmented discrete model needs discrete channels")
    te = augment(model.tree)
    off = te.noisy_offset
    trans = dict(model.transitions)
    for v in model.tree.nodes:
        trans[(v, v + off)] = spec[v].as_matrix(model.r)
    return DiscreteTreeModel(te, model.root, model.root_dist, trans, allow_leaf_root=True)


def check_assumptions(model: DiscreteTreeModel) -> dict:
    """Evaluate the positivity, invertibility and row-reconstructibility conditions.

    A3 is checked through its diagonal-dominance sufficient condition: each
    diagonal entry is the strict maximum of its column.
    """
    a2 = a3 = True
    bad = []
    for e, M in model.transitions.items():
        det = abs(np.linalg.det(M))
        if not (1e-14 < det < 1 - 1e-12):
            a2 = False
            bad.append(("A2", e))
        off = M - np.diag(np.diag(M))
        if not (np.diag(M) > off.max(axis=0)).all():
            a3 = False
            bad.append(("A3", e))
    return {
        "A1": bool((model.root_dist > 0).all()),
        "A2": a2,
        "A3": a3,
        "failures": bad,
    }


# ------------------------------------------------------------ linear models


@dataclass(frozen=True, eq=False)
class LinearTreeModel:
    """Scalar Gaussian tree model ``X_v = lam_uv X_u + eps_v``."""

    tree: LabeledTree
    root: int
    root_mean: float
    root_var: float
    edge_coeffs: Mapping[tuple, float]
    noise_vars: Mapping[tuple, float]
    allow_leaf_root: bool = False
    _parent: dict = field(init=False, repr=False)

    def __post_init__(self):
        _check_root(self.tree, self.root, self.allow_leaf_root)
        if not self.root_var > 0:
            raise NotPositiveDefinite("root variance must be positive")
        par = self.tree.parents(self.root)
        lam, nv = {}, {}
        for v, u in par.items():
            if u is None:
                continue
            if (u, v) not in self.edge_coeffs or (u, v) not in self.noise_vars:
                raise ValueError(f"missing coefficient or noise for edge {u}->{v}")
            lam[(u, v)] = float(self.edge_coeffs[(u, v)])
            nv[(u, v)] = float(self.noise_vars[(u, v)])
            if not nv[(u, v)] > 0:
                raise NotPositiveDefinite(f"noise variance on {u}->{v} must be positive")
        object.__setattr__(self, "edge_coeffs", lam)
        object.__setattr__(self, "noise_vars", nv)
        object.__setattr__(self, "_parent", par)

    @property
    def order(self) -> list:
        return list(self._parent)

    def parent(self, v):
        return self._parent[v]

    def labels(self) -> list:
        return sorted(self.tree.nodes)

    def means(self) -> dict:
        out = {self.root: self.root_mean}
        for v in self.order[1:]:
            u = self._parent[v]
            out[v] = self.edge_coeffs[(u, v)] * out[u]
        return out

    def covariance(self) -> np.ndarray:
        """Covariance over sorted labels, from ``(I - B)^-1 Ω (I - B)^-T``."""
        labels = self.labels()
        idx = {v: k for k, v in enumerate(labels)}
        d = len(labels)
        B = np.zeros((d, d))
        omega = np.zeros(d)
        omega[idx[self.root]] = self.root_var
        for (u, v), lam in self.edge_coeffs.items():
            B[idx[v], idx[u]] = lam
            omega[idx[v]] = self.noise_vars[(u, v)]
        A = np.linalg.inv(np.eye(d) - B)
        return A @ np.diag(omega) @ A.T

    def variances(self) -> dict:
        out = {self.root: self.root_var}
        for v in self.order[1:]:
            u = self._parent[v]
            lam = self.edge_coeffs[(u, v)]
            out[v] = lam * lam * out[u] + self.noise_vars[(u, v)]
        return out

    def correlation(self) -> np.ndarray:
        S = self.covariance()
        s = np.sqrt(np.diag(S))
        return S / np.outer(s, s)

    def edge_correlation(self, u, v) -> float:
        if (v, u) in self.edge_coeffs:
            u, v = v, u
        var = self.variances()
        return self.edge_coeffs[(u, v)] * math.sqrt(var[u] / var[v])

    def check_assumptions(self) -> dict:
        var = self.variances()
        al1 = all(x > 0 for x in var.values())
        al2 = all(lam != 0 for lam in self.edge_coeffs.values()) and all(
            x > 0 for x in self.noise_vars.values()
        )
        return {"AL1": al1, "AL2": al2}


def linear_from_correlations(tree: LabeledTree, rho, root=None, root_var=1.0) -> LinearTreeModel:
    """Unit-variance linear model with prescribed edge correlations."""
    root = default_root(tree) if root is None else root
    if not isinstance(rho, Mapping):
        rho = {e: rho for e in tree.edges}
    rho = {_edge(*e): float(x) for e, x in rho.items()}
    lam, nv = {}, {}
    for v, u in tree.parents(root).items():
        if u is None:
            continue
        c = rho[_edge(u, v)]
        if not 0 < abs(c) < 1:
            raise ValueError("edge correlations must lie in (-1, 0) ∪ (0, 1)")
        lam[(u, v)] = c
        nv[(u, v)] = root_var * (1 - c * c)
    return LinearTreeModel(tree, root, 0.0, root_var, lam, nv, allow_leaf_root=True)


def random_linear_model(tree: LabeledTree, rng, root=None) -> LinearTreeModel:
    root = default_root(tree) if root is None else root
    lam, nv = {}, {}
    for v, u in tree.parents(root).items():
        if u is None:
            continue
        lam[(u, v)] = rng.choice([-1, 1]) * rng.uniform(0.3, 1.5)
        nv[(u, v)] = rng.uniform(0.2, 2.0)
    return LinearTreeModel(
        tree, root, float(rng.normal()), float(rng.uniform(0.5, 2.0)), lam, nv,
        allow_leaf_root=True,
    )


def augment_linear(model: LinearTreeModel, spec: CorruptionSpec) -> LinearTreeModel:
    """Linear model on T^e: ``X_i^e = X_i + N(0, s_i)``."""
    te = augment(model.tree)
    off = te.noisy_offset
    lam = dict(model.edge_coeffs)
    nv = dict(model.noise_vars)
    for v in model.tree.nodes:
        ch = spec[v]
        if not isinstance(ch, GaussianChannel):
            raise SpecMismatch("linear models take Gaussian channels")
        lam[(v, v + off)] = 1.0
        nv[(v, v + off)] = ch.variance
    return LinearTreeModel(
        te, model.root, model.root_mean, model.root_var, lam, nv, allow_leaf_root=True
    )


# ------------------------------------------------------------------ sampling


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """``n x d`` data with one column per node label."""

    data: np.ndarray
    labels: tuple
    kind: str
    r: int | None = None
    seed: dict | None = None
    noisy_offset: int | None = None

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2 or data.shape[1] != len(self.labels):
            raise ValueError("data must be n x len(labels)")
        if self.kind not in ("discrete", "continuous"):
            raise ValueError("kind must be 'discrete' or 'continuous'")
        if self.kind == "discrete":
            if self.r is None:
                raise ValueError("discrete batches need r")
            data = data.astype(np.int64)
            if data.size and (data.min() < 0 or data.max() >= self.r):
                raise ValueError(f"discrete cells must lie in 0..{self.r - 1}")
        else:
            data = data.astype(float)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "labels", tuple(int(v) for v in self.labels))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def column(self, label) -> np.ndarray:
        return self.data[:, self.labels.index(label)]


def _draw_rows(M, parent_states, rng):
    cum = np.cumsum(M, axis=1)
    u = rng.random(len(parent_states))
    x = (u[:, None] >= cum[parent_states]).sum(axis=1)
    return np.minimum(x, M.shape[0] - 1)


def sample(model, n: int, seed) -> SampleBatch:
    """Draw ``n`` i.i.d. rows by an ancestral pass from the root.

    Every node gets its own random stream spawned from ``seed`` (indexed by
    its position in sorted label order), so results depend only on the seed.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    labels = sorted(model.tree.nodes)
    ss = _as_seedseq(seed)
    streams = dict(zip(labels, (np.random.default_rng(s) for s in ss.spawn(len(labels)))))
    cols = {}
    if isinstance(model, DiscreteTreeModel):
        rng = streams[model.root]
        cols[model.root] = rng.choice(model.r, size=n, p=model.root_dist)
        for v in model.order[1:]:
            u = model.parent(v)
            cols[v] = _draw_rows(model.transitions[(u, v)], cols[u], streams[v])
        data = np.column_stack([cols[v] for v in labels])
        return SampleBatch(data, labels, "discrete", model.r, _seed_record(ss), model.tree.noisy_offset)
    if isinstance(model, LinearTreeModel):
        rng = streams[model.root]
        cols[model.root] = rng.normal(model.root_mean, math.sqrt(model.root_var), size=n)
        for v in model.order[1:]:
            u = model.parent(v)
            eps = streams[v].normal(0.0, math.sqrt(model.noise_vars[(u, v)]), size=n)
            cols[v] = model.edge_coeffs[(u, v)] * cols[u] + eps
        data = np.column_stack([cols[v] for v in labels])
        return SampleBatch(data, labels, "continuous", None, _seed_record(ss), model.tree.noisy_offset)
    raise TypeError(f"cannot sample from {type(model).__name__}")


def corrupt(batch: SampleBatch, spec: CorruptionSpec, seed) -> SampleBatch:
    """Pass each column through its node's channel independently.

    Output columns are relabelled ``i + offset``; the offset is kept on the
    batch.
    """
    if not spec.covers(batch.labels):
        missing = sorted(set(batch.labels) - set(spec.channels))
        raise SpecMismatch(f"no channel for columns {missing}")
    ss = _as_seedseq(seed)
    streams = [np.random.default_rng(s) for s in ss.spawn(len(batch.labels))]
    out = []
    continuous = False
    for k, v in enumerate(batch.labels):
        ch = spec[v]
        x = batch.data[:, k]
        rng = streams[k]
        if isinstance(ch, DISCRETE_CHANNELS):
            if batch.kind != "discrete":
                raise SpecMismatch(f"discrete channel on continuous column {v}")
            out.append(_draw_rows(ch.as_matrix(batch.r), x, rng))
        elif isinstance(ch, BetaChannel):
            if batch.kind != "discrete" or batch.r != 2:
                raise SpecMismatch(f"Beta channel needs a binary column, got {v}")
            a = np.where(x == 1, ch.alpha1, ch.alpha0)
            b = np.where(x == 1, ch.beta1, ch.beta0)
            out.append(rng.beta(a, b))
            continuous = True
        elif isinstance(ch, GaussianChannel):
            if batch.kind != "continuous":
                raise SpecMismatch(f"Gaussian channel on discrete column {v}")
            out.append(x + rng.normal(0.0, math.sqrt(ch.variance), size=len(x)))
        else:
            raise SpecMismatch(f"unknown channel {ch!r}")
    kinds = {isinstance(spec[v], DISCRETE_CHANNELS) for v in batch.labels}
    if continuous and len(kinds) > 1:
        raise SpecMismatch("cannot mix discrete and Beta channels in one batch")
    offset = batch.noisy_offset or choose_offset(batch.labels)
    labels = tuple(v + offset for v in batch.labels)
    data = np.column_stack(out) if out else batch.data
    if continuous or batch.kind == "continuous":
        return SampleBatch(data, labels, "continuous", None, _seed_record(ss), offset)
    return SampleBatch(data, labels, "discrete", batch.r, _seed_record(ss), offset)
