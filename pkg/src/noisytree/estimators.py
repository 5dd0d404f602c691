"""scikit-learn style estimators over plain ``n x d`` arrays.

Columns are variables and rows are observations. ``labels`` names the
columns; by default they are ``offset + 1, ..., offset + d`` so that the
recovered tree uses the same noisy-copy convention as the rest of the
package.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .metrics import distance_matrix_empirical
from .models import SampleBatch
from .recovery import RecoveryConfig, chow_liu, recover
from .tree import NOISY_OFFSET


def _batch(X, labels, kind, r, offset):
    X = check_array(X, dtype=None, ensure_min_samples=2, ensure_min_features=2)
    d = X.shape[1]
    labels = tuple(range(offset + 1, offset + d + 1)) if labels is None else tuple(labels)
    if len(labels) != d:
        raise ValueError(f"got {len(labels)} labels for {d} columns")
    if kind is None:
        integral = np.issubdtype(X.dtype, np.integer) or np.array_equal(X, np.round(X))
        kind = "discrete" if integral and X.min() >= 0 else "continuous"
    if kind == "discrete":
        X = X.astype(np.int64)
        r = int(X.max()) + 1 if r is None else r
        r = max(r, 2)
    else:
        X = X.astype(float)
        r = None
    return SampleBatch(X, labels, kind, r, None, offset)


class ChowLiuTree(BaseEstimator):
    """Minimum-distance spanning tree over the columns of ``X``.

    Distances are ``-log τ̂²``, so for binary or jointly Gaussian data this
    is the maximum likelihood tree.
    """

    def __init__(self, kind=None, r=None, labels=None, decimals=10, noisy_offset=NOISY_OFFSET):
        self.kind = kind
        self.r = r
        self.labels = labels
        self.decimals = decimals
        self.noisy_offset = noisy_offset

    def fit(self, X, y=None):
        batch = _batch(X, self.labels, self.kind, self.r, self.noisy_offset)
        self.distances_ = distance_matrix_empirical(batch)
        self.tree_ = chow_liu(self.distances_, self.decimals)
        self.n_features_in_ = batch.data.shape[1]
        return self


class NoisyTreeRecovery(BaseEstimator):
    """Neighbor-Joining, edge shrinking and copy extraction from corrupted data.

    Fitted attributes: ``distances_``, ``tbar_e_`` (the recovered suppressed
    augmented tree), ``tstar_`` (the tree on the clean labels, or ``None``
    when extraction is impossible) and ``shrunk_edges_``.
    """

    def __init__(self, epsilon=0.5, binary_prior=False, kind=None, r=None, labels=None,
                 smoothing=0.0, noisy_offset=NOISY_OFFSET):
        self.epsilon = epsilon
        self.binary_prior = binary_prior
        self.kind = kind
        self.r = r
        self.labels = labels
        self.smoothing = smoothing
        self.noisy_offset = noisy_offset

    def fit(self, X, y=None):
        batch = _batch(X, self.labels, self.kind, self.r, self.noisy_offset)
        config = RecoveryConfig(
            epsilon=self.epsilon,
            binary_prior=self.binary_prior,
            target="tstar",
            smoothing=self.smoothing,
        )
        self.distances_ = distance_matrix_empirical(batch, smoothing=self.smoothing)
        result = recover(self.distances_, config)
        self.tbar_e_ = result.tree
        self.tstar_ = result.tstar
        self.shrunk_edges_ = result.shrunk_edges
        self.diagnostics_ = result.diagnostics
        self.n_features_in_ = batch.data.shape[1]
        return self

    def score_tree(self, reference):
        """Normalized RF distance of ``tbar_e_`` to the reference's augmented tree."""
        from .tree import robinson_foulds_normalized, suppressed_augmented

        check_is_fitted(self, "tbar_e_")
        ref = suppressed_augmented(reference, offset=self.noisy_offset)
        return robinson_foulds_normalized(self.tbar_e_.underlying, ref)
