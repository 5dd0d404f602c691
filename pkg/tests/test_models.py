import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from noisytree.errors import StateSpaceTooLarge, ThetaOutOfRange, TreeTooLarge
from noisytree.models import (
    BetaChannel,
    CorruptionSpec,
    DiscreteTreeModel,
    GaussianChannel,
    IsingParams,
    LinearTreeModel,
    StochasticChannel,
    UniformFlip,
    augment_model,
    check_assumptions,
    condition_number,
    corrupt,
    edge_length_of_channel,
    exact_joint,
    flip_for_length,
    from_symmetric,
    ising_to_discrete,
    marginalize,
    pair_marginal,
    random_discrete_model,
    random_linear_model,
    sample,
    symmetric_edge_length,
    symmetric_ising,
    symmetric_matrix,
    theta_for_length,
)
from noisytree.tree import augment, random_tree

from .conftest import brute_ising, brute_joint, make_tree

EDGE = make_tree([(1, 2)])


class TestSymmetric:
    def test_r2(self):
        np.testing.assert_allclose(symmetric_matrix(2, 0.2), [[0.8, 0.2], [0.2, 0.8]])

    def test_r4(self):
        M = symmetric_matrix(4, 0.07)
        np.testing.assert_allclose(np.diag(M), 0.79)
        assert M[0, 1] == pytest.approx(0.07)

    def test_theta_range(self):
        with pytest.raises(ThetaOutOfRange):
            from_symmetric(EDGE, 2, 0.5, allow_leaf_root=True)

    @pytest.mark.parametrize("r", [2, 3, 4])
    def test_length_roundtrip(self, r):
        for d in (0.01, 0.5, 1.0, 2.5):
            assert symmetric_edge_length(r, theta_for_length(r, d)) == pytest.approx(d)

    def test_condition_numbers(self):
        assert condition_number(flip_for_length(2.0, 2).as_matrix(2)) == pytest.approx(math.e)
        assert condition_number(flip_for_length(2.0, 4).as_matrix(4)) == pytest.approx(math.exp(1 / 3))
        assert condition_number(flip_for_length(3.0, 2).as_matrix(2)) == pytest.approx(math.exp(1.5))


class TestExactJoint:
    def test_single_edge(self):
        m = from_symmetric(EDGE, 2, 0.2, root=1, allow_leaf_root=True)
        np.testing.assert_allclose(exact_joint(m), [[0.4, 0.1], [0.1, 0.4]])

    def test_fig1_uniform_marginals(self, fig1):
        m = from_symmetric(fig1, 2, 0.2)
        P = exact_joint(m)
        assert P.shape == (2,) * 5
        assert P.sum() == pytest.approx(1.0)
        for v in fig1.nodes:
            np.testing.assert_allclose(marginalize(P, sorted(fig1.nodes), [v]), [0.5, 0.5])

    def test_rank_one_is_product(self):
        t = make_tree([(1, 2), (1, 3)])
        row = np.array([0.3, 0.7])
        trans = {(1, 2): np.tile(row, (2, 1)), (1, 3): np.tile(row[::-1], (2, 1))}
        m = DiscreteTreeModel(t, 1, np.array([0.6, 0.4]), trans)
        P = exact_joint(m)
        np.testing.assert_allclose(P, np.einsum("i,j,k->ijk", [0.6, 0.4], row, row[::-1]))

    @given(st.integers(2, 6), st.sampled_from([2, 3]), st.integers(0, 10**6))
    @settings(max_examples=30, deadline=None)
    def test_matches_brute_force(self, n, r, seed):
        rng = np.random.default_rng(seed)
        m = random_discrete_model(random_tree(n, rng), r, rng)
        np.testing.assert_allclose(exact_joint(m), brute_joint(m), atol=1e-14)

    def test_state_space_cap(self):
        t = make_tree([(1, i) for i in range(2, 12)])
        with pytest.raises(StateSpaceTooLarge):
            exact_joint(from_symmetric(t, 4, 0.1), max_states=4**8)


class TestPairMarginal:
    def test_adjacent(self):
        m = from_symmetric(make_tree([(1, 2), (2, 3)]), 2, 0.2)
        np.testing.assert_allclose(pair_marginal(m, 1, 2), [[0.4, 0.1], [0.1, 0.4]])

    def test_distance_two(self):
        m = from_symmetric(make_tree([(1, 2), (2, 3)]), 2, 0.2)
        np.testing.assert_allclose(pair_marginal(m, 1, 3), [[0.34, 0.16], [0.16, 0.34]])

    @given(st.integers(3, 6), st.sampled_from([2, 3, 4]), st.integers(0, 10**6))
    @settings(max_examples=25, deadline=None)
    def test_against_joint(self, n, r, seed):
        rng = np.random.default_rng(seed)
        m = random_discrete_model(random_tree(n, rng), r, rng)
        labels = sorted(m.tree.nodes)
        P = brute_joint(m)
        i, j = labels[0], labels[-1]
        np.testing.assert_allclose(pair_marginal(m, i, j), marginalize(P, labels, [i, j]), atol=1e-13)


class TestIsing:
    def test_binary_edge_conditional(self):
        beta = 0.8
        m = ising_to_discrete(IsingParams(EDGE, {}, {(1, 2): beta}), root=1)
        P = pair_marginal(m, 1, 2)
        assert P[1, 0] / P[1].sum() == pytest.approx(1 / (1 + math.exp(beta)))

    def test_spin_edge_symmetric(self):
        beta = 0.8
        m = ising_to_discrete(IsingParams(EDGE, {}, {(1, 2): beta}, encoding="spin"), root=1)
        theta = 1 / (1 + math.exp(2 * beta))
        np.testing.assert_allclose(m.transition(1, 2), symmetric_matrix(2, theta))

    def test_zero_field_spin_uniform(self, fig1):
        p = IsingParams(fig1, {}, {e: 0.7 for e in fig1.edges}, encoding="spin")
        m = ising_to_discrete(p)
        for v, q in m.marginals().items():
            np.testing.assert_allclose(q, [0.5, 0.5])

    def test_zero_coupling_product(self, fig1):
        p = IsingParams(fig1, {v: 0.3 * v for v in fig1.nodes}, {e: 0.0 for e in fig1.edges})
        P = exact_joint(ising_to_discrete(p))
        for a, b in [(1, 2), (3, 5)]:
            Pab = marginalize(P, sorted(fig1.nodes), [a, b])
            np.testing.assert_allclose(Pab, np.outer(Pab.sum(1), Pab.sum(0)), atol=1e-15)

    @given(st.integers(2, 7), st.sampled_from(["binary", "spin"]), st.integers(0, 10**6))
    @settings(max_examples=30, deadline=None)
    def test_matches_enumeration(self, n, encoding, seed):
        rng = np.random.default_rng(seed)
        t = random_tree(n, rng)
        h = {v: float(rng.normal()) for v in t.nodes}
        b = {e: float(rng.normal()) for e in t.edges}
        p = IsingParams(t, h, b, encoding=encoding)
        values = (0, 1) if encoding == "binary" else (-1, 1)
        oracle, Z = brute_ising(t, h, b, values)
        np.testing.assert_allclose(exact_joint(ising_to_discrete(p)), oracle, atol=1e-12)
        assert p.normalizer == pytest.approx(Z)

    def test_symmetric_ising_roundtrip(self, fig1):
        m = ising_to_discrete(symmetric_ising(fig1, 0.2))
        ref = from_symmetric(fig1, 2, 0.2)
        np.testing.assert_allclose(exact_joint(m), exact_joint(ref), atol=1e-14)

    def test_size_cap(self):
        t = make_tree([(1, i) for i in range(2, 30)])
        with pytest.raises(TreeTooLarge):
            IsingParams(t, {}, {e: 0.1 for e in t.edges}).log_normalizer


class TestChannels:
    def test_uniform_flip_matrix(self):
        M = UniformFlip(0.3).as_matrix(3)
        np.testing.assert_allclose(M, [[0.7, 0.15, 0.15], [0.15, 0.7, 0.15], [0.15, 0.15, 0.7]])

    def test_stochastic_validation(self):
        with pytest.raises(ValueError):
            StochasticChannel(np.array([[0.5, 0.4], [0.5, 0.5]]))

    def test_beta_ratio_condition(self):
        with pytest.raises(ValueError):
            BetaChannel(2, 1, 3, 1)
        BetaChannel(2, 1, 3, 1, check_ratio=False)

    def test_flip_length_exact(self):
        for r in (2, 4):
            ch = flip_for_length(0.7, r)
            assert edge_length_of_channel(ch, np.full(r, 1 / r)) == pytest.approx(0.7)

    def test_flip_length_non_uniform_marginal(self):
        q = np.array([0.3, 0.7])
        ch = flip_for_length(0.9, 2, q)
        assert edge_length_of_channel(ch, q) == pytest.approx(0.9, abs=1e-9)

    def test_beta_length_a5(self):
        assert edge_length_of_channel(BetaChannel.symmetric(5), np.array([0.5, 0.5])) == pytest.approx(
            -math.log(28 / 33)
        )


class TestSampling:
    def test_flip_rate(self):
        m = from_symmetric(EDGE, 2, 0.2, root=1, allow_leaf_root=True)
        b = sample(m, 200_000, 11)
        flips = np.mean(b.column(1) != b.column(2))
        assert abs(flips - 0.2) <= 5 * math.sqrt(0.2 * 0.8 / 200_000)

    def test_uniform_marginals(self, fig1):
        b = sample(from_symmetric(fig1, 3, 0.1), 200_000, 3)
        for v in fig1.nodes:
            freq = np.bincount(b.column(v), minlength=3) / b.n
            np.testing.assert_allclose(freq, 1 / 3, atol=0.01)

    def test_reproducible(self, fig1):
        m = from_symmetric(fig1, 2, 0.2)
        np.testing.assert_array_equal(sample(m, 500, 7).data, sample(m, 500, 7).data)
        assert not np.array_equal(sample(m, 500, 7).data, sample(m, 500, 8).data)

    def test_linear_independence(self, fig1):
        m = LinearTreeModel(fig1, 1, 0.0, 1.0, {(1, 2): 0, (1, 3): 0, (2, 4): 0, (2, 5): 0},
                            {(1, 2): 1, (1, 3): 1, (2, 4): 1, (2, 5): 1})
        b = sample(m, 200_000, 5)
        C = np.corrcoef(b.data.T)
        assert np.max(np.abs(C - np.eye(5))) < 0.01


class TestCorrupt:
    def test_flip_disagreement(self):
        m = from_symmetric(EDGE, 2, 0.2, root=1, allow_leaf_root=True)
        b = sample(m, 200_000, 1)
        nb = corrupt(b, CorruptionSpec.uniform(m.tree.nodes, UniformFlip(0.3)), 2)
        assert nb.labels == (1001, 1002)
        rate = np.mean(nb.data != b.data)
        assert abs(rate - 0.3) <= 0.005

    def test_beta_means(self):
        m = from_symmetric(EDGE, 2, 0.2, root=1, allow_leaf_root=True)
        b = sample(m, 100_000, 4)
        nb = corrupt(b, CorruptionSpec.uniform(m.tree.nodes, BetaChannel(1, 3, 3, 1)), 5)
        assert nb.kind == "continuous"
        assert nb.data.min() >= 0 and nb.data.max() <= 1
        x, y = b.column(1), nb.column(1001)
        assert abs(y[x == 0].mean() - 0.25) < 0.01
        assert abs(y[x == 1].mean() - 0.75) < 0.01

    def test_commutes_with_augmentation(self, fig1):
        m = from_symmetric(fig1, 2, 0.2)
        spec = CorruptionSpec.uniform(fig1.nodes, flip_for_length(0.5, 2))
        nb = corrupt(sample(m, 40_000, 8), spec, 9)
        aug = augment_model(m, spec)
        o = aug.tree.noisy_offset
        labels = sorted(aug.tree.nodes)
        P = marginalize(exact_joint(aug), labels, [3 + o, 5 + o])
        counts = np.zeros((2, 2))
        np.add.at(counts, (nb.column(1003), nb.column(1005)), 1)
        chi2 = ((counts - P * nb.n) ** 2 / (P * nb.n)).sum()
        assert stats.chi2.sf(chi2, 3) > 1e-4

    def test_gaussian_channel(self):
        m = LinearTreeModel(EDGE, 1, 0.0, 1.0, {(1, 2): 0.8}, {(1, 2): 0.36}, allow_leaf_root=True)
        nb = corrupt(sample(m, 100_000, 1), CorruptionSpec.uniform({1, 2}, GaussianChannel(1.0)), 2)
        assert np.var(nb.column(1001)) == pytest.approx(2.0, rel=0.03)


class TestAssumptions:
    def test_symmetric_ok(self, fig1):
        res = check_assumptions(from_symmetric(fig1, 2, 0.2))
        assert res["A1"] and res["A2"] and not res["failures"]

    def test_singular_transition_fails(self):
        t = make_tree([(1, 2), (1, 3)])
        trans = {(1, 2): np.array([[0.5, 0.5], [0.5, 0.5]]), (1, 3): symmetric_matrix(2, 0.1)}
        res = check_assumptions(DiscreteTreeModel(t, 1, np.array([0.5, 0.5]), trans))
        assert not res["A2"]

    def test_linear(self):
        rng = np.random.default_rng(0)
        m = random_linear_model(random_tree(6, rng), rng)
        res = m.check_assumptions()
        assert res["AL1"] and res["AL2"]
        S = m.covariance()
        np.testing.assert_allclose(S, S.T)
        assert np.all(np.linalg.eigvalsh(S) > 0)

    def test_augment_model_tree(self, fig1):
        m = augment_model(from_symmetric(fig1, 2, 0.2), CorruptionSpec.uniform(fig1.nodes, UniformFlip(0.1)))
        assert m.tree == augment(fig1)
