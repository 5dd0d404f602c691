import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisytree.errors import CycleDetected, Disconnected, DuplicateEdge, InvalidTree, LeafSetMismatch
from noisytree.tree import (
    LabeledTree,
    SemiLabeledTree,
    all_labeled_trees,
    augment,
    canonical_form,
    choose_offset,
    equivalence_class,
    equivalence_class_size,
    mothers,
    random_tree,
    robinson_foulds,
    robinson_foulds_normalized,
    semi_labeled_equal,
    splits,
    suppress_degree_two,
    suppressed_augmented,
    validate_tree,
)

from .conftest import make_tree


def chain(n):
    return make_tree([(i, i + 1) for i in range(1, n)])


def star(n):
    return make_tree([(1, i) for i in range(2, n + 1)])


trees = st.builds(
    lambda n, seed: random_tree(n, np.random.default_rng(seed)),
    st.integers(2, 9),
    st.integers(0, 2**32 - 1),
)


class TestValidation:
    def test_path(self):
        t = validate_tree({1, 2, 3}, [(1, 2), (2, 3)])
        assert t.leaves == {1, 3}
        assert t.inner == {2}

    def test_cycle(self):
        with pytest.raises(CycleDetected):
            validate_tree({1, 2, 3}, [(1, 2), (2, 3), (1, 3)])

    def test_disconnected(self):
        with pytest.raises(Disconnected):
            validate_tree({1, 2, 3, 4}, [(1, 2), (3, 4)])

    def test_duplicate_edge(self):
        with pytest.raises(DuplicateEdge):
            validate_tree({1, 2}, [(1, 2), (2, 1)])

    def test_errors_are_value_errors(self):
        assert issubclass(CycleDetected, InvalidTree)
        assert issubclass(InvalidTree, ValueError)

    def test_negative_length_rejected(self):
        with pytest.raises(InvalidTree):
            validate_tree({1, 2}, [(1, 2)], {(1, 2): -0.1})

    def test_edge_normalization(self):
        t = validate_tree({1, 2}, [(2, 1)], {(2, 1): 0.5})
        assert t.edges == frozenset({(1, 2)})
        assert t.length(2, 1) == 0.5


class TestSuppress:
    def test_single_interior(self):
        t = make_tree([(1, 2), (2, 3)], [1.0, 0.5])
        s = suppress_degree_two(t)
        assert s.edges == frozenset({(1, 3)})
        assert s.length(1, 3) == pytest.approx(1.5)

    def test_star_unchanged(self):
        t = star(4)
        assert suppress_degree_two(t) == t

    def test_fig1_augmented(self, fig1):
        tbar = suppressed_augmented(fig1)
        o = tbar.noisy_offset
        assert tbar.nodes == {1, 2} | {i + o for i in range(1, 6)}
        assert set(tbar.neighbors(1)) == {2, 1 + o, 3 + o}
        assert set(tbar.neighbors(2)) == {1, 2 + o, 4 + o, 5 + o}

    @given(trees)
    @settings(max_examples=60, deadline=None)
    def test_idempotent(self, t):
        s = suppress_degree_two(augment(t))
        assert suppress_degree_two(s) == s
        assert all(s.degree(v) != 2 for v in s.nodes) or len(s.nodes) <= 2


class TestAugment:
    def test_fig1(self, fig1):
        te = augment(fig1)
        assert len(te.nodes) == 10
        o = te.noisy_offset
        assert all(te.neighbors(i + o) == (i,) or list(te.neighbors(i + o)) == [i] for i in fig1.nodes)

    def test_single_edge(self):
        te = augment(make_tree([(1, 2)]), offset=10)
        assert te.edges == frozenset({(1, 2), (1, 11), (2, 12)})

    def test_star_center_degree(self):
        te = augment(star(8))
        assert te.degree(1) == 8

    def test_offset_avoids_collisions(self):
        assert choose_offset([1, 5, 999]) == 1000
        assert choose_offset([1, 1500]) == 10000

    def test_terminal_lengths(self):
        te = augment(make_tree([(1, 2)], [1.0]), {1: 0.3, 2: 0.4}, offset=10)
        assert te.length(1, 11) == 0.3
        assert te.length(2, 12) == 0.4


class TestMothers:
    def test_fig1(self, fig1):
        assert mothers(fig1) == {1, 2}

    def test_chain(self):
        assert mothers(chain(8)) == {2, 7}

    def test_star(self):
        assert mothers(star(8)) == {1}

    @pytest.mark.parametrize("t, size", [(chain(8), 4), (star(8), 8)])
    def test_class_size(self, t, size):
        assert equivalence_class_size(t) == size

    def test_fig1_class(self, fig1):
        assert equivalence_class_size(fig1) == 6
        cls = equivalence_class(fig1)
        assert len(cls) == 6
        assert fig1 in cls

    def test_two_nodes_singleton(self):
        t = make_tree([(1, 2)])
        with pytest.warns(Warning):
            cls = equivalence_class(t)
        assert cls == {t}

    @given(trees)
    @settings(max_examples=40, deadline=None)
    def test_members_share_tbar_e(self, t):
        if len(t.nodes) < 3:
            return
        target = canonical_form(suppressed_augmented(t), leaf_labels=True)
        cls = equivalence_class(t)
        assert len(cls) == equivalence_class_size(t)
        for s in cls:
            assert canonical_form(suppressed_augmented(s), leaf_labels=True) == target


@pytest.mark.parametrize("n", [4, 5, 6])
def test_exhaustive_class_small(n):
    rng = np.random.default_rng(n)
    for _ in range(3):
        t = random_tree(n, rng)
        target = canonical_form(suppressed_augmented(t), leaf_labels=True)
        hits = {
            s for s in all_labeled_trees(sorted(t.nodes))
            if canonical_form(suppressed_augmented(s), leaf_labels=True) == target
        }
        assert hits == set(equivalence_class(t))


def test_all_labeled_trees_count():
    assert sum(1 for _ in all_labeled_trees([1, 2, 3, 4, 5])) == 5**3


class TestRobinsonFoulds:
    def caterpillar(self, order):
        a, b, c, d, e = order
        return make_tree([(a, -1), (b, -1), (-1, -2), (c, -2), (-2, -3), (d, -3), (e, -3)])

    def test_identical(self):
        t = self.caterpillar([1, 2, 3, 4, 5])
        assert robinson_foulds_normalized(t, t) == 0.0

    def test_caterpillar(self):
        a = self.caterpillar([1, 2, 3, 4, 5])
        b = self.caterpillar([1, 3, 2, 4, 5])
        assert robinson_foulds(a, b) == (2, 4)
        assert robinson_foulds_normalized(a, b) == 0.5

    def test_quartets(self):
        a = make_tree([(1, -1), (2, -1), (-1, -2), (3, -2), (4, -2)])
        b = make_tree([(1, -1), (3, -1), (-1, -2), (2, -2), (4, -2)])
        assert robinson_foulds_normalized(a, b) == 1.0

    def test_star_has_no_splits(self):
        assert robinson_foulds_normalized(star(5), star(5)) == 0.0

    def test_leaf_mismatch(self):
        a = make_tree([(1, -1), (2, -1), (3, -1)])
        b = make_tree([(1, -1), (2, -1), (4, -1)])
        with pytest.raises(LeafSetMismatch):
            robinson_foulds_normalized(a, b)

    def test_splits_of_quartet(self):
        s = splits(make_tree([(1, -1), (2, -1), (-1, -2), (3, -2), (4, -2)]))
        assert len(s) == 1

    @given(trees, trees)
    @settings(max_examples=40, deadline=None)
    def test_symmetric_and_bounded(self, a, b):
        sa, sb = suppressed_augmented(a, offset=100), suppressed_augmented(b, offset=100)
        if sa.leaves != sb.leaves:
            return
        x = robinson_foulds_normalized(sa, sb)
        assert x == robinson_foulds_normalized(sb, sa)
        assert 0.0 <= x <= 1.0


class TestSemiLabeled:
    def test_fig2_left_right(self, fig1):
        swapped = make_tree([(1, 4), (1, 3), (4, 2), (4, 5)])
        assert semi_labeled_equal(suppressed_augmented(fig1), suppressed_augmented(swapped))
        assert SemiLabeledTree(suppressed_augmented(fig1)) == SemiLabeledTree(suppressed_augmented(swapped))

    def test_inner_labels_ignored(self):
        a = make_tree([(1, 10), (2, 10), (10, 11), (3, 11), (4, 11)])
        b = make_tree([(1, 20), (2, 20), (20, 21), (3, 21), (4, 21)])
        assert a != b
        assert semi_labeled_equal(a, b)

    def test_leaf_labels_matter(self):
        a = make_tree([(1, 10), (2, 10), (10, 11), (3, 11), (4, 11)])
        b = make_tree([(1, 10), (3, 10), (10, 11), (2, 11), (4, 11)])
        assert not semi_labeled_equal(a, b)

    @given(trees, st.integers(0, 10**6))
    @settings(max_examples=40, deadline=None)
    def test_canonical_form_relabel_invariant(self, t, seed):
        rng = np.random.default_rng(seed)
        labels = sorted(t.nodes)
        perm = dict(zip(labels, (int(x) for x in rng.permutation(labels) + 100)))
        assert canonical_form(t) == canonical_form(t.relabel(perm))


def test_labeled_tree_equality_ignores_lengths():
    a = make_tree([(1, 2)], [1.0])
    b = make_tree([(1, 2)], [2.0])
    assert a == b and hash(a) == hash(b)
    assert isinstance(a, LabeledTree)
