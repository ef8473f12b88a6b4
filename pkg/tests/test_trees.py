import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gwcouple import trees as tr
from gwcouple.errors import DomainError, EnumerationCapError, ParseError
from gwcouple.numerics import catalan


def test_parent():
    assert tr.parent((3, 1)) == (3,)
    assert tr.parent((1,)) == ()
    assert tr.parent((2, 5, 1)) == (2, 5)
    with pytest.raises(DomainError):
        tr.parent(())


def test_elder_sibling():
    assert tr.elder_sibling((3,)) == (2,)
    assert tr.elder_sibling((2, 1)) is None
    assert tr.elder_sibling((1, 4)) == (1, 3)
    with pytest.raises(DomainError):
        tr.elder_sibling(())


def test_contains_examples():
    t1 = tr.OrderedTree.from_vertices([(), (1,)])
    t2 = tr.OrderedTree.from_vertices([(), (1,), (2,)])
    t3 = tr.OrderedTree.from_vertices([(), (1,), (1, 1)])
    assert t2.contains(t1)
    assert not t3.contains(t2)  # (2,) is absent from t3
    assert t2.contains(t2)


def test_contains_agrees_with_vertex_subset():
    # independent oracle: frozenset inclusion of address sets
    trees = [t for k in range(1, 6) for t in tr.enumerate_trees(k)]
    for a, b in itertools.product(trees, repeat=2):
        assert a.contains(b) == (b.vertices <= a.vertices)


def test_contains_partial_order_small_sizes():
    trees = [t for k in range(1, 7) for t in tr.enumerate_trees(k)]
    for a in trees:
        assert a.contains(a)
    for a, b in itertools.combinations(trees, 2):
        if a.contains(b) and b.contains(a):
            assert a == b
    # transitivity, spot-checked on all triples among sizes <= 5
    small = [t for k in range(1, 6) for t in tr.enumerate_trees(k)]
    for a, b, c in itertools.product(small, repeat=3):
        if a.contains(b) and b.contains(c):
            assert a.contains(c)


def test_subtree():
    t = tr.OrderedTree.from_vertices([(), (1,), (1, 1)])
    assert t.subtree((1,)) == tr.OrderedTree.from_vertices([(), (1,)])
    assert tr.OrderedTree.from_vertices([(), (1,)]).subtree((2,)) is None
    assert t.subtree(()) == t


def test_enumerate_trees_spec_examples():
    got = [t.vertices for t in tr.enumerate_trees(3)]
    assert got == [frozenset({(), (1,), (1, 1)}), frozenset({(), (1,), (2,)})]
    assert tr.enumerate_trees(1) == [tr.OrderedTree(())]
    assert len(tr.enumerate_trees(4)) == 5


def test_enumerate_counts_match_catalan_no_duplicates():
    for k in range(1, 11):
        ts = tr.enumerate_trees(k)
        assert len(ts) == catalan(k)
        assert len(set(ts)) == len(ts)
        for t in ts:
            assert t.size == k
            assert tr.is_valid_vertex_set(t.vertices)


def test_enumeration_is_sorted_canonically():
    for k in range(1, 9):
        keys = [tr.preorder_child_counts(t.root) for t in tr.enumerate_trees(k)]
        assert keys == sorted(keys)


def test_enumeration_cap():
    with pytest.raises(EnumerationCapError):
        tr.enumerate_trees(13)
    with pytest.raises(DomainError):
        tr.enumerate_trees(0)


def test_every_tree_has_removable_vertex():
    for k in range(2, 9):
        smaller = set(tr.enumerate_trees(k - 1))
        for t in tr.enumerate_trees(k):
            rem = tr.removable_vertices(t.root)
            assert rem
            for v in rem:
                parent_tree = tr.OrderedTree(tr.remove_vertex(t.root, v))
                assert parent_tree in smaller
                assert t.contains(parent_tree)


def test_insertion_slots_cover_all_supersets():
    for k in range(1, 8):
        bigger = set(tr.enumerate_trees(k + 1))
        for t in tr.enumerate_trees(k):
            grown = {tr.OrderedTree(tr.insert_at(t.root, s)) for s in range(t.size)}
            assert len(grown) == t.size  # one distinct insertion per vertex
            assert grown <= bigger
            # exactly the supersets differing in one vertex
            oracle = {b for b in bigger if b.contains(t)}
            assert grown == oracle


def test_encode_examples():
    assert tr.OrderedTree(()).encode() == "[]"
    assert tr.OrderedTree.from_vertices([(), (1,), (2,)]).encode() == "[[],[]]"
    assert tr.OrderedTree.decode("[[[]]]").vertices == frozenset({(), (1,), (1, 1)})
    assert tr.OrderedTree.decode("[[],[[]]]").vertices == frozenset({(), (1,), (2,), (2, 1)})


def test_encode_decode_round_trip_enumerated():
    for k in range(1, 11):
        for t in tr.enumerate_trees(k):
            assert tr.OrderedTree.decode(t.encode()) == t


def test_decode_errors_carry_position():
    for text, pos in [("[[]", 3), ("", 0), ("[]x", 2), ("[,]", 1), ("[[]*[]]", 4)]:
        with pytest.raises(ParseError) as err:
            tr.OrderedTree.decode(text)
        assert err.value.position == pos
    with pytest.raises(ParseError):
        tr.OrderedTree.decode("[[]*]")  # frontier marker in a complete tree


@given(st.integers(min_value=1, max_value=8), st.randoms(use_true_random=False))
@settings(max_examples=40, deadline=None)
def test_round_trip_random_trees(k, rnd):
    t = rnd.choice(tr.enumerate_trees(k))
    assert tr.OrderedTree.decode(t.encode()) == t


def test_truncated_tree_frontier_and_contains():
    view = tr.TruncatedTree((tr.FRONTIER, ()), depth_horizon=1)
    assert view.frontier == frozenset({(1,)})
    assert view.vertices == frozenset({(), (1,), (2,)})
    view.validate()
    deeper = tr.TruncatedTree((((),), (), ()), depth_horizon=2)
    assert deeper.contains(view)  # compared up to depth 1
    assert not view.contains(deeper)  # (3,) missing from view
    assert view.clean
    flagged = tr.TruncatedTree((), depth_horizon=3, status=("total-size-cap",))
    assert not flagged.clean


def test_truncated_tree_marked_encoding():
    view = tr.TruncatedTree((tr.FRONTIER, ((),)), depth_horizon=1)
    assert view.encode() == "[[]*,[[]]]"
    assert tr.parse_marked(view.encode()) == view.root


def test_frontier_validate_rejects_shallow_marks():
    bad = tr.TruncatedTree((tr.FRONTIER,), depth_horizon=2)
    with pytest.raises(DomainError):
        bad.validate()


def test_nested_union():
    a = tr.parse_marked("[[],[[]]]")
    b = tr.parse_marked("[[[]],[]]")
    assert tr.encode_nested(tr.nested_union(a, b)) == "[[[]],[[]]]"
    assert tr.nested_union((), a) == a
    f = tr.parse_marked("[[]*]")
    assert tr.nested_union(f, ((),)) == f
    with pytest.raises(DomainError):
        tr.nested_union(f, ((((),)),))  # explored structure under a frontier


def test_nested_clip():
    t = tr.parse_marked("[[[[]]],[]]")
    assert tr.encode_nested(tr.nested_clip(t, 2)) == "[[[]],[]]"
    assert tr.encode_nested(tr.nested_clip(t, 0)) == "[]"


def test_to_dot_mentions_all_edges():
    t = tr.OrderedTree.decode("[[],[[]]]")
    dot = tr.to_dot(t)
    assert '"o" -> "1"' in dot
    assert '"2" -> "2.1"' in dot
    assert dot.startswith("digraph")
