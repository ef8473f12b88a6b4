from collections import Counter
from fractions import Fraction as F

import pytest
from scipy.stats import chisquare

from gwcouple import chain as ch
from gwcouple import trees as tr
from gwcouple.errors import DomainError
from gwcouple.numerics import catalan
from gwcouple.rng import RngHandle


def test_transport_k1_trivial():
    plan = ch.build_transport(1)
    assert plan.flows == {(0, 0): 1}
    assert plan.weight(0, 0) == 1


def test_transport_k2_splits_evenly():
    plan = ch.build_transport(2)
    assert plan.weight(0, 0) == F(1, 2)
    assert plan.weight(0, 1) == F(1, 2)


def test_transport_k3_forced_plan():
    # at size 3 the feasible plan is unique: outer supersets are forced to
    # 1/5, the doubly-reachable tree takes 1/10 from each side
    plan = ch.build_transport(3)
    left = {tr.encode_nested(t): i for i, t in enumerate(tr._all_trees(3))}
    right = {tr.encode_nested(t): j for j, t in enumerate(tr._all_trees(4))}
    path, cherry = left["[[[]]]"], left["[[],[]]"]
    shared = right["[[[]],[]]"]
    assert plan.weight(path, shared) == F(1, 10)
    assert plan.weight(cherry, shared) == F(1, 10)
    assert plan.column_sum(shared) == F(1, 5)
    for name, i in left.items():
        row = [(j, plan.weight(i, j)) for j in right.values() if plan.weight(i, j)]
        assert sorted(w for _, w in row) == [F(1, 10), F(1, 5), F(1, 5)]


def test_transport_feasible_with_uniform_marginals_up_to_9():
    for k in range(1, 10):
        plan = ch.build_transport(k)
        plan.verify_exact()  # raises on any marginal or support defect
        assert plan.row_sum(0) == F(1, catalan(k))
        assert plan.column_sum(0) == F(1, catalan(k + 1))


def test_transport_deterministic():
    a = ch.build_transport.__wrapped__(5)
    b = ch.build_transport.__wrapped__(5)
    assert a.flows == b.flows


def test_transport_domain_errors():
    with pytest.raises(DomainError):
        ch.build_transport(0)
    with pytest.raises(DomainError):
        ch.build_transport(tr.ENUMERATION_CAP)


def test_chain_step_exact_law_and_containment():
    plan = ch.build_transport(2)
    rng = RngHandle(71)
    base = tr.OrderedTree(((),))
    counts = Counter()
    for i in range(40_000):
        nxt = ch.chain_step_exact(base, plan, rng.split(i))
        assert nxt.contains(base)
        counts[nxt.encode()] += 1
    _, pval = chisquare(list(counts.values()))
    assert pval > 1e-4


def test_chain_step_marginal_uniform_after_two_steps():
    rng = RngHandle(73)
    counts = Counter()
    for i in range(30_000):
        r = rng.split(i)
        t = tr.OrderedTree(())
        for s in (1, 2, 3):
            t = ch.chain_step_exact(t, ch.build_transport(s), r.split(s))
        counts[t.encode()] += 1
    assert len(counts) == catalan(4)
    _, pval = chisquare(list(counts.values()))
    assert pval > 1e-4


def test_heuristic_grow():
    rng = RngHandle(79)
    base = tr.OrderedTree(((),))
    counts = Counter()
    for i in range(20_000):
        out = ch.heuristic_grow(base, rng.split(i))
        assert out.size == base.size + 1
        assert out.contains(base)
        counts[out.encode()] += 1
    assert set(counts) == {"[[[]]]", "[[],[]]"}
    assert abs(counts["[[[]]]"] - 10_000) < 3 * (20_000 * 0.25) ** 0.5


def test_sample_chain_nesting_and_flags():
    rng = RngHandle(83)
    for i in range(200):
        chain = ch.sample_chain(12, rng.split(i), exact_cap=9)
        assert chain.exact_upto == 9
        assert chain.modes[:9] == ["exact"] * 9
        assert chain.modes[9:] == ["heuristic"] * 3
        for a, b in zip(chain.trees, chain.trees[1:]):
            assert b.contains(a)
            assert b.size == a.size + 1


def test_sample_chain_marginal_uniform():
    rng = RngHandle(89)
    counts = Counter()
    n = 40_000
    for i in range(n):
        chain = ch.sample_chain(5, rng.split(i))
        counts[chain.trees[-1].encode()] += 1
    assert len(counts) == catalan(5)
    _, pval = chisquare(list(counts.values()))
    assert pval > 1e-4


def test_chain_prefixes_stable_under_added_sizes():
    # the prefix at a size is a pure function of the stream, no matter
    # which other sizes are requested or how far the chain grows
    stream = RngHandle(97)
    small = ch.chain_prefixes([3, 7], stream)
    more = ch.chain_prefixes([2, 3, 7, 30, 200], stream)
    assert small[0] == more[1]
    assert small[1] == more[2]
    again = ch.chain_prefixes([200], stream)
    assert again[0] == more[4]


def test_chain_prefixes_nested_and_sized():
    stream = RngHandle(101)
    sizes = [1, 2, 5, 9, 17, 64, 300]
    prefixes = ch.chain_prefixes(sizes, stream)
    for want, node in zip(sizes, prefixes):
        assert tr.nested_size(node) == want
        assert tr.is_valid_vertex_set(set(tr.nested_addresses(node)))
    for a, b in zip(prefixes, prefixes[1:]):
        assert tr.nested_contains(a, b)


def test_chain_prefixes_match_sample_chain_in_exact_regime():
    stream = RngHandle(103)
    chain = ch.sample_chain(9, stream)
    prefixes = ch.chain_prefixes(range(1, 10), stream)
    assert [t.root for t in chain.trees] == prefixes


def test_plan_csv_round_trip():
    plan = ch.build_transport(4)
    text = ch.export_plan_csv(4)
    back = ch._plan_from_csv(4, text)
    assert back.flows == plan.flows


def test_disk_cache(tmp_path, monkeypatch):
    monkeypatch.setenv(ch.CACHE_ENV, str(tmp_path))
    fresh = ch.build_transport.__wrapped__(5)
    assert (tmp_path / "transport_5.csv").is_file()
    reloaded = ch.build_transport.__wrapped__(5)
    assert reloaded.flows == fresh.flows
    # corrupt cache files are rebuilt, not trusted
    (tmp_path / "transport_5.csv").write_text("tree_k,tree_k1,weight_numerator,weight_denominator\nbogus\n")
    rebuilt = ch.build_transport.__wrapped__(5)
    assert rebuilt.flows == fresh.flows
