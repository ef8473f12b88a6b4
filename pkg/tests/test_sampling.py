import itertools
import math
from collections import Counter
from fractions import Fraction as F

import pytest
from scipy.stats import chisquare

from gwcouple import numerics as nm
from gwcouple import sampling as sp
from gwcouple import trees as tr
from gwcouple.errors import DomainError
from gwcouple.rng import RngHandle


def test_cycle_lemma_bijection_exhaustive():
    # every arrangement of k-1 ups / k downs decodes to a valid tree, each
    # tree hit by exactly 2k-1 arrangements (the rotations)
    for k in range(1, 6):
        counts = Counter()
        for up_positions in itertools.combinations(range(2 * k - 1), k - 1):
            steps = [-1] * (2 * k - 1)
            for i in up_positions:
                steps[i] = 1
            start = sp._rotation_start(steps)
            counts[sp._decode_word(steps, start)] += 1
        expected = set(tr._all_trees(k))
        assert set(counts) == expected
        assert all(v == 2 * k - 1 for v in counts.values())


def test_decode_clipped_matches_full_clip():
    rng = RngHandle(3)
    for k in (5, 9, 17, 40):
        for clip in (0, 1, 2, 3):
            steps = sp._steps_python(k, rng.split(k, clip))
            start = sp._rotation_start(steps)
            full = sp._decode_word(steps, start)
            clipped = sp._decode_word_clipped(steps, start, clip)
            assert clipped == tr.nested_clip(full, clip)


def test_uniform_routes_agree_in_law():
    # numpy route vs python route vs cache route: same exact law
    rng = RngHandle(11)
    n = 4000
    k = 5
    c1 = Counter(sp.uniform_nested(k, rng.split("cache", i)) for i in range(n))
    c2 = Counter()
    for i in range(n):
        steps = sp._steps_python(k, rng.split("py", i))
        c2[sp._decode_word(steps, sp._rotation_start(steps))] += 1
    c3 = Counter(sp._uniform_nested_numpy(k, rng.split("np", i), None) for i in range(n))
    support = set(tr._all_trees(k))
    for c in (c1, c2, c3):
        assert set(c) <= support
        _, pval = chisquare([c.get(t, 0) for t in support])
        assert pval > 1e-4


def test_sample_uniform_tree_small_sizes():
    rng = RngHandle(5)
    assert sp.sample_uniform_tree(1, rng) == tr.OrderedTree(())
    assert sp.sample_uniform_tree(2, rng) == tr.OrderedTree(((),))
    counts = Counter(sp.sample_uniform_tree(3, rng).encode() for _ in range(20_000))
    assert set(counts) == {"[[[]]]", "[[],[]]"}
    # 3 sigma band around 1/2
    assert abs(counts["[[[]]]"] - 10_000) < 3 * math.sqrt(20_000 * 0.25)


def test_sample_uniform_tree_large_k_has_right_size():
    rng = RngHandle(7)
    for k in (100, 600, 5000):
        t = sp.sample_uniform_tree(k, rng)
        assert t.size == k
        assert tr.is_valid_vertex_set(t.vertices)


def test_uniform_nested_clip_consistency_big():
    rng = RngHandle(9)
    t = sp.uniform_nested(2000, rng.split(1), clip=3)
    assert tr.nested_depth(t) <= 3


def test_geometric_children_inverse_cdf():
    # deterministic bin edges: u in (p^{j+1}, p^j] -> j children
    p = 0.7
    for j in range(6):
        assert sp.geometric_children(p, p**j) == j
        assert sp.geometric_children(p, p ** (j + 1) * 1.000001) == j  # just inside
    rng = RngHandle(13)
    n = 100_000
    counts = Counter(sp.geometric_children(0.5, rng.uniform_open()) for _ in range(n))
    for j in range(5):
        expect = n * 0.5**j * 0.5
        assert abs(counts[j] - expect) < 4 * math.sqrt(expect)


def test_sample_gw_size_law():
    # frozen oracle: P(size = k) = c_k p^{k-1} (1-p)^k
    rng = RngHandle(17)
    n = 60_000
    for p in (0.3, 0.5, 0.75):
        caps = sp.SampleCaps(depth=64, total_size=256)
        sizes = Counter()
        for i in range(n):
            t = sp.sample_gw(p, rng.split("gw", i), caps)
            sizes[t.size if t.clean else "other"] += 1
        expected = [float(nm.eta(k, F(p).limit_denominator(100))) for k in range(1, 9)]
        cells = [sizes.get(k, 0) for k in range(1, 9)]
        cells.append(n - sum(cells))
        expected.append(1.0 - sum(expected))
        _, pval = chisquare(cells, [e * n for e in expected])
        assert pval > 1e-4, (p, cells)


def test_sample_gw_shape_given_size_uniform():
    # conditioned on size 3, both shapes equally likely
    rng = RngHandle(19)
    shapes = Counter()
    for i in range(120_000):
        t = sp.sample_gw(0.5, rng.split(i), sp.SampleCaps(total_size=64))
        if t.clean and t.size == 3:
            shapes[t.encode()] += 1
    tot = sum(shapes.values())
    assert set(shapes) == {"[[[]]]", "[[],[]]"}
    assert abs(shapes["[[[]]]"] - tot / 2) < 3 * math.sqrt(tot * 0.25)


def test_sample_gw_caps_flag():
    rng = RngHandle(23)
    flagged = 0
    for i in range(300):
        t = sp.sample_gw(0.75, rng.split(i), sp.SampleCaps(depth=8, total_size=200))
        if not t.clean:
            flagged += 1
            assert set(t.status) <= {"depth-cap", "total-size-cap"}
    assert flagged > 0  # survival has positive probability at p = 3/4


def test_sample_gw_domain():
    with pytest.raises(DomainError):
        sp.sample_gw(0.0, RngHandle(1))
    with pytest.raises(DomainError):
        sp.sample_gw(1.0, RngHandle(1))


def test_naive_conditioned_slot_frequencies():
    # the introduction's negative example: P(first slot infinite) = p,
    # after a finite slot it stays p, after an infinite slot it drops to
    # p * eta_inf(p) (= 1/2 at p = 3/4)
    p = 0.75
    rng = RngHandle(29)
    n = 40_000
    first_inf = 0
    # second-slot outcome in {stop, finite, infinite}, split by the first slot
    after_fin = Counter()
    after_inf = Counter()
    for i in range(n):
        t = sp.sample_naive_conditioned(p, rng.split(i), depth=1)
        assert t.clean
        root = t.root
        kids_inf = [c is tr.FRONTIER for c in root]
        if kids_inf and kids_inf[0]:
            first_inf += 1
        if kids_inf:
            second = "stop" if len(kids_inf) < 2 else ("inf" if kids_inf[1] else "fin")
            (after_inf if kids_inf[0] else after_fin)[second] += 1
    assert abs(first_inf - n * p) < 3 * math.sqrt(n * p * (1 - p))

    # before the first infinite subtree there is no stop outcome at all,
    # and the infinite probability stays p
    assert after_fin["stop"] == 0
    tot = sum(after_fin.values())
    got = after_fin["inf"]
    assert abs(got - tot * p) < 3 * math.sqrt(tot * p * (1 - p)) + 1

    # after it, the infinite probability drops to p * eta_inf(p) = 1/2
    tot = sum(after_inf.values())
    got = after_inf["inf"]
    q = p * (2 * p - 1) / p
    assert q == 0.5
    assert abs(got - tot * q) < 3 * math.sqrt(tot * q * (1 - q)) + 1
    # and the stop outcome appears with probability 1 - p
    stops = after_inf["stop"]
    assert abs(stops - tot * (1 - p)) < 3 * math.sqrt(tot * p * (1 - p)) + 1


def test_naive_conditioned_always_survives():
    rng = RngHandle(31)
    for i in range(500):
        t = sp.sample_naive_conditioned(0.6, rng.split(i), depth=2)
        assert t.frontier, "a conditioned tree must keep an infinite branch"


def test_naive_conditioned_domain():
    with pytest.raises(DomainError):
        sp.sample_naive_conditioned(0.5, RngHandle(1))
    with pytest.raises(DomainError):
        sp.sample_naive_conditioned(1.0, RngHandle(1))
