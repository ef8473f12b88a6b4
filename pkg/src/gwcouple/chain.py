"""Increasing chains of uniform trees T_1 c T_2 c ... via exact transport.

For each size k an exact coupling of the uniform laws on sizes k and k+1,
supported on one-vertex extensions, is computed as an integer max-flow:
scale both marginals by c_k * c_{k+1}, demand c_{k+1} units through every
size-k tree and c_k units through every size-(k+1) tree, and route flow
only along containment pairs.  The flow saturating is a constructive
desk-scale certificate that such a coupling exists; the scaled flow values
divided by c_k * c_{k+1} are exact rational plan weights.

Beyond the exact regime the chain continues by inserting one vertex at a
uniformly chosen valid slot.  That keeps containment but is *not* exactly
uniform in law, so every consumer sees a per-size mode flag and must
propagate the heuristic one.

Randomness is keyed by the current size: the draw that grows T_s into
T_(s+1) comes from ``stream.split(s)``.  The chain prefix at any size is
therefore a pure function of (stream, size), no matter how far the chain
is eventually grown.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

from .errors import DomainError, InfeasibleTransportError
from .numerics import catalan
from .rng import RngHandle
from .trees import (
    ENUMERATION_CAP,
    OrderedTree,
    _all_trees,
    encode_nested,
    nested_contains,
    parse_marked,
    remove_vertex,
    removable_vertices,
    tree_index,
)

DEFAULT_EXACT_CAP = 9

CACHE_ENV = "GWCOUPLE_CACHE_DIR"


class _Dinic:
    """Deterministic max-flow; adjacency order fixed by insertion order."""

    def __init__(self, n: int):
        self.n = n
        self.to: list[int] = []
        self.cap: list[int] = []
        self.adj: list[list[int]] = [[] for _ in range(n)]

    def add_edge(self, u: int, v: int, c: int) -> int:
        eid = len(self.to)
        self.to.append(v)
        self.cap.append(c)
        self.adj[u].append(eid)
        self.to.append(u)
        self.cap.append(0)
        self.adj[v].append(eid + 1)
        return eid

    def max_flow(self, s: int, t: int) -> int:
        flow = 0
        while True:
            level = [-1] * self.n
            level[s] = 0
            queue = [s]
            for u in queue:
                for eid in self.adj[u]:
                    v = self.to[eid]
                    if self.cap[eid] > 0 and level[v] < 0:
                        level[v] = level[u] + 1
                        queue.append(v)
            if level[t] < 0:
                return flow
            it = [0] * self.n

            def dfs(u: int, pushed: int) -> int:
                if u == t:
                    return pushed
                while it[u] < len(self.adj[u]):
                    eid = self.adj[u][it[u]]
                    v = self.to[eid]
                    if self.cap[eid] > 0 and level[v] == level[u] + 1:
                        got = dfs(v, min(pushed, self.cap[eid]))
                        if got:
                            self.cap[eid] -= got
                            self.cap[eid ^ 1] += got
                            return got
                    it[u] += 1
                return 0

            while True:
                pushed = dfs(s, 1 << 62)
                if not pushed:
                    break
                flow += pushed


@dataclass
class TransportPlan:
    """Exact coupling of uniform size-k and size-(k+1) trees on containment
    pairs; integer flows over the common denominator c_k * c_{k+1}."""

    k: int
    flows: dict[tuple[int, int], int]
    denominator: int
    _rows: dict[int, tuple[list[int], list[float]]] = field(default_factory=dict, repr=False)

    def weight(self, i: int, j: int) -> Fraction:
        return Fraction(self.flows.get((i, j), 0), self.denominator)

    def row_sum(self, i: int) -> Fraction:
        return Fraction(sum(f for (a, _), f in self.flows.items() if a == i), self.denominator)

    def column_sum(self, j: int) -> Fraction:
        return Fraction(sum(f for (_, b), f in self.flows.items() if b == j), self.denominator)

    def conditional_row(self, i: int) -> tuple[list[int], list[float]]:
        """Successor indices and cumulative conditional probabilities."""
        row = self._rows.get(i)
        if row is None:
            ck = catalan(self.k)
            js = sorted(j for (a, j) in self.flows if a == i)
            cum, acc = [], 0.0
            for j in js:
                acc += self.flows[(i, j)] * ck / self.denominator
                cum.append(acc)
            if cum:
                cum[-1] = 1.0
            row = (js, cum)
            self._rows[i] = row
        return row

    def verify_exact(self) -> None:
        """Re-check marginals and support in exact arithmetic."""
        ck, ck1 = catalan(self.k), catalan(self.k + 1)
        left, right = _all_trees(self.k), _all_trees(self.k + 1)
        rows = [0] * ck
        cols = [0] * ck1
        for (i, j), f in self.flows.items():
            if f < 0:
                raise InfeasibleTransportError("negative flow")
            if f and not nested_contains(left[i], right[j]):
                raise InfeasibleTransportError("plan weight outside the containment support")
            rows[i] += f
            cols[j] += f
        if any(r * ck != self.denominator for r in rows):
            raise InfeasibleTransportError("row marginal is not uniform")
        if any(c * ck1 != self.denominator for c in cols):
            raise InfeasibleTransportError("column marginal is not uniform")


def _plan_to_csv(plan: TransportPlan) -> str:
    left, right = _all_trees(plan.k), _all_trees(plan.k + 1)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["tree_k", "tree_k1", "weight_numerator", "weight_denominator"])
    for (i, j), f in sorted(plan.flows.items()):
        w = Fraction(f, plan.denominator)
        writer.writerow([encode_nested(left[i]), encode_nested(right[j]), w.numerator, w.denominator])
    return buf.getvalue()


def _plan_from_csv(k: int, text: str) -> TransportPlan:
    den = catalan(k) * catalan(k + 1)
    idx_k, idx_k1 = tree_index(k), tree_index(k + 1)
    flows: dict[tuple[int, int], int] = {}
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header[:2] != ["tree_k", "tree_k1"]:
        raise DomainError("not a transport plan CSV")
    for a, b, num, d in reader:
        w = Fraction(int(num), int(d)) * den
        if w.denominator != 1:
            raise DomainError("plan weight does not scale to an integer flow")
        flows[(idx_k[parse_marked(a)], idx_k1[parse_marked(b)])] = int(w)
    plan = TransportPlan(k, flows, den)
    plan.verify_exact()
    return plan


def export_plan_csv(k: int) -> str:
    return _plan_to_csv(build_transport(k))


@lru_cache(maxsize=None)
def build_transport(k: int, cap: int = ENUMERATION_CAP) -> TransportPlan:
    """Exact uniform-marginal transport between sizes k and k+1.

    Results are cached in memory; set the GWCOUPLE_CACHE_DIR environment
    variable to also cache the CSV form on disk.
    """
    if k < 1:
        raise DomainError("transport size must be >= 1")
    if k + 1 > cap:
        raise DomainError(f"transport at size {k} needs enumeration of {k + 1} > cap {cap}")

    cache_dir = os.environ.get(CACHE_ENV)
    cache_file = None
    if cache_dir:
        cache_file = Path(cache_dir) / f"transport_{k}.csv"
        if cache_file.is_file():
            try:
                return _plan_from_csv(k, cache_file.read_text())
            except (DomainError, InfeasibleTransportError, KeyError, ValueError):
                pass  # stale or foreign file: rebuild

    left, right = _all_trees(k), _all_trees(k + 1)
    ck, ck1 = len(left), len(right)
    idx_k = tree_index(k)
    src, snk = ck + ck1, ck + ck1 + 1
    net = _Dinic(ck + ck1 + 2)
    for i in range(ck):
        net.add_edge(src, i, ck1)
    mid_edges: dict[int, tuple[int, int]] = {}
    for j, big in enumerate(right):
        for v in removable_vertices(big):
            i = idx_k[remove_vertex(big, v)]
            eid = net.add_edge(i, ck + j, min(ck, ck1))
            mid_edges[eid] = (i, j)
    for j in range(ck1):
        net.add_edge(ck + j, snk, ck)
    total = net.max_flow(src, snk)
    den = ck * ck1
    if total != den:
        raise InfeasibleTransportError(
            f"flow saturates {total}/{den} at size {k}; a uniform-marginal coupling "
            "on containment pairs should always exist"
        )
    flows = {}
    for eid, (i, j) in mid_edges.items():
        f = min(ck, ck1) - net.cap[eid]
        if f:
            flows[(i, j)] = f
    plan = TransportPlan(k, flows, den)
    plan.verify_exact()
    if cache_file is not None:
        cache_file.parent.mkdir(parents=True, exist_ok=True)
        cache_file.write_text(_plan_to_csv(plan))
    return plan


# ---------------------------------------------------------------------------
# chain sampling


def chain_step_exact(tree: OrderedTree, plan: TransportPlan, rng: RngHandle) -> OrderedTree:
    """Grow one exact step: conditional law plan(T, .) * c_k given T."""
    if tree.size != plan.k:
        raise DomainError(f"tree has size {tree.size}, plan is for size {plan.k}")
    i = tree_index(plan.k).get(tree.root)
    if i is None:
        raise DomainError("tree is not in the enumeration at its size")
    js, cum = plan.conditional_row(i)
    u = rng.uniform()
    lo = 0
    while cum[lo] <= u:
        lo += 1
    return OrderedTree(_all_trees(plan.k + 1)[js[lo]])


def heuristic_grow(tree: OrderedTree, rng: RngHandle) -> OrderedTree:
    """Insert one vertex at a uniformly random valid slot (flagged as a
    heuristic: the resulting marginal is close to but not exactly uniform)."""
    from .trees import insert_at

    return OrderedTree(insert_at(tree.root, rng.randbelow(tree.size)))


@dataclass
class ChainSample:
    trees: list[OrderedTree]  # T_1 .. T_K
    exact_upto: int
    modes: list[str]  # per tree: "exact" | "heuristic"


def sample_chain(K: int, rng: RngHandle, exact_cap: int = DEFAULT_EXACT_CAP) -> ChainSample:
    """T_1 c T_2 c ... c T_K, exact transport steps up to exact_cap."""
    if K < 1:
        raise DomainError("chain length must be >= 1")
    if exact_cap + 1 > ENUMERATION_CAP:
        raise DomainError("exact_cap exceeds the enumeration cap")
    trees = [OrderedTree(())]
    modes = ["exact"]
    for s in range(1, K):
        step_rng = rng.split(s)
        if s < exact_cap:
            trees.append(chain_step_exact(trees[-1], build_transport(s), step_rng))
            modes.append("exact")
        else:
            trees.append(heuristic_grow(trees[-1], step_rng))
            modes.append("heuristic")
    return ChainSample(trees, exact_upto=min(K, exact_cap), modes=modes)


def chain_prefixes(sizes, stream: RngHandle, exact_cap: int = DEFAULT_EXACT_CAP) -> list:
    """Nested forms of the chain prefixes at the requested sizes.

    The chain is a pure function of the stream: step s draws from
    ``stream.split(s)``.  Exact transport steps up to ``exact_cap``; above
    it, uniform-slot insertion in amortized O(1) per step with prefixes
    recovered from vertex creation order (vertex addresses never change
    once created, so the first s created vertices form the size-s tree).
    """
    sizes = list(sizes)
    if not sizes or any(s < 1 for s in sizes):
        raise DomainError("requested sizes must be >= 1")
    top = max(sizes)
    out: dict[int, object] = {}
    tree = ()
    if 1 in sizes:
        out[1] = tree
    s = 1
    while s < top and s < exact_cap:
        step_rng = stream.split(s)
        plan = build_transport(s)
        i = tree_index(s)[tree]
        js, cum = plan.conditional_row(i)
        u = step_rng.uniform()
        lo = 0
        while cum[lo] <= u:
            lo += 1
        tree = _all_trees(s + 1)[js[lo]]
        s += 1
        if s in sizes:
            out[s] = tree
    if s < top:
        # mutable phase: nodes carry (creation_index, children); a vertex
        # created later than `limit` vertices is simply absent from the
        # size-`limit` prefix, and children stay in creation order, so
        # prefixes remain valid trees
        order: list[list] = []

        def register(node) -> list:
            entry = [len(order), []]
            order.append(entry)
            entry[1].extend(register(c) for c in node)
            return entry

        register(tree)
        root = order[0]
        while s < top:
            parent = order[stream.split(s).randbelow(s)]
            child = [len(order), []]
            parent[1].append(child)
            order.append(child)
            s += 1

        def freeze(entry, limit):
            return tuple(freeze(c, limit) for c in entry[1] if c[0] < limit)

        for want in sizes:
            if want not in out:
                out[want] = freeze(root, want)
    return [out[s] for s in sizes]
