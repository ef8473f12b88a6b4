"""Shared-randomness coupling: nested conditioned trees across a grid.

One coupled sample draws a single (X, U) stream per node and evaluates
the ladder for every grid parameter on it, which orders the subtree-size
outcomes pointwise.  Each slot then dispatches on the outcome vector of
the still-running parameters:

* all finite: one incremental chain provides nested prefixes, exactly
  uniform up to the exact-transport cap and flagged heuristic above it;
* all infinite: recurse one level deeper on the same sub-grid;
* mixed (finite below, infinite above): the finite side comes from the
  chain; the infinite side is recursed and then unioned with the chain's
  top tree so containment can never fail.  The union perturbs the infinite
  side's law, so those subtrees are flagged as approximations, except in
  tiny mode where a mixed slot one level above the horizon with a single
  infinite parameter is resolved exactly through an enumerated transport
  plan between root child counts.

Containment of the emitted views holds with certainty by construction,
including for cap-flagged samples; ``verify_containment`` re-derives it
from the vertex sets alone and produces a witness address on failure.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

from . import numerics as nm
from .chain import DEFAULT_EXACT_CAP, chain_prefixes
from .errors import DomainError, InfeasibleTransportError
from .infinite import infinite_count_law
from .ladder import LadderTrace, draw_X, exact_children_law, run_ladder, run_ladder_grid
from .numerics import INF, OVERFLOW
from .rng import RngHandle
from .sampling import DEFAULT_CAPS, SampleCaps
from .trees import (
    FRONTIER,
    TruncatedTree,
    _all_trees,
    nested_clip,
    nested_contains,
    nested_size,
    nested_union,
)

FLAG_EXACT_CHAIN = "exact-chain"
FLAG_CHAIN_HEURISTIC = "chain-heuristic"
FLAG_APPROX = "finite-infinite-approx"
FLAG_EXACT_TINY = "exact-tiny"

TINY_BREADTH_CAP = 16


@dataclass
class CoupledSample:
    params: tuple[float, ...]
    depth: int
    trees: list[TruncatedTree]
    root_trace: LadderTrace
    flags: Counter
    root_flags: Counter
    status: tuple[str, ...]
    verdict: list[list[bool]]
    traces: dict | None = field(default=None, repr=False)

    @property
    def clean(self) -> bool:
        return not self.status

    @property
    def approx_free(self) -> bool:
        return self.flags.get(FLAG_APPROX, 0) == 0

    def to_json(self) -> str:
        payload = {
            "params": [float(p) for p in self.params],
            "depth": self.depth,
            "trees": [t.encode() for t in self.trees],
            "flags": dict(self.flags),
            "root_flags": dict(self.root_flags),
            "status": list(self.status),
            "verdict": self.verdict,
            "root_trace": json.loads(self.root_trace.to_json()),
        }
        if self.traces is not None:
            payload["traces"] = {
                ".".join(map(str, addr)) or "o": json.loads(t.to_json())
                for addr, t in self.traces.items()
            }
        return json.dumps(payload)


# ---------------------------------------------------------------------------
# exact tiny-mode transport between chain tops and depth-1 views


@lru_cache(maxsize=None)
def _root_count_classes(k: int) -> tuple:
    """(root child count, probability) classes of a uniform size-k tree."""
    trees = _all_trees(k)
    counts = Counter(len(t) for t in trees)
    unit = Fraction(1, len(trees))
    return tuple(sorted((j, c * unit) for j, c in counts.items()))


@lru_cache(maxsize=None)
def _tiny_plan(p: float, k: int, breadth_cap: int = TINY_BREADTH_CAP):
    """Conditional tables coupling the chain top's root child count j with
    the infinite side's child count c so that j <= c always.

    Exact marginals: uniform-size-k classes on the left, the conditioned
    child-count law on the right with one pooled atom for counts beyond
    the cap.  Feasibility is certified by the flow saturating.
    """
    from .chain import _Dinic

    pq = nm.as_fraction(p)
    left = _root_count_classes(k)
    right_law = exact_children_law(pq, breadth_cap)
    top_mass = 1 - sum(right_law.values())
    right = sorted(right_law.items()) + [(None, top_mass)]  # None = beyond cap
    denom = math.lcm(
        *(m.denominator for _, m in left), *(m.denominator for _, m in right if m)
    )
    nl, nr = len(left), len(right)
    src, snk = nl + nr, nl + nr + 1
    net = _Dinic(nl + nr + 2)
    for a, (_, m) in enumerate(left):
        net.add_edge(src, a, int(m * denom))
    mid = {}
    for a, (j, _) in enumerate(left):
        for b, (c, m) in enumerate(right):
            if m == 0:
                continue
            if c is None or j <= c:
                mid[net.add_edge(a, nl + b, denom)] = (a, b)
    for b, (_, m) in enumerate(right):
        net.add_edge(nl + b, snk, int(m * denom))
    if net.max_flow(src, snk) != denom:
        raise InfeasibleTransportError(
            f"child-count transport at p={p}, k={k} failed to saturate; the "
            "monotone coupling guarantees it must"
        )
    rows: dict[int, tuple[list, list[float]]] = {}
    for a, (j, mass) in enumerate(left):
        total = int(mass * denom)
        atoms, cum, acc = [], [], 0
        for eid, (aa, b) in mid.items():
            if aa != a:
                continue
            f = denom - net.cap[eid]
            if f > 0:
                atoms.append(right[b][0])
                acc += f
                cum.append(acc / total)
        if cum:
            cum[-1] = 1.0
        rows[j] = (atoms, cum)
    return rows


@lru_cache(maxsize=None)
def _sigma_table(p: float, children: int) -> tuple:
    """Cumulative law of the infinite-slot count given the child count."""
    law = infinite_count_law(nm.as_fraction(p), children)
    sigmas, cum, acc = [], [], 0.0
    for sigma in sorted(law):
        acc += float(law[sigma])
        sigmas.append(sigma)
        cum.append(acc)
    cum[-1] = 1.0
    return tuple(sigmas), tuple(cum)


def _draw_depth1_view(p: float, children: int, stream: RngHandle):
    """Depth-1 view with the given child count: frontier set drawn exactly."""
    sigmas, cum = _sigma_table(p, children)
    u = stream.uniform()
    idx = 0
    while cum[idx] <= u:
        idx += 1
    sigma = sigmas[idx]
    slots = list(range(children))
    for i in range(sigma):  # partial Fisher-Yates: uniform sigma-subset
        j = i + stream.randbelow(children - i)
        slots[i], slots[j] = slots[j], slots[i]
    chosen = set(slots[:sigma])
    return tuple(FRONTIER if i in chosen else () for i in range(children))


def _tiny_resolve(p: float, top, k: int, stream: RngHandle, slot_cap: int):
    """Exact mixed-slot resolution one level above the horizon: draw the
    infinite side's depth-1 view from the transport conditional given the
    chain top's root child count."""
    rows = _tiny_plan(p, k)
    atoms, cum = rows[len(top)]
    u = stream.split("count").uniform()
    idx = 0
    while cum[idx] <= u:
        idx += 1
    c = atoms[idx]
    if c is not None:
        return _draw_depth1_view(p, c, stream.split("view"))
    # pooled atom: child count beyond the cap; rejection on the exact law
    fam = nm.threshold_family(p)
    attempt = 0
    while True:
        lad = stream.split("top", attempt)
        trace = run_ladder(p, draw_X(lad), lad, slot_cap=slot_cap, family=fam)
        t = trace.single()
        if t.m0 is not None and t.children > TINY_BREADTH_CAP:
            return tuple(
                FRONTIER if o == INF else () for o in t.outcomes[: t.children]
            )
        attempt += 1


# ---------------------------------------------------------------------------
# the coupled sampler


def sample_coupled(
    params,
    depth: int,
    rng: RngHandle,
    caps: SampleCaps = DEFAULT_CAPS,
    exact_cap: int = DEFAULT_EXACT_CAP,
    tiny_mode: bool = True,
    keep_traces: bool = False,
) -> CoupledSample:
    """One nested family of depth-`depth` conditioned views, all parameters
    driven by identical randomness.

    With ``tiny_mode`` off, every construction choice is keyed by (node,
    slot, size) alone, so enlarging the grid never perturbs the trees of
    parameters already present.  Tiny mode improves mixed-slot marginals
    one level above the horizon at the cost of that stability (the
    dispatch itself depends on the grid there).
    """
    params = tuple(float(p) for p in params)
    if not params:
        raise DomainError("empty parameter grid")
    if any(b <= a for a, b in zip(params, params[1:])):
        raise DomainError("grid must be strictly increasing")
    if params[0] < 0.5 or params[-1] >= 1.0:
        raise DomainError("grid must lie within [1/2, 1); p = 1 has no finite sampler")
    if depth < 1:
        raise DomainError("depth must be >= 1")

    families = {p: nm.threshold_family(p) for p in params}
    status: set[str] = set()
    flags: Counter = Counter()
    root_flags: Counter = Counter()
    budget = [caps.total_size * len(params)]
    traces: dict | None = {} if keep_traces else None
    root_trace: list = []

    def attach_finite(sizes, stream, clip):
        """Nested chain prefixes, clipped; returns list aligned with sizes."""
        uniq = sorted(set(sizes))
        prefixes = dict(zip(uniq, chain_prefixes(uniq, stream, exact_cap)))
        return [nested_clip(prefixes[s], clip) for s in sizes]

    def node(grid, depth_left, stream, addr):
        r = len(grid)
        if depth_left == 0:
            return [FRONTIER] * r
        lad = stream.split("ladder")
        X = draw_X(lad)
        trace = run_ladder_grid(
            grid, X, lad, slot_cap=caps.slots, families=[families[p] for p in grid]
        )
        status.update(trace.status)
        if not addr:
            root_trace.append(trace)
        if traces is not None:
            traces[addr] = trace
        here = root_flags if not addr else flags
        kids: list[list] = [[] for _ in range(r)]
        counts = [t.children for t in trace.params]
        dead = False
        for m in range(1, max(counts) + 1):
            first_alive = next(i for i in range(r) if counts[i] >= m)
            alive = list(range(first_alive, r))
            outs = [trace.params[i].outcomes[m - 1] for i in alive]
            if dead:
                for i in alive:
                    kids[i].append(())
                continue
            if all(o == INF for o in outs):
                subs = node(tuple(grid[i] for i in alive), depth_left - 1, stream.split(m), addr + (m,))
                for i, sub in zip(alive, subs):
                    kids[i].append(sub)
                continue
            n_fin = sum(1 for o in outs if o != INF)
            fin_idx = alive[:n_fin]
            inf_idx = alive[n_fin:]
            fin_outs = outs[:n_fin]
            if any(o is OVERFLOW for o in fin_outs) or (
                depth_left > 1 and any(o > min(caps.total_size, budget[0]) for o in fin_outs)
            ):
                # cannot materialize jointly: stub the slot for everyone
                if depth_left == 1:
                    for i in fin_idx:
                        kids[i].append(())
                    for i in inf_idx:
                        kids[i].append(FRONTIER)
                else:
                    status.add("size-overflow")
                    for i in alive:
                        kids[i].append(())
                continue
            if depth_left == 1:
                # every finite subtree clips to a bare vertex: exact view
                for i in fin_idx:
                    kids[i].append(())
                for i in inf_idx:
                    kids[i].append(FRONTIER)
                continue
            k_top = fin_outs[-1]
            trees_fin = attach_finite(fin_outs, stream.split(m, "chain"), depth_left - 1)
            spent = sum(nested_size(t) for t in trees_fin)
            budget[0] -= spent
            if budget[0] < 0:
                status.add("total-size-cap")
                dead = True
                for i in alive:
                    kids[i].append(())
                continue
            for i, t in zip(fin_idx, trees_fin):
                kids[i].append(t)
                here[FLAG_EXACT_CHAIN if trace.params[i].outcomes[m - 1] <= exact_cap else FLAG_CHAIN_HEURISTIC] += 1
            if not inf_idx:
                continue
            if tiny_mode and depth_left == 2 and len(inf_idx) == 1 and k_top <= exact_cap:
                top_full = chain_prefixes([k_top], stream.split(m, "chain"), exact_cap)[0]
                view = _tiny_resolve(
                    grid[inf_idx[0]], top_full, k_top, stream.split(m, "tiny"), caps.slots
                )
                kids[inf_idx[0]].append(view)
                here[FLAG_EXACT_TINY] += 1
                continue
            subs = node(tuple(grid[i] for i in inf_idx), depth_left - 1, stream.split(m), addr + (m,))
            top_clipped = nested_clip(
                chain_prefixes([k_top], stream.split(m, "chain"), exact_cap)[0], depth_left - 1
            )
            for i, sub in zip(inf_idx, subs):
                kids[i].append(nested_union(sub, top_clipped))
                here[FLAG_APPROX] += 1
        return [tuple(k) for k in kids]

    roots = node(params, depth, rng, ())
    trees = [TruncatedTree(root, depth_horizon=depth, status=tuple(sorted(status))) for root in roots]
    verdict = [[nested_contains(a.root, b.root) for b in trees] for a in trees]
    return CoupledSample(
        params, depth, trees, root_trace[0], flags + root_flags, root_flags,
        tuple(sorted(status)), verdict, traces,
    )


# ---------------------------------------------------------------------------
# independent verification


def first_violation(small, big, prefix=()):
    """First address present in `small` but not in `big`, or None."""
    if small is FRONTIER or not small:
        return None
    if big is FRONTIER:
        big = ()
    for i, sub in enumerate(small, start=1):
        if i > len(big):
            return prefix + (i,)
        hit = first_violation(sub, big[i - 1], prefix + (i,))
        if hit is not None:
            return hit
    return None


def verify_containment(sample: CoupledSample):
    """Re-check the containment matrix from the vertex sets alone.

    Returns (matrix, witness): matrix[i][j] says tree_i is contained in
    tree_j; witness is the first offending address among pairs that the
    coupling promises (i < j), or None.
    """
    r = len(sample.trees)
    matrix = [[sample.trees[j].contains(sample.trees[i]) for j in range(r)] for i in range(r)]
    witness = None
    for i in range(r):
        for j in range(i + 1, r):
            if not matrix[i][j]:
                witness = first_violation(sample.trees[i].root, sample.trees[j].root)
                break
        if witness:
            break
    return matrix, witness


# ---------------------------------------------------------------------------
# corollary composition and the naive-coupling failure demo


def corollary_check(
    k: int,
    p: float,
    depth: int,
    n_samples: int,
    rng: RngHandle,
    exact_cap: int = DEFAULT_EXACT_CAP,
    continue_to: int | None = None,
) -> dict:
    """Nest a uniform size-k tree inside a coupled (1/2, p) pair.

    The chain is grown to ``continue_to`` (default 4k) as a stand-in for
    its eventual union; both coupled components absorb the chain top by
    the same union rule that powers mixed slots, so T_k c union-side c
    p-side holds by construction.  Only the T_k marginal is exact (the
    union sides are flagged approximations); the report carries shape
    counts for the uniformity test plus containment and flag tallies.
    """
    if k > exact_cap:
        raise DomainError("the corollary check needs k within the exact-chain regime")
    top_size = continue_to or max(4 * k, k + 8)
    shapes: Counter = Counter()
    contained = 0
    approx_flags = 0
    clean = 0
    for i in range(n_samples):
        stream = rng.split("corollary", i)
        t_k, t_top = chain_prefixes([k, top_size], stream.split("chain"), exact_cap)
        coupled = sample_coupled((0.5, p), depth, stream.split("pair"))
        top_clipped = nested_clip(t_top, depth)
        union_side = nested_union(coupled.trees[0].root, top_clipped)
        p_side = nested_union(coupled.trees[1].root, top_clipped)
        ok = (
            nested_contains(nested_clip(t_k, depth), union_side)
            and nested_contains(union_side, p_side)
        )
        contained += ok
        shapes[t_k] += 1
        approx_flags += not coupled.approx_free
        clean += coupled.clean
    return {
        "k": k,
        "p": p,
        "depth": depth,
        "samples": n_samples,
        "contained": contained,
        "containment_rate": contained / n_samples,
        "shape_counts": {str(s): c for s, c in sorted(shapes.items())},
        "shape_counter": shapes,
        "approx_flagged": approx_flags,
        "clean": clean,
    }


def naive_failure_demo(p1: float, p2: float) -> dict:
    """Why the sequential conditioned sampler cannot be coupled monotonely:
    after one finite slot the next-infinite probability is p1 for the small
    parameter but p2 * eta_inf(p2) = 2 p2 - 1 for the large one, and the
    former often exceeds the latter."""
    if not 0.5 < p1 < p2 <= 1.0:
        raise DomainError("demo needs 1/2 < p1 < p2 <= 1")
    rival = p2 * nm.eta_inf(p2)
    return {
        "p1": p1,
        "p2_eta_inf": rival,
        "naive_coupling_fails": p1 > rival,
    }
