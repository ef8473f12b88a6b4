"""Sampling a geometric tree conditioned to survive, with exact oracles.

The sampler realizes the ladder construction: run the ladder at the root,
attach an independent uniform tree of size L_m at each finite slot m,
recurse (one depth level less) at each infinite slot, and stop at the
first 0 outcome.  Recursion bottoms out at depth 0 with a frontier mark,
so a depth-d sample is the conditioned tree's restriction to the first d
generations with infinite branches marked exactly at depth d.

The oracles are exact (rational) laws of what the sampler emits:

* ``pattern_probability``     -- root slots with explicit sizes
* ``depth1_pattern_probability`` -- child count + which children infinite
* ``prefix_law``              -- the full depth-d view law on a finite
                                 enumerated support, plus escaped mass
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from functools import lru_cache

from . import numerics as nm
from .errors import DomainError, EnumerationCapError
from .ladder import draw_X, run_ladder
from .numerics import INF, OVERFLOW
from .rng import RngHandle
from .sampling import DEFAULT_CAPS, SampleCaps, uniform_nested
from .trees import FRONTIER, TruncatedTree, encode_nested, nested_size


def sample_conditioned_infinite(
    p: float,
    depth: int,
    rng: RngHandle,
    caps: SampleCaps = DEFAULT_CAPS,
) -> TruncatedTree:
    """Depth-d view of the conditioned-to-survive tree at parameter p.

    p = 1 is rejected: every slot would be infinite and the stop outcome
    never arrives, so no finite representation exists.  Exact-arithmetic
    consumers still handle p = 1 through the threshold tables.
    """
    p = float(p)
    if not 0.5 <= p < 1.0:
        raise DomainError("conditioned sampling needs p in [1/2, 1)")
    if depth < 0:
        raise DomainError("depth must be >= 0")
    family = nm.threshold_family(p)
    status: set[str] = set()
    budget = [caps.total_size]

    def node(depth_left: int, stream: RngHandle):
        if depth_left <= 0:
            return FRONTIER
        lad = stream.split("ladder")
        trace = run_ladder(p, draw_X(lad), lad, slot_cap=caps.slots, family=family)
        status.update(trace.status)
        t = trace.single()
        kids = []
        for m, outcome in enumerate(t.outcomes, start=1):
            if outcome == 0:
                break
            if outcome == INF:
                kids.append(node(depth_left - 1, stream.split(m)))
            elif depth_left == 1:
                kids.append(())  # any finite subtree clips to its root here
            elif outcome is OVERFLOW or outcome > caps.total_size:
                status.add("size-overflow")
                kids.append(())
            else:
                sub = uniform_nested(outcome, stream.split(m), clip=depth_left - 1)
                budget[0] -= nested_size(sub)
                if budget[0] < 0:
                    status.add("total-size-cap")
                    kids.append(())
                    break
                kids.append(sub)
        return tuple(kids)

    root = node(depth, rng)
    return TruncatedTree(root, depth_horizon=depth, status=tuple(sorted(status)))


# ---------------------------------------------------------------------------
# exact laws


def pattern_probability(p, pattern) -> Fraction | float:
    """Probability of an explicit root pattern under the conditioned law.

    ``pattern`` lists the sizes of the root's child subtrees in slot
    order: a positive integer for a finite subtree, INF (math.inf) for an
    infinite one; the next slot is implicitly the terminating 0.  Patterns
    without an infinite slot have probability 0 (the tree survives).
    """
    exact = nm.is_exact(p)
    pq = nm.as_fraction(p) if exact else float(p)
    half = Fraction(1, 2) if exact else 0.5
    if not half <= pq < 1:
        raise DomainError("pattern probabilities need p in [1/2, 1)")
    n_inf = sum(1 for e in pattern if e == INF)
    if n_inf == 0:
        return Fraction(0) if exact else 0.0
    surv = nm.eta_inf(pq)
    out = pq * (1 - pq) * (pq * surv) ** (n_inf - 1)
    for e in pattern:
        if e == INF:
            continue
        if not isinstance(e, int) or e < 1:
            raise DomainError(f"pattern entries must be sizes >= 1 or INF, got {e!r}")
        out *= pq * nm.eta(e, pq)
    return out


def depth1_pattern_probability(p, children: int, infinite_slots) -> Fraction | float:
    """P(the root has `children` slots and exactly `infinite_slots` of them
    carry infinite subtrees), sizes of finite subtrees marginalized out."""
    exact = nm.is_exact(p)
    pq = nm.as_fraction(p) if exact else float(p)
    s = frozenset(infinite_slots)
    if not s or max(s) > children or min(s) < 1:
        if not s:
            return Fraction(0) if exact else 0.0
        raise DomainError("infinite slots must lie in 1..children")
    sigma = len(s)
    surv = nm.eta_inf(pq)
    finite_mass = pq * (1 - surv)  # one finite slot, any size
    return pq * (1 - pq) * (pq * surv) ** (sigma - 1) * finite_mass ** (children - sigma)


def infinite_count_law(p, children: int) -> dict[int, Fraction]:
    """Law of the number of infinite slots given the child count (exact).

    Conditionally on the count, every subset of slots of the same size is
    equally likely, so the count law determines the whole slot-set law.
    """
    pq = nm.as_fraction(p)
    surv = nm.eta_inf(pq)
    finite_mass = pq * (1 - surv)
    weights = {
        sigma: math.comb(children, sigma)
        * (pq * surv) ** (sigma - 1)
        * finite_mass ** (children - sigma)
        for sigma in range(1, children + 1)
    }
    total = sum(weights.values())
    return {sigma: w / total for sigma, w in weights.items()}


def pattern_mass_captured(p, max_infinite: int, size_cap: int | None) -> Fraction:
    """Total pattern mass with at most ``max_infinite`` infinite slots and
    every finite size <= size_cap (None = all finite sizes), exactly.

    Summing the finite-slot geometric series in closed form: with
    s = captured one-slot finite mass, patterns with I infinite slots
    carry total mass p(1-p) (p eta_inf)^(I-1) / (1-s)^(I+1).
    """
    pq = nm.as_fraction(p)
    if not Fraction(1, 2) <= pq < 1:
        raise DomainError("pattern mass needs p in [1/2, 1)")
    surv = nm.eta_inf(pq)
    if size_cap is None:
        s = pq * (1 - surv)
    else:
        s = sum(pq * nm.eta(k, pq) for k in range(1, size_cap + 1))
    total = Fraction(0)
    for i in range(1, max_infinite + 1):
        total += pq * (1 - pq) * (pq * surv) ** (i - 1) / (1 - s) ** (i + 1)
    return total


@lru_cache(maxsize=None)
def _clipped_gw_law(q: Fraction, depth: int, breadth_cap: int) -> tuple:
    """Depth-clipped view law of a plain geometric tree with parameter q,
    on the support with every child count <= breadth_cap.

    Escaped mass (child counts beyond the cap somewhere) is 1 minus the
    listed total; there is no size escape because all sizes of a given
    view shape pool exactly.
    """
    if depth == 0:
        return (((), Fraction(1)),)
    sub = _clipped_gw_law(q, depth - 1, breadth_cap)
    out: dict = {}
    for c in range(0, breadth_cap + 1):
        base = q**c * (1 - q)
        partial = {(): base}
        for _ in range(c):
            nxt: dict = {}
            for prefix, m1 in partial.items():
                for atom, m2 in sub:
                    key = prefix + (atom,)
                    nxt[key] = nxt.get(key, 0) + m1 * m2
            partial = nxt
        for kids, m in partial.items():
            out[kids] = out.get(kids, 0) + m
    return tuple(out.items())


def prefix_law(
    p,
    depth: int,
    breadth_cap: int = 4,
    size_cap: int = 64,
    atom_budget: int = 200_000,
) -> tuple[dict, Fraction]:
    """Exact law of the depth-d view on an enumerated support.

    Returns (atoms, escaped): ``atoms`` maps the marked text form of each
    view to its exact probability; ``escaped`` is the remaining mass.
    Captured + escaped = 1 exactly.

    A finite slot's subtree, marginalized over its size, is a geometric
    tree with the dual parameter 1-p (the conditioned-finite duality), so
    finite-slot view laws carry no size truncation at all.  A view escapes
    the enumeration only for reasons visible in the view itself: a child
    count above ``breadth_cap`` somewhere, or a finite-slot view with more
    than ``size_cap`` vertices.  Sampled views can therefore be classified
    captured-vs-escaped with no hidden bookkeeping.
    """
    pq = nm.as_fraction(p)
    if not Fraction(1, 2) <= pq < 1:
        raise DomainError("prefix law needs p in [1/2, 1)")

    def level(d: int) -> dict:
        if d == 0:
            return {FRONTIER: Fraction(1)}
        sub_atoms = tuple(level(d - 1).items())
        finite_mass = pq * (1 - nm.eta_inf(pq))
        finite_atoms = tuple(
            (atom, finite_mass * m)
            for atom, m in _clipped_gw_law(1 - pq, d - 1, breadth_cap)
            if nested_size(atom) <= size_cap
        )
        out: dict = {}
        for c in range(1, breadth_cap + 1):
            for infinite_set in _nonempty_subsets(c):
                base = pq * (1 - pq) * (pq * nm.eta_inf(pq)) ** (len(infinite_set) - 1)
                if base == 0:
                    continue
                slot_laws = [
                    sub_atoms if slot in infinite_set else finite_atoms
                    for slot in range(1, c + 1)
                ]
                partial = {(): base}
                for law in slot_laws:
                    nxt: dict = {}
                    for prefix, m1 in partial.items():
                        for atom, m2 in law:
                            nxt[prefix + (atom,)] = nxt.get(prefix + (atom,), 0) + m1 * m2
                    partial = nxt
                    if len(partial) > atom_budget:
                        raise EnumerationCapError("prefix-law support exceeded the atom budget")
                for kids, m in partial.items():
                    out[kids] = out.get(kids, 0) + m
                if len(out) > atom_budget:
                    raise EnumerationCapError("prefix-law support exceeded the atom budget")
        return out

    atoms = level(depth)
    captured = sum(atoms.values())
    return {encode_nested(a): m for a, m in atoms.items()}, 1 - captured


def _nonempty_subsets(c: int):
    slots = range(1, c + 1)
    for r in range(1, c + 1):
        yield from (frozenset(s) for s in itertools.combinations(slots, r))
