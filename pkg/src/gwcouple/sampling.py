"""Baseline samplers.

* ``sample_uniform_tree``: exactly uniform over the c_k ordered trees with
  k vertices, for any k.  A uniformly shuffled multiset of k-1 up-steps
  and k down-steps has exactly one rotation whose proper prefix sums stay
  nonnegative (the total is -1, so the word is aperiodic and the cycle
  lemma applies); that rotation is a Dyck word plus a final down-step, and
  the Dyck word is read as a depth-first contour.

* ``sample_gw``: the geometric Galton-Watson tree grown breadth-first,
  one unit draw per vertex through the inverse CDF.

* ``sample_naive_conditioned``: the obvious sequential conditioned
  sampler.  Its marginal is correct, which the tests confirm, but its
  conditional probabilities jump when the first infinite subtree appears,
  which is exactly why it cannot be used for monotone coupling; it is kept
  as a working negative example.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

from . import numerics as nm
from .errors import DomainError
from .rng import RngHandle
from .trees import FRONTIER, OrderedTree, TruncatedTree, _all_trees, nested_clip, nested_size


@dataclass(frozen=True)
class SampleCaps:
    """Resource limits; exceeding any of them flags the sample, never
    silently truncates."""

    depth: int = 64
    total_size: int = 1 << 20
    slots: int = 4096


DEFAULT_CAPS = SampleCaps()

_CACHED_K = 9  # uniform draws from the enumeration cache up to this size
_NUMPY_K = 512  # switch the shuffle to numpy above this size


# ---------------------------------------------------------------------------
# uniform trees of a fixed size


def _rotation_start(steps) -> int:
    """Index after the first minimum of the prefix-sum walk."""
    best = 0
    acc = 0
    pos = 0
    for i, s in enumerate(steps):
        acc += s
        if acc < best:
            best = acc
            pos = i + 1
    return pos % len(steps)


def _decode_word(steps, start: int):
    """Read the rotated word (minus its final down-step) as a contour."""
    n = len(steps)
    stack = [[]]
    for i in range(n - 1):
        if steps[(start + i) % n] > 0:
            stack.append([])
        else:
            top = stack.pop()
            stack[-1].append(tuple(top))
    return tuple(stack[0])


def _decode_word_clipped(steps, start: int, clip: int):
    n = len(steps)
    stack = [[]]
    skip = 0
    for i in range(n - 1):
        if steps[(start + i) % n] > 0:
            if skip or len(stack) > clip:
                skip += 1
            else:
                stack.append([])
        elif skip:
            skip -= 1
        else:
            top = stack.pop()
            stack[-1].append(tuple(top))
    return tuple(stack[0])


def _steps_python(k: int, rng: RngHandle) -> list[int]:
    steps = [1] * (k - 1) + [-1] * k
    for i in range(2 * k - 2, 0, -1):  # Fisher-Yates
        j = rng.randbelow(i + 1)
        steps[i], steps[j] = steps[j], steps[i]
    return steps


def _uniform_nested_numpy(k: int, rng: RngHandle, clip: int | None):
    import numpy as np

    gen = np.random.Generator(np.random.PCG64(rng.next_u64()))
    steps = np.full(2 * k - 1, -1, dtype=np.int64)
    up = gen.choice(2 * k - 1, size=k - 1, replace=False)
    steps[up] = 1
    walk = np.cumsum(steps)
    start = (int(np.argmin(walk)) + 1) % len(steps)
    rotated = np.concatenate((steps[start:], steps[:start]))
    if clip is None:
        return _decode_word(rotated.tolist(), 0)
    dyck = rotated[: 2 * k - 2]
    depths = np.cumsum(dyck)
    keep = depths[dyck > 0]
    keep = keep[keep <= clip]
    # rebuild from the preorder depth sequence of surviving vertices
    stack = [[]]
    for d in keep.tolist():
        while len(stack) > d:
            top = stack.pop()
            stack[-1].append(tuple(top))
        stack.append([])
    while len(stack) > 1:
        top = stack.pop()
        stack[-1].append(tuple(top))
    return tuple(stack[0])


def uniform_nested(k: int, rng: RngHandle, clip: int | None = None):
    """Nested form of a uniform size-k tree, optionally depth-clipped.

    All three internal routes (enumeration cache, Fisher-Yates cycle
    lemma, numpy cycle lemma) produce exactly the uniform law.
    """
    if k < 1:
        raise DomainError("tree size must be >= 1")
    if k <= _CACHED_K:
        node = _all_trees(k)[rng.randbelow(nm.catalan(k))]
        return node if clip is None else nested_clip(node, clip)
    if k <= _NUMPY_K:
        steps = _steps_python(k, rng)
        start = _rotation_start(steps)
        if clip is None:
            return _decode_word(steps, start)
        return _decode_word_clipped(steps, start, clip)
    return _uniform_nested_numpy(k, rng, clip)


def sample_uniform_tree(k: int, rng: RngHandle) -> OrderedTree:
    """Uniform over all ordered rooted trees with exactly k vertices."""
    if k < 1:
        raise DomainError("tree size must be >= 1")
    if k <= _NUMPY_K:
        steps = _steps_python(k, rng)
        return OrderedTree(_decode_word(steps, _rotation_start(steps)))
    return OrderedTree(_uniform_nested_numpy(k, rng, None))


# ---------------------------------------------------------------------------
# plain Galton-Watson tree


def geometric_children(p: float, u: float) -> int:
    """Inverse CDF of P(c = j) = p^j (1-p) from one draw u in (0, 1]."""
    if u >= 1.0:
        return 0
    return int(math.log(u) / math.log(p))


def _freeze(node):
    """Mutable nested lists -> nested tuples, iteratively (depth-safe)."""
    out_stack = [(node, [], 0)]
    while True:
        cur, done, idx = out_stack[-1]
        if idx == len(cur):
            out_stack.pop()
            frozen = tuple(done)
            if not out_stack:
                return frozen
            parent = out_stack[-1]
            parent[1].append(frozen)
            out_stack[-1] = (parent[0], parent[1], parent[2] + 1)
        else:
            child = cur[idx]
            if isinstance(child, tuple) or child is FRONTIER:
                done.append(child)
                out_stack[-1] = (cur, done, idx + 1)
            else:
                out_stack.append((child, [], 0))


def sample_gw(p: float, rng: RngHandle, caps: SampleCaps = DEFAULT_CAPS) -> TruncatedTree:
    """One geometric Galton-Watson tree, grown level by level.

    Clean status means the tree died out within the caps, so the view is
    the whole tree.  Hitting the depth or total-size cap stops growth and
    flags the sample instead of silently truncating it.
    """
    if not 0.0 < float(p) < 1.0:
        raise DomainError("offspring parameter must lie in (0, 1)")
    p = float(p)
    root: list = []
    level = [root]
    total = 1
    status: list[str] = []
    depth = 0
    while level:
        if depth >= caps.depth:
            status.append("depth-cap")
            break
        nxt: list[list] = []
        for node in level:
            c = geometric_children(p, rng.uniform_open())
            if total + c > caps.total_size:
                status.append("total-size-cap")
                break
            total += c
            for _ in range(c):
                kid: list = []
                node.append(kid)
                nxt.append(kid)
        else:
            level = nxt
            depth += 1
            continue
        break
    return TruncatedTree(_freeze(root), depth_horizon=caps.depth, status=tuple(status))


# ---------------------------------------------------------------------------
# the naive conditioned sampler (documented negative example)


@lru_cache(maxsize=32)
def _naive_tables(p: float):
    """Outcome tables for the sequential conditioned sampler.

    Before the first infinite subtree: P(infinite) = p, P(size k) = p eta_k,
    and no stop outcome (the masses already total one, which forces this
    reading of the procedure).  After it: P(stop) = 1-p, P(size k) = p eta_k,
    P(infinite) = p eta_inf.
    """
    base = nm.ladder_thresholds(p, "post", 0, size_cap=1024)  # for its masses only
    masses = [b - a for a, b in zip(base.boundaries, base.boundaries[1:])]  # p*eta_k
    cum: list[float] = []
    acc = 0.0
    for m in masses:
        acc += m
        cum.append(min(acc, 1.0 - p))
    before = nm.ThresholdTable(p, "pre", None, 1, cum, 1.0 - p, False, 1)
    after_b: list[float] = [1.0 - p]
    acc = 1.0 - p
    for m in masses:
        acc += m
        after_b.append(min(acc, 2.0 * (1.0 - p)))
    after = nm.ThresholdTable(p, "post", None, 0, after_b, 2.0 * (1.0 - p), False, 1)
    return before, after


def sample_naive_conditioned(
    p: float,
    rng: RngHandle,
    caps: SampleCaps = DEFAULT_CAPS,
    depth: int | None = None,
) -> TruncatedTree:
    """Sequential conditioned-to-survive sampler (correct marginal only)."""
    p = float(p)
    if not 0.5 < p < 1.0:
        raise DomainError("the conditioned sampler needs p in (1/2, 1)")
    if depth is None:
        depth = caps.depth
    before, after = _naive_tables(p)
    status: set[str] = set()
    budget = [caps.total_size]

    def node(depth_left: int, stream: RngHandle):
        if depth_left <= 0:
            return FRONTIER
        kids = []
        seen_infinite = False
        slot = 0
        while True:
            slot += 1
            if slot > caps.slots:
                status.add("slot-cap")
                break
            outcome = (after if seen_infinite else before).lookup(stream.uniform())
            if outcome == 0:
                break
            if outcome is nm.INF:
                seen_infinite = True
                kids.append(node(depth_left - 1, stream.split(slot)))
                continue
            if depth_left == 1:
                kids.append(())  # any finite subtree clips to its root here
                continue
            if outcome is nm.OVERFLOW or outcome > caps.total_size:
                status.add("size-overflow")
                kids.append(())
                continue
            sub = uniform_nested(outcome, stream.split(slot), clip=depth_left - 1)
            budget[0] -= nested_size(sub)
            if budget[0] < 0:
                status.add("total-size-cap")
                kids.append(())
                break
            kids.append(sub)
        return tuple(kids)

    root = node(depth, rng)
    if root is FRONTIER:
        root_tree = FRONTIER
    else:
        root_tree = root
    return TruncatedTree(root_tree, depth_horizon=depth, status=tuple(sorted(status)))
