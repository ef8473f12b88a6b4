"""The ladder process: shared randomness (X, U_1, U_2, ...) to subtree sizes.

One run produces L_1, L_2, ... where L_m is the size (0, finite k, or
infinite) of the subtree hanging at the root's m-th child slot.  Slots
before X use the pre-stage thresholds, slot X is forced infinite and
consumes no uniform, and slots after X use post-stage thresholds indexed
by the number of infinite outcomes seen so far.  The run ends at the first
0 (slot m_0); a conditioned-to-survive tree uses slots 1..m_0-1.

``run_ladder_grid`` evaluates several parameters on one shared (X, U)
stream, one uniform per slot for all parameters.  Because every threshold
mass is monotone in p (and in the infinite-count for the post stage), the
outcomes satisfy L_m(p_1) <= L_m(p_2) <= ... pointwise with the ordering
0 < 1 < 2 < ... < infinity.  That ordering is asserted on every slot
rather than assumed; a violation raises ``CouplingOrderError``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from . import numerics as nm
from .errors import DomainError, GwError
from .numerics import INF, OVERFLOW, ThresholdFamily, threshold_family
from .rng import RngHandle

DEFAULT_SLOT_CAP = 4096


class CouplingOrderError(GwError):
    """Shared-uniform outcomes came out non-monotone across parameters."""


def _rank(outcome):
    if outcome is OVERFLOW:
        return (2, 0)
    if outcome == INF:
        return (3, 0)
    return (1, outcome)


def outcome_le(a, b) -> bool:
    """Ordering 0 < 1 < 2 < ... < (beyond-table) < infinity."""
    return _rank(a) <= _rank(b)


def draw_X(rng: RngHandle) -> int:
    """P(X = l) = 2^-l for l >= 1, by inverting the dyadic CDF."""
    return 1 + int(-math.log2(rng.uniform_open()))


class _UniformTap:
    """Adapter: RngHandle or an iterable of floats -> a uniform source that
    records what it hands out."""

    def __init__(self, source):
        if isinstance(source, RngHandle):
            self._next = source.uniform
        else:
            it = iter(source)
            self._next = lambda: next(it)
        self.consumed: list[float] = []

    def take(self) -> float:
        u = self._next()
        self.consumed.append(u)
        return u


@dataclass
class ParamTrace:
    """Outcomes for one parameter: L_1 .. L_{m_0} (the final 0 included)."""

    p: float | Fraction
    outcomes: list
    n_inf_history: list[int]
    m0: int | None  # None if the run was cut before a 0 appeared

    @property
    def children(self) -> int:
        return (self.m0 - 1) if self.m0 is not None else len(self.outcomes)

    def n_inf(self, m: int) -> int:
        """Number of infinite outcomes among slots 1..m-1."""
        return sum(1 for o in self.outcomes[: m - 1] if o == INF)


@dataclass
class LadderTrace:
    X: int
    u_values: list[float]
    params: list[ParamTrace]
    status: tuple[str, ...] = ()

    @property
    def clean(self) -> bool:
        return not self.status

    def single(self) -> ParamTrace:
        if len(self.params) != 1:
            raise DomainError("trace holds more than one parameter")
        return self.params[0]

    def to_json(self) -> str:
        def enc(o):
            if o == INF:
                return "inf"
            if o is OVERFLOW:
                return "overflow"
            return o

        payload = {
            "X": self.X,
            "U": self.u_values,
            "params": [
                {"p": float(t.p), "L": [enc(o) for o in t.outcomes], "m0": t.m0}
                for t in self.params
            ],
        }
        if self.status:
            payload["status"] = list(self.status)
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "LadderTrace":
        raw = json.loads(text)

        def dec(o):
            if o == "inf":
                return INF
            if o == "overflow":
                return OVERFLOW
            return o

        params = []
        for t in raw["params"]:
            outcomes = [dec(o) for o in t["L"]]
            n_hist, n = [], 0
            for o in outcomes:
                n_hist.append(n)
                if o == INF:
                    n += 1
            params.append(ParamTrace(t["p"], outcomes, n_hist, t["m0"]))
        return cls(raw["X"], list(raw["U"]), params, tuple(raw.get("status", ())))


def run_ladder(
    p,
    X: int,
    u_stream,
    size_cap: int = nm.DEFAULT_TABLE_SIZE,
    slot_cap: int = DEFAULT_SLOT_CAP,
    family: ThresholdFamily | None = None,
) -> LadderTrace:
    """Single-parameter ladder run; one uniform per slot except slot X."""
    if family is None:
        family = threshold_family(p, size_cap)
    tap = _UniformTap(u_stream)
    outcomes: list = []
    n_hist: list[int] = []
    n = 0
    status: set[str] = set()
    m0 = None
    m = 0
    pre = family.pre
    while m0 is None:
        m += 1
        if m > slot_cap:
            status.add("slot-cap")
            break
        n_hist.append(n)
        if m == X:
            outcomes.append(INF)
            n += 1
            continue
        table = pre if m < X else family.post(n)
        out = table.lookup(tap.take())
        outcomes.append(out)
        if out == INF:
            n += 1
        elif out is OVERFLOW:
            status.add("size-overflow")
        elif out == 0:
            m0 = m
    trace = LadderTrace(X, tap.consumed, [ParamTrace(family.p, outcomes, n_hist, m0)], tuple(sorted(status)))
    return trace


def run_ladder_grid(
    ps,
    X: int,
    u_stream,
    size_cap: int = nm.DEFAULT_TABLE_SIZE,
    slot_cap: int = DEFAULT_SLOT_CAP,
    families: list[ThresholdFamily] | None = None,
) -> LadderTrace:
    """Shared-randomness ladder runs for a sorted parameter grid.

    All parameters read the same X and the same uniform per slot.  A
    parameter stops contributing at its own first 0; later slots leave its
    outcome list untouched, so each per-parameter trace is bit-identical
    to a single run on the same stream.
    """
    ps = list(ps)
    if not ps:
        raise DomainError("empty parameter grid")
    if any(b <= a for a, b in zip(ps, ps[1:])):
        raise DomainError("grid must be strictly increasing")
    if float(ps[0]) < 0.5 or float(ps[-1]) > 1.0:
        raise DomainError("grid must lie within [1/2, 1]")
    if families is None:
        families = [threshold_family(p, size_cap) for p in ps]
    r = len(ps)
    tap = _UniformTap(u_stream)
    outcomes: list[list] = [[] for _ in range(r)]
    n_hist: list[list[int]] = [[] for _ in range(r)]
    ns = [0] * r
    m0s: list[int | None] = [None] * r
    status: set[str] = set()
    m = 0
    while any(d is None for d in m0s):
        m += 1
        if m > slot_cap:
            status.add("slot-cap")
            break
        if m == X:
            for i in range(r):
                if m0s[i] is None:
                    n_hist[i].append(ns[i])
                    outcomes[i].append(INF)
                    ns[i] += 1
            continue
        u = tap.take()
        prev = None
        for i in range(r):
            if m0s[i] is not None:
                continue
            fam = families[i]
            table = fam.pre if m < X else fam.post(ns[i])
            out = table.lookup(u)
            n_hist[i].append(ns[i])
            outcomes[i].append(out)
            if out == INF:
                ns[i] += 1
            elif out is OVERFLOW:
                status.add("size-overflow")
            elif out == 0:
                m0s[i] = m
            if prev is not None and not outcome_le(prev, out):
                raise CouplingOrderError(
                    f"slot {m}: outcome {prev} for p={ps[i - 1]} exceeds {out} for p={ps[i]}"
                )
            prev = out
    params = [ParamTrace(families[i].p, outcomes[i], n_hist[i], m0s[i]) for i in range(r)]
    return LadderTrace(X, tap.consumed, params, tuple(sorted(status)))


# ---------------------------------------------------------------------------
# exact law of the child count (m_0 - 1)


def exact_children_law(p, c_max: int) -> dict[int, Fraction]:
    """P(m_0 - 1 = c) for c = 1..c_max, by exact dynamic programming over
    (slots remaining after X, infinite count)."""
    p = nm.as_fraction(p)
    if not Fraction(1, 2) <= p < 1:
        raise DomainError("children law needs p in [1/2, 1)")
    inf_pre = p * nm.eta_inf(p) if p > Fraction(1, 2) else Fraction(0)
    fin_pre = 2 * (1 - p)  # total finite mass in the pre stage
    fin_post = 1 - p  # total finite mass in the post stage

    @lru_cache(maxsize=None)
    def survive_then_stop(slots: int, n: int) -> Fraction:
        # probability that `slots` post-stage slots avoid 0, then one stops
        if slots == 0:
            return nm.zero_mass(p, n)
        return fin_post * survive_then_stop(slots - 1, n) + nm.post_inf_mass(
            p, n
        ) * survive_then_stop(slots - 1, n + 1)

    law: dict[int, Fraction] = {}
    for c in range(1, c_max + 1):
        total = Fraction(0)
        for x in range(1, c + 1):
            pre_slots = x - 1
            px = Fraction(1, 2**x)
            for i in range(pre_slots + 1):
                ways = math.comb(pre_slots, i)
                w = ways * inf_pre**i * fin_pre ** (pre_slots - i)
                if w == 0:
                    continue
                total += px * w * survive_then_stop(c - x, i + 1)
        law[c] = total
    survive_then_stop.cache_clear()
    return law
