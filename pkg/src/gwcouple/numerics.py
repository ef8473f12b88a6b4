"""Exact and floating-point numerics for geometric-offspring tree laws.

Probabilities are polymorphic in the parameter type: pass a
``fractions.Fraction`` and every result is an exact rational (identity
checks are bit-exact); pass a float and results are floats computed in log
space where magnitudes require it (sampling hot paths, declared tolerance
1e-12).

The central quantities, for offspring law P(k children) = p^k (1-p):

* ``catalan(k)``          -- number of ordered rooted trees with k vertices
* ``eta(k, p)``           -- P(total size = k) = c_k p^(k-1) (1-p)^k
* ``eta_inf(p)``          -- survival probability, (2p-1)/p above 1/2
* ``zero_mass(p, n)``     -- 2^n p(1-p) / ((2^n - 2) p + 1)
* threshold tables partitioning [0,1) into subtree-size outcomes for the
  ladder process, in a pre-stage and a post-stage indexed by the number of
  infinite outcomes seen so far.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

import numpy as np

from .errors import DomainError

Prob = Union[Fraction, float]

INF = math.inf

HALF = Fraction(1, 2)

#: largest finite outcome held in a freshly built float table
DEFAULT_TABLE_SIZE = 4096
#: lazy extension chunk and hard ceiling for resolving deep finite tails
EXTEND_CHUNK = 1 << 16
EXTEND_CAP = 1 << 20


class _Overflow:
    """Finite ladder outcome beyond the resolvable table ceiling."""

    __slots__ = ()

    def __repr__(self) -> str:
        return "OVERFLOW"


OVERFLOW = _Overflow()


def is_exact(p) -> bool:
    return isinstance(p, (Fraction, int))


def as_fraction(p) -> Fraction:
    return p if isinstance(p, Fraction) else Fraction(p)


def catalan(k: int) -> int:
    """Number of ordered rooted trees with k vertices (1, 1, 2, 5, 14, ...)."""
    if k < 1:
        raise DomainError("catalan index must be >= 1")
    return math.comb(2 * k - 2, k - 1) // k


def log_catalan(k: int) -> float:
    return math.lgamma(2 * k - 1) - 2.0 * math.lgamma(k) - math.log(k)


_DIRECT_K = 32  # catalan numbers stay exactly representable as floats here


def eta(k: int, p: Prob) -> Prob:
    """P(tree has exactly k vertices) = c_k p^(k-1) (1-p)^k."""
    if k < 1:
        raise DomainError("size must be >= 1")
    if is_exact(p):
        p = as_fraction(p)
        return catalan(k) * p ** (k - 1) * (1 - p) ** k
    if not 0.0 <= p <= 1.0:
        raise DomainError("p must lie in [0, 1]")
    if k <= _DIRECT_K:
        return float(catalan(k)) * p ** (k - 1) * (1.0 - p) ** k
    out = math.exp(log_eta(k, p))
    if math.isnan(out):
        raise DomainError(f"eta({k}, {p}) is not a number")
    return out


def log_eta(k: int, p: float) -> float:
    if not 0.0 < p < 1.0:
        if p in (0.0, 1.0):
            return 0.0 if (k == 1 and p == 0.0) else -INF
        raise DomainError("p must lie in [0, 1]")
    return log_catalan(k) + (k - 1) * math.log(p) + k * math.log1p(-p)


def eta_inf(p: Prob) -> Prob:
    """Survival probability: 0 at and below 1/2, else (2p-1)/p."""
    if is_exact(p):
        p = as_fraction(p)
        if not 0 < p <= 1:
            raise DomainError("p must lie in (0, 1]")
        return Fraction(0) if p <= HALF else (2 * p - 1) / p
    if not 0.0 < p <= 1.0:
        raise DomainError("p must lie in (0, 1]")
    return 0.0 if p <= 0.5 else (2.0 * p - 1.0) / p


def eta_partial_sum(K: int, p: Prob) -> Prob:
    """Sum of eta(k, p) for k = 1..K (monotone toward 1 - eta_inf)."""
    if is_exact(p):
        return sum(eta(k, p) for k in range(1, K + 1))
    return float(sum(math.exp(log_eta(k, p)) for k in range(1, K + 1)))


def zero_mass(p: Prob, n: int) -> Prob:
    """Mass of the 0 outcome in the post-stage with n prior infinite slots."""
    if n < 0:
        raise DomainError("n must be >= 0")
    if is_exact(p):
        p = as_fraction(p)
        return (2**n * p * (1 - p)) / ((2**n - 2) * p + 1)
    # divide through by 2^n so huge n stays finite
    return (p * (1.0 - p)) / ((1.0 - 2.0 ** (1 - n)) * p + 2.0**-n)


def post_inf_mass(p: Prob, n: int) -> Prob:
    """Mass of the infinite outcome in the post-stage with n prior infinites."""
    if is_exact(p):
        p = as_fraction(p)
        return p * eta_inf(p) * ((2**n - 1) * p) / ((2**n - 2) * p + 1)
    return p * eta_inf(p) * ((1.0 - 2.0**-n) * p) / ((1.0 - 2.0 ** (1 - n)) * p + 2.0**-n)


def size_tail_at_half(k: int) -> float:
    """P(size > k) at p = 1/2, i.e. binomial(2k, k) / 4^k, k >= 0."""
    if k == 0:
        return 1.0
    if k > 1_000_000:
        # lgamma differences cancel catastrophically up here; Stirling series
        kf = float(k)
        return (1.0 - 0.125 / kf + 0.0078125 / (kf * kf)) / math.sqrt(math.pi * kf)
    return math.exp(math.lgamma(2 * k + 1) - 2.0 * math.lgamma(k + 1) - k * math.log(4.0))


def _resolve_tail_at_half(target: float, lo: int) -> int:
    """Smallest k > lo with size_tail_at_half(k) < target (p = 1/2 tails)."""
    hi = max(2 * lo, 2)
    while size_tail_at_half(hi) >= target:
        hi *= 2
        if hi > 1 << 62:
            return hi
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        if size_tail_at_half(mid) < target:
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# threshold tables


@dataclass
class ThresholdTable:
    """Partition of [0, 1) into ladder outcomes for one (p, stage, n).

    ``boundaries[i]`` is the right endpoint of the interval mapping to
    outcome ``outcome_offset + i``; a uniform draw u maps to the first
    interval whose right endpoint exceeds u (ties fall to the right
    interval, matching half-open intervals closed on the left).  Draws at
    or above ``finite_boundary`` map to the infinite outcome; the infinite
    mass is an exact remainder, never a truncation residue.
    """

    p: Prob
    stage: str  # "pre" | "post"
    n_inf: int | None
    outcome_offset: int  # 1 for pre (no zero outcome), 0 for post
    boundaries: list
    finite_boundary: Prob
    exact: bool
    weight: int = 1  # finite outcome k has mass weight * p * eta_k(p)
    _ext: np.ndarray | None = field(default=None, repr=False)

    @property
    def zero_mass(self) -> Prob:
        return self.boundaries[0] if self.outcome_offset == 0 else type(self.finite_boundary)(0)

    @property
    def infinite_mass(self) -> Prob:
        return 1 - self.finite_boundary

    def outcome_masses(self, k_max: int) -> dict:
        """Masses of outcomes 0/1/../k_max plus 'inf' (audit helper)."""
        out: dict = {}
        prev = 0
        for i, b in enumerate(self.boundaries[: k_max + 1 - self.outcome_offset]):
            out[self.outcome_offset + i] = b - prev
            prev = b
        out["inf"] = self.infinite_mass
        return out

    def lookup(self, u):
        """Outcome for a uniform draw: 0 (post only), k >= 1, INF, or OVERFLOW."""
        if u >= self.finite_boundary:
            return INF
        b = self.boundaries
        if u < b[-1]:
            return self.outcome_offset + bisect.bisect_right(b, u)
        return self._lookup_tail(u)

    def _lookup_tail(self, u):
        base = len(self.boundaries) - 1 + self.outcome_offset  # largest k in base table
        if self.exact:
            k = base
            acc = self.boundaries[-1]
            p = self.p
            while acc <= u:
                k += 1
                if k - self.outcome_offset > EXTEND_CAP:
                    return OVERFLOW
                acc += self.weight * p * eta(k, p)
            return k
        if self.p == 0.5:
            # closed form: the mass through size k is weight*p*(1 - a_k) with
            # a_k = binom(2k,k)/4^k, so invert the tail directly
            target = (self.finite_boundary - u) / (self.weight * 0.5)
            k = _resolve_tail_at_half(target, base)
            return k if k <= 1 << 62 else OVERFLOW
        ext = self._ext
        while True:
            if ext is not None and len(ext) and u < ext[-1]:
                return base + 1 + int(np.searchsorted(ext, u, side="right"))
            have = 0 if ext is None else len(ext)
            if base + have >= EXTEND_CAP:
                return OVERFLOW
            lo = base + have + 1
            hi = min(base + have + EXTEND_CHUNK, EXTEND_CAP)
            ks = np.arange(lo, hi + 1, dtype=np.float64)
            logs = (
                _log_catalan_vec(ks)
                + (ks - 1.0) * math.log(self.p)
                + ks * math.log1p(-self.p)
                + math.log(self.p * self.weight)
            )
            start = self.boundaries[-1] if ext is None or not len(ext) else ext[-1]
            chunk = start + np.cumsum(np.exp(logs))
            np.minimum(chunk, self.finite_boundary, out=chunk)
            ext = chunk if ext is None else np.concatenate([ext, chunk])
            self._ext = ext


def _log_catalan_vec(ks: np.ndarray) -> np.ndarray:
    from scipy.special import gammaln

    return gammaln(2.0 * ks - 1.0) - 2.0 * gammaln(ks) - np.log(ks)


def ladder_thresholds(
    p: Prob, stage: str, n_inf: int | None = None, size_cap: int = DEFAULT_TABLE_SIZE
) -> ThresholdTable:
    """Build the outcome table for one stage of the ladder process.

    Pre stage: intervals of mass 2 p eta_k(p) for k = 1.., remainder to the
    infinite outcome.  Post stage with n prior infinite outcomes: a first
    interval of mass zero_mass(p, n) for the 0 outcome, then p eta_k(p)
    intervals, remainder infinite.
    """
    if stage not in ("pre", "post"):
        raise DomainError(f"unknown stage {stage!r}")
    if stage == "post":
        if n_inf is None or n_inf < 0:
            raise DomainError("post stage needs n_inf >= 0")
    else:
        n_inf = None
    exact = is_exact(p)
    pq = as_fraction(p) if exact else float(p)
    lo, hi = (HALF, 1) if exact else (0.5, 1.0)
    if not lo <= pq <= hi:
        raise DomainError("ladder thresholds are defined for p in [1/2, 1]")

    if exact:
        one_minus = 1 - pq
        if stage == "pre":
            boundaries: list = []
            acc = Fraction(0)
            weight = 2
            offset = 1
            finite_boundary = 2 * one_minus
        else:
            acc = zero_mass(pq, n_inf)
            boundaries = [acc]
            weight = 1
            offset = 0
            finite_boundary = acc + one_minus
        for k in range(1, size_cap + 1):
            acc += weight * pq * eta(k, pq)
            boundaries.append(acc)
        return ThresholdTable(pq, stage, n_inf, offset, boundaries, finite_boundary, True, weight)

    if pq == 1.0:
        masses = np.zeros(size_cap)
    else:
        ks = np.arange(1, size_cap + 1, dtype=np.float64)
        logs = _log_catalan_vec(ks) + (ks - 1.0) * math.log(pq) + ks * math.log1p(-pq) + math.log(pq)
        masses = np.exp(logs)
        head = min(_DIRECT_K, size_cap)
        masses[:head] = [pq * eta(k, pq) for k in range(1, head + 1)]
        if stage == "pre":
            masses *= 2.0
    if stage == "pre":
        offset = 1
        start = 0.0
        finite_boundary = 2.0 * (1.0 - pq)
    else:
        offset = 0
        start = zero_mass(pq, n_inf)
        finite_boundary = start + (1.0 - pq)
    cum = start + np.cumsum(masses)
    np.minimum(cum, finite_boundary, out=cum)
    boundaries = ([start] if stage == "post" else []) + cum.tolist()
    return ThresholdTable(pq, stage, n_inf, offset, boundaries, finite_boundary, False, 2 if stage == "pre" else 1)


class ThresholdFamily:
    """All tables for one parameter, built lazily and cached.

    Post-stage tables converge geometrically in n; beyond ``n_clamp`` the
    float tables are identical to their limit, so n is clamped there.
    """

    N_CLAMP = 48

    def __init__(self, p: Prob, size_cap: int = DEFAULT_TABLE_SIZE):
        self.p = p
        self.size_cap = size_cap
        self.pre = ladder_thresholds(p, "pre", size_cap=size_cap)
        self._post: dict[int, ThresholdTable] = {}

    def post(self, n_inf: int) -> ThresholdTable:
        if not is_exact(self.p):
            n_inf = min(n_inf, self.N_CLAMP)
        table = self._post.get(n_inf)
        if table is None:
            table = ladder_thresholds(self.p, "post", n_inf, size_cap=self.size_cap)
            self._post[n_inf] = table
        return table


_family_cache: dict[tuple, ThresholdFamily] = {}


def threshold_family(p: Prob, size_cap: int = DEFAULT_TABLE_SIZE) -> ThresholdFamily:
    key = (p, is_exact(p), size_cap)
    fam = _family_cache.get(key)
    if fam is None:
        fam = ThresholdFamily(p, size_cap)
        _family_cache[key] = fam
    return fam


# ---------------------------------------------------------------------------
# identity checks (exact)


def check_partition_identity(p: Prob, n: int = 0, tail_cap: int = 0) -> Fraction:
    """Residual of the outcome-mass partition from 1; must be exactly 0.

    n = 0 checks the pre-stage partition; n >= 1 checks the post-stage
    partition with n prior infinite outcomes.  The sum over all finite
    sizes enters in closed form via the survival probability.  A positive
    ``tail_cap`` additionally asserts that the explicit partial sums stay
    strictly below their closed-form limit (monotone convergence).
    """
    p = as_fraction(p)
    if not HALF <= p < 1:
        raise DomainError("partition identity needs p in [1/2, 1)")
    finite_total = 1 - eta_inf(p)  # sum of eta_k over finite k, in closed form
    if n == 0:
        total = p * eta_inf(p) + 2 * p * finite_total
    else:
        total = zero_mass(p, n) + post_inf_mass(p, n) + p * finite_total
    if tail_cap:
        partial = eta_partial_sum(tail_cap, p)
        if partial >= finite_total:
            raise DomainError("partial size-law sum reached its limit; impossible")
    return total - 1


def check_induction_identity(p: Prob, I: int) -> Fraction:
    """Residual from 1 of the telescoping identity behind the post-stage
    masses; exactly 0 for every I >= 1 (the empty product at l = I is 1)."""
    p = as_fraction(p)
    if not HALF <= p <= 1:
        raise DomainError("induction identity needs p in [1/2, 1]")
    if I < 1:
        raise DomainError("I must be >= 1")
    total = Fraction(0)
    for l in range(1, I + 1):
        prod = Fraction(1)
        for m in range(l, I):
            prod *= ((2**m - 1) * p) / ((2**m - 2) * p + 1)
        total += Fraction(1, 2**l) * prod
    total *= Fraction(2**I) / ((2**I - 2) * p + 1)
    return total - 1


def check_survival_fixed_point(p: Prob) -> Fraction:
    """Residual of (1 - eta_inf) == (1-p) / (1 - p(1 - eta_inf)); exactly 0."""
    p = as_fraction(p)
    if not 0 < p < 1:
        raise DomainError("fixed point check needs p in (0, 1)")
    s = 1 - eta_inf(p)
    return s - (1 - p) / (1 - p * s)


def check_duality_identity(k: int, p: Prob) -> Fraction:
    """Residual of eta_k(p)/(1 - eta_inf(p)) == eta_k(1-p); exactly 0."""
    p = as_fraction(p)
    if not HALF < p < 1:
        raise DomainError("duality identity needs p in (1/2, 1)")
    return eta(k, p) / (1 - eta_inf(p)) - eta(k, 1 - p)


# ---------------------------------------------------------------------------
# monotonicity report


@dataclass(frozen=True)
class MonotonicityViolation:
    quantity: str
    where: tuple
    left: Prob
    right: Prob


def monotonicity_report(p_grid, k_max: int, n_max: int) -> list[MonotonicityViolation]:
    """Check every monotonicity the shared-uniform coupling relies on.

    * p * eta_k(p) non-increasing in p on [1/2, 1] for each k <= k_max
    * zero_mass(p, n) non-increasing in p for each n <= n_max
    * zero_mass(p, n) non-increasing in n >= 1 for each grid p

    Returns the (empty, on success) list of violations.
    """
    grid = sorted(p_grid)
    if not grid or grid[0] < HALF or grid[-1] > 1:
        raise DomainError("grid must lie within [1/2, 1]")
    bad: list[MonotonicityViolation] = []
    for k in range(1, k_max + 1):
        vals = [p * eta(k, p) for p in grid]
        for a, b, pa, pb in zip(vals, vals[1:], grid, grid[1:]):
            if b > a:
                bad.append(MonotonicityViolation("p*eta_k", (k, pa, pb), a, b))
    for n in range(1, n_max + 1):
        vals = [zero_mass(p, n) for p in grid]
        for a, b, pa, pb in zip(vals, vals[1:], grid, grid[1:]):
            if b > a:
                bad.append(MonotonicityViolation("zero_mass in p", (n, pa, pb), a, b))
    for p in grid:
        if p == 1:
            continue
        vals = [zero_mass(p, n) for n in range(1, n_max + 1)]
        for n, (a, b) in enumerate(zip(vals, vals[1:]), start=1):
            if b > a:
                bad.append(MonotonicityViolation("zero_mass in n", (p, n, n + 1), a, b))
    return bad
