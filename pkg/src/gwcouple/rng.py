"""Seedable, splittable random streams.

Every sampler in this package draws from an :class:`RngHandle`.  The handle
is a SplitMix64 sequence with one extra feature: ``split(*key)`` derives an
independent child stream from the handle's *identity* (its seed and key
path), never from its current draw position.  Two consequences matter for
the couplers built on top:

* identical seed and key path => identical draw sequence, always;
* how much one stream is consumed has no effect on any split stream, so
  adding work in one subtree (e.g. evaluating one more grid parameter)
  cannot perturb the randomness seen by a sibling subtree.

Stream splitting by hashing is the same device used by SplittableRandom /
JAX-style functional RNGs.  numpy generators are still used for bulk array
work; ``numpy_generator()`` derives one deterministically when needed.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_SPLIT_SALT = 0x8E9D5AAD97B0C530
_TO_FLOAT = 2.0 ** -53

_label_cache: dict[str, int] = {}


def _mix(z: int) -> int:
    # SplitMix64 finalizer (Stafford variant 13)
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK
    return z ^ (z >> 31)


def _label_digest(label: str) -> int:
    d = _label_cache.get(label)
    if d is None:
        d = int.from_bytes(hashlib.blake2b(label.encode(), digest_size=8).digest(), "big")
        _label_cache[label] = d
    return d


def _fold(identity: int, parts: tuple) -> int:
    acc = identity ^ _SPLIT_SALT
    for part in parts:
        if isinstance(part, str):
            part = _label_digest(part)
        elif not isinstance(part, int):
            raise TypeError(f"stream key parts must be int or str, got {type(part).__name__}")
        acc = _mix((acc + _GOLDEN + _mix(part & _MASK)) & _MASK)
    return acc


class RngHandle:
    """A deterministic stream of uniforms and integers, splittable by key."""

    __slots__ = ("identity", "_state")

    def __init__(self, seed: int, _identity: int | None = None):
        if _identity is None:
            _identity = _mix(_mix(seed & _MASK) ^ _GOLDEN)
        self.identity = _identity
        self._state = _identity

    def split(self, *key) -> "RngHandle":
        """Child stream addressed by ``key``; independent of draw position."""
        return RngHandle(0, _identity=_fold(self.identity, key))

    def next_u64(self) -> int:
        s = (self._state + _GOLDEN) & _MASK
        self._state = s
        z = (s ^ (s >> 30)) * 0xBF58476D1CE4E5B9 & _MASK
        z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * _TO_FLOAT

    def uniform_open(self) -> float:
        """Uniform float in (0, 1]; safe as a log() argument."""
        return ((self.next_u64() >> 11) + 1) * _TO_FLOAT

    def randbelow(self, n: int) -> int:
        """Exact uniform integer in [0, n)."""
        if n <= 0:
            raise ValueError("randbelow needs n >= 1")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n

    def numpy_generator(self) -> np.random.Generator:
        """A numpy Generator seeded from this handle's identity (for bulk ops)."""
        return np.random.Generator(np.random.PCG64(_fold(self.identity, ("numpy",))))

    def __repr__(self) -> str:  # pragma: no cover
        return f"RngHandle(identity={self.identity:#018x})"
