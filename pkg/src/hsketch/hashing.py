"""Seeded polynomial hash families over the Mersenne prime 2**61 - 1.

Three families share one construction, a random polynomial of fixed degree
evaluated modulo p:

* ``bucket``: degree 1 (pairwise independent), reduced mod w.
* ``sign``: degree 3 (4-wise independent), parity bit mapped to +-1.
* ``downsample``: degree 1, the number of leading zero bits of the 61-bit
  value is the survival level, so level-j survivors are nested.

All evaluation is vectorized over numpy index arrays.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np

MERSENNE61 = (1 << 61) - 1
_P = np.uint64(MERSENNE61)
_MASK31 = np.uint64((1 << 31) - 1)
_MASK30 = np.uint64((1 << 30) - 1)


class Family(enum.IntEnum):
    BUCKET = 0
    SIGN = 1
    DOWNSAMPLE = 2


_DEGREE = {Family.BUCKET: 1, Family.SIGN: 3, Family.DOWNSAMPLE: 1}


def _fold(x):
    # two folds of 2**61 == 1 (mod p): congruent to x and at most 2**61
    x = (x & _P) + (x >> np.uint64(61))
    return (x & _P) + (x >> np.uint64(61))


def _reduce(x):
    x = _fold(x)
    return np.where(x >= _P, x - _P, x)


def _mul_folded(a, b):
    # inputs at most 2**61, so every partial product stays below 2**63
    ah, al = a >> np.uint64(31), a & _MASK31
    bh, bl = b >> np.uint64(31), b & _MASK31
    # 2**62 == 2 (mod p)
    high = (ah * bh) << np.uint64(1)
    mid = ah * bl + al * bh
    # mid * 2**31 == (mid >> 30) + (mid & mask30) * 2**31 (mod p)
    mid = (mid >> np.uint64(30)) + ((mid & _MASK30) << np.uint64(31))
    return _fold(high + mid + al * bl)


def mulmod(a, b):
    """(a * b) mod 2**61-1 for uint64 arrays with entries below p."""
    return _reduce(_mul_folded(np.asarray(a, dtype=np.uint64), np.asarray(b, dtype=np.uint64)))


def addmod(a, b):
    return _reduce(np.asarray(a, dtype=np.uint64) + np.asarray(b, dtype=np.uint64))


@dataclass(frozen=True)
class HashSeed:
    """One member of a polynomial hash family: coefficients c0..c_deg mod p."""

    family: Family
    coefficients: tuple[int, ...]
    prime: int = MERSENNE61

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.prime != MERSENNE61:
            raise ValueError("only the prime 2**61-1 is supported")
        if len(self.coefficients) != _DEGREE[self.family] + 1:
            raise ValueError(
                f"{self.family.name} family needs degree {_DEGREE[self.family]}"
            )
        if any(not 0 <= c < self.prime for c in self.coefficients):
            raise ValueError("coefficients must lie in [0, p)")

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @classmethod
    def draw(cls, family, rng: np.random.Generator) -> "HashSeed":
        family = Family(family)
        coeffs = rng.integers(0, MERSENNE61, size=_DEGREE[family] + 1, dtype=np.int64)
        return cls(family, tuple(int(c) for c in coeffs))

    def evaluate(self, keys) -> np.ndarray:
        """Polynomial value in [0, p) for each key (Horner's rule)."""
        x = np.asarray(keys, dtype=np.int64)
        if np.any(x < 0):
            raise ValueError("hash keys must be nonnegative")
        x = _fold(x.astype(np.uint64))
        acc = np.full(x.shape, self.coefficients[-1], dtype=np.uint64)
        for c in reversed(self.coefficients[:-1]):
            acc = _fold(_mul_folded(acc, x) + np.uint64(c))
        return _reduce(acc)

    def to_bytes(self) -> bytes:
        return struct.pack(
            f"<BQB{len(self.coefficients)}Q",
            int(self.family),
            self.prime,
            self.degree,
            *self.coefficients,
        )

    @classmethod
    def from_bytes(cls, data: bytes, offset: int = 0) -> tuple["HashSeed", int]:
        """Parse one seed; returns (seed, offset just past it)."""
        family, prime, degree = struct.unpack_from("<BQB", data, offset)
        offset += 10
        coeffs = struct.unpack_from(f"<{degree + 1}Q", data, offset)
        offset += 8 * (degree + 1)
        return cls(Family(family), tuple(coeffs), prime), offset


def bucket_hash(seed: HashSeed, keys, w: int) -> np.ndarray:
    """((a*i + b) mod p) mod w, as int64 in [0, w)."""
    if w < 1:
        raise ValueError("bucket count must be at least 1")
    return (seed.evaluate(keys) % np.uint64(w)).astype(np.int64)


def sign_hash(seed: HashSeed, keys) -> np.ndarray:
    """+1 / -1 from the parity bit of a degree-3 polynomial hash."""
    bit = (seed.evaluate(keys) & np.uint64(1)).astype(np.int8)
    return (1 - 2 * bit).astype(np.int8)


def survival_level(seed: HashSeed, keys, max_level: int) -> np.ndarray:
    """Leading zero bits of the 61-bit hash value, capped at max_level.

    Index i survives downsampling at rate 2**-j exactly when its level is at
    least j, so the survivor sets are nested.
    """
    h = seed.evaluate(keys)
    level = np.zeros(h.shape, dtype=np.int64)
    for j in range(1, max_level + 1):
        level += h < np.uint64(1 << (61 - j))
    return level
