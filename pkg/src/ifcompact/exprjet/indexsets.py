"""Multi-index sets over pairs (m, n) of derivative orders.

All sets use graded-lexicographic order: by total degree first, and inside
a degree by decreasing m, so Lambda_2 reads (0,0),(1,0),(0,1),(2,0),(1,1),(0,2).
Full sets are therefore prefixes of each other, which lets coefficient arrays
of lower degree be obtained by slicing.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np

FULL = "full"
LOW = "low"      # m <= 1
HIGH = "high"    # m >= 2


def ncoef(K: int) -> int:
    """Number of pairs with m + n <= K."""
    return (K + 1) * (K + 2) // 2


def flat_index(m: int, n: int) -> int:
    """Position of (m, n) inside any full set that contains it."""
    d = m + n
    return d * (d + 1) // 2 + n


@lru_cache(maxsize=None)
def _pairs(kind: str, K: int) -> tuple[tuple[int, int], ...]:
    out = []
    for d in range(K + 1):
        for n in range(d + 1):
            m = d - n
            if kind == LOW and m > 1:
                continue
            if kind == HIGH and m < 2:
                continue
            out.append((m, n))
    return tuple(out)


@dataclass(frozen=True)
class MultiIndexSet:
    kind: str
    K: int

    def __post_init__(self):
        if self.kind not in (FULL, LOW, HIGH):
            raise ValueError(f"unknown index set kind {self.kind!r}")
        if self.K < 0:
            raise ValueError("K must be non-negative")

    @property
    def pairs(self) -> tuple[tuple[int, int], ...]:
        return _pairs(self.kind, self.K)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __contains__(self, mn) -> bool:
        return tuple(mn) in self.position_map

    @property
    def position_map(self) -> dict[tuple[int, int], int]:
        return _position_map(self.kind, self.K)

    def position(self, m: int, n: int) -> int:
        return self.position_map[(m, n)]

    def flat_indices(self) -> np.ndarray:
        """Positions of the members inside the full set of the same degree."""
        return np.array([flat_index(m, n) for m, n in self.pairs], dtype=int)

    def factorials(self) -> np.ndarray:
        """m! n! for every member."""
        return np.array([factorial(m) * factorial(n) for m, n in self.pairs], dtype=float)


@lru_cache(maxsize=None)
def _position_map(kind: str, K: int) -> dict[tuple[int, int], int]:
    return {mn: i for i, mn in enumerate(_pairs(kind, K))}


def full(K: int) -> MultiIndexSet:
    return MultiIndexSet(FULL, K)


def low(K: int) -> MultiIndexSet:
    """Pairs with m <= 1: the derivatives left free by the PDE reduction."""
    return MultiIndexSet(LOW, K)


def high(K: int) -> MultiIndexSet:
    """Pairs with m >= 2: the derivatives the PDE reduction eliminates."""
    return MultiIndexSet(HIGH, K)
