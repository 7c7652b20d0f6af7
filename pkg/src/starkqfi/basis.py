"""Bosonic Fock space of N particles on L sites.

States are occupation vectors ordered lexicographically from site 0 upward,
so for L=3, N=2 the basis reads ``002, 011, 020, 101, 110, 200``. Ranking
uses the combinatorial number system (a sum of binomials per site), which
keeps lookups O(L) without a hash table.
"""

from __future__ import annotations

from functools import lru_cache
from math import comb
from typing import Iterable, Sequence

import numpy as np

INDEX_MAX = np.iinfo(np.int64).max


class BasisError(ValueError):
    """Raised for states or indices that do not belong to a basis."""


def dimension(L: int, N: int) -> int:
    """Number of ways to put ``N`` bosons on ``L`` sites, ``C(L+N-1, N)``.

    Computed with an iterative multiply/divide so every intermediate is an
    exact integer. Raises ``OverflowError`` when the result does not fit a
    64-bit index.
    """
    if L < 1:
        raise ValueError(f"need at least one site, got L={L}")
    if N < 0:
        raise ValueError(f"particle number must be non-negative, got N={N}")
    d = 1
    for j in range(1, N + 1):
        d = d * (L - 1 + j) // j
        if d > INDEX_MAX:
            raise OverflowError(f"dimension of (L={L}, N={N}) exceeds int64")
    return d


@lru_cache(maxsize=64)
def _binomial_table(L: int, N: int) -> np.ndarray:
    # table[a, k] = C(a + k, k) for a in 0..N, k in 0..L
    table = np.zeros((N + 1, L + 1), dtype=np.int64)
    for a in range(N + 1):
        for k in range(L + 1):
            table[a, k] = comb(a + k, k)
    table.setflags(write=False)
    return table


def _enumerate(L: int, N: int) -> np.ndarray:
    if L == 1:
        return np.array([[N]], dtype=np.int64)
    blocks = []
    for v in range(N + 1):
        tail = _enumerate(L - 1, N - v)
        head = np.full((tail.shape[0], 1), v, dtype=np.int64)
        blocks.append(np.hstack([head, tail]))
    return np.vstack(blocks)


class FockBasis:
    """Lexicographically ordered Fock basis for fixed ``(L, N)``.

    Attributes
    ----------
    L, N : int
        Site count and particle count.
    dimension : int
        Number of basis states.
    states : ndarray of shape (dimension, L)
        Occupation vectors; row ``i`` is ``unrank(i)``. Built lazily.
    """

    def __init__(self, L: int, N: int, max_dimension: int | None = None):
        self.L = int(L)
        self.N = int(N)
        self.dimension = dimension(self.L, self.N)
        if max_dimension is not None and self.dimension > max_dimension:
            raise OverflowError(
                f"basis dimension {self.dimension} exceeds cap {max_dimension}"
            )
        self._table = _binomial_table(self.L, self.N)
        self._states: np.ndarray | None = None

    def __repr__(self) -> str:
        return f"FockBasis(L={self.L}, N={self.N}, dimension={self.dimension})"

    def __len__(self) -> int:
        return self.dimension

    @property
    def states(self) -> np.ndarray:
        if self._states is None:
            states = _enumerate(self.L, self.N)
            states.setflags(write=False)
            self._states = states
        return self._states

    def _check_states(self, occ: np.ndarray) -> np.ndarray:
        occ = np.asarray(occ, dtype=np.int64)
        if occ.shape[-1] != self.L:
            raise BasisError(f"expected {self.L} sites, got {occ.shape[-1]}")
        if np.any(occ < 0):
            raise BasisError("occupations must be non-negative")
        if np.any(occ.sum(axis=-1) != self.N):
            raise BasisError(f"particle count differs from N={self.N}")
        return occ

    def rank_many(self, occ: np.ndarray) -> np.ndarray:
        """Vectorised :meth:`rank` over the last axis of ``occ``."""
        occ = self._check_states(occ)
        remaining = self.N - np.cumsum(occ, axis=-1) + occ
        idx = np.zeros(occ.shape[:-1], dtype=np.int64)
        for i in range(self.L - 1):
            k = self.L - 1 - i
            r = remaining[..., i]
            idx += self._table[r, k] - self._table[r - occ[..., i], k]
        return idx

    def rank(self, state: Sequence[int]) -> int:
        """Lexicographic index of one occupation vector."""
        return int(self.rank_many(np.asarray(state)[None, :])[0])

    def unrank(self, index: int) -> np.ndarray:
        """Occupation vector at position ``index``."""
        index = int(index)
        if not 0 <= index < self.dimension:
            raise IndexError(f"index {index} outside 0..{self.dimension - 1}")
        occ = np.zeros(self.L, dtype=np.int64)
        r = self.N
        for i in range(self.L - 1):
            k = self.L - 1 - i
            v = 0
            # states with value v at site i occupy a block of C(r - v + k - 1, k - 1)
            while True:
                block = self._table[r - v, k - 1]
                if index < block:
                    break
                index -= block
                v += 1
            occ[i] = v
            r -= v
        occ[-1] = r
        return occ

    def __iter__(self):
        return iter(self.states)


def staggered_initial_state(L: int, N: int) -> np.ndarray:
    """Singly occupied sites two apart, centred in the lattice.

    The pattern ``1 0 1 ... 1`` has width ``2N - 1``. When the leftover space
    is odd the extra empty site goes to the top of the lattice.
    """
    if N < 0 or L < 1:
        raise ValueError(f"invalid lattice (L={L}, N={N})")
    occ = np.zeros(L, dtype=np.int64)
    if N == 0:
        return occ
    width = 2 * N - 1
    if L < width:
        raise BasisError(f"{N} particles spaced by 2 need L >= {width}, got {L}")
    start = (L - width) // 2
    occ[start : start + width : 2] = 1
    return occ


def fock_to_string(occ: Iterable[int]) -> str:
    """``[0, 1, 0]`` -> ``"010"``; comma-separated when any site exceeds 9."""
    occ = [int(x) for x in occ]
    if all(0 <= x <= 9 for x in occ):
        return "".join(str(x) for x in occ)
    return ",".join(str(x) for x in occ)


def fock_from_string(text: str) -> np.ndarray:
    if "," in text:
        return np.array([int(x) for x in text.split(",")], dtype=np.int64)
    return np.array([int(c) for c in text], dtype=np.int64)
