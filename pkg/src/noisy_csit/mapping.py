"""Index-to-codeword bit mappings and the index channel they induce over a BSC.

A mapping assigns each quantizer index ``j`` (ordered by increasing power
level) a distinct ``b``-bit feedback codeword, ``b = ceil(log2 K)``. When
``K < 2**b`` some received words are not codewords; the transmitter demaps
every received word to the nearest codeword in Hamming distance, breaking
ties toward the smaller (cheaper) index.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError

# Published index vectors (position j holds the codeword of index j). The
# K = 10 vector repeats a codeword and is left out. Entries for K >= 6 do not
# pass the ordering checks below at rho = 0.1; quasi_grey_mapping() falls
# back to a search for those.
TABLE_I = {
    1: (0,),
    2: (0, 1),
    3: (0, 2, 1),
    4: (0, 3, 2, 1),
    6: (0, 3, 5, 1, 2, 4),
    8: (0, 3, 6, 5, 2, 7, 1, 4),
    12: (0, 7, 2, 8, 4, 9, 5, 11, 1, 3, 6, 10),
}

ROBUST_RHOS = (0.01, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45)
MAX_SEARCH_K = 8


def bits_for(K):
    return (int(K) - 1).bit_length()


@dataclass(frozen=True)
class BitMapping:
    codewords: tuple

    def __post_init__(self):
        cw = tuple(int(c) for c in self.codewords)
        object.__setattr__(self, "codewords", cw)
        if not cw:
            raise DomainError("mapping needs at least one codeword")
        if len(set(cw)) != len(cw):
            raise DomainError(f"codewords must be distinct, got {list(cw)}")
        b = bits_for(len(cw))
        if any(c < 0 or c >= (1 << b) for c in cw):
            raise DomainError(f"codewords must lie in [0, {1 << b}) for K={len(cw)}")

    @property
    def K(self):
        return len(self.codewords)

    @property
    def bits(self):
        return bits_for(self.K)

    @classmethod
    def identity(cls, K):
        return cls(tuple(range(K)))

    @classmethod
    def preset(cls, K):
        """The published index vector for ``K``."""
        if K not in TABLE_I:
            raise DomainError(f"no published index vector for K={K}")
        return cls(TABLE_I[K])

    def binary(self):
        return [format(c, f"0{self.bits}b") if self.bits else "" for c in self.codewords]

    def demap_table(self):
        """Index chosen by the transmitter for every possible received word."""
        b = self.bits
        table = np.empty(1 << b, dtype=np.int64)
        for w in range(1 << b):
            dists = [hamming(w, c, b) for c in self.codewords]
            table[w] = int(np.argmin(dists))  # first minimum = smallest index
        return table


def hamming(a, b_cw, bits):
    """Number of differing bits between two ``bits``-bit codewords."""
    limit = 1 << bits
    if not (0 <= a < limit and 0 <= b_cw < limit):
        raise DomainError(f"codewords must lie in [0, {limit})")
    return bin(a ^ b_cw).count("1")


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Row ``j``, column ``i`` holds p(i|j): sent index j, received index i."""

    K: int
    rho: float
    p: np.ndarray = field(repr=False)

    def tail_sums(self):
        """``T[j, m] = sum_{k >= m} p(k|j)``."""
        return np.cumsum(self.p[:, ::-1], axis=1)[:, ::-1]

    def below(self):
        """``w[j] = sum_{i < j} p(i|j)``: probability the received index is cheaper."""
        return np.array([self.p[j, :j].sum() for j in range(self.K)])


def transition_matrix(mapping, rho):
    if not 0.0 <= rho <= 0.5:
        raise DomainError(f"rho must lie in [0, 0.5], got {rho!r}")
    b = mapping.bits
    demap = mapping.demap_table()
    p = np.zeros((mapping.K, mapping.K))
    for j, cw in enumerate(mapping.codewords):
        for w in range(1 << b):
            d = hamming(w, cw, b)
            p[j, demap[w]] += rho**d * (1.0 - rho) ** (b - d)
    return TransitionMatrix(mapping.K, float(rho), p)


@dataclass
class QuasiGreyReport:
    passed: bool
    violations: list

    def __bool__(self):
        return self.passed


def is_quasi_grey(mapping, rho, tol=1e-12, dominance="window"):
    """Check the tail-sum orderings a quasi-grey mapping must satisfy.

    With ``T[j, m] = sum_{k >= m} p(k|j)``:

    * strict: ``T[j, j] > T[l, j]`` for every ``l < j`` (margin ``tol``)
    * upper:  ``T[j, j] >= T[l, j]`` for every ``l > j``
    * dominance: ``T[j, m] >= T[l, m]`` for every ``l < j`` and every ``m``
      in the checked range

    ``dominance="window"`` checks thresholds ``l < m <= j``; ``"all"`` checks
    every ``m``. The full range is unsatisfiable for K = 4 and K = 8 (the
    2-bit mapping 00, 11, 10, 01 has ``p(3|2) = rho**2 < p(3|0)``), so the
    window is the default. Violations are ``(name, indices)`` tuples.
    """
    if not 0.0 < rho <= 0.5:
        raise DomainError(f"rho must lie in (0, 0.5], got {rho!r}")
    if dominance not in ("window", "all"):
        raise DomainError(f"unknown dominance range {dominance!r}")
    T = transition_matrix(mapping, rho).tail_sums()
    K = mapping.K
    bad = []
    for j in range(K):
        for l in range(K):
            if l < j and not T[j, j] > T[l, j] + tol:
                bad.append(("strict", (j, l)))
            if l > j and T[j, j] < T[l, j] - tol:
                bad.append(("upper", (j, l)))
            if l < j:
                ms = range(l + 1, j + 1) if dominance == "window" else range(K)
                for m in ms:
                    if T[j, m] < T[l, m] - tol:
                        bad.append(("dominance", (j, l, m)))
    return QuasiGreyReport(not bad, bad)


def is_quasi_grey_robust(mapping, rhos=ROBUST_RHOS, dominance="window"):
    """Quasi-grey at every crossover probability on a grid.

    At rho = 0.5 every row of the index channel is identical, so the strict
    ordering can never hold there; the default grid stops short of it.
    """
    return all(is_quasi_grey(mapping, r, dominance=dominance) for r in rhos)


def search_quasi_grey(K, rho, dominance="window"):
    """Lexicographically smallest quasi-grey mapping with codeword 0 at index 0.

    Fixing the first codeword loses nothing: XOR-ing every codeword with a
    constant leaves all Hamming distances, hence the index channel, intact.
    """
    if K > MAX_SEARCH_K:
        raise DomainError(f"exhaustive search limited to K <= {MAX_SEARCH_K}; use the presets")
    if K < 1:
        raise DomainError("K must be positive")
    if K == 1:
        return BitMapping((0,))
    pool = range(1, 1 << bits_for(K))
    for tail in itertools.permutations(pool, K - 1):
        mapping = BitMapping((0,) + tail)
        if is_quasi_grey(mapping, rho, dominance=dominance):
            return mapping
    return None


def quasi_grey_mapping(K, rho=0.1):
    """Published mapping if it passes at ``rho``, else the search result.

    At ``rho = 0`` and ``rho = 0.5`` the index channel does not depend on
    the mapping, so the ordering is checked at a reference ``rho = 0.1``.
    """
    ref = rho if 0.0 < rho < 0.5 else 0.1
    if K in TABLE_I and is_quasi_grey(BitMapping(TABLE_I[K]), ref):
        return BitMapping(TABLE_I[K])
    found = search_quasi_grey(K, ref)
    if found is None:
        raise DomainError(f"no quasi-grey mapping found for K={K} at rho={ref}")
    return found
