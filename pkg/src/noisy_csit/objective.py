"""Outage probability and long-term average power of a power-control quantizer.

Index ``j`` is chosen by the receiver when the channel inversion power falls
in ``(Q_{j-1}, Q_j]`` (``Q_{-1} = 0``); realizations beyond ``Q_{K-1}`` are
sent index 0. The transmitter uses ``P_i`` for the received index ``i``.

``F`` is any complementary outage function: a callable returning
``Pr[I(P) >= R]``. If it also has a ``tail`` method (``1 - F``) that is used
so that tiny outage probabilities keep their relative precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError

_ORDER_TOL = 1e-12


def _tail(F, p):
    p = np.asarray(p, dtype=float)
    if hasattr(F, "tail"):
        return np.asarray(F.tail(p), dtype=float)
    return 1.0 - np.asarray(F(p), dtype=float)


@dataclass(frozen=True)
class PowerCodebook:
    """Nondecreasing power levels with boundaries equal to the levels."""

    levels: tuple

    def __post_init__(self):
        lv = tuple(float(x) for x in self.levels)
        object.__setattr__(self, "levels", lv)
        if not lv:
            raise DomainError("codebook needs at least one level")
        if any(not np.isfinite(x) or x < 0 for x in lv):
            raise DomainError("levels must be finite and nonnegative")
        if any(b < a * (1 - _ORDER_TOL) for a, b in zip(lv, lv[1:])):
            raise DomainError(f"levels must be nondecreasing, got {lv}")

    @property
    def K(self):
        return len(self.levels)

    @property
    def spread(self):
        return self.levels[-1] - self.levels[0]

    def as_design(self):
        return QuantizerDesign(self.levels, self.levels)


@dataclass(frozen=True)
class QuantizerDesign:
    """Levels ``P_j`` interleaved with boundaries: ``Q_{j-1} <= P_j <= Q_j``."""

    levels: tuple
    boundaries: tuple

    def __post_init__(self):
        lv = tuple(float(x) for x in self.levels)
        bd = tuple(float(x) for x in self.boundaries)
        object.__setattr__(self, "levels", lv)
        object.__setattr__(self, "boundaries", bd)
        if len(lv) != len(bd) or not lv:
            raise DomainError("levels and boundaries must have the same nonzero length")
        if any(not np.isfinite(x) or x < 0 for x in lv + bd):
            raise DomainError("levels and boundaries must be finite and nonnegative")
        prev = 0.0
        for j, (p, q) in enumerate(zip(lv, bd)):
            if p < prev * (1 - _ORDER_TOL) or q < p * (1 - _ORDER_TOL):
                raise DomainError(f"interleaving violated at index {j}: Q_{{j-1}}={prev}, P_j={p}, Q_j={q}")
            prev = q

    @property
    def K(self):
        return len(self.levels)

    @classmethod
    def from_levels(cls, levels):
        return cls(tuple(levels), tuple(levels))

    def boundary_gaps(self):
        """Relative gaps ``(Q_j - P_j) / max(P_j, 1)``."""
        return [(q - p) / max(p, 1.0) for p, q in zip(self.levels, self.boundaries)]


def _matrix(tm, K):
    if tm.K != K:
        raise DomainError(f"transition matrix is {tm.K}x{tm.K} but the design has K={K}")
    return tm.p


def outage_general(design, tm, F):
    """Outage probability for arbitrary boundaries and levels.

    Overflow region, plus for each received index ``i`` the realizations in
    ``(P_i, Q_i]`` sent as ``i`` and the cells ``j > i`` received as ``i``.
    """
    p = _matrix(tm, design.K)
    P = np.array(design.levels)
    Q = np.array(design.boundaries)
    G_P = _tail(F, P)
    G_Q = _tail(F, Q)
    G_prev = np.concatenate([[1.0], G_Q[:-1]])  # 1 - F(Q_{j-1})
    cell = G_prev - G_Q  # F(Q_j) - F(Q_{j-1})
    K = design.K
    total = G_Q[-1]
    for i in range(K):
        total += p[i, i] * (G_P[i] - G_Q[i])
        total += p[i + 1 :, i] @ cell[i + 1 :]
    return float(min(max(total, 0.0), 1.0))


def index_probabilities(design, tm, F):
    """Marginal probability of each index at the transmitter."""
    p = _matrix(tm, design.K)
    G_Q = _tail(F, np.array(design.boundaries))
    cell = np.concatenate([[1.0], G_Q[:-1]]) - G_Q
    mass = cell.copy()
    mass[0] += G_Q[-1]  # overflow goes out as index 0
    return mass @ p


def avg_power_general(design, tm, F):
    """Expected transmit power over channel and feedback randomness."""
    return float(index_probabilities(design, tm, F) @ np.array(design.levels))


def outage_simplified(cb, tm, F):
    """Outage when every boundary coincides with its level.

    Equivalent to the general form with ``Q = P``; the double sum over
    received ``i < j`` is folded into ``w_j = sum_{i<j} p(i|j)``.
    """
    _matrix(tm, cb.K)
    G = _tail(F, np.array(cb.levels))
    w = tm.below()
    total = G[-1] + w[1:] @ (G[:-1] - G[1:])
    return float(min(max(total, 0.0), 1.0))


def avg_power_simplified(cb, tm, F):
    return avg_power_general(cb.as_design(), tm, F)


def simplified_gradients(levels, tm, F, density):
    """Gradients of (outage, average power) with respect to the levels.

    ``density`` returns dF/dP. With ``e_j = sum_i p(i|j) P_i`` and
    ``e_K := e_0``::

        d outage / d P_m = -(w_{m+1} - w_m) f(P_m)        (w_K := 1)
        d power  / d P_m = p(m) + f(P_m) (e_m - e_{m+1})
    """
    P = np.asarray(levels, dtype=float)
    p = tm.p
    f = np.asarray(density(P), dtype=float)
    w = np.append(tm.below(), 1.0)
    e = p @ P
    e_next = np.append(e[1:], e[0])
    marg = index_probabilities(QuantizerDesign.from_levels(P), tm, F)
    g_out = -(w[1:] - w[:-1]) * f
    g_pow = marg + f * (e - e_next)
    return g_out, g_pow


def general_gradients(design, tm, F, density):
    """Gradients of (outage, average power) in the order P_0, Q_0, P_1, Q_1, ..."""
    P = np.array(design.levels)
    Q = np.array(design.boundaries)
    p = tm.p
    fP = np.asarray(density(P), dtype=float)
    fQ = np.asarray(density(Q), dtype=float)
    w = np.append(tm.below(), 1.0)
    diag = np.diag(p)
    e = p @ P
    e_next = np.append(e[1:], e[0])
    marg = index_probabilities(design, tm, F)
    K = design.K
    g_out = np.empty(2 * K)
    g_pow = np.empty(2 * K)
    g_out[0::2] = -diag * fP
    g_pow[0::2] = marg
    g_out[1::2] = -fQ * (w[1:] - w[:-1] - diag)
    g_pow[1::2] = fQ * (e - e_next)
    return g_out, g_pow
