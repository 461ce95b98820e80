"""Closed-loop Monte Carlo of the quantized, noisy-feedback power control link.

Each trial draws a channel, computes its inversion power, quantizes it at
the receiver, sends the index's codeword over a binary symmetric channel,
demaps at the transmitter and declares success iff the selected power
reaches the inversion power. Channel draws and bit flips come from separate
seeded streams, chunk by chunk, so results do not depend on ``workers``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import streams
from .channel import inversion_power_batch, sample_eigenvalues
from .exceptions import DomainError
from .objective import QuantizerDesign


@dataclass(frozen=True)
class SimReport:
    p_out_hat: float
    p_out_stderr: float
    p_avg_hat: float
    p_avg_stderr: float
    index_histogram_tx: tuple
    index_histogram_rx: tuple
    n_trials: int
    seed: int

    def to_dict(self):
        d = asdict(self)
        d["index_histogram_tx"] = list(self.index_histogram_tx)
        d["index_histogram_rx"] = list(self.index_histogram_rx)
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["index_histogram_tx"] = tuple(d["index_histogram_tx"])
        d["index_histogram_rx"] = tuple(d["index_histogram_rx"])
        return cls(**d)


def _as_design(design):
    if isinstance(design, QuantizerDesign):
        return design
    if hasattr(design, "as_design"):
        return design.as_design()
    raise DomainError(f"expected a QuantizerDesign, got {type(design).__name__}")


def quantize(p_r, design):
    """Index chosen for inversion power ``p_r``: cells are ``(Q_{j-1}, Q_j]``,
    anything beyond the last boundary wraps to index 0."""
    if not p_r > 0:
        raise DomainError(f"inversion power must be positive, got {p_r!r}")
    return int(_quantize_many(np.array([p_r], dtype=float), _as_design(design))[0])


def _quantize_many(p_r, design):
    j = np.searchsorted(np.asarray(design.boundaries), p_r, side="left")
    j[j == design.K] = 0
    return j


def _flip_masks(rng, n, bits, rho):
    """Integer XOR masks with each of ``bits`` bits set w.p. ``rho``."""
    if bits == 0 or rho == 0:
        return np.zeros(n, dtype=np.int64)
    flips = rng.random((n, bits)) < rho
    weights = 1 << np.arange(bits, dtype=np.int64)
    return flips.astype(np.int64) @ weights


def simulate(design, mapping, rho, spec, n_trials, seed, workers=1):
    design = _as_design(design)
    if design.K != mapping.K:
        raise DomainError(f"design has K={design.K} but mapping has K={mapping.K}")
    if n_trials < 1:
        raise DomainError("n_trials must be at least 1")
    if not 0.0 <= rho <= 0.5:
        raise DomainError(f"rho must lie in [0, 0.5], got {rho!r}")
    K = design.K
    levels = np.asarray(design.levels)
    codewords = np.asarray(mapping.codewords, dtype=np.int64)
    demap = mapping.demap_table()
    bits = mapping.bits

    def work(chunk, size):
        rng_ch = streams.generator(seed, streams.CHANNEL, chunk)
        rng_fb = streams.generator(seed, streams.FEEDBACK, chunk)
        p_r = inversion_power_batch(sample_eigenvalues(spec, size, rng_ch), spec.rate, spec.t)
        j = _quantize_many(p_r, design)
        i = demap[codewords[j] ^ _flip_masks(rng_fb, size, bits, rho)]
        power = levels[i]
        return (
            int(np.count_nonzero(power < p_r)),
            math.fsum(power),
            math.fsum(power * power),
            np.bincount(j, minlength=K),
            np.bincount(i, minlength=K),
        )

    parts = streams.map_chunks(work, n_trials, workers)
    fails = sum(p[0] for p in parts)
    s1 = math.fsum(p[1] for p in parts)
    s2 = math.fsum(p[2] for p in parts)
    tx = sum(p[3] for p in parts)
    rx = sum(p[4] for p in parts)

    n = int(n_trials)
    p_out = fails / n
    mean = s1 / n
    var = max(s2 / n - mean * mean, 0.0)
    return SimReport(
        p_out_hat=p_out,
        p_out_stderr=math.sqrt(p_out * (1 - p_out) / n),
        p_avg_hat=mean,
        p_avg_stderr=math.sqrt(var / n),
        index_histogram_tx=tuple(int(c) for c in tx),
        index_histogram_rx=tuple(int(c) for c in rx),
        n_trials=n,
        seed=int(seed),
    )


def _normalize_row(counts):
    row = counts / counts.sum()
    # nudge the largest entry so the row sums to exactly 1 in floating point
    k = int(np.argmax(row))
    for _ in range(4):
        excess = np.sum(row) - 1.0
        if excess == 0:
            break
        row[k] -= excess
    return row


def empirical_transition(mapping, rho, n_trials, seed):
    """Row-normalized frequencies of received index given sent index."""
    if n_trials < 1:
        raise DomainError("n_trials must be at least 1")
    if not 0.0 <= rho <= 0.5:
        raise DomainError(f"rho must lie in [0, 0.5], got {rho!r}")
    K = mapping.K
    demap = mapping.demap_table()
    table = np.zeros((K, K))
    for j, cw in enumerate(mapping.codewords):

        def work(chunk, size, cw=cw, j=j):
            rng = streams.generator(seed, streams.MAPPING, chunk, j)
            return np.bincount(demap[cw ^ _flip_masks(rng, size, mapping.bits, rho)], minlength=K)

        counts = sum(streams.map_chunks(work, n_trials)).astype(float)
        table[j] = _normalize_row(counts)
    return table
