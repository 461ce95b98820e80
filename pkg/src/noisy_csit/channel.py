"""Quasi-static Rayleigh fading: mutual information, channel inversion power
and the complementary outage function F(P) = Pr[I(P) >= R].

Two interchangeable F backends are provided. :class:`ClosedFormOutage`
covers SISO/MISO/SIMO links through the integer-shape incomplete gamma
function; :class:`EmpiricalOutage` covers any antenna configuration from a
fixed sample of channel inversion powers. Both expose ``F(p)`` through
``__call__``, the outage ``1 - F(p)`` through ``tail`` (computed without
cancellation where possible) and a finite-difference ``density``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import streams
from .exceptions import ClosedFormUnavailable, DeepFadeError, DomainError
from .special import gamma_p, gamma_q


@dataclass(frozen=True)
class ChannelSpec:
    """``r x t`` Rayleigh link carrying a fixed rate in nats per channel use."""

    t: int = 1
    r: int = 1
    rate: float = 4.0

    def __post_init__(self):
        if int(self.t) != self.t or self.t < 1:
            raise DomainError(f"t must be a positive integer, got {self.t!r}")
        if int(self.r) != self.r or self.r < 1:
            raise DomainError(f"r must be a positive integer, got {self.r!r}")
        if not self.rate > 0 or not math.isfinite(self.rate):
            raise DomainError(f"rate must be positive and finite, got {self.rate!r}")

    @classmethod
    def from_kind(cls, kind, t=None, r=None, rate=4.0):
        """Build from a channel kind name: siso, miso, simo or mimo."""
        kind = kind.lower()
        if kind == "siso":
            return cls(1, 1, rate)
        if kind == "miso":
            return cls(t or 2, 1, rate)
        if kind == "simo":
            return cls(1, r or 2, rate)
        if kind == "mimo":
            return cls(t or 2, r or 2, rate)
        raise DomainError(f"unknown channel kind {kind!r}")

    @property
    def n_eigs(self):
        return min(self.t, self.r)

    @property
    def closed_form(self):
        return self.n_eigs == 1

    @property
    def diversity(self):
        return self.t * self.r

    @property
    def kind(self):
        if self.t == 1 and self.r == 1:
            return "siso"
        if self.r == 1:
            return "miso"
        if self.t == 1:
            return "simo"
        return "mimo"

    def to_dict(self):
        return {"t": self.t, "r": self.r, "rate": self.rate}


@dataclass(frozen=True)
class OutageEstimate:
    value: float
    std_err: float = 0.0
    n_samples: int = 0


def _check_eigs(eigs):
    eigs = np.asarray(eigs, dtype=float)
    if eigs.ndim != 1:
        raise DomainError("eigenvalues must be a one-dimensional sequence")
    if np.any(eigs < 0) or not np.all(np.isfinite(eigs)):
        raise DomainError("eigenvalues must be finite and nonnegative")
    return eigs


def mutual_information(eigs, power, t):
    """Nats per channel use with an isotropic codeword of total power ``power``."""
    eigs = _check_eigs(eigs)
    if power < 0:
        raise DomainError(f"power must be nonnegative, got {power!r}")
    return float(np.sum(np.log1p(eigs * (power / t))))


def inversion_power(eigs, rate, t):
    """Smallest power whose mutual information reaches ``rate``.

    Bisection on a bracket built from the largest eigenvalue, then Newton
    polishing. Raises :class:`DeepFadeError` if every eigenvalue is zero.
    """
    eigs = _check_eigs(eigs)
    if not rate > 0:
        raise DomainError(f"rate must be positive, got {rate!r}")
    pos = eigs[eigs > 0]
    if pos.size == 0:
        raise DeepFadeError("channel in deep fade: all eigenvalues are zero")
    lam_max = pos.max()
    # One eigenvalue carrying everything gives an upper bound; spreading the
    # rate evenly over all of them at the largest gain gives a lower bound.
    hi = t * math.expm1(rate) / lam_max
    if pos.size == 1:
        return hi
    lo = t * math.expm1(rate / pos.size) / lam_max

    def excess(p):
        return float(np.sum(np.log1p(pos * (p / t)))) - rate

    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if excess(mid) >= 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-15 * hi:
            break
    p = hi
    for _ in range(3):
        slope = float(np.sum(pos / (t + pos * p)))
        step = excess(p) / slope
        if not math.isfinite(step) or step == 0:
            break
        p -= step
    return p


def inversion_power_batch(eigs, rate, t):
    """Vectorized :func:`inversion_power` over rows of an ``(n, m)`` array.

    Deep fades map to ``inf`` (a probability-zero event under the model).
    """
    eigs = np.asarray(eigs, dtype=float)
    if eigs.ndim == 1:
        eigs = eigs[:, None]
    gap = math.expm1(rate)
    m = eigs.shape[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        if m == 1:
            return t * gap / eigs[:, 0]
        if m == 2:
            s = eigs[:, 0] + eigs[:, 1]
            prod = eigs[:, 0] * eigs[:, 1]
            return t * 2.0 * gap / (s + np.sqrt(s * s + 4.0 * prod * gap))
        lam_max = eigs.max(axis=1)
        hi = t * gap / lam_max
        lo = t * math.expm1(rate / m) / lam_max
        for _ in range(60):
            mid = np.sqrt(lo * hi)
            ok = np.sum(np.log1p(eigs * (mid / t)[:, None]), axis=1) >= rate
            hi = np.where(ok, mid, hi)
            lo = np.where(ok, lo, mid)
        p = hi
        for _ in range(2):
            val = np.sum(np.log1p(eigs * (p / t)[:, None]), axis=1) - rate
            slope = np.sum(eigs / (t + eigs * p[:, None]), axis=1)
            p = np.where(np.isfinite(p), p - val / slope, p)
        return p


def sample_eigenvalues(spec, n, rng):
    """Eigenvalues of the Gram matrix of ``n`` channel draws, shape ``(n, min(t, r))``.

    Entries of H are i.i.d. circularly-symmetric complex Gaussian with
    variance 0.5 per real dimension. Rows are sorted in descending order.
    """
    m = spec.n_eigs
    h = rng.standard_normal((n, spec.r, spec.t, 2)) * math.sqrt(0.5)
    h = h[..., 0] + 1j * h[..., 1]
    if m == 1:
        return np.sum(np.abs(h) ** 2, axis=(1, 2))[:, None]
    gram = h @ np.conj(np.swapaxes(h, 1, 2)) if spec.r <= spec.t else np.conj(np.swapaxes(h, 1, 2)) @ h
    if m == 2:
        a = gram[:, 0, 0].real
        d = gram[:, 1, 1].real
        b2 = np.abs(gram[:, 0, 1]) ** 2
        half = 0.5 * (a + d)
        rad = np.sqrt(0.25 * (a - d) ** 2 + b2)
        eig = np.stack([half + rad, half - rad], axis=1)
    else:
        eig = np.linalg.eigvalsh(gram)[:, ::-1]
    return np.maximum(eig, 0.0)


def sample_channel(spec, rng):
    """One channel draw, returned as its sorted Gram eigenvalues."""
    return sample_eigenvalues(spec, 1, rng)[0]


def sample_inversion_powers(spec, n, seed, workers=1):
    """Inversion powers of ``n`` independent channel draws (chunk-seeded)."""

    def work(chunk, size):
        rng = streams.generator(seed, streams.CHANNEL, chunk)
        return inversion_power_batch(sample_eigenvalues(spec, size, rng), spec.rate, spec.t)

    parts = streams.map_chunks(work, n, workers)
    return np.concatenate(parts) if parts else np.empty(0)


class ClosedFormOutage:
    """F(P) for links with a single nonzero Gram eigenvalue.

    The eigenvalue is Gamma(max(t, r), 1) distributed, and the rate is met
    iff it exceeds ``t * (e^R - 1) / P``.
    """

    name = "closed-form"

    def __init__(self, spec):
        if not spec.closed_form:
            raise ClosedFormUnavailable(
                f"{spec.r}x{spec.t} link has no closed-form outage; use Monte Carlo"
            )
        self.spec = spec
        self.shape = max(spec.t, spec.r)
        self.threshold = spec.t * math.expm1(spec.rate)

    def _x(self, p):
        p = np.asarray(p, dtype=float)
        if np.any(p < 0):
            raise DomainError("power must be nonnegative")
        with np.errstate(divide="ignore"):
            return self.threshold / p

    def __call__(self, p):
        out = gamma_q(self.shape, self._x(p))
        return out if out.ndim else float(out)

    def tail(self, p):
        out = gamma_p(self.shape, self._x(p))
        return out if out.ndim else float(out)

    def density(self, p, rel_step=1e-4):
        return _central_difference(self, p, rel_step)


class EmpiricalOutage:
    """F(P) estimated from a fixed sample of channel inversion powers.

    The empirical CDF is linearly interpolated between sorted samples so
    that F is continuous; with common random numbers the design objective
    becomes a deterministic function of the power levels.
    """

    name = "monte-carlo"

    def __init__(self, inversion_powers):
        p = np.sort(np.asarray(inversion_powers, dtype=float))
        self.n = p.size
        # deep fades (inf) are never invertible: F saturates below 1
        self.samples = p[np.isfinite(p)]
        self._xs = np.concatenate([[0.0], self.samples])
        self._ys = np.arange(self.samples.size + 1) / self.n

    @classmethod
    def from_spec(cls, spec, n_samples, seed, workers=1):
        return cls(sample_inversion_powers(spec, n_samples, seed, workers))

    def __call__(self, p):
        out = np.interp(np.asarray(p, dtype=float), self._xs, self._ys, right=self._ys[-1])
        return out if np.ndim(out) else float(out)

    def tail(self, p):
        out = 1.0 - np.asarray(self(p))
        return out if out.ndim else float(out)

    def density(self, p, rel_step=0.05):
        return _central_difference(self, p, rel_step)


def _central_difference(F, p, rel_step):
    p = np.asarray(p, dtype=float)
    step = rel_step * p
    out = (np.asarray(F.tail(p - step)) - np.asarray(F.tail(p + step))) / (2 * step)
    return out if out.ndim else float(out)


def outage_model(spec, mc_samples=200_000, seed=0, workers=1):
    """Closed-form F when available, otherwise a common-random-numbers sample."""
    if spec.closed_form:
        return ClosedFormOutage(spec)
    return EmpiricalOutage.from_spec(spec, mc_samples, seed, workers)


def comp_outage_closed(power, spec):
    """F(power) for a SISO/MISO/SIMO link, exact up to rounding."""
    if power < 0:
        raise DomainError(f"power must be nonnegative, got {power!r}")
    return OutageEstimate(float(ClosedFormOutage(spec)(power)), 0.0, 0)


def comp_outage_mc(power, spec, n_samples, seed, workers=1):
    """Fraction of ``n_samples`` seeded channel draws invertible with ``power``."""
    if n_samples < 1:
        raise DomainError("n_samples must be at least 1")
    if power < 0:
        raise DomainError(f"power must be nonnegative, got {power!r}")
    p_r = sample_inversion_powers(spec, n_samples, seed, workers)
    value = float(np.count_nonzero(p_r <= power)) / n_samples
    return OutageEstimate(value, math.sqrt(value * (1 - value) / n_samples), int(n_samples))


def outage_density(power, spec, h):
    """Central difference [F(P+h) - F(P-h)] / 2h of the closed-form F."""
    if not 0 < h < power:
        raise DomainError("need 0 < h < power")
    F = ClosedFormOutage(spec)
    return (F.tail(power - h) - F.tail(power + h)) / (2 * h)
