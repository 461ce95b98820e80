"""Outage-minimizing power-control codebooks under a long-term power budget.

Levels are parametrized in the log domain as cumulative squared increments,
``log P_j = log c + sum_{k<=j} u_k**2``, so ordering holds by construction
and merged levels are reachable (``u_k = 0``). For every shape ``u`` the
overall scale ``c`` is solved so that the average power equals the budget;
each evaluated point is therefore exactly feasible and the search over ``u``
is unconstrained. A Nelder-Mead simplex minimizes ``log P_out`` from a fixed
schedule of starts, and the best feasible candidate wins.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq, minimize

from .channel import ChannelSpec, outage_model
from .exceptions import DomainError
from .mapping import BitMapping, quasi_grey_mapping, transition_matrix
from .objective import (
    PowerCodebook,
    QuantizerDesign,
    general_gradients,
    index_probabilities,
    simplified_gradients,
)

FEASIBILITY_SLACK = 1e-9
TIE_TOL = 1e-12


def db_to_linear(snr_db):
    return 10.0 ** (snr_db / 10.0)


@dataclass(frozen=True)
class DesignProblem:
    spec: ChannelSpec
    K: int
    rho: float
    mapping: BitMapping
    snr: float

    def __post_init__(self):
        if not self.snr > 0:
            raise DomainError(f"snr must be positive, got {self.snr!r}")
        if self.K < 1:
            raise DomainError("K must be at least 1")
        if not 0.0 <= self.rho <= 0.5:
            raise DomainError(f"rho must lie in [0, 0.5], got {self.rho!r}")
        if self.mapping.K != self.K:
            raise DomainError(f"mapping has {self.mapping.K} codewords but K={self.K}")

    @classmethod
    def create(cls, spec, K, rho, snr_db=None, snr=None, mapping=None):
        if (snr_db is None) == (snr is None):
            raise DomainError("give exactly one of snr_db and snr")
        if snr is None:
            snr = db_to_linear(snr_db)
        if mapping is None:
            mapping = quasi_grey_mapping(K, rho)
        return cls(spec, int(K), float(rho), mapping, float(snr))

    @functools.cached_property
    def tm(self):
        return transition_matrix(self.mapping, self.rho)

    def with_rho(self, rho):
        return replace(self, rho=float(rho))


@dataclass(frozen=True)
class OptimizerOptions:
    max_iter: int = 2000
    fatol: float = 1e-10
    xatol: float = 1e-8
    restarts: int = 3
    simplex_step: float = 0.7
    # ratios P_{K-1} / P_0 of the geometric-ladder starts
    ladder_ratios: tuple = (1e1, 1e2, 1e4, 1e8)
    mc_samples: int = 200_000
    mc_seed: int = 0
    seed: int | None = None
    random_starts: int = 0


@dataclass
class KktReport:
    lambda_p: float
    stationarity_residual: float
    active_structure: list
    intermediate_index: int | None
    levels_bracket_snr: bool
    level_condition_residual: float
    tail_density_product: float


@dataclass
class DesignResult:
    codebook: object
    p_out: float
    p_avg: float
    starts_used: int
    converged: bool
    kkt: KktReport | None = None
    candidates: list = field(default_factory=list, repr=False)

    @property
    def levels(self):
        return self.codebook.levels

    @property
    def spread(self):
        return self.levels[-1] - self.levels[0]

    def boundary_gaps(self):
        if isinstance(self.codebook, QuantizerDesign):
            return self.codebook.boundary_gaps()
        return [0.0] * len(self.levels)


@functools.lru_cache(maxsize=32)
def _model(spec, mc_samples, mc_seed):
    return outage_model(spec, mc_samples, mc_seed)


def model_for(spec, opts=None):
    opts = opts or OptimizerOptions()
    return _model(spec, opts.mc_samples, opts.mc_seed)


class _Objective:
    """Outage and power of a chain of nondecreasing values.

    The chain is the level vector (simplified form) or the interleaved
    ``P_0, Q_0, P_1, Q_1, ...`` (general form).
    """

    def __init__(self, tm, F, snr, general):
        self.p = tm.p
        self.K = tm.K
        self.diag = np.diag(tm.p).copy()
        self.w = tm.below()
        self.F = F
        self.snr = snr
        self.general = general

    def split(self, chain):
        if self.general:
            return chain[0::2], chain[1::2]
        return chain, chain

    def _tail(self, x):
        return np.asarray(self.F.tail(x), dtype=float)

    def power(self, chain):
        P, Q = self.split(chain)
        G = self._tail(Q)
        cell = np.concatenate(([1.0], G[:-1])) - G
        cell[0] += G[-1]
        return float((cell @ self.p) @ P)

    def outage(self, chain):
        P, Q = self.split(chain)
        GQ = self._tail(Q)
        total = GQ[-1] + self.w[1:] @ (GQ[:-1] - GQ[1:])
        if self.general:
            total += self.diag @ (self._tail(P) - GQ)
        return float(total)

    def scale(self, shape):
        """Scale ``c`` with ``power(c * shape) == snr``; ``shape[0] == 1``."""
        snr = self.snr
        P, _ = self.split(shape)
        lo, hi = snr / P[-1], snr / P[0]
        if hi <= lo * (1 + 1e-15):
            return lo

        def excess(logc):
            return self.power(math.exp(logc) * shape) - snr

        a, b = math.log(lo), math.log(hi)
        fa, fb = excess(a), excess(b)
        if fa >= 0:
            return lo
        if fb <= 0:
            return hi
        root = brentq(excess, a, b, xtol=1e-14, rtol=1e-15, maxiter=200)
        c = math.exp(root)
        # step to the feasible side if rounding left us just above budget
        for _ in range(8):
            if self.power(c * shape) <= snr * (1 + 1e-13):
                break
            c *= 1 - 1e-14
        return c

    def chain(self, u):
        shape = np.exp(np.concatenate(([0.0], np.cumsum(np.square(u)))))
        return self.scale(shape) * shape

    def __call__(self, u):
        out = self.outage(self.chain(u))
        return math.log(max(out, 1e-300))


def _shape_params(chain):
    chain = np.asarray(chain, dtype=float)
    steps = np.log(chain[1:] / chain[:-1])
    return np.sqrt(np.maximum(steps, 0.0))


def _nelder_mead(fun, u0, opts):
    """Nelder-Mead with restarts from the incumbent; returns (u, value, converged)."""
    n = len(u0)
    u = np.asarray(u0, dtype=float)
    best = fun(u)
    converged = False
    step = opts.simplex_step
    for _ in range(opts.restarts + 1):
        simplex = np.vstack([u] + [u + step * np.eye(n)[k] for k in range(n)])
        res = minimize(
            fun,
            u,
            method="Nelder-Mead",
            options={
                "initial_simplex": simplex,
                "maxiter": opts.max_iter,
                "maxfev": 4 * opts.max_iter,
                "xatol": opts.xatol,
                "fatol": opts.fatol,
            },
        )
        improved = res.fun < best - opts.fatol
        if res.fun <= best:
            u, best = np.asarray(res.x), float(res.fun)
        converged = bool(res.success)
        if not improved:
            break
        step = max(0.1 * step, 0.05)
    return u, best, converged


def _select(candidates):
    """Lowest outage; near-ties go to the smaller relative spread."""
    best = min(c["p_out"] for c in candidates)
    tied = [c for c in candidates if c["p_out"] <= best + TIE_TOL * max(best, 1e-300)]

    def spread(c):
        v = c["chain"]
        return (v[-1] - v[0]) / v[-1]

    return min(tied, key=spread)


def _run_starts(obj, starts, opts, dim):
    candidates = []
    for label, u0 in starts:
        u0 = np.asarray(u0, dtype=float)
        if u0.shape != (dim,):
            continue
        u, _, ok = _nelder_mead(obj, u0, opts)
        chain = obj.chain(u)
        candidates.append(
            {"label": label, "chain": chain, "p_out": obj.outage(chain), "converged": ok}
        )
    return candidates


def _ladders(opts, dim):
    return [(f"ladder-{r:g}", np.full(dim, math.sqrt(math.log(r) / dim))) for r in opts.ladder_ratios]


def _random_starts(opts, dim):
    if not opts.random_starts or opts.seed is None:
        return []
    rng = np.random.default_rng(opts.seed)
    return [(f"random-{k}", rng.uniform(0, 3, dim)) for k in range(opts.random_starts)]


def _finish(problem, obj, candidates, codebook_from_chain):
    chosen = _select(candidates)
    chain = chosen["chain"]
    result = DesignResult(
        codebook=codebook_from_chain(chain),
        p_out=obj.outage(chain),
        p_avg=obj.power(chain),
        starts_used=len(candidates),
        converged=chosen["converged"],
        candidates=candidates,
    )
    return result


def optimize_levels(problem, opts=None, extra_starts=()):
    """Minimize outage over nondecreasing levels with boundaries equal to levels.

    ``extra_starts`` are level vectors (e.g. a neighbouring SNR's optimum)
    tried in addition to the fixed schedule.
    """
    opts = opts or OptimizerOptions()
    F = model_for(problem.spec, opts)
    obj = _Objective(problem.tm, F, problem.snr, general=False)
    K = problem.K
    if K == 1:
        chain = np.array([problem.snr])
        cand = [{"label": "single", "chain": chain, "p_out": obj.outage(chain), "converged": True}]
        result = _finish(problem, obj, cand, lambda c: PowerCodebook(tuple(c)))
        result.kkt = kkt_check(result, problem, opts)
        return result

    dim = K - 1
    starts = [("all-equal", np.zeros(dim))]
    if problem.rho > 0:
        base = _noiseless_levels(problem.spec, K, problem.snr, opts)
        starts.append(("noiseless", _shape_params(base)))
    starts += _ladders(opts, dim)
    starts += [(f"extra-{k}", _shape_params(np.asarray(s, dtype=float))) for k, s in enumerate(extra_starts)]
    starts += _random_starts(opts, dim)

    candidates = _run_starts(obj, starts, opts, dim)
    # the budget-exhausting all-equal codebook is the no-CSIT scheme itself
    flat = np.full(K, problem.snr)
    candidates.append(
        {
            "label": "no-csit",
            "chain": flat,
            "p_out": obj.outage(flat),
            "converged": candidates[0]["converged"],
        }
    )
    result = _finish(problem, obj, candidates, lambda c: PowerCodebook(tuple(c)))
    result.kkt = kkt_check(result, problem, opts)
    return result


@functools.lru_cache(maxsize=256)
def _noiseless_cached(spec, K, snr, opts):
    problem = DesignProblem(spec, K, 0.0, BitMapping.identity(K), snr)
    return tuple(optimize_levels(problem, opts).levels)


def _noiseless_levels(spec, K, snr, opts):
    return np.array(_noiseless_cached(spec, K, snr, opts))


def optimize_general(problem, opts=None, extra_starts=()):
    """Jointly optimize boundaries and levels under the interleaving constraints."""
    opts = opts or OptimizerOptions()
    F = model_for(problem.spec, opts)
    obj = _Objective(problem.tm, F, problem.snr, general=True)
    K = problem.K

    def design(chain):
        chain = np.maximum.accumulate(chain)
        return QuantizerDesign(tuple(chain[0::2]), tuple(chain[1::2]))

    if K == 1:
        chain = np.array([problem.snr, problem.snr])
        cand = [{"label": "single", "chain": chain, "p_out": obj.outage(chain), "converged": True}]
        result = _finish(problem, obj, cand, design)
        result.kkt = kkt_check(result, problem, opts)
        return result

    simple = optimize_levels(problem, opts)
    dim = 2 * K - 1

    def interleave(levels):
        return np.repeat(np.asarray(levels, dtype=float), 2)

    starts = [("simplified", _shape_params(interleave(simple.levels))), ("all-equal", np.zeros(dim))]
    starts += _ladders(opts, dim)
    starts += [(f"extra-{k}", _shape_params(np.asarray(s, dtype=float))) for k, s in enumerate(extra_starts)]
    starts += _random_starts(opts, dim)
    candidates = _run_starts(obj, starts, opts, dim)
    flat = np.full(2 * K, problem.snr)
    candidates.append({"label": "no-csit", "chain": flat, "p_out": obj.outage(flat), "converged": True})
    result = _finish(problem, obj, candidates, design)
    result.kkt = kkt_check(result, problem, opts)
    return result


def no_csit_baseline(spec, snr, opts=None):
    """Outage of fixed transmission at the full budget, 1 - F(snr)."""
    if not snr > 0:
        raise DomainError(f"snr must be positive, got {snr!r}")
    return float(model_for(spec, opts).tail(snr))


def _blocks(values, rtol=1e-9):
    """Group indices of consecutive (numerically) equal values."""
    groups = [[0]]
    for k in range(1, len(values)):
        if values[k] - values[k - 1] <= rtol * max(values[k], 1e-300):
            groups[-1].append(k)
        else:
            groups.append([k])
    return groups


def kkt_check(result, problem, opts=None):
    """Stationarity diagnostics of an optimized codebook.

    ``lambda_p`` is the least-squares power multiplier on the reduced
    gradient (moving each block of tied values together);
    ``stationarity_residual`` is the relative norm of what remains.
    ``level_condition_residual`` measures the level-only conditions
    ``-p(i|i) f(P_i) + lambda_p p(i) - lam_lo + lam_up = 0`` with
    nonnegative multipliers on the active interleaving constraints.
    """
    F = model_for(problem.spec, opts)
    tm = problem.tm
    cb = result.codebook
    snr = problem.snr
    if isinstance(cb, QuantizerDesign):
        design = cb
        chain = np.ravel(np.column_stack([cb.levels, cb.boundaries]))
        g_out, g_pow = general_gradients(cb, tm, F, F.density)
    else:
        design = cb.as_design()
        chain = np.asarray(cb.levels)
        g_out, g_pow = simplified_gradients(cb.levels, tm, F, F.density)

    a, b = [], []
    for grp in _blocks(chain):
        v = chain[grp[0]]
        a.append(g_out[grp].sum() * v)
        b.append(g_pow[grp].sum() * v)
    a, b = np.array(a), np.array(b)
    lam = max(-(a @ b) / (b @ b), 0.0) if b @ b > 0 else 0.0
    norm = np.linalg.norm(a)
    resid = float(np.linalg.norm(a + lam * b) / norm) if norm > 0 else 0.0

    P = np.array(design.levels)
    Q = np.array(design.boundaries)
    Q_prev = np.concatenate(([0.0], Q[:-1]))
    tol = 1e-9 * max(float(Q[-1]), 1e-300)
    up = np.abs(Q - P) <= tol
    lo = np.abs(P - Q_prev) <= tol
    fP = np.asarray(F.density(P), dtype=float)
    marg = index_probabilities(design, tm, F)
    s = -np.diag(tm.p) * fP + lam * marg
    scale = np.maximum(np.abs(np.diag(tm.p) * fP), np.abs(lam * marg)) + 1e-300
    viol = np.where(
        up & lo, 0.0, np.where(up, np.maximum(s, 0.0), np.where(lo, np.maximum(-s, 0.0), np.abs(s)))
    )
    level_resid = float(np.max(viol / scale))

    K = problem.K
    slack = FEASIBILITY_SLACK * snr
    sigma = None
    for j in range(K - 2, -1, -1):
        if P[j] <= snr + slack and P[j + 1] >= snr - slack:
            sigma = j
            break
    bracket = bool(P[0] <= snr + slack and P[-1] >= snr - slack)
    top = float(F.density(P[-1]) * P[-1])
    return KktReport(
        lambda_p=float(lam),
        stationarity_residual=resid,
        active_structure=[(bool(u_), bool(l_)) for u_, l_ in zip(up, lo)],
        intermediate_index=sigma,
        levels_bracket_snr=bracket,
        level_condition_residual=level_resid,
        tail_density_product=top,
    )
