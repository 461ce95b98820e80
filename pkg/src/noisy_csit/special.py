"""Regularized incomplete gamma functions for integer shape.

For integer ``n`` the upper function has the finite Poisson form

    Q(n, x) = exp(-x) * sum_{k<n} x**k / k!

which is exact up to rounding. The lower function P = 1 - Q is taken from
the same sum when Q is small, and from the convergent tail series
``exp(-x) * sum_{k>=n} x**k / k!`` otherwise, so that tiny values of P
(deep in the outage tail) keep full relative precision.
"""

import math

import numpy as np

_SERIES_MAX_TERMS = 1000


def _check_shape(n):
    if int(n) != n or n < 1:
        raise ValueError(f"shape must be a positive integer, got {n!r}")
    return int(n)


def _poisson_sum(n, x):
    """exp(-x) * sum_{k<n} x**k / k! for finite positive x."""
    logx = np.log(x)
    acc = np.zeros_like(x)
    for k in range(n):
        acc += np.exp(k * logx - x - math.lgamma(k + 1))
    return acc


def _lower_series(n, x):
    """exp(-x) * sum_{k>=n} x**k / k!, accurate when the result is small."""
    term = np.exp(n * np.log(x) - x - math.lgamma(n + 1))
    total = term.copy()
    k = n
    for _ in range(_SERIES_MAX_TERMS):
        k += 1
        term = term * x / k
        total += term
        if np.all(term <= 1e-17 * total):
            break
    return total


def _both(n, x):
    """(P, Q) on a flat array; each taken from whichever sum is the smaller."""
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    p[np.isinf(x)] = 1.0
    q[x == 0] = 1.0
    live = np.isfinite(x) & (x > 0)
    xl = x[live]
    ql = _poisson_sum(n, xl)
    pl = 1.0 - ql
    small = ql > 0.5
    if np.any(small):
        pl[small] = _lower_series(n, xl[small])
        ql[small] = 1.0 - pl[small]
    p[live], q[live] = pl, ql
    return p, q


def _prepare(n, x):
    n = _check_shape(n)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise ValueError("x must be nonnegative")
    return n, x


def gamma_q(n, x):
    """Regularized upper incomplete gamma Q(n, x) for integer n >= 1."""
    n, x = _prepare(n, x)
    if n == 1:
        return np.exp(-x)
    return _both(n, x.reshape(-1))[1].reshape(x.shape)


def gamma_p(n, x):
    """Regularized lower incomplete gamma P(n, x) for integer n >= 1."""
    n, x = _prepare(n, x)
    if n == 1:
        return -np.expm1(-x)
    return _both(n, x.reshape(-1))[0].reshape(x.shape)
