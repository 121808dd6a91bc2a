"""Special functions used by the solver oracles.

The two workhorses are the Mittag-Leffler function on the negative real
axis, E_a(-x), which solves the scalar memory-relaxation equation, and the
scaled exponential integral exp(t)*E1(t), which is the resolvent kernel of
the ultra-slow family.
"""
from __future__ import annotations

import math

import mpmath
import numpy as np
from scipy import special as sp

from .errors import DomainError

__all__ = ["mittag_leffler_neg", "e1_scaled"]


def _ml_neg_scalar(alpha: float, x: float) -> float:
    """E_alpha(-x) for x >= 0 by the power series in adaptive precision.

    The series alternates and suffers cancellation that grows with the
    largest term; precision is chosen from a float scan of term sizes.
    """
    if x == 0.0:
        return 1.0
    # log10 of the largest series term, scanned in float arithmetic
    logx = math.log(x)
    peak = 0.0
    k = 1
    while True:
        t = k * logx - sp.gammaln(alpha * k + 1.0)
        if t > peak:
            peak = t
        elif t < peak - 80.0 * math.log(10.0):
            break
        k += 1
        if k > 100_000:
            break
    digits = max(0.0, peak / math.log(10.0))
    with mpmath.workdps(30 + int(1.3 * digits)):
        z = mpmath.mpf(-x)
        total = mpmath.mpf(1)
        term = mpmath.mpf(1)
        j = 1
        while True:
            term = mpmath.power(z, j) / mpmath.gamma(alpha * j + 1)
            total += term
            if abs(term) < mpmath.mpf(10) ** (-(mpmath.mp.dps + 5)) and j > 4:
                break
            j += 1
            if j > 200_000:
                break
        return float(total)


def mittag_leffler_neg(alpha: float, x):
    """Evaluate E_alpha(-x) for x >= 0 and 0 < alpha <= 1.

    alpha = 1/2 uses the scaled complementary error function identity,
    alpha = 1 the exponential; other orders fall back to an adaptive
    high-precision series.
    """
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"order must lie in (0, 1], got {alpha}")
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise DomainError("argument of E_a(-x) must satisfy x >= 0")
    if alpha == 0.5:
        out = sp.erfcx(arr)
    elif alpha == 1.0:
        out = np.exp(-arr)
    else:
        out = np.vectorize(lambda v: _ml_neg_scalar(alpha, v), otypes=[float])(arr)
    return float(out) if np.isscalar(x) else out


_E1_ASYMPTOTIC_CUT = 30.0


def e1_scaled(t):
    """exp(t) * E1(t) for t > 0, stable for large t.

    Equals the Laplace integral of 1/(1+s) evaluated at t. Beyond the
    cutoff the alternating asymptotic series is truncated at its optimal
    term (error below 1e-12 for t >= 30).
    """
    arr = np.asarray(t, dtype=float)
    if np.any(arr <= 0):
        raise DomainError("e1_scaled requires t > 0")
    out = np.empty_like(arr)
    small = arr < _E1_ASYMPTOTIC_CUT
    out[small] = np.exp(arr[small]) * sp.exp1(arr[small])
    big = ~small
    if np.any(big):
        tb = arr[big]
        acc = np.zeros_like(tb)
        term = np.ones_like(tb)
        for k in range(12):
            if k > 0:
                term = term * (-k) / tb
            acc += term
        out[big] = acc / tb
    return float(out) if np.isscalar(t) else out
