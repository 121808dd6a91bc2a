"""Monotone nonlinearities, their inverses, truncations and test shapes.

The diffusion nonlinearity phi must be C^1, strictly increasing, vanish at
zero, and have slope bounded below by mu outside a band |r| <= R.  The
porous-medium choice phi(r) = |r|^(m-1) r with m > 1 degenerates at the
origin; the stepper compensates with a diagonal Jacobian shift, nothing
here needs regularizing.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import DomainError, HypothesisError

__all__ = [
    "NonlinearityProfile",
    "EntropyTestFunction",
    "truncate",
    "h_eps",
    "entropy_test_function",
    "validate_slope_bound",
    "SlopeReport",
]

IDENTITY = "identity"
POROUS_MEDIUM = "porous_medium"
CUSTOM = "custom"


class _MonotoneSplineInverse:
    """Exact inverse of a strictly increasing piecewise polynomial.

    Root-finding on the forward spline keeps the round trip b(phi(r)) = r
    at machine precision, which independent interpolation of the flipped
    table cannot achieve.
    """

    def __init__(self, forward, values):
        self.forward = forward
        self.x = np.asarray(values, dtype=float)   # range endpoints for checks

    def __call__(self, v):
        arr = np.atleast_1d(np.asarray(v, dtype=float))
        out = np.empty_like(arr)
        for i, val in enumerate(arr.ravel()):
            roots = self.forward.solve(val, extrapolate=False)
            out.ravel()[i] = roots[0]
        return out.reshape(np.shape(v))


@dataclass(frozen=True)
class NonlinearityProfile:
    """phi, its derivative and inverse, plus the slope-bound constants.

    mu is the lower slope bound valid for |r| > slope_threshold.
    """

    kind: str
    exponent: float = 1.0
    mu: float = 1.0
    slope_threshold: float = 0.0
    _forward: object = None
    _derivative: object = None
    _backward: object = None

    @classmethod
    def identity(cls) -> "NonlinearityProfile":
        return cls(kind=IDENTITY, exponent=1.0, mu=1.0, slope_threshold=0.0)

    @classmethod
    def porous_medium(cls, exponent: float, mu: float | None = None,
                      slope_threshold: float = 1.0) -> "NonlinearityProfile":
        if not np.isfinite(exponent) or exponent <= 1.0:
            raise HypothesisError(f"porous-medium exponent must exceed 1, got {exponent}")
        if slope_threshold < 0.0:
            raise HypothesisError("slope threshold must be >= 0")
        if mu is None:
            mu = exponent * slope_threshold ** (exponent - 1.0)
        if mu <= 0.0:
            raise HypothesisError("slope bound mu must be positive; raise the threshold")
        return cls(kind=POROUS_MEDIUM, exponent=exponent, mu=mu,
                   slope_threshold=slope_threshold)

    @classmethod
    def from_csv(cls, path, mu: float, slope_threshold: float
                 ) -> "NonlinearityProfile":
        """Load a tabulated nonlinearity from a two-column CSV (r, phi(r))."""
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if table.shape[1] != 2:
            raise HypothesisError(f"{path}: expected two columns (r, phi)")
        return cls.from_table(table[:, 0], table[:, 1], mu=mu,
                              slope_threshold=slope_threshold)

    @classmethod
    def from_table(cls, r: np.ndarray, phi_r: np.ndarray, mu: float,
                   slope_threshold: float) -> "NonlinearityProfile":
        """Tabulated monotone C^1 nonlinearity via a monotone cubic spline."""
        r = np.asarray(r, dtype=float)
        phi_r = np.asarray(phi_r, dtype=float)
        if r.ndim != 1 or r.shape != phi_r.shape or len(r) < 4:
            raise HypothesisError("table needs matching 1-d arrays, >= 4 points")
        if np.any(np.diff(r) <= 0) or np.any(np.diff(phi_r) <= 0):
            raise HypothesisError("tabulated nonlinearity must be strictly increasing")
        if r[0] > 0.0 or r[-1] < 0.0:
            raise HypothesisError("table must bracket r = 0")
        fwd = PchipInterpolator(r, phi_r)
        at_zero = float(fwd(0.0))
        if abs(at_zero) > 1e-12 * max(1.0, np.abs(phi_r).max()):
            raise HypothesisError(f"phi(0) must vanish, interpolant gives {at_zero}")
        return cls(kind=CUSTOM, exponent=float("nan"), mu=mu,
                   slope_threshold=slope_threshold,
                   _forward=fwd, _derivative=fwd.derivative(),
                   _backward=_MonotoneSplineInverse(fwd, phi_r))

    # -- evaluation -----------------------------------------------------------

    def phi(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == IDENTITY:
            out = r.copy()
        elif self.kind == POROUS_MEDIUM:
            out = np.abs(r) ** (self.exponent - 1.0) * r
        else:
            self._check_table_range(r, self._forward.x, "phi")
            out = self._forward(r)
        return out if out.ndim else float(out)

    def phi_prime(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == IDENTITY:
            out = np.ones_like(r)
        elif self.kind == POROUS_MEDIUM:
            out = self.exponent * np.abs(r) ** (self.exponent - 1.0)
        else:
            self._check_table_range(r, self._forward.x, "phi_prime")
            out = self._derivative(r)
        return out if out.ndim else float(out)

    def inverse(self, v):
        """b = phi^{-1}; strictly increasing with b(0) = 0."""
        v = np.asarray(v, dtype=float)
        if self.kind == IDENTITY:
            out = v.copy()
        elif self.kind == POROUS_MEDIUM:
            out = np.sign(v) * np.abs(v) ** (1.0 / self.exponent)
        else:
            self._check_table_range(v, self._backward.x, "inverse")
            out = self._backward(v)
        return out if out.ndim else float(out)

    @staticmethod
    def _check_table_range(vals, knots, what):
        if vals.size and (vals.min() < knots[0] or vals.max() > knots[-1]):
            raise DomainError(f"{what}: argument outside tabulated range "
                              f"[{knots[0]}, {knots[-1]}]")


def truncate(r, level: float):
    """Two-sided cutoff at the given level: clamp r to [-level, level]."""
    if level <= 0.0:
        raise DomainError(f"truncation level must be positive, got {level}")
    return np.clip(r, -level, level)


def h_eps(y, eps: float, variant: str = "plus"):
    """Smooth approximation of the positive/negative part.

    plus:  sqrt((y^+)^2 + eps^2) - eps;  minus: same with y^-.
    Both are smooth, non-negative, and tend to y^+/y^- as eps -> 0.
    """
    if eps <= 0.0:
        raise DomainError(f"smoothing parameter must be positive, got {eps}")
    y = np.asarray(y, dtype=float)
    if variant == "plus":
        part = np.maximum(y, 0.0)
    elif variant == "minus":
        part = np.maximum(-y, 0.0)
    else:
        raise DomainError(f"variant must be 'plus' or 'minus', got {variant!r}")
    out = np.sqrt(part ** 2 + eps ** 2) - eps
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class EntropyTestFunction:
    """C^1 mollified clamp S with S(0)=0, 0 <= S' <= 1, S' compactly supported.

    S'(y) = 1 on |y| <= level, a cubic smoothstep ramp down to 0 on
    level < |y| < level + smoothing, and 0 beyond; S is its odd primitive.
    """

    level: float
    smoothing: float

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        a = np.abs(y)
        s = np.clip((a - self.level) / self.smoothing, 0.0, 1.0)
        ramp = self.level + self.smoothing * (s - s ** 3 + 0.5 * s ** 4)
        out = np.sign(y) * np.where(a <= self.level, a, ramp)
        return out if out.ndim else float(out)

    def derivative(self, y):
        y = np.asarray(y, dtype=float)
        s = np.clip((np.abs(y) - self.level) / self.smoothing, 0.0, 1.0)
        out = 1.0 - 3.0 * s ** 2 + 2.0 * s ** 3
        return out if out.ndim else float(out)

    @property
    def plateau(self) -> float:
        """Value of S beyond the support of S'."""
        return self.level + 0.5 * self.smoothing

    @property
    def support_radius(self) -> float:
        return self.level + self.smoothing


def entropy_test_function(level: float, smoothing: float) -> EntropyTestFunction:
    if level <= 0.0 or smoothing <= 0.0:
        raise DomainError("level and smoothing must both be positive")
    return EntropyTestFunction(level=level, smoothing=smoothing)


@dataclass(frozen=True)
class SlopeReport:
    min_slope: float
    mu: float
    slope_threshold: float
    r_max: float
    n_samples: int
    passed: bool


def validate_slope_bound(profile: NonlinearityProfile, r_max: float = 10.0,
                         n_samples: int = 4001) -> SlopeReport:
    """Sample phi' on slope_threshold < |r| <= r_max against the bound mu.

    Report-only: callers decide what to do with a failure.
    """
    R = profile.slope_threshold
    if r_max <= R:
        r_max = R + 1.0
    mags = np.linspace(R, r_max, n_samples)[1:]
    samples = np.concatenate([-mags[::-1], mags])
    slopes = profile.phi_prime(samples)
    min_slope = float(np.min(slopes))
    return SlopeReport(min_slope=min_slope, mu=profile.mu, slope_threshold=R,
                       r_max=r_max, n_samples=len(samples),
                       passed=bool(min_slope >= profile.mu - 1e-12))
