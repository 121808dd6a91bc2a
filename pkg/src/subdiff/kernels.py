"""Sonine kernel pairs and the discrete memory machinery built on them.

Three kernel families are supported, each a pair (k, l) with k*l = 1 on
(0, inf):

* fractional:  k = g_{1-a}, l = g_a with g_b(t) = t^(b-1)/Gamma(b);
* tempered:    k = exp(-g t) g_{1-a},
               l = exp(-g t) g_a + g * (1 conv (g_a exp(-g .)));
* ultraslow:   k(t) = integral of g_b(t) over b in (0,1),
               l(t) = integral of exp(-s t)/(1+s) over s in (0, inf).

The memory derivative d/dt [k conv (u - u0)] is discretized by product
integration on piecewise-constant increments: the weight of increment j
seen from time t_n is the cell average of k(t_n - .) over cell j.  Cell
averages are evaluated through the exact antiderivative of k, so weights
carry quadrature error only through the special functions involved.

A sum-of-exponentials compression of k supports O(1)-per-step history
updates; it is certified a posteriori on a dense grid and is valid on
[delta, T] only, never at the singular origin (the diagonal weight always
uses the exact cell average).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy import special as sp

from .errors import ConfigurationError, DomainError, InputError, ToleranceError
from .special import e1_scaled

__all__ = [
    "KernelPair",
    "ConvolutionWeights",
    "SoECompression",
    "eval_k",
    "eval_l",
    "sonine_residual",
    "conv_weights",
    "soe_compress",
    "lagged_memory",
    "NaiveHistoryState",
    "SoEHistoryState",
]

FRACTIONAL = "fractional"
TEMPERED = "tempered"
ULTRASLOW = "ultraslow"

# Gauss-Legendre rule on (0,1) for the ultra-slow order integrals; the
# integrands are entire in the order variable, so a fixed high-order rule
# reaches ~1e-13 for t in [1e-6, 1e6].
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(160)
_BETA = 0.5 * (_GL_NODES + 1.0)
_BETA_W = 0.5 * _GL_WEIGHTS
_RGAMMA_BETA = sp.rgamma(_BETA)
_RGAMMA_BETA1 = sp.rgamma(_BETA + 1.0)
_SINPI_BETA = np.sin(np.pi * _BETA) / np.pi


def _as_positive_array(t, what="t"):
    arr = np.asarray(t, dtype=float)
    if arr.size and (not np.all(np.isfinite(arr)) or np.any(arr <= 0.0)):
        raise DomainError(f"{what} must be strictly positive and finite")
    return arr


def _ultraslow_k(t: np.ndarray) -> np.ndarray:
    e = np.exp(np.outer(np.log(t), _BETA - 1.0))
    return e @ (_BETA_W * _RGAMMA_BETA)


def _ultraslow_k_antiderivative(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    pos = x > 0
    if np.any(pos):
        e = np.exp(np.outer(np.log(x[pos]), _BETA))
        out[pos] = e @ (_BETA_W * _RGAMMA_BETA1)
    return out


def _ultraslow_soe_density(lam: np.ndarray) -> np.ndarray:
    e = np.exp(np.outer(-np.log(lam), _BETA))
    return e @ (_BETA_W * _SINPI_BETA)


def _ultraslow_k_times_t(t: float) -> float:
    # t * k(t) stays finite down to the underflow threshold, unlike k(t)
    e = np.exp(np.log(t) * _BETA)
    return float(e @ (_BETA_W * _RGAMMA_BETA))


# Taylor coefficients of 1/Gamma at 0, times k!; drives the small-rho series
# of integral_0^1 exp(-b/rho)/Gamma(b) db = sum_k c_k k! rho^(k+1).
def _rgamma_series_factors(n=20):
    import mpmath

    taylor = mpmath.taylor(mpmath.rgamma, 0, n)
    return np.array([float(taylor[k]) * float(mpmath.factorial(k))
                     for k in range(n + 1)])


_RGAMMA_FACTORS = _rgamma_series_factors()


def _ultraslow_kt_over_rho2(rho: float) -> float:
    """(k(tau) * tau) / rho^2 with tau = exp(-1/rho); tends to 1 as rho -> 0."""
    if rho >= 0.03:
        e = np.exp(-_BETA / rho)
        return float(e @ (_BETA_W * _RGAMMA_BETA)) / rho ** 2
    powers = rho ** np.arange(-1.0, len(_RGAMMA_FACTORS) - 1.0)
    return float(_RGAMMA_FACTORS @ powers)


@dataclass(frozen=True)
class KernelPair:
    """A Sonine pair (k, l) with k*l = 1 on (0, inf).

    ``gamma`` is only meaningful for the tempered family; gamma = 0 is
    admitted there and degenerates to the plain fractional pair (useful
    for reduction tests), while the canonical tempered kernel has
    gamma > 0.  ``l_integrability_p`` is stored metadata: an exponent
    p > 1 with l in L^p(0, T).
    """

    family: str
    alpha: float | None = None
    gamma: float = 0.0
    horizon: float = 1.0
    l_integrability_p: float = 2.0

    @classmethod
    def fractional(cls, alpha: float, horizon: float = 1.0) -> "KernelPair":
        cls._check_alpha(alpha)
        cls._check_horizon(horizon)
        p = 0.5 * (1.0 + 1.0 / (1.0 - alpha))
        return cls(FRACTIONAL, alpha=alpha, horizon=horizon, l_integrability_p=p)

    @classmethod
    def tempered(cls, alpha: float, gamma: float, horizon: float = 1.0) -> "KernelPair":
        cls._check_alpha(alpha)
        cls._check_horizon(horizon)
        if not np.isfinite(gamma) or gamma < 0.0:
            raise ConfigurationError(f"tempering rate must be >= 0, got {gamma}")
        p = 0.5 * (1.0 + 1.0 / (1.0 - alpha))
        return cls(TEMPERED, alpha=alpha, gamma=gamma, horizon=horizon,
                   l_integrability_p=p)

    @classmethod
    def ultraslow(cls, horizon: float = 1.0) -> "KernelPair":
        cls._check_horizon(horizon)
        return cls(ULTRASLOW, horizon=horizon, l_integrability_p=2.0)

    @staticmethod
    def _check_alpha(alpha: float):
        if not np.isfinite(alpha) or not 0.0 < alpha < 1.0:
            raise ConfigurationError(f"order must lie strictly in (0,1), got {alpha}")

    @staticmethod
    def _check_horizon(horizon: float):
        if not np.isfinite(horizon) or horizon <= 0.0:
            raise ConfigurationError(f"horizon must be positive, got {horizon}")

    # -- pointwise evaluation -------------------------------------------------

    def k(self, t):
        """Kernel k(t) for t > 0."""
        arr = _as_positive_array(t)
        if self.family == FRACTIONAL:
            out = arr ** (-self.alpha) * sp.rgamma(1.0 - self.alpha)
        elif self.family == TEMPERED:
            out = np.exp(-self.gamma * arr) * arr ** (-self.alpha) \
                * sp.rgamma(1.0 - self.alpha)
        else:
            out = _ultraslow_k(np.atleast_1d(arr))
            out = out.reshape(arr.shape)
        return float(out) if np.isscalar(t) else out

    def l(self, t):
        """Resolvent kernel l(t) for t > 0."""
        arr = _as_positive_array(t)
        if self.family == FRACTIONAL:
            out = arr ** (self.alpha - 1.0) * sp.rgamma(self.alpha)
        elif self.family == TEMPERED:
            out = np.exp(-self.gamma * arr) * arr ** (self.alpha - 1.0) \
                * sp.rgamma(self.alpha)
            if self.gamma > 0.0:
                out = out + self.gamma ** (1.0 - self.alpha) \
                    * sp.gammainc(self.alpha, self.gamma * arr)
        else:
            out = e1_scaled(arr)
        return float(out) if np.isscalar(t) else out

    def k_antiderivative(self, x):
        """K(x) = integral of k over (0, x], for x >= 0."""
        arr = np.asarray(x, dtype=float)
        if arr.size and (not np.all(np.isfinite(arr)) or np.any(arr < 0.0)):
            raise DomainError("antiderivative argument must be >= 0")
        a = self.alpha
        if self.family == FRACTIONAL:
            out = arr ** (1.0 - a) * sp.rgamma(2.0 - a)
        elif self.family == TEMPERED:
            if self.gamma == 0.0:
                out = arr ** (1.0 - a) * sp.rgamma(2.0 - a)
            else:
                out = self.gamma ** (a - 1.0) * sp.gammainc(1.0 - a, self.gamma * arr)
        else:
            out = _ultraslow_k_antiderivative(np.atleast_1d(arr)).reshape(arr.shape)
        return float(out) if np.isscalar(x) else out

    def l_l1_norm(self, T: float | None = None) -> float:
        """Integral of l over (0, T); closed form except ultra-slow."""
        T = self.horizon if T is None else float(T)
        if T <= 0:
            raise DomainError("interval length must be positive")
        a = self.alpha
        if self.family == FRACTIONAL or (self.family == TEMPERED and self.gamma == 0.0):
            return T ** a * sp.rgamma(1.0 + a)
        if self.family == TEMPERED:
            g = self.gamma
            return g ** (-a) * ((1.0 + g * T) * sp.gammainc(a, g * T)
                                - a * sp.gammainc(a + 1.0, g * T))
        val, _ = integrate.quad(e1_scaled, 0.0, T, epsabs=1e-12, epsrel=1e-12,
                                limit=300)
        return val


def eval_k(pair: KernelPair, t):
    """Evaluate k(t); raises DomainError for t <= 0."""
    return pair.k(t)


def eval_l(pair: KernelPair, t):
    """Evaluate l(t); raises DomainError for t <= 0."""
    return pair.l(t)


# -- Sonine certification -----------------------------------------------------


def _quad(f, a, b):
    val, _ = integrate.quad(f, a, b, epsabs=1e-11, epsrel=1e-11, limit=300)
    return val


def _convolution_kl(pair: KernelPair, t: float) -> float:
    """(k conv l)(t) with substitutions taming both endpoint singularities."""
    half = 0.5 * t
    if pair.family in (FRACTIONAL, TEMPERED):
        a = pair.alpha

        def left(sig):
            # s = sig^(1/a) removes the l ~ s^(a-1) singularity at s = 0
            s = sig ** (1.0 / a)
            return pair.l(s) * (sig ** (1.0 / a - 1.0) / a) * pair.k(t - s)

        def right(sig):
            # tau = sig^(1/(1-a)) removes the k ~ tau^(-a) singularity
            tau = sig ** (1.0 / (1.0 - a))
            return pair.k(tau) * (sig ** (1.0 / (1.0 - a) - 1.0) / (1.0 - a)) \
                * pair.l(t - tau)

        return _quad(left, 0.0, half ** a) + _quad(right, 0.0, half ** (1.0 - a))

    # ultra-slow: exponential substitution s = exp(-1/rho) flattens both the
    # logarithmic l-singularity and the 1/(tau log^2 tau) k-singularity
    cut = min(half, 0.25)

    def left(rho):
        s = np.exp(-1.0 / rho)
        if s == 0.0:
            return 0.0
        return pair.l(s) * (s / rho ** 2) * pair.k(t - s)

    def right(rho):
        tau = np.exp(-1.0 / rho) if rho > 0.01 else 0.0
        return _ultraslow_kt_over_rho2(rho) * pair.l(t - tau)

    rho_cut = -1.0 / np.log(cut)
    total = _quad(left, 0.0, rho_cut) + _quad(right, 0.0, rho_cut)
    if cut < half:
        total += _quad(lambda s: pair.k(t - s) * pair.l(s), cut, half)
        total += _quad(lambda tau: pair.k(tau) * pair.l(t - tau), cut, half)
    return total


def sonine_residual(pair: KernelPair, sample_grid) -> float:
    """max over the grid of |(k conv l)(t) - 1|.

    The convolution is evaluated by adaptive quadrature after splitting at
    t/2 and substituting away the endpoint singularities of k and l.
    """
    grid = _as_positive_array(sample_grid, "sample grid")
    residual = 0.0
    for t in np.atleast_1d(grid):
        residual = max(residual, abs(_convolution_kl(pair, float(t)) - 1.0))
    return residual


# -- product-integration weights ----------------------------------------------


@dataclass
class ConvolutionWeights:
    """Discrete memory weights kappa[n][j] on a fixed time grid.

    kappa[n][j] is the average of k(t_n - .) over cell j; rows are
    non-negative and non-decreasing in j because k is non-increasing.
    Uniform grids store only the Toeplitz generator omega with
    kappa[n][j] = omega[n-j].
    """

    pair: KernelPair
    nodes: np.ndarray
    uniform: bool
    _omega: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_steps(self) -> int:
        return len(self.nodes) - 1

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.nodes)

    def row(self, n: int) -> np.ndarray:
        """Weights kappa[n][1..n] as an array of length n."""
        if not 1 <= n <= self.n_steps:
            raise InputError(f"row index {n} outside 1..{self.n_steps}")
        if self.uniform:
            return self._omega[n - 1 :: -1]
        tn = self.nodes[n]
        prim = self.pair.k_antiderivative(tn - self.nodes[: n + 1])
        return (prim[:-1] - prim[1:]) / self.dt[:n]

    def diagonal(self, n: int) -> float:
        if self.uniform:
            return float(self._omega[0])
        return float(self.row(n)[-1])

    def consistency_error(self) -> float:
        """max_n |sum_j kappa[n][j] dt_j - K(t_n)|; zero up to rounding."""
        err = 0.0
        prim = self.pair.k_antiderivative(self.nodes[1:])
        for n in range(1, self.n_steps + 1):
            s = float(self.row(n) @ self.dt[:n])
            err = max(err, abs(s - prim[n - 1]))
        return err

    def to_csv(self, path):
        """Dump (n, j, kappa) triples for audit."""
        with open(path, "w") as fh:
            fh.write("n,j,kappa\n")
            for n in range(1, self.n_steps + 1):
                row = self.row(n)
                for j in range(1, n + 1):
                    fh.write(f"{n},{j},{row[j - 1]!r}\n")


def conv_weights(pair: KernelPair, time_grid) -> ConvolutionWeights:
    """Product-integration weights for d/dt [k conv (u - u0)] on the grid.

    The grid must be strictly increasing and start at 0.
    """
    nodes = np.asarray(time_grid, dtype=float)
    if nodes.ndim != 1 or len(nodes) < 2:
        raise ConfigurationError("time grid needs at least nodes t0=0 and t1")
    if nodes[0] != 0.0:
        raise ConfigurationError("time grid must start at t0 = 0")
    dt = np.diff(nodes)
    if np.any(dt <= 0):
        raise ConfigurationError("time grid must be strictly increasing")
    uniform = bool(np.allclose(dt, dt[0], rtol=1e-12, atol=0.0))
    omega = None
    if uniform:
        h = dt[0]
        prim = pair.k_antiderivative(nodes - nodes[0])
        omega = (prim[1:] - prim[:-1]) / h
        omega.setflags(write=False)  # rows are views of this generator
    return ConvolutionWeights(pair=pair, nodes=nodes, uniform=uniform, _omega=omega)


def lagged_memory(weights: ConvolutionWeights, increments: np.ndarray, n: int):
    """Sum of kappa[n][j] * increment[j] over j < n (the lagged memory part).

    ``increments`` holds rows 1..N with increments[j] = u_j - u_{j-1};
    row 0 is ignored.  n = 1 returns zeros (empty sum).
    """
    if increments.shape[0] < n:
        raise InputError(f"history holds {increments.shape[0] - 1} increments, "
                         f"need steps < {n}")
    if n == 1:
        return np.zeros(increments.shape[1:])
    return weights.row(n)[: n - 1] @ increments[1:n]


class NaiveHistoryState:
    """Memory-term evaluator that stores all increments (O(n) per step)."""

    def __init__(self, weights: ConvolutionWeights, n_dofs: int):
        self.weights = weights
        self.increments = np.zeros((weights.n_steps + 1, n_dofs))
        self._filled = 0

    def push(self, n: int, increment: np.ndarray):
        if n != self._filled + 1:
            raise InputError(f"increments must be pushed in order, expected "
                             f"{self._filled + 1}, got {n}")
        self.increments[n] = increment
        self._filled = n

    def lagged(self, n: int) -> np.ndarray:
        if self._filled < n - 1:
            raise InputError(f"missing history step {self._filled + 1}")
        if n == 1:
            return np.zeros(self.increments.shape[1])
        return self.weights.row(n)[: n - 1] @ self.increments[1:n]


class SoEHistoryState:
    """Memory-term evaluator driven by an exponential-sum compression.

    Owns per-mode running sums; one stepper instance must own the state
    exclusively and call lagged(1), push(1, .), lagged(2), ... in order.
    """

    def __init__(self, compression: "SoECompression", time_nodes: np.ndarray,
                 n_dofs: int):
        self.compression = compression
        self.nodes = np.asarray(time_nodes, dtype=float)
        self.rates = compression.rates
        self.mode_weights = compression.weights
        self.state = np.zeros((len(self.rates), n_dofs))
        self._dt = np.diff(self.nodes)
        uniform = bool(np.allclose(self._dt, self._dt[0], rtol=1e-12, atol=0.0))
        self._decay_cache = np.exp(-np.outer([self._dt[0]], self.rates))[0] \
            if uniform else None
        self._factor_cache = self._cell_factor(self._dt[0]) if uniform else None
        self._pending = None
        self._step = 0

    def _cell_factor(self, dt: float) -> np.ndarray:
        # (1 - exp(-lam dt)) / (lam dt), safe as lam dt -> 0
        x = self.rates * dt
        return np.where(x > 1e-12, -np.expm1(-x) / np.where(x > 0, x, 1.0), 1.0)

    def push(self, n: int, increment: np.ndarray):
        if n != self._step:
            raise InputError(f"increment {n} pushed out of order (at step {self._step})")
        self._pending = np.asarray(increment, dtype=float)

    def lagged(self, n: int) -> np.ndarray:
        if n != self._step + 1:
            raise InputError(f"lagged({n}) called out of order (at step {self._step})")
        if n >= 2:
            if self._pending is None:
                raise InputError(f"missing history step {n - 1}")
            factor = self._factor_cache if self._factor_cache is not None \
                else self._cell_factor(self._dt[n - 2])
            self.state += factor[:, None] * self._pending[None, :]
        decay = self._decay_cache if self._decay_cache is not None \
            else np.exp(-self.rates * self._dt[n - 1])
        self.state *= decay[:, None]
        self._pending = None
        self._step = n
        return self.mode_weights @ self.state


# -- sum-of-exponentials compression -------------------------------------------


@dataclass(frozen=True)
class SoECompression:
    """k(t) ~ sum_i w_i exp(-lam_i t), certified on [delta, horizon]."""

    weights: np.ndarray
    rates: np.ndarray
    certified_tol: float
    requested_tol: float
    delta: float
    horizon: float

    @property
    def n_modes(self) -> int:
        return len(self.rates)

    def evaluate(self, t):
        arr = _as_positive_array(t)
        out = np.exp(-np.outer(np.atleast_1d(arr), self.rates)) @ self.weights
        return float(out[0]) if np.isscalar(t) else out.reshape(arr.shape)


def _soe_node_weight(pair: KernelPair, x: float, h_step: float) -> tuple[float, float]:
    """One trapezoid node of the rate integral under lam = exp(x - exp(-x)).

    The substitution makes the integrand decay double-exponentially toward
    slow rates, so the node ladder can simply be walked down until weights
    fall below a floor; no boundary correction or tail mode is needed.
    """
    log_lam = x - np.exp(-x)
    jac = 1.0 + np.exp(-x)
    if pair.family == ULTRASLOW:
        # lam * rho(lam) evaluated in log space to dodge underflow of lam
        vals = np.exp((1.0 - _BETA) * log_lam)
        lam_rho = float((_BETA_W * _SINPI_BETA) @ vals)
        weight = h_step * jac * lam_rho
    else:
        a = pair.alpha
        weight = h_step * jac * np.sin(np.pi * a) / np.pi \
            * np.exp(a * log_lam)
    return weight, np.exp(log_lam)


def _build_soe(pair: KernelPair, tol: float, delta: float, horizon: float,
               h_step: float, lam_cap_log: float, max_nodes: int = 4000):
    x = lam_cap_log - np.log(delta)
    w_floor = 1e-4 * tol
    weights, rates = [], []
    quiet = 0
    while len(weights) < max_nodes:
        wt, lam = _soe_node_weight(pair, x, h_step)
        if lam * horizon < 1.0 and wt < w_floor:
            quiet += 1
            if quiet >= 3:
                break
        else:
            quiet = 0
        if wt > 0.0:
            weights.append(wt)
            rates.append(max(lam, 1e-300))
        x -= h_step
    return np.array(weights[::-1]), np.array(rates[::-1])


def _certify_soe(pair: KernelPair, w, lam, delta, horizon, n_check=4000):
    t = np.geomspace(delta, horizon, n_check)
    kt = pair.k(t)
    approx = np.exp(-np.outer(t, lam)) @ w
    return float(np.max(np.abs(approx - kt) / np.maximum(1.0, kt)))


def soe_compress(pair: KernelPair, tol: float, delta: float,
                 horizon: float | None = None, max_modes: int = 800) -> SoECompression:
    """Build a certified exponential-sum approximation of k on [delta, T].

    The construction quadratures the inverse-Laplace representation of k
    over log-spaced rates; the tempered family reuses the fractional
    construction with every rate shifted by the tempering parameter.
    Raises ToleranceError with the achieved error if the mode cap is hit.
    """
    T = pair.horizon if horizon is None else float(horizon)
    if tol <= 0.0:
        raise ConfigurationError(f"tolerance must be positive, got {tol}")
    if not 0.0 < delta < T:
        raise ConfigurationError(f"need 0 < delta < horizon, got delta={delta}, "
                                 f"horizon={T}")

    base = pair
    shift = 0.0
    if pair.family == TEMPERED and pair.gamma > 0.0:
        # exp(-g t) multiplies every exponential: same weights, shifted rates
        base = KernelPair.fractional(pair.alpha, horizon=T)
        shift = pair.gamma

    h0 = 8.0 / np.log(30.0 / tol)
    cap0 = np.log(1.0 / tol) + 25.0
    best = np.inf
    for attempt in range(9):
        h_step = h0 * 0.8 ** attempt
        cap = cap0 + 8.0 * attempt
        w, lam = _build_soe(base, tol, delta, T, h_step, cap, max_nodes=max_modes + 1)
        if len(lam) > max_modes:
            raise ToleranceError(
                f"exponential-sum tolerance {tol:.2e} infeasible within "
                f"{max_modes} modes; achieved {best:.3e}", achieved=best)
        achieved = _certify_soe(pair, w, lam + shift, delta, T)
        best = min(best, achieved)
        if achieved <= tol:
            return SoECompression(weights=w, rates=lam + shift,
                                  certified_tol=achieved, requested_tol=tol,
                                  delta=delta, horizon=T)
    raise ToleranceError(
        f"exponential-sum tolerance {tol:.2e} not reached after refinement; "
        f"achieved {best:.3e}", achieved=best)
