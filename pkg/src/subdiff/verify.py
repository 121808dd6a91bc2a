"""Numerical checks of the inequalities the solution family must satisfy.

Every check recomputes both sides of its inequality from stored histories
with the same discrete operators that produced them, reports the slack
rhs - lhs, and never mutates the inputs.  The entropy inequality is
assembled in the time-derivative form (the time cutoff multiplies the
discrete memory derivative of the entropy flux), which is the
integration-by-parts twin of the cutoff-derivative form given that the
cutoff vanishes at the final time and the flux vanishes at time zero.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError, InputError
from .kernels import KernelPair, conv_weights
from .nonlinearity import EntropyTestFunction
from .space import (l1_norm, l1_norm_spacetime, negative_part_l1,
                    positive_part_l1)
from .special import mittag_leffler_neg
from .stepper import SolutionHistory, TimeGrid

__all__ = [
    "KernelSplit",
    "CheckRecord",
    "VerificationReport",
    "contraction_check",
    "entropy_contraction_check",
    "weak_residual",
    "entropy_residual",
    "EntropyTerms",
    "entropy_battery",
    "scalar_relaxation",
    "RelaxationResult",
    "discretization_allowance",
]

#: coefficient of the (h + dt)-proportional inequality budget; scaled by the
#: inequality's own right-hand side so the budget is homogeneous in the data
ALLOWANCE_COEFF = 0.1


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


@dataclass(frozen=True)
class KernelSplit:
    """Clamp split k = k1 + k2 at level k(delta): k2 bounded, k1 supported
    near zero.

    Both parts inherit non-negativity and monotonicity from k, and
    k2(0+) = k(delta) is finite, which is what makes the pointwise memory
    derivative of the k2 part evaluable.
    """

    pair: KernelPair
    delta: float
    k_at_delta: float = field(init=False)

    def __post_init__(self):
        if self.delta <= 0.0:
            raise ConfigurationError(f"split level delta must be positive, got "
                                     f"{self.delta}")
        object.__setattr__(self, "k_at_delta", float(self.pair.k(self.delta)))

    @property
    def k2_zero(self) -> float:
        """k2(0+), the finite cap."""
        return self.k_at_delta

    def k1(self, t):
        t = np.asarray(t, dtype=float)
        out = np.where(t < self.delta,
                       np.maximum(self.pair.k(np.maximum(t, 1e-300)) - self.k_at_delta, 0.0),
                       0.0)
        return out if out.ndim else float(out)

    def k2(self, t):
        t = np.asarray(t, dtype=float)
        out = np.minimum(self.pair.k(np.maximum(t, 1e-300)), self.k_at_delta)
        return out if out.ndim else float(out)

    def k2_at_zero_or(self, t):
        """k2 extended by its finite limit at t = 0."""
        t = np.asarray(t, dtype=float)
        out = np.where(t <= 0.0, self.k_at_delta, self.k2(np.maximum(t, 1e-300)))
        return out if out.ndim else float(out)

    def k1_antiderivative(self, x):
        x = np.asarray(x, dtype=float)
        xc = np.minimum(x, self.delta)
        out = self.pair.k_antiderivative(xc) - self.k_at_delta * xc
        return out if out.ndim else float(out)

    def split_error(self, grid) -> float:
        """max over the grid of |k1 + k2 - k|; exact up to rounding."""
        grid = np.asarray(grid, dtype=float)
        return float(np.max(np.abs(self.k1(grid) + self.k2(grid)
                                   - self.pair.k(grid))))


@dataclass(frozen=True)
class CheckRecord:
    name: str
    lhs: float
    rhs: float
    tolerance: float

    def __post_init__(self):
        for key in ("lhs", "rhs", "tolerance"):
            object.__setattr__(self, key, float(getattr(self, key)))

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return bool(self.lhs <= self.rhs + self.tolerance)

    def to_dict(self):
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs,
                "tolerance": self.tolerance, "slack": self.slack,
                "passed": self.passed}


@dataclass
class VerificationReport:
    checks: list
    metadata: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def extend(self, other: "VerificationReport"):
        self.checks.extend(other.checks)
        self.metadata.update(other.metadata)

    def to_dict(self):
        return {"passed": self.passed, "metadata": self.metadata,
                "checks": [c.to_dict() for c in self.checks]}

    def to_json(self, indent=2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True,
                          default=_jsonable)

    def summary_lines(self):
        lines = []
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            lines.append(f"[{status}] {c.name}: lhs={c.lhs:.6e} rhs={c.rhs:.6e} "
                         f"slack={c.slack:.3e} tol={c.tolerance:.3e}")
        return lines


def _require_comparable(h1: SolutionHistory, h2: SolutionHistory):
    if h1.problem is not h2.problem and (
            h1.problem.dim != h2.problem.dim
            or h1.problem.cells != h2.problem.cells
            or h1.problem.lengths != h2.problem.lengths):
        raise InputError("histories live on different meshes")
    if h1.grid.n_steps != h2.grid.n_steps or \
            not np.allclose(h1.grid.nodes, h2.grid.nodes):
        raise InputError("histories live on different time grids")


def discretization_allowance(history: SolutionHistory, rhs: float,
                             coeff: float = ALLOWANCE_COEFF) -> float:
    """Inequality budget coeff * (h + dt_max) * rhs for refinement studies.

    The budget halves under simultaneous mesh and step halving, so a
    two-level check is falsifiable: measured violations must shrink with
    the budget.
    """
    h = max(history.problem.spacings)
    dt = float(np.max(history.grid.dt))
    return coeff * (h + dt) * rhs


def contraction_check(h1: SolutionHistory, h2: SolutionHistory,
                      base_tolerance: float = 1e-6,
                      allowance_coeff: float = ALLOWANCE_COEFF) -> VerificationReport:
    """Data-stability inequalities in all three flavours (absolute,
    positive part, negative part).

    lhs is the space-time L1 norm of u1 - u2; rhs combines the initial-data
    gap (weight T) and the forcing gap (weight the L1 norm of l).
    """
    _require_comparable(h1, h2)
    problem = h1.problem
    dt = h1.grid.dt
    T = h1.grid.horizon
    l_l1 = h1.pair.l_l1_norm(T)
    du = h1.u - h2.u
    du0 = h1.u0 - h2.u0
    df = h1.f_samples - h2.f_samples

    checks = []
    parts = [("contraction_abs", "abs", l1_norm(problem, np.abs(du0))),
             ("contraction_pos", "pos", positive_part_l1(problem, du0)),
             ("contraction_neg", "neg", negative_part_l1(problem, du0))]
    allowances = {}
    for name, part, initial_gap in parts:
        lhs = l1_norm_spacetime(problem, dt, du, part)
        rhs = T * initial_gap + l_l1 * l1_norm_spacetime(problem, dt, df, part)
        allowance = discretization_allowance(h1, rhs, allowance_coeff)
        allowances[name] = allowance
        checks.append(CheckRecord(name=name, lhs=lhs, rhs=rhs,
                                  tolerance=base_tolerance + allowance))
    meta = {"l_l1_norm": l_l1, "horizon": T,
            "allowance_coeff": allowance_coeff, "allowances": allowances,
            "spacing": max(problem.spacings),
            "dt_max": float(np.max(dt))}
    return VerificationReport(checks=checks, metadata=meta)


def entropy_contraction_check(h1: SolutionHistory, h2: SolutionHistory,
                              base_tolerance: float = 1e-6,
                              allowance_coeff: float = ALLOWANCE_COEFF
                              ) -> VerificationReport:
    """Stability of b(v) = phi^{-1}(v) recovered from the stored v fields.

    b(v_i) equals u_i by construction, so the lhs here must agree with the
    absolute contraction lhs; the report records both the inequality and
    the recovery identity.
    """
    _require_comparable(h1, h2)
    problem = h1.problem
    dt = h1.grid.dt
    T = h1.grid.horizon
    l_l1 = h1.pair.l_l1_norm(T)
    b1 = h1.profile.inverse(h1.v)
    b2 = h2.profile.inverse(h2.v)
    lhs = l1_norm_spacetime(problem, dt, b1 - b2)
    rhs = T * l1_norm(problem, h1.u0 - h2.u0) \
        + l_l1 * l1_norm_spacetime(problem, dt, h1.f_samples - h2.f_samples)
    allowance = discretization_allowance(h1, rhs, allowance_coeff)
    recovery = max(float(np.max(np.abs(b1 - h1.u))),
                   float(np.max(np.abs(b2 - h2.u))))
    checks = [
        CheckRecord(name="entropy_contraction", lhs=lhs, rhs=rhs,
                    tolerance=base_tolerance + allowance),
        CheckRecord(name="inverse_recovery_identity", lhs=recovery, rhs=0.0,
                    tolerance=1e-10 * max(1.0, float(np.max(np.abs(h1.u))))),
    ]
    return VerificationReport(checks=checks,
                              metadata={"l_l1_norm": l_l1,
                                        "allowance": allowance})


def _memory_rows(history: SolutionHistory):
    weights = conv_weights(history.pair, history.grid.nodes)
    increments = np.diff(history.u, axis=0)
    return weights, increments


def weak_residual(history: SolutionHistory, eta) -> float:
    """|space-time weak form tested against eta| with the solver's operators.

    eta may be a single interior field (constant in time) or one field per
    step (rows 1..N); it is interior-only, hence boundary-compatible by
    construction.
    """
    problem = history.problem
    N = history.grid.n_steps
    ni = problem.n_interior
    eta = np.asarray(eta, dtype=float)
    if eta.shape == (ni,):
        eta_rows = np.tile(eta, (N, 1))
    elif eta.shape == (N, ni) or eta.shape == (N + 1, ni):
        eta_rows = eta[-N:]
    else:
        raise InputError(f"test field shape {eta.shape} incompatible with "
                         f"({ni},) nodes and {N} steps")
    if not np.all(np.isfinite(eta_rows)):
        raise InputError("test field must be bounded")

    from .space import assemble_stiffness
    weights, increments = _memory_rows(history)
    mass = problem.lumped_mass
    dt = history.grid.dt
    static = not problem.time_dependent_coefficient
    K = assemble_stiffness(problem, 0.0) if static else None
    total = 0.0
    for n in range(1, N + 1):
        if not static:
            K = assemble_stiffness(problem, history.grid.nodes[n])
        mem = weights.row(n) @ increments[:n]
        resid = mass * (mem - history.f_samples[n]) + K @ history.v[n]
        total += dt[n - 1] * float(eta_rows[n - 1] @ resid)
    return abs(total)


@dataclass(frozen=True)
class EntropyTerms:
    """Signed pieces of the entropy inequality; residual = lhs - rhs <= 0
    certifies the triple."""

    flux_memory: float       # k1 part, tested on the entropy flux
    bounded_memory: float    # k2 part, pointwise derivative vs S
    diffusion: float
    forcing: float
    k2_cap_term: float       # k2(0+) (b(v) - b(v0)) contribution
    k2_stieltjes_term: float # remaining Stieltjes-in-k2 contribution

    @property
    def residual(self) -> float:
        return self.flux_memory + self.bounded_memory + self.diffusion \
            - self.forcing


_GL8_NODES, _GL8_WEIGHTS = np.polynomial.legendre.leggauss(8)


def _flux_increments(history: SolutionHistory, S: EntropyTestFunction,
                     psi: np.ndarray) -> np.ndarray:
    """Increments of G_n = integral_{u0}^{u_n} S(phi(w) - psi) dw per node.

    The substitution through b turns the Stieltjes integral in v into a
    smooth integral in w = b(sigma), evaluated per step by Gauss points on
    [u_{n-1}, u_n]; the porous-medium degeneracy is integrable in w and
    needs no special casing.
    """
    u = history.u
    phi = history.profile.phi
    mid = 0.5 * (u[1:] + u[:-1])
    half = 0.5 * (u[1:] - u[:-1])
    out = np.zeros_like(mid)
    for node, wt in zip(_GL8_NODES, _GL8_WEIGHTS):
        w = mid + half * node
        out += wt * S(phi(w) - psi[None, :])
    return half * out


def entropy_residual(history: SolutionHistory, S: EntropyTestFunction,
                     psi, zeta, split: KernelSplit,
                     return_terms: bool = False):
    """lhs - rhs of the entropy inequality for one test triple and split.

    zeta must be non-negative with zeta(T) = 0; psi is a bounded interior
    field (boundary-zero by representation).  A result <= tol certifies
    the inequality for this (S, psi, zeta, split).
    """
    problem = history.problem
    grid = history.grid
    N = grid.n_steps
    ni = problem.n_interior
    if split.pair != history.pair:
        raise InputError("kernel split built for a different kernel pair")
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (ni,) or not np.all(np.isfinite(psi)):
        raise InputError("psi must be a bounded interior field")
    zeta_vals = np.asarray([zeta(t) for t in grid.nodes], dtype=float) \
        if callable(zeta) else np.asarray(zeta, dtype=float)
    if zeta_vals.shape != (N + 1,):
        raise InputError(f"zeta must provide {N + 1} node values")
    if np.any(zeta_vals < -1e-14):
        raise InputError("zeta must be non-negative")
    scale_z = max(1.0, float(np.max(np.abs(zeta_vals))))
    if abs(zeta_vals[-1]) > 1e-12 * scale_z:
        raise InputError("zeta must vanish at the final time")

    dt = grid.dt
    mass = problem.lumped_mass
    u = history.u
    v = history.v

    # k1 weights via the clamp antiderivative (product integration)
    tn = grid.nodes
    dG = _flux_increments(history, S, psi)
    if not np.all(np.isfinite(dG)):
        step, node = np.argwhere(~np.isfinite(dG))[0]
        raise DomainError(f"entropy flux quadrature produced a non-finite "
                          f"value at step {step + 1}, node {node}")
    flux_memory = 0.0
    for n in range(1, N + 1):
        prim = split.k1_antiderivative(tn[n] - tn[: n + 1])
        row1 = (prim[:-1] - prim[1:]) / dt[:n]
        mem1 = row1 @ dG[:n]
        flux_memory += dt[n - 1] * zeta_vals[n] * float(mass @ mem1)

    # k2 part: exact pointwise derivative of the piecewise-constant history,
    # reported through its k2(0+)/Stieltjes splitting
    w_inc = np.diff(u, axis=0)                       # b(v) increments = u incs
    L2 = np.zeros((N, N))
    for n in range(1, N + 1):
        L2[n - 1, :n] = split.k2_at_zero_or(tn[n] - tn[:n])
    mem2 = L2 @ w_inc
    s_vals = S(v[1:] - psi[None, :])
    weighted = dt * zeta_vals[1:]
    bounded_memory = float(np.einsum("n,ni,ni->", weighted, s_vals, mem2 * mass))
    cap = split.k2_zero
    dev = u[1:] - u[0][None, :]
    k2_cap_term = float(np.einsum("n,ni,ni->", weighted, s_vals,
                                  cap * dev * mass))
    k2_stieltjes_term = bounded_memory - k2_cap_term

    from .space import assemble_stiffness
    static = not problem.time_dependent_coefficient
    K = assemble_stiffness(problem, 0.0) if static else None
    diffusion = 0.0
    for n in range(1, N + 1):
        if not static:
            K = assemble_stiffness(problem, tn[n])
        diffusion += dt[n - 1] * zeta_vals[n] * float(s_vals[n - 1] @ (K @ v[n]))

    forcing = float(np.einsum("n,ni,ni->", weighted, s_vals,
                              history.f_samples[1:] * mass))

    terms = EntropyTerms(flux_memory=flux_memory, bounded_memory=bounded_memory,
                         diffusion=diffusion, forcing=forcing,
                         k2_cap_term=k2_cap_term,
                         k2_stieltjes_term=k2_stieltjes_term)
    return terms if return_terms else terms.residual


def entropy_battery(history: SolutionHistory, shapes, psi_fields, zetas,
                    deltas, tol_coeff: float = 1e-4) -> VerificationReport:
    """Run the entropy inequality over the full test battery.

    Tolerance is tol_coeff * (||f||_1 + ||u0||_1), homogeneous of degree
    one in the data like the inequality itself.
    """
    problem = history.problem
    scale = history.forcing_l1() + l1_norm(problem, history.u0)
    tol = tol_coeff * scale
    checks = []
    slack_by_delta = {}
    for d_i, delta in enumerate(deltas):
        split = KernelSplit(history.pair, float(delta))
        worst = -np.inf
        for s_i, S in enumerate(shapes):
            for p_i, psi in enumerate(psi_fields):
                for z_i, zeta in enumerate(zetas):
                    r = entropy_residual(history, S, psi, zeta, split)
                    worst = max(worst, r)
                    checks.append(CheckRecord(
                        name=f"entropy[S{s_i},psi{p_i},zeta{z_i},delta{d_i}]",
                        lhs=r, rhs=0.0, tolerance=tol))
        slack_by_delta[float(delta)] = worst
    meta = {"tolerance": tol, "scale": scale, "tol_coeff": tol_coeff,
            "worst_residual_by_delta": slack_by_delta}
    return VerificationReport(checks=checks, metadata=meta)


@dataclass(frozen=True)
class RelaxationResult:
    grid: TimeGrid
    values: np.ndarray          # u_0 .. u_N
    oracle: np.ndarray | None   # closed-form values at t_1..t_N, if available
    max_rel_error: float | None

    @property
    def final_value(self) -> float:
        return float(self.values[-1])


def scalar_relaxation(pair: KernelPair, lam: float, grid: TimeGrid,
                      u0: float = 1.0) -> RelaxationResult:
    """Solve the scalar memory relaxation d/dt[k conv (u-u0)] + lam u = 0.

    For the fractional family the solution is compared against the
    Mittag-Leffler law u0 E_a(-lam t^a).
    """
    if lam < 0.0:
        raise DomainError(f"relaxation rate must be >= 0, got {lam}")
    weights = conv_weights(pair, grid.nodes)
    N = grid.n_steps
    y = np.zeros(N + 1)
    y[0] = u0
    inc = np.zeros(N + 1)
    for n in range(1, N + 1):
        row = weights.row(n)
        lag = row[: n - 1] @ inc[1:n] if n > 1 else 0.0
        y[n] = (row[-1] * y[n - 1] - lag) / (row[-1] + lam)
        inc[n] = y[n] - y[n - 1]
    oracle = None
    max_rel = None
    if pair.family == "fractional":
        oracle = u0 * mittag_leffler_neg(pair.alpha,
                                         lam * grid.nodes[1:] ** pair.alpha)
        denom = np.maximum(np.abs(oracle), 1e-300)
        max_rel = float(np.max(np.abs(y[1:] - oracle) / denom))
    return RelaxationResult(grid=grid, values=y, oracle=oracle,
                            max_rel_error=max_rel)
