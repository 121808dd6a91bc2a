"""Implicit time integration of the memory-diffusion balance.

At each step the scheme solves, over interior nodes,

    M [ kappa_nn (u_n - u_{n-1}) + lagged_n ] + K(t_n) phi(u_n) = M f_n,

where kappa are the product-integration weights of the kernel module, M is
the lumped mass, and K the stiffness of -div(A grad .).  The nonlinear
solve is damped Newton with a diagonal Jacobian regularization that covers
the degenerate porous-medium origin.  Linear problems with a
time-independent operator on a uniform grid reuse one LU factorization.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as sla

from .errors import ConfigurationError, InputError, StepFailureError
from .kernels import (KernelPair, NaiveHistoryState, SoEHistoryState,
                      conv_weights, soe_compress)
from .nonlinearity import IDENTITY, NonlinearityProfile, truncate
from .space import (SpatialProblem, as_field, assemble_stiffness,
                    l1_norm_spacetime, unit_stiffness)

__all__ = [
    "TimeGrid",
    "NewtonOptions",
    "SolutionHistory",
    "solve",
    "newton_step",
    "energy_audit",
    "EnergyAudit",
    "sample_forcing",
]


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing time nodes t_0 = 0 < ... < t_N = T."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or len(nodes) < 2:
            raise ConfigurationError("time grid needs at least one step")
        if nodes[0] != 0.0 or np.any(np.diff(nodes) <= 0.0):
            raise ConfigurationError("time nodes must start at 0 and increase")
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform(cls, horizon: float, n_steps: int) -> "TimeGrid":
        if horizon <= 0 or n_steps < 1:
            raise ConfigurationError("need horizon > 0 and n_steps >= 1")
        return cls(np.linspace(0.0, horizon, n_steps + 1))

    @classmethod
    def graded(cls, horizon: float, n_steps: int, exponent: float) -> "TimeGrid":
        """Nodes T (n/N)^r, clustering at t = 0 to resolve the memory kink."""
        if horizon <= 0 or n_steps < 1 or exponent < 1.0:
            raise ConfigurationError("need horizon > 0, n_steps >= 1, exponent >= 1")
        frac = np.arange(n_steps + 1) / n_steps
        return cls(horizon * frac ** exponent)

    @property
    def horizon(self) -> float:
        return float(self.nodes[-1])

    @property
    def n_steps(self) -> int:
        return len(self.nodes) - 1

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def uniform_spacing(self) -> bool:
        d = self.dt
        return bool(np.allclose(d, d[0], rtol=1e-12, atol=0.0))


@dataclass(frozen=True)
class NewtonOptions:
    tol: float = 1e-10
    max_iter: int = 50
    max_backtracks: int = 30
    armijo: float = 1e-4
    eps_reg_base: float = 1e-8
    eps_reg_cap: float = 1e-2


@dataclass
class SolutionHistory:
    """Per-step nodal values with solve metadata and diagnostics."""

    grid: TimeGrid
    problem: SpatialProblem
    pair: KernelPair
    profile: NonlinearityProfile
    u: np.ndarray              # (N+1, n_interior)
    v: np.ndarray              # phi(u), same shape
    f_samples: np.ndarray      # (N+1, n_interior); row 0 unused by the scheme
    u0: np.ndarray
    newton_iterations: list
    newton_residuals: list
    memory_path: str
    newton_tol: float
    wall_time: float = 0.0

    @property
    def n_steps(self) -> int:
        return self.grid.n_steps

    def forcing_l1(self) -> float:
        return l1_norm_spacetime(self.problem, self.grid.dt, self.f_samples)


def sample_forcing(problem: SpatialProblem, grid: TimeGrid, f) -> np.ndarray:
    """Normalize forcing data to an (N+1, n_interior) array of time slices."""
    ni = problem.n_interior
    N = grid.n_steps
    if f is None:
        return np.zeros((N + 1, ni))
    if callable(f):
        out = np.empty((N + 1, ni))
        pts = problem.interior_coords
        for n, t in enumerate(grid.nodes):
            out[n] = np.broadcast_to(np.asarray(f(t, pts), dtype=float), (ni,))
        return out
    arr = np.asarray(f, dtype=float)
    if arr.ndim == 1 and arr.shape == (ni,):
        return np.tile(arr, (N + 1, 1))
    if arr.shape == (N + 1, ni):
        return arr.copy()
    raise InputError(f"forcing shape {arr.shape} not understood; want ({ni},) "
                     f"or ({N + 1}, {ni})")


def newton_step(w, u_prev, lagged, f_n, kappa_nn, mass, stiffness, profile,
                eps_reg, options: NewtonOptions):
    """One damped Newton update of the step equation.

    Solves J d = -F with J = kappa_nn M + K diag(phi'(w) + eps_reg) and
    backtracks (factor 1/2) until the residual norm satisfies the Armijo
    decrease test.  Returns (w_new, F_new, norm_new, backtracks).
    """
    F = mass * (kappa_nn * (w - u_prev) + lagged - f_n) + stiffness @ profile.phi(w)
    norm = float(np.max(np.abs(F)))
    slope = profile.phi_prime(w) + eps_reg
    J = sparse.diags(kappa_nn * mass) + stiffness @ sparse.diags(slope)
    d = sla.spsolve(J.tocsc(), -F)
    if not np.all(np.isfinite(d)):
        raise np.linalg.LinAlgError("singular step Jacobian")
    lam = 1.0
    for bt in range(options.max_backtracks + 1):
        w_new = w + lam * d
        F_new = mass * (kappa_nn * (w_new - u_prev) + lagged - f_n) \
            + stiffness @ profile.phi(w_new)
        norm_new = float(np.max(np.abs(F_new)))
        if np.isfinite(norm_new) and norm_new <= (1.0 - options.armijo * lam) * norm:
            return w_new, F_new, norm_new, bt
        lam *= 0.5
    return w, F, norm, -1  # damping exhausted


def _solve_step(n, u_prev, lagged, f_n, kappa_nn, mass, K, profile,
                options: NewtonOptions, scale: float):
    """Newton loop for one time step; returns (u_n, iterations, residual)."""
    w = u_prev.copy()
    eps_reg = options.eps_reg_base * max(1.0, float(np.max(np.abs(w))))
    tol = options.tol * scale
    F = mass * (kappa_nn * (w - u_prev) + lagged - f_n) + K @ profile.phi(w)
    norm = float(np.max(np.abs(F)))
    for it in range(1, options.max_iter + 1):
        if norm <= tol:
            return w, it - 1, norm
        try:
            w2, F, norm2, bt = newton_step(w, u_prev, lagged, f_n, kappa_nn,
                                           mass, K, profile, eps_reg, options)
        except np.linalg.LinAlgError:
            eps_reg *= 10.0
            if eps_reg > options.eps_reg_cap:
                raise StepFailureError(
                    f"step {n}: Jacobian regularization cap reached")
            continue
        if bt < 0:
            eps_reg *= 10.0
            if eps_reg > options.eps_reg_cap:
                raise StepFailureError(f"step {n}: Newton damping exhausted")
            continue
        w = w2
        norm = norm2
        if not np.all(np.isfinite(w)):
            raise StepFailureError(f"step {n}: non-finite iterate")
    if norm <= tol:
        return w, options.max_iter, norm
    raise StepFailureError(f"step {n}: Newton stalled at residual {norm:.3e} "
                           f"(tol {tol:.3e})")


def solve(problem: SpatialProblem, pair: KernelPair, profile: NonlinearityProfile,
          grid: TimeGrid, u0, f=None, *, newton: NewtonOptions | None = None,
          memory: str = "naive", soe_tol: float = 1e-8) -> SolutionHistory:
    """Integrate the memory-diffusion problem over the grid.

    ``memory`` selects the history evaluator: "naive" keeps all increments,
    "soe" uses a certified exponential-sum recurrence (the diagonal weight
    stays exact either way).
    """
    if memory not in ("naive", "soe"):
        raise ConfigurationError(f"memory path must be 'naive' or 'soe', got {memory!r}")
    options = newton or NewtonOptions()
    u0 = as_field(problem, u0)
    f_samples = sample_forcing(problem, grid, f)
    weights = conv_weights(pair, grid.nodes)
    ni = problem.n_interior
    N = grid.n_steps
    mass = problem.lumped_mass

    if memory == "naive":
        state = NaiveHistoryState(weights, ni)
    else:
        delta = float(np.min(grid.dt))
        compression = soe_compress(pair, soe_tol, delta, grid.horizon)
        state = SoEHistoryState(compression, grid.nodes, ni)

    static_operator = not problem.time_dependent_coefficient
    K = assemble_stiffness(problem, 0.0) if static_operator else None
    linear = profile.kind == IDENTITY
    reuse_factorization = static_operator and grid.uniform_spacing
    lu = None

    u = np.empty((N + 1, ni))
    v = np.empty((N + 1, ni))
    u[0] = u0
    v[0] = profile.phi(u0)
    iterations, residuals = [], []
    t_start = time.perf_counter()

    for n in range(1, N + 1):
        t_n = grid.nodes[n]
        if not static_operator:
            K = assemble_stiffness(problem, t_n)
        kappa_nn = weights.diagonal(n)
        lagged = state.lagged(n)
        u_prev = u[n - 1]
        f_n = f_samples[n]
        rhs = mass * (kappa_nn * u_prev - lagged + f_n)
        scale = max(1.0, float(np.max(np.abs(rhs))))

        if linear:
            if lu is None or not reuse_factorization:
                J = (sparse.diags(kappa_nn * mass) + K).tocsc()
                lu = sla.splu(J)
            u_n = lu.solve(rhs)
            res = float(np.max(np.abs(
                mass * (kappa_nn * (u_n - u_prev) + lagged - f_n) + K @ u_n)))
            iters = 1
        else:
            u_n, iters, res = _solve_step(n, u_prev, lagged, f_n, kappa_nn,
                                          mass, K, profile, options, scale)
        if not np.all(np.isfinite(u_n)):
            partial = _partial_history(grid, problem, pair, profile, u, v,
                                       f_samples, u0, iterations, residuals,
                                       memory, options, n - 1)
            raise StepFailureError(f"step {n}: non-finite solution",
                                   partial_history=partial)
        u[n] = u_n
        v[n] = profile.phi(u_n)
        iterations.append(iters)
        residuals.append(res)
        state.push(n, u_n - u_prev)

    return SolutionHistory(
        grid=grid, problem=problem, pair=pair, profile=profile, u=u, v=v,
        f_samples=f_samples, u0=u0, newton_iterations=iterations,
        newton_residuals=residuals, memory_path=memory,
        newton_tol=options.tol, wall_time=time.perf_counter() - t_start)


def _partial_history(grid, problem, pair, profile, u, v, f_samples, u0,
                     iterations, residuals, memory, options, n_done):
    return SolutionHistory(
        grid=grid, problem=problem, pair=pair, profile=profile,
        u=u[: n_done + 1].copy(), v=v[: n_done + 1].copy(),
        f_samples=f_samples, u0=u0, newton_iterations=list(iterations),
        newton_residuals=list(residuals), memory_path=memory,
        newton_tol=options.tol)


@dataclass(frozen=True)
class EnergyAudit:
    truncation_level: float
    gradient_energy: float    # ||grad T_K(v)||^2 over Q_T
    bound: float              # (K/nu) ||f||_L1(Q_T)
    slack: float
    passed: bool


def energy_audit(history: SolutionHistory, level: float,
                 slack_fraction: float = 0.05) -> EnergyAudit:
    """Check the truncated-gradient energy bound against (K/nu)||f||_1.

    Flags a violation when the energy exceeds the bound by more than the
    slack fraction; both sides are recomputed from the stored history.
    """
    problem = history.problem
    Kmat = unit_stiffness(problem)
    dt = history.grid.dt
    tv = truncate(history.v[1:], level)
    energy = float(dt @ np.einsum("ni,ni->n", tv, (Kmat @ tv.T).T))
    bound = level / problem.nu * history.forcing_l1()
    slack = energy - bound
    return EnergyAudit(truncation_level=level, gradient_energy=energy,
                       bound=bound, slack=slack,
                       passed=bool(slack <= slack_fraction * max(bound, 1e-300)))
