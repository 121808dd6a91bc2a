"""Two-parameter data truncation and the monotone approximation ladder.

Rough integrable data (u0, f) are clipped to [-n, m]; each clipped pair is
solved and the family is audited for the order structure that drives the
limit construction: solutions increase in m, decrease in n, are dominated
by envelope fields, and obey a uniform L1 bound with the untruncated data
norms on the right-hand side.  Infinite index limits are replaced by
finite geometric ladders whose tail increments certify convergence; the
certificate never asserts a limit it has not observed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, StepFailureError
from .kernels import KernelPair
from .nonlinearity import NonlinearityProfile
from .space import SpatialProblem, l1_norm, l1_norm_spacetime
from .stepper import NewtonOptions, SolutionHistory, TimeGrid, sample_forcing, solve

__all__ = [
    "TruncationIndex",
    "CascadeReport",
    "ConvergenceCertificate",
    "truncate_data",
    "run_cascade",
    "extract_limit",
]


@dataclass(frozen=True)
class TruncationIndex:
    """Clipping band [-n, m] applied to the data."""

    m: int
    n: int

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ConfigurationError(f"truncation indices must be >= 1, got "
                                     f"({self.m}, {self.n})")


def truncate_data(u0: np.ndarray, f: np.ndarray, index: TruncationIndex):
    """Componentwise clip of initial data and forcing to [-n, m]."""
    lo, hi = -float(index.n), float(index.m)
    return np.clip(u0, lo, hi), np.clip(f, lo, hi)


@dataclass
class CascadeRun:
    index: TruncationIndex
    history: SolutionHistory | None
    l1_norm: float = np.nan
    l1_bound: float = np.nan
    failure: str | None = None

    @property
    def solved(self) -> bool:
        return self.history is not None


@dataclass
class CascadeReport:
    m_values: list
    n_values: list
    runs: dict                      # (m, n) -> CascadeRun
    slack: float
    l1_bound_rhs: float
    monotone_violation_m: float = 0.0    # max over nodes of u_{m,n} - u_{m+1,n}
    monotone_violation_n: float = 0.0    # max over nodes of u_{m,n+1} - u_{m,n}
    m_increments: dict = field(default_factory=dict)   # n -> list over m-ladder
    n_increments: dict = field(default_factory=dict)   # m -> list over n-ladder
    envelope_violation_n: float = 0.0    # |u_{m,n}| <= g^n check
    envelope_violation: float = 0.0      # |u_{M,n}| <= g check
    negative_part_first_m: float = 0.0   # (u_{m,n})^- <= (u_{1,n})^- violation
    negative_part_swapped: dict = field(default_factory=dict)
    bound_violations: list = field(default_factory=list)

    @property
    def solved_count(self) -> int:
        return sum(1 for r in self.runs.values() if r.solved)

    @property
    def monotone_ok(self) -> bool:
        return (self.monotone_violation_m <= self.slack
                and self.monotone_violation_n <= self.slack)

    @property
    def bounds_ok(self) -> bool:
        return not self.bound_violations

    def largest_run(self) -> CascadeRun:
        return self.runs[(self.m_values[-1], self.n_values[-1])]

    def summary_rows(self):
        rows = []
        for (m, n), run in sorted(self.runs.items()):
            rows.append({"m": m, "n": n, "solved": run.solved,
                         "l1_norm": run.l1_norm, "l1_bound": run.l1_bound,
                         "failure": run.failure})
        return rows


def _validate_ladder(values, what):
    vals = [int(v) for v in values]
    if not vals:
        raise ConfigurationError(f"{what} ladder must be non-empty")
    if any(v < 1 for v in vals):
        raise ConfigurationError(f"{what} ladder entries must be >= 1")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ConfigurationError(f"{what} ladder must be strictly increasing")
    return vals


def run_cascade(problem: SpatialProblem, pair: KernelPair,
                profile: NonlinearityProfile, grid: TimeGrid, u0, f,
                m_values, n_values, *, newton: NewtonOptions | None = None,
                memory: str = "naive") -> CascadeReport:
    """Solve the clipped problem over the (m, n) ladder and audit the order
    structure.

    Individual solve failures are recorded and the cascade continues; all
    audits skip unsolved runs.  The L1 bound uses the untruncated data
    norms as majorant.
    """
    m_values = _validate_ladder(m_values, "m")
    n_values = _validate_ladder(n_values, "n")
    options = newton or NewtonOptions()
    u0 = np.asarray(u0, dtype=float)
    f_samples = sample_forcing(problem, grid, f)
    dt = grid.dt
    T = grid.horizon
    l_l1 = pair.l_l1_norm(T)
    bound_rhs = T * l1_norm(problem, u0) \
        + l_l1 * l1_norm_spacetime(problem, dt, f_samples)
    scale = max(1.0, float(np.max(np.abs(u0))), float(np.max(np.abs(f_samples))))
    slack = 10.0 * options.tol * scale

    runs = {}
    for m in m_values:
        for n in n_values:
            idx = TruncationIndex(m, n)
            u0c, fc = truncate_data(u0, f_samples, idx)
            try:
                hist = solve(problem, pair, profile, grid, u0c, fc,
                             newton=options, memory=memory)
            except StepFailureError as exc:
                runs[(m, n)] = CascadeRun(index=idx, history=None,
                                          failure=str(exc))
                continue
            norm = l1_norm_spacetime(problem, dt, hist.u)
            runs[(m, n)] = CascadeRun(index=idx, history=hist, l1_norm=norm,
                                      l1_bound=bound_rhs)

    report = CascadeReport(m_values=m_values, n_values=n_values, runs=runs,
                           slack=slack, l1_bound_rhs=bound_rhs)
    _audit(report, problem, dt)
    return report


def _audit(report: CascadeReport, problem: SpatialProblem, dt: np.ndarray):
    runs = report.runs
    m_values, n_values = report.m_values, report.n_values

    def sol(m, n):
        run = runs.get((m, n))
        return run.history.u if run is not None and run.solved else None

    # (m, n)-monotonicity over adjacent ladder pairs
    for n in n_values:
        for m0, m1 in zip(m_values, m_values[1:]):
            a, b = sol(m0, n), sol(m1, n)
            if a is not None and b is not None:
                report.monotone_violation_m = max(
                    report.monotone_violation_m, float(np.max(a - b)))
        incs = []
        for m0, m1 in zip(m_values, m_values[1:]):
            a, b = sol(m0, n), sol(m1, n)
            incs.append(l1_norm_spacetime(problem, dt, b - a)
                        if a is not None and b is not None else np.nan)
        report.m_increments[n] = incs
    for m in m_values:
        for n0, n1 in zip(n_values, n_values[1:]):
            a, b = sol(m, n0), sol(m, n1)
            if a is not None and b is not None:
                report.monotone_violation_n = max(
                    report.monotone_violation_n, float(np.max(b - a)))
        incs = []
        for n0, n1 in zip(n_values, n_values[1:]):
            a, b = sol(m, n0), sol(m, n1)
            incs.append(l1_norm_spacetime(problem, dt, b - a)
                        if a is not None and b is not None else np.nan)
        report.n_increments[m] = incs

    # envelopes: g^n from the largest-m and the first-m runs, g across n
    M = m_values[-1]
    for n in n_values:
        top, first = sol(M, n), sol(m_values[0], n)
        if top is None or first is None:
            continue
        g_n = np.abs(top) + np.abs(first)
        for m in m_values:
            a = sol(m, n)
            if a is not None:
                report.envelope_violation_n = max(
                    report.envelope_violation_n, float(np.max(np.abs(a) - g_n)))
    deepest, shallowest = sol(M, n_values[-1]), sol(M, n_values[0])
    if deepest is not None and shallowest is not None:
        g = np.abs(deepest) + np.abs(shallowest)
        for n in n_values:
            a = sol(M, n)
            if a is not None:
                report.envelope_violation = max(
                    report.envelope_violation, float(np.max(np.abs(a) - g)))

    # negative-part ordering: the (1, n) comparison, plus the swapped-index
    # variant recorded observationally for ladders that contain it
    for n in n_values:
        first = sol(m_values[0], n)
        if first is None:
            continue
        ref = np.maximum(-first, 0.0)
        for m in m_values:
            a = sol(m, n)
            if a is not None:
                report.negative_part_first_m = max(
                    report.negative_part_first_m,
                    float(np.max(np.maximum(-a, 0.0) - ref)))
        if n in m_values and 1 in n_values:
            swapped = sol(n, 1)
            if swapped is not None:
                ref_sw = np.maximum(-swapped, 0.0)
                worst = 0.0
                for m in m_values:
                    a = sol(m, n)
                    if a is not None:
                        worst = max(worst, float(
                            np.max(np.maximum(-a, 0.0) - ref_sw)))
                report.negative_part_swapped[n] = worst

    # uniform L1 bound with untruncated majorant
    for key, run in runs.items():
        if run.solved and run.l1_norm > run.l1_bound + report.slack:
            report.bound_violations.append(
                {"index": key, "l1_norm": run.l1_norm, "bound": run.l1_bound})


@dataclass(frozen=True)
class ConvergenceCertificate:
    tolerance: float
    m_tail_increments: tuple
    n_tail_increments: tuple
    converged: bool
    monotone_decrease: bool
    warning: str | None


def extract_limit(report: CascadeReport, tol: float):
    """Largest-index run as limit surrogate plus a tail-increment certificate.

    Requires at least 3 solved values in each ladder direction.  A
    non-decreasing increment tail downgrades the certificate to a warning
    rather than silently accepting the run as converged.
    """
    if tol <= 0:
        raise ConfigurationError("convergence tolerance must be positive")
    n_last = report.n_values[-1]
    m_last = report.m_values[-1]
    m_solved = [m for m in report.m_values
                if report.runs[(m, n_last)].solved]
    n_solved = [n for n in report.n_values
                if report.runs[(m_last, n)].solved]
    if len(m_solved) < 3 or len(n_solved) < 3:
        raise ConfigurationError(
            f"need >= 3 solved runs per direction, have {len(m_solved)} in m "
            f"and {len(n_solved)} in n")
    m_incs = [v for v in report.m_increments[n_last] if np.isfinite(v)]
    n_incs = [v for v in report.n_increments[m_last] if np.isfinite(v)]
    eps = 1e-14 * max(1.0, report.l1_bound_rhs)
    decreasing = all(b <= a + eps for a, b in zip(m_incs, m_incs[1:])) \
        and all(b <= a + eps for a, b in zip(n_incs, n_incs[1:]))
    converged = bool(m_incs[-1] <= tol and n_incs[-1] <= tol)
    warning = None
    if not decreasing:
        warning = ("tail increments are not non-increasing; the ladder has "
                   "not entered its monotone regime")
    certificate = ConvergenceCertificate(
        tolerance=tol, m_tail_increments=tuple(m_incs),
        n_tail_increments=tuple(n_incs), converged=converged,
        monotone_decrease=decreasing, warning=warning)
    return report.largest_run().history, certificate
