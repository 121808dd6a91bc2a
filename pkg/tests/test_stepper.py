import numpy as np
import pytest

from subdiff.errors import ConfigurationError, StepFailureError
from subdiff.kernels import KernelPair
from subdiff.nonlinearity import NonlinearityProfile
from subdiff.profiles import forcing_function, initial_field
from subdiff.space import Coefficient, build_mesh, l1_norm
from subdiff.special import mittag_leffler_neg
from subdiff.stepper import (NewtonOptions, TimeGrid, energy_audit,
                             sample_forcing, solve)

FRAC = KernelPair.fractional(0.5)
IDENT = NonlinearityProfile.identity()
PME = NonlinearityProfile.porous_medium(2.0)


def discrete_sine_eigenvalue(problem):
    h = problem.spacings[0]
    return 2.0 * (1.0 - np.cos(np.pi * h)) / h ** 2


# -- time grids -----------------------------------------------------------------


def test_time_grid_constructors():
    g = TimeGrid.uniform(2.0, 4)
    assert g.nodes == pytest.approx([0, 0.5, 1.0, 1.5, 2.0])
    assert g.uniform_spacing
    gg = TimeGrid.graded(1.0, 4, 2.0)
    assert gg.nodes == pytest.approx([0, 1 / 16, 1 / 4, 9 / 16, 1.0])
    assert not gg.uniform_spacing


def test_time_grid_validation():
    with pytest.raises(ConfigurationError):
        TimeGrid.uniform(0.0, 4)
    with pytest.raises(ConfigurationError):
        TimeGrid.graded(1.0, 4, 0.5)
    with pytest.raises(ConfigurationError):
        TimeGrid(np.array([0.0, 0.5, 0.4]))


# -- basic solve behaviour --------------------------------------------------------


def test_zero_data_is_exact_fixed_point():
    m = build_mesh(1, (8,), (1.0,))
    g = TimeGrid.uniform(1.0, 16)
    hist = solve(m, FRAC, PME, g, np.zeros(m.n_interior))
    assert np.all(hist.u == 0.0)
    assert np.all(hist.v == 0.0)


def test_history_invariants():
    m = build_mesh(1, (16,), (1.0,))
    g = TimeGrid.uniform(1.0, 32)
    u0 = initial_field(m, "sine")
    hist = solve(m, FRAC, PME, g, u0,
                 forcing_function(m, "bump_steady", amplitude=2.0))
    assert np.max(np.abs(hist.v - PME.phi(hist.u))) < 1e-12
    scale = max(1.0, float(np.max(np.abs(hist.u))))
    assert max(hist.newton_residuals) <= hist.newton_tol * 10 * scale
    assert len(hist.newton_iterations) == g.n_steps


def test_linear_pde_matches_mittag_leffler_mode():
    # single sine mode with the discrete eigenvalue as decay rate
    m = build_mesh(1, (64,), (1.0,))
    g = TimeGrid.graded(1.0, 512, 3.0)
    u0 = np.sin(np.pi * m.interior_coords[:, 0])
    hist = solve(m, FRAC, IDENT, g, u0)
    lam = discrete_sine_eigenvalue(m)
    amp = mittag_leffler_neg(0.5, lam * g.nodes[1:] ** 0.5)
    rel = np.abs(hist.u[1:] - amp[:, None] * u0[None, :]).max(axis=1) \
        / np.abs(amp)
    assert rel.max() < 1e-2


def test_forcing_sampling_shapes():
    m = build_mesh(1, (8,), (1.0,))
    g = TimeGrid.uniform(1.0, 4)
    zeros = sample_forcing(m, g, None)
    assert zeros.shape == (5, 7) and np.all(zeros == 0)
    const = sample_forcing(m, g, np.ones(7))
    assert np.all(const == 1.0)
    fn = sample_forcing(m, g, lambda t, pts: t * np.ones(len(pts)))
    assert fn[:, 0] == pytest.approx(g.nodes)


# -- Newton behaviour -------------------------------------------------------------


def test_linear_problem_single_iteration():
    m = build_mesh(1, (16,), (1.0,))
    g = TimeGrid.uniform(1.0, 8)
    hist = solve(m, FRAC, IDENT, g, initial_field(m, "sine"))
    assert all(it == 1 for it in hist.newton_iterations)


def test_newton_quadratic_convergence_on_smooth_step():
    # one implicit step of the porous-medium problem away from degeneracy
    from subdiff.space import assemble_stiffness
    from subdiff.stepper import newton_step

    m = build_mesh(1, (32,), (1.0,))
    K = assemble_stiffness(m)
    rng = np.random.default_rng(2)
    u_prev = 1.0 + 0.3 * rng.random(m.n_interior)
    lagged = np.zeros(m.n_interior)
    f_n = np.ones(m.n_interior)
    kappa = 10.0
    opts = NewtonOptions()
    w = u_prev.copy()
    norms = []
    for _ in range(8):
        w, _, norm, _ = newton_step(w, u_prev, lagged, f_n, kappa,
                                    m.lumped_mass, K, PME, 1e-12, opts)
        norms.append(norm)
        if norm < 1e-14:
            break
    norms = np.array(norms)
    # quadratic: r_{k+1}/r_k^2 stays bounded while above the rounding floor
    usable = norms[:-1] > 1e-7
    ratios = norms[1:][usable] / norms[:-1][usable] ** 2
    assert len(ratios) >= 2
    assert np.all(ratios < 1e3)


def test_pme_near_zero_regularization_keeps_jacobian_solvable():
    m = build_mesh(1, (16,), (1.0,))
    g = TimeGrid.uniform(1.0, 8)
    u0 = np.zeros(m.n_interior)
    hist = solve(m, FRAC, PME, g, u0,
                 forcing_function(m, "bump_steady", amplitude=0.1))
    assert np.all(np.isfinite(hist.u))
    assert hist.u.max() > 0


def test_step_failure_carries_partial_history():
    m = build_mesh(1, (8,), (1.0,))
    g = TimeGrid.uniform(1.0, 8)
    strict = NewtonOptions(tol=1e-10, max_iter=1)
    with pytest.raises(StepFailureError) as info:
        solve(m, FRAC, PME, g, initial_field(m, "sine"),
              forcing_function(m, "constant", amplitude=5.0), newton=strict)
    # failure message names the step; exercised on the first nonlinear solve
    assert "step 1" in str(info.value)


# -- structure-preservation --------------------------------------------------------


def test_positivity_for_nonnegative_data():
    m = build_mesh(1, (32,), (1.0,))
    g = TimeGrid.uniform(1.0, 64)
    for seed in range(3):
        rng = np.random.default_rng(seed)
        u0 = np.abs(rng.standard_normal(m.n_interior))
        f = np.abs(rng.standard_normal(m.n_interior))
        hist = solve(m, FRAC, PME, g, u0, f)
        assert hist.u.min() >= -10 * hist.newton_tol


def test_comparison_for_ordered_data():
    m = build_mesh(1, (32,), (1.0,))
    g = TimeGrid.uniform(1.0, 64)
    for seed in range(3):
        rng = np.random.default_rng(100 + seed)
        u0 = rng.standard_normal(m.n_interior)
        f = rng.standard_normal(m.n_interior)
        du = np.abs(rng.standard_normal(m.n_interior))
        df = np.abs(rng.standard_normal(m.n_interior))
        lo = solve(m, FRAC, PME, g, u0, f)
        hi = solve(m, FRAC, PME, g, u0 + du, f + df)
        assert np.min(hi.u - lo.u) >= -10 * lo.newton_tol


def test_memory_paths_agree():
    m = build_mesh(1, (32,), (1.0,))
    g = TimeGrid.uniform(1.0, 256)
    u0 = initial_field(m, "sine")
    f = forcing_function(m, "bump_modulated", amplitude=1.0)
    naive = solve(m, FRAC, PME, g, u0, f, memory="naive")
    fast = solve(m, FRAC, PME, g, u0, f, memory="soe")
    assert np.max(np.abs(naive.u - fast.u)) < 1e-5
    assert naive.memory_path == "naive" and fast.memory_path == "soe"


def test_self_convergence_order_linear_problem():
    # error at the final time against a fine reference, dt-halving ladder
    m = build_mesh(1, (32,), (1.0,))
    u0 = initial_field(m, "sine")
    finals = {}
    for nt in (32, 64, 128, 1024):
        hist = solve(m, FRAC, IDENT, TimeGrid.uniform(1.0, nt), u0)
        finals[nt] = hist.u[-1]
    errs = [l1_norm(m, finals[nt] - finals[1024]) for nt in (32, 64, 128)]
    order = np.polyfit(np.log([32, 64, 128]), np.log(errs), 1)[0] * -1
    assert order >= min(1.0, 2.0 - 0.5) - 0.2


def test_time_dependent_coefficient_solve():
    coeff = Coefficient(lambda t, pts: (1 + 0.5 * np.sin(2 * np.pi * t))
                        * np.ones(len(pts)))
    m = build_mesh(1, (16,), (1.0,), coefficient=coeff, nu=0.5)
    g = TimeGrid.uniform(1.0, 16)
    hist = solve(m, FRAC, IDENT, g, initial_field(m, "sine"))
    assert np.all(np.isfinite(hist.u))
    # decay, but not below zero
    assert hist.u[-1].max() < hist.u[0].max()
    assert hist.u.min() >= -1e-10


def test_2d_solve_smoke():
    m = build_mesh(2, (8, 8), (1.0, 1.0))
    g = TimeGrid.uniform(0.5, 16)
    u0 = initial_field(m, "sine")
    hist = solve(m, FRAC, PME, g, u0)
    assert hist.u.shape == (17, 49)
    assert hist.u.min() >= -1e-9
    assert hist.u[-1].max() < u0.max()


# -- energy audit ------------------------------------------------------------------


def test_energy_audit_zero_data():
    m = build_mesh(1, (8,), (1.0,))
    g = TimeGrid.uniform(1.0, 8)
    hist = solve(m, FRAC, PME, g, np.zeros(m.n_interior))
    audit = energy_audit(hist, 1.0)
    assert audit.gradient_energy == 0.0
    assert audit.bound == 0.0
    assert audit.passed


def test_energy_audit_decaying_data_reports_slack():
    # f = 0 with nonzero u0: the bound is 0, the audit reports the overshoot
    m = build_mesh(1, (16,), (1.0,))
    g = TimeGrid.uniform(1.0, 32)
    hist = solve(m, FRAC, PME, g, initial_field(m, "bump"))
    audit = energy_audit(hist, 1.0)
    assert audit.bound == 0.0
    assert audit.gradient_energy > 0.0
    assert audit.slack == pytest.approx(audit.gradient_energy)
    assert not audit.passed


def test_energy_audit_bound_scales_linearly_in_level():
    m = build_mesh(1, (16,), (1.0,))
    g = TimeGrid.uniform(1.0, 32)
    hist = solve(m, FRAC, PME, g, np.zeros(m.n_interior),
                 forcing_function(m, "bump_steady", amplitude=2.0))
    a1 = energy_audit(hist, 0.5)
    a2 = energy_audit(hist, 1.0)
    assert a2.bound == pytest.approx(2 * a1.bound)
    assert a1.passed and a2.passed
