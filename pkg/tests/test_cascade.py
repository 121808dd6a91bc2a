import numpy as np
import pytest

from subdiff.cascade import (TruncationIndex, extract_limit, run_cascade,
                             truncate_data)
from subdiff.errors import ConfigurationError
from subdiff.kernels import KernelPair
from subdiff.nonlinearity import NonlinearityProfile
from subdiff.profiles import initial_field
from subdiff.space import build_mesh, l1_norm
from subdiff.stepper import TimeGrid

FRAC = KernelPair.fractional(0.5)
PME = NonlinearityProfile.porous_medium(2.0)


def test_truncation_index_validation():
    with pytest.raises(ConfigurationError):
        TruncationIndex(0, 1)
    with pytest.raises(ConfigurationError):
        TruncationIndex(1, 0)


def test_truncate_data_clipping():
    idx = TruncationIndex(3, 2)
    u0 = np.array([5.0, -7.0, 1.0])
    f = np.array([[4.0, -3.0, 0.5]])
    u0c, fc = truncate_data(u0, f, idx)
    assert u0c == pytest.approx([3.0, -2.0, 1.0])  # clip above at m, below at -n
    assert fc[0] == pytest.approx([3.0, -2.0, 0.5])


def test_truncation_band_monotonicity_exact():
    rng = np.random.default_rng(1)
    u0 = rng.uniform(-20, 20, 50)
    f = rng.uniform(-20, 20, (3, 50))
    a, _ = truncate_data(u0, f, TruncationIndex(2, 3))
    b, _ = truncate_data(u0, f, TruncationIndex(4, 3))
    c, _ = truncate_data(u0, f, TruncationIndex(2, 6))
    assert np.all(a <= b)   # larger m raises the cap
    assert np.all(c <= a)   # larger n lowers the floor


@pytest.fixture(scope="module")
def small_cascade():
    m = build_mesh(1, (24,), (1.0,))
    g = TimeGrid.uniform(1.0, 48)
    u0 = initial_field(m, "inverse_sqrt")
    return m, g, u0, run_cascade(m, FRAC, PME, g, u0, None,
                                 [1, 2, 4, 8], [1, 2, 4])


def test_cascade_solves_every_run(small_cascade):
    _, _, _, rep = small_cascade
    assert rep.solved_count == 12
    assert all(r.failure is None for r in rep.runs.values())


def test_cascade_monotone_in_both_indices(small_cascade):
    _, _, _, rep = small_cascade
    assert rep.monotone_violation_m <= rep.slack
    assert rep.monotone_violation_n <= rep.slack


def test_cascade_l1_bounds_hold(small_cascade):
    _, _, _, rep = small_cascade
    assert rep.bounds_ok
    for run in rep.runs.values():
        assert run.l1_norm <= rep.l1_bound_rhs + rep.slack


def test_cascade_envelopes_dominate(small_cascade):
    _, _, _, rep = small_cascade
    assert rep.envelope_violation_n <= rep.slack
    assert rep.envelope_violation <= rep.slack


def test_cascade_increments_decrease_and_certify(small_cascade):
    m, _, u0, rep = small_cascade
    incs = [v for v in rep.m_increments[4] if v > 0]
    assert all(b <= a for a, b in zip(incs, incs[1:]))
    _, cert = extract_limit(rep, 1e-3 * l1_norm(m, u0))
    assert cert.converged
    assert cert.monotone_decrease
    assert cert.warning is None


def test_bounded_data_truncation_is_identity():
    m = build_mesh(1, (16,), (1.0,))
    g = TimeGrid.uniform(1.0, 24)
    u0 = 0.5 * initial_field(m, "sine")
    rep = run_cascade(m, FRAC, PME, g, u0, None, [1, 2, 4], [1, 2, 4])
    # all runs identical once the band contains the data
    for incs in rep.m_increments.values():
        assert all(v == pytest.approx(0.0, abs=1e-12) for v in incs)
    _, cert = extract_limit(rep, 1e-6)
    assert cert.converged


def test_alternating_sign_data_monotone_in_both_directions():
    m = build_mesh(1, (24,), (1.0,))
    g = TimeGrid.uniform(1.0, 32)
    x = m.interior_coords[:, 0]
    u0 = initial_field(m, "inverse_sqrt") * np.sign(np.sin(3 * np.pi * x))
    f = 2.0 * np.sin(2 * np.pi * x)
    rep = run_cascade(m, FRAC, PME, g, u0, np.tile(f, (g.n_steps + 1, 1)),
                      [1, 2, 4], [1, 2, 4])
    assert rep.monotone_violation_m <= rep.slack
    assert rep.monotone_violation_n <= rep.slack
    # sign-changing data exercises the n-direction for real
    nontrivial = [v for incs in rep.n_increments.values() for v in incs]
    assert max(nontrivial) > 0


def test_negative_part_ordering_audit():
    # the (1, n) comparison is guaranteed; the swapped (n, 1) one is recorded
    m = build_mesh(1, (24,), (1.0,))
    g = TimeGrid.uniform(1.0, 32)
    x = m.interior_coords[:, 0]
    u0 = -3.0 * initial_field(m, "inverse_sqrt")
    rep = run_cascade(m, FRAC, PME, g, u0, None, [1, 2, 4], [1, 2, 4])
    assert rep.negative_part_first_m <= rep.slack
    assert set(rep.negative_part_swapped) == {1, 2, 4}
    # negative data with deep lower clips: the swapped ordering genuinely fails
    assert rep.negative_part_swapped[4] > 1e-3


def test_extract_limit_needs_three_solved_per_direction():
    m = build_mesh(1, (16,), (1.0,))
    g = TimeGrid.uniform(1.0, 16)
    u0 = initial_field(m, "sine")
    rep = run_cascade(m, FRAC, PME, g, u0, None, [1, 2], [1, 2, 4])
    with pytest.raises(ConfigurationError):
        extract_limit(rep, 1e-3)
    with pytest.raises(ConfigurationError):
        extract_limit(rep, -1.0)
