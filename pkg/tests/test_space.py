import numpy as np
import pytest

from subdiff.errors import ConfigurationError, HypothesisError, InputError
from subdiff.space import (Coefficient, assemble_stiffness, build_mesh,
                           coercivity_probe, gradient_energy, l1_norm,
                           l1_norm_spacetime, negative_part_l1,
                           positive_part_l1)


def test_1d_mesh_interior_nodes():
    m = build_mesh(1, (4,), (1.0,))
    assert m.n_interior == 3
    assert m.interior_coords[:, 0] == pytest.approx([0.25, 0.5, 0.75])
    assert m.lumped_mass == pytest.approx([0.25, 0.25, 0.25])


def test_2d_mesh_interior_count():
    m = build_mesh(2, (4, 4), (1.0, 1.0))
    assert m.n_interior == 9
    assert m.lumped_mass == pytest.approx(np.full(9, 1 / 16))


def test_degenerate_mesh_rejected():
    with pytest.raises(ConfigurationError):
        build_mesh(1, (1,), (1.0,))
    with pytest.raises(ConfigurationError):
        build_mesh(2, (4, 1), (1.0, 1.0))
    with pytest.raises(ConfigurationError):
        build_mesh(1, (4,), (0.0,))
    with pytest.raises(ConfigurationError):
        build_mesh(1, (4,), (1.0,), nu=0.0)
    with pytest.raises(ConfigurationError):
        build_mesh(3, (4, 4, 4), (1.0, 1.0, 1.0))


def test_1d_identity_stiffness_stencil():
    m = build_mesh(1, (4,), (1.0,))
    K = assemble_stiffness(m).toarray()
    h = 0.25
    expected = np.array([[2, -1, 0], [-1, 2, -1], [0, -1, 2]]) / h
    assert K == pytest.approx(expected)


def test_stiffness_linear_in_coefficient():
    m1 = build_mesh(1, (8,), (1.0,))
    m2 = build_mesh(1, (8,), (1.0,), coefficient=2.0)
    K1 = assemble_stiffness(m1).toarray()
    K2 = assemble_stiffness(m2).toarray()
    assert K2 == pytest.approx(2.0 * K1)


def test_2d_five_point_stencil():
    m = build_mesh(2, (4, 4), (1.0, 1.0))
    K = assemble_stiffness(m).toarray()
    # right-triangulated P1 on a uniform square grid: classic 5-point stencil
    center = K[4]
    assert center[4] == pytest.approx(4.0)
    assert center[[1, 3, 5, 7]] == pytest.approx([-1, -1, -1, -1])
    assert center[[0, 2, 6, 8]] == pytest.approx([0, 0, 0, 0])
    assert np.max(np.abs(K - K.T)) < 1e-12


def test_time_varying_scalar_coefficient_probe_passes():
    coeff = Coefficient(lambda t, pts: (1 + 0.5 * np.sin(2 * np.pi * t))
                        * np.ones(len(pts)))
    m = build_mesh(1, (8,), (1.0,), coefficient=coeff, nu=0.5)
    assert coercivity_probe(m, np.linspace(0, 1, 9)) >= 0.5 - 1e-12


def test_coercivity_violation_names_location():
    coeff = Coefficient(lambda t, pts: 0.1 * np.ones(len(pts)))
    m = build_mesh(1, (8,), (1.0,), coefficient=coeff, nu=1.0)
    with pytest.raises(HypothesisError) as info:
        coercivity_probe(m, [0.5])
    assert "t=0.5" in str(info.value)
    assert "x=" in str(info.value)


def test_anisotropic_matrix_coefficient_2d():
    A = np.array([[2.0, 0.3], [0.3, 1.0]])
    m = build_mesh(2, (6, 6), (1.0, 1.0), coefficient=A, nu=0.5)
    K = assemble_stiffness(m)
    rng = np.random.default_rng(0)
    w = rng.standard_normal(m.n_interior)
    # coercive: w K w >= nu * |w|_{H1}^2
    assert w @ (K @ w) >= 0.5 * gradient_energy(m, w) - 1e-10


def test_discrete_coercivity_random_fields():
    coeff = Coefficient(lambda t, pts: 1.5 * np.ones(len(pts)),
                        time_dependent=False)
    m = build_mesh(1, (32,), (1.0,), coefficient=coeff, nu=1.5)
    K = assemble_stiffness(m)
    rng = np.random.default_rng(4)
    for _ in range(10):
        w = rng.standard_normal(m.n_interior)
        assert w @ (K @ w) >= 1.5 * gradient_energy(m, w) - 1e-10


def test_refinement_consistency_second_order():
    errs = []
    for nx in (16, 32, 64):
        m = build_mesh(1, (nx,), (1.0,))
        x = m.interior_coords[:, 0]
        u = np.sin(np.pi * x)
        laplacian = assemble_stiffness(m) @ u / m.lumped_mass
        errs.append(np.max(np.abs(laplacian - np.pi ** 2 * u)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.8)


def test_refinement_consistency_2d():
    errs = []
    for nx in (8, 16, 32):
        m = build_mesh(2, (nx, nx), (1.0, 1.0))
        xy = m.interior_coords
        u = np.sin(np.pi * xy[:, 0]) * np.sin(np.pi * xy[:, 1])
        lap = assemble_stiffness(m) @ u / m.lumped_mass
        errs.append(np.max(np.abs(lap - 2 * np.pi ** 2 * u)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.7)


# -- norms -----------------------------------------------------------------------


def test_l1_norm_of_unit_field():
    m = build_mesh(1, (4,), (1.0,))
    # interior lumped cells cover 3/4 of the unit interval
    assert l1_norm(m, np.ones(3)) == pytest.approx(0.75)


def test_l1_norm_sign_symmetry_and_decomposition():
    m = build_mesh(1, (16,), (1.0,))
    rng = np.random.default_rng(9)
    f = rng.standard_normal(m.n_interior)
    assert l1_norm(m, f) == pytest.approx(l1_norm(m, -f))
    assert positive_part_l1(m, f) + negative_part_l1(m, f) == \
        pytest.approx(l1_norm(m, f))


def test_l1_spacetime_right_rectangle_rule():
    m = build_mesh(1, (4,), (1.0,))
    dt = np.array([0.5, 0.5])
    fields = np.array([[9.0, 9.0, 9.0], [1.0, 1.0, 1.0], [1.0, 1.0, 1.0]])
    # row 0 carries no weight
    assert l1_norm_spacetime(m, dt, fields) == pytest.approx(0.75)


def test_norm_shape_validation():
    m = build_mesh(1, (4,), (1.0,))
    with pytest.raises(InputError):
        l1_norm(m, np.ones(5))
    with pytest.raises(InputError):
        l1_norm_spacetime(m, np.array([0.5, 0.5]), np.ones((4, 3)))
