import numpy as np
import pytest

from subdiff.errors import DomainError, HypothesisError
from subdiff.nonlinearity import (NonlinearityProfile, entropy_test_function,
                                  h_eps, truncate, validate_slope_bound)


# -- phi and its inverse --------------------------------------------------------


def test_pme_signed_power():
    pme = NonlinearityProfile.porous_medium(2.0)
    assert pme.phi(3.0) == 9.0
    assert pme.phi(-3.0) == -9.0
    assert pme.phi_prime(0.0) == 0.0  # degenerate at the origin
    assert pme.inverse(9.0) == 3.0
    assert pme.inverse(-9.0) == -3.0


def test_identity_profile():
    ident = NonlinearityProfile.identity()
    x = np.linspace(-4, 4, 13)
    assert np.array_equal(ident.phi(x), x)
    assert np.array_equal(ident.inverse(x), x)
    assert np.all(ident.phi_prime(x) == 1.0)


def test_inverse_vanishes_at_zero_everywhere():
    for prof in (NonlinearityProfile.identity(),
                 NonlinearityProfile.porous_medium(2.0),
                 NonlinearityProfile.porous_medium(3.5)):
        assert prof.inverse(0.0) == 0.0
        assert prof.phi(0.0) == 0.0


def test_roundtrip_composition():
    pme = NonlinearityProfile.porous_medium(2.0)
    assert pme.inverse(pme.phi(1.7)) == pytest.approx(1.7, abs=1e-12)
    rng = np.random.default_rng(7)
    r = rng.uniform(-5, 5, 200)
    assert pme.inverse(pme.phi(r)) == pytest.approx(r, abs=1e-12)


def test_strict_monotonicity_on_random_lattice():
    rng = np.random.default_rng(11)
    r = np.sort(rng.uniform(-8, 8, 400))
    for prof in (NonlinearityProfile.porous_medium(1.5),
                 NonlinearityProfile.porous_medium(3.0)):
        assert np.all(np.diff(prof.phi(r)) > 0)
        v = np.sort(rng.uniform(-8, 8, 400))
        assert np.all(np.diff(prof.inverse(v)) > 0)


def test_phi_prime_consistent_with_central_differences():
    pme = NonlinearityProfile.porous_medium(2.0)
    h = 1e-5
    r = np.concatenate([np.linspace(-4, -1e-3, 300),
                        np.linspace(1e-3, 4, 300)])
    numeric = (pme.phi(r + h) - pme.phi(r - h)) / (2 * h)
    rel = np.abs(numeric - pme.phi_prime(r)) / np.maximum(np.abs(numeric), 1e-30)
    assert rel.max() < 1e-6


def test_custom_table_profile_roundtrip():
    r = np.linspace(-2, 2, 81)
    tab = NonlinearityProfile.from_table(r, r + 0.2 * r ** 3, mu=1.0,
                                         slope_threshold=0.0)
    x = np.linspace(-1.8, 1.8, 50)
    assert tab.inverse(tab.phi(x)) == pytest.approx(x, abs=1e-12)
    with pytest.raises(DomainError):
        tab.phi(5.0)


def test_custom_table_rejects_nonmonotone():
    r = np.linspace(-1, 1, 11)
    with pytest.raises(HypothesisError):
        NonlinearityProfile.from_table(r, np.sin(4 * r), mu=0.1,
                                       slope_threshold=0.0)


def test_pme_exponent_validation():
    with pytest.raises(HypothesisError):
        NonlinearityProfile.porous_medium(1.0)
    with pytest.raises(HypothesisError):
        NonlinearityProfile.porous_medium(0.5)


# -- truncation ------------------------------------------------------------------


def test_truncate_clamps():
    assert truncate(5.0, 2.0) == 2.0
    assert truncate(-5.0, 2.0) == -2.0
    assert truncate(1.0, 2.0) == 1.0


def test_truncate_is_one_lipschitz():
    rng = np.random.default_rng(5)
    a, b = rng.uniform(-10, 10, (2, 500))
    assert np.all(np.abs(truncate(a, 2.0) - truncate(b, 2.0)) <= np.abs(a - b))


def test_truncate_rejects_nonpositive_level():
    with pytest.raises(DomainError):
        truncate(1.0, 0.0)


# -- smoothed positive/negative parts ---------------------------------------------


def test_h_eps_at_zero_and_wrong_sign():
    assert h_eps(0.0, 1.0) == 0.0
    assert h_eps(-3.0, 1.0, "plus") == 0.0
    assert h_eps(3.0, 1.0, "minus") == 0.0


def test_h_eps_small_eps_limit():
    assert h_eps(3.0, 1e-6, "plus") == pytest.approx(3.0, abs=1e-6)
    assert h_eps(-2.0, 1e-6, "minus") == pytest.approx(2.0, abs=1e-6)


def test_h_eps_monotone_and_smoothness_scale():
    y = np.linspace(-2, 5, 400)
    vals = h_eps(y, 0.5, "plus")
    assert np.all(np.diff(vals) >= 0)
    assert np.all(vals >= 0)


def test_h_eps_validation():
    with pytest.raises(DomainError):
        h_eps(1.0, 0.0)
    with pytest.raises(DomainError):
        h_eps(1.0, 1.0, "both")


# -- entropy test shapes ----------------------------------------------------------


def test_entropy_shape_invariants():
    S = entropy_test_function(1.0, 0.5)
    assert S(0.0) == 0.0
    y = np.linspace(-4, 4, 2001)
    d = S.derivative(y)
    assert np.all(d >= 0.0)
    assert d.max() <= 1.0 + 1e-12
    assert S.derivative(S.level + 2 * S.smoothing) == 0.0
    # odd function, plateau beyond the support of S'
    assert np.allclose(S(y), -S(-y))
    assert S(10.0) == pytest.approx(S.plateau)


def test_entropy_shape_derivative_matches_difference_quotient():
    S = entropy_test_function(0.7, 0.3)
    y = np.linspace(-2, 2, 801)
    h = 1e-6
    numeric = (S(y + h) - S(y - h)) / (2 * h)
    assert np.max(np.abs(numeric - S.derivative(y))) < 1e-5


def test_entropy_shape_derivative_mass_bounded_by_support():
    # integral of S' is at most 2 (level + smoothing) since 0 <= S' <= 1
    S = entropy_test_function(1.2, 0.4)
    y = np.linspace(-3, 3, 20001)
    mass = np.trapezoid(S.derivative(y), y)
    assert mass <= 2 * (S.level + S.smoothing) + 1e-9


def test_entropy_shape_validation():
    with pytest.raises(DomainError):
        entropy_test_function(0.0, 0.1)
    with pytest.raises(DomainError):
        entropy_test_function(1.0, 0.0)


# -- slope-bound validation --------------------------------------------------------


def test_slope_report_identity_passes():
    report = validate_slope_bound(NonlinearityProfile.identity())
    assert report.passed
    assert report.min_slope == pytest.approx(1.0)


def test_slope_report_pme_with_threshold_passes():
    # phi'(r) = 2|r| >= 2 for |r| > 1
    prof = NonlinearityProfile.porous_medium(2.0, mu=2.0, slope_threshold=1.0)
    report = validate_slope_bound(prof)
    assert report.passed


def test_slope_report_degenerate_origin_fails():
    prof = NonlinearityProfile.porous_medium(2.0, mu=0.5, slope_threshold=0.0)
    report = validate_slope_bound(prof, r_max=1.0)
    assert not report.passed
    assert report.min_slope < 0.5
