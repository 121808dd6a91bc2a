import numpy as np
import pytest
from scipy import integrate

from subdiff.errors import DomainError
from subdiff.special import e1_scaled, mittag_leffler_neg


def test_ml_at_zero_is_one():
    assert mittag_leffler_neg(0.5, 0.0) == 1.0
    assert mittag_leffler_neg(0.3, 0.0) == 1.0


def test_ml_half_matches_frozen_erfc_value():
    # e * erfc(1), high-precision oracle
    assert mittag_leffler_neg(0.5, 1.0) == pytest.approx(0.427583576155807, abs=1e-12)


def test_ml_half_series_vs_erfcx_cross_check():
    from subdiff.special import _ml_neg_scalar
    for x in (0.05, 0.7, 3.0, 9.87):
        assert _ml_neg_scalar(0.5, x) == pytest.approx(
            mittag_leffler_neg(0.5, x), rel=1e-12)


def test_ml_frozen_series_value():
    # Direct series at alpha=1/2, x=3 (mpmath, 30 digits)
    assert mittag_leffler_neg(0.5, 3.0) == pytest.approx(0.17900115118138995,
                                                         rel=1e-12)


def test_ml_alpha_one_is_exp():
    x = np.linspace(0, 5, 11)
    assert np.allclose(mittag_leffler_neg(1.0, x), np.exp(-x))


def test_ml_general_alpha_monotone_decreasing():
    xs = np.linspace(0.0, 6.0, 13)
    vals = mittag_leffler_neg(0.75, xs)
    assert np.all(np.diff(vals) < 0)
    assert np.all(vals > 0)


def test_ml_rejects_bad_arguments():
    with pytest.raises(DomainError):
        mittag_leffler_neg(1.5, 1.0)
    with pytest.raises(DomainError):
        mittag_leffler_neg(0.5, -1.0)


def test_e1_scaled_matches_quadrature():
    for t in (0.01, 0.5, 2.0):
        ref, _ = integrate.quad(lambda s: np.exp(-s * t) / (1 + s), 0, np.inf,
                                limit=200)
        assert e1_scaled(t) == pytest.approx(ref, rel=1e-9)


def test_e1_scaled_both_branches_match_frozen_values():
    # mpmath exp(t) E1(t) at 30 digits, one value per branch
    assert e1_scaled(25.0) == pytest.approx(0.038514698844904022, rel=1e-12)
    assert e1_scaled(35.0) == pytest.approx(0.027798151971952965, rel=1e-9)
    assert e1_scaled(1000.0) == pytest.approx(1.0 / 1000.0, rel=1e-2)


def test_e1_scaled_rejects_nonpositive():
    with pytest.raises(DomainError):
        e1_scaled(0.0)
