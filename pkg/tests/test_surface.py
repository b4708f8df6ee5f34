import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from resqfit.core import Measurement
from resqfit.errors import DomainError
from resqfit.surface import (
    XpsInput,
    fit_tan_delta,
    implied_tan_delta,
    ma_excess_fraction,
    oxide_thickness,
    surface_limited_q,
)

TAN_DELTA_BETA = 1.6e-3
TAN_DELTA_ALPHA = 8.1e-4


def _line_points(tan_delta, p_values, sigma_frac=0.0):
    pts = []
    for p in p_values:
        q = 1.0 / (p * tan_delta)
        pts.append((p, Measurement(q, sigma_frac * q)))
    return pts


def test_fit_exact_line_recovers_loss_tangent():
    pts = _line_points(TAN_DELTA_BETA, np.logspace(-4, -2.7, 12))
    fit = fit_tan_delta(pts)
    assert fit.tan_delta.value == pytest.approx(TAN_DELTA_BETA, rel=1e-12)
    assert max(abs(r) for r in fit.per_point_residuals) < 1e-18


def test_fit_exact_line_with_uncertainties():
    pts = _line_points(TAN_DELTA_BETA, np.logspace(-4, -2.7, 12), sigma_frac=0.08)
    fit = fit_tan_delta(pts)
    assert fit.tan_delta.value == pytest.approx(TAN_DELTA_BETA, rel=1e-12)
    assert fit.tan_delta.sigma > 0


def test_fit_homogeneity():
    pts = _line_points(TAN_DELTA_BETA, np.logspace(-4, -3, 8), sigma_frac=0.05)
    doubled = [(p, m.scaled(2.0)) for p, m in pts]
    fit = fit_tan_delta(pts)
    fit2 = fit_tan_delta(doubled)
    assert fit2.tan_delta.value == pytest.approx(fit.tan_delta.value / 2.0, rel=1e-12)


def test_fit_matches_closed_form_ratio():
    rng = np.random.default_rng(3)
    p = np.logspace(-4, -3, 10)
    q = 1.0 / (p * TAN_DELTA_BETA) * (1 + 0.1 * rng.standard_normal(10))
    sig = 0.1 * q
    fit = fit_tan_delta(list(zip(p, (Measurement(v, s) for v, s in zip(q, sig)))))
    y = 1.0 / q
    w = (q**2 / sig) ** 2
    expected = float(np.sum(w * p * y) / np.sum(w * p * p))
    assert fit.tan_delta.value == pytest.approx(expected, rel=1e-12)


def test_fit_residuals_invariant_under_reordering():
    rng = np.random.default_rng(4)
    p = np.logspace(-4, -3, 9)
    q = 1.0 / (p * TAN_DELTA_BETA) * (1 + 0.05 * rng.standard_normal(9))
    pts = [(pi, Measurement(qi, 0.05 * qi)) for pi, qi in zip(p, q)]
    fit1 = fit_tan_delta(pts)
    fit2 = fit_tan_delta(list(reversed(pts)))
    assert sorted(fit1.per_point_residuals) == pytest.approx(
        sorted(fit2.per_point_residuals), rel=1e-12
    )
    assert fit1.tan_delta.value == pytest.approx(fit2.tan_delta.value, rel=1e-14)


def test_fit_excludes_unreliable_points():
    pts = _line_points(TAN_DELTA_BETA, np.logspace(-4, -3, 6), sigma_frac=0.05)
    bad = (2e-3, Measurement(1e5, 2e5))  # error exceeds the value
    fit = fit_tan_delta(pts + [bad])
    assert bad in fit.excluded
    assert len(fit.points) == 6


def test_fit_needs_two_distinct_points():
    with pytest.raises(DomainError):
        fit_tan_delta([(1e-3, Measurement(1e6, 1e3)), (1e-3, Measurement(2e6, 1e3))])


def test_single_point_implied_tangent():
    # closed-form ratio for the 2 um-gap silicon CPW row
    value = implied_tan_delta(1.88e-3, 3.7e5)
    assert value == pytest.approx(1.0 / (1.88e-3 * 3.7e5), rel=1e-12)
    assert value == pytest.approx(1.44e-3, rel=5e-3)


def test_surface_limited_q_values():
    assert surface_limited_q(1.3e-4, TAN_DELTA_BETA) == pytest.approx(4.8e6, rel=0.02)
    assert surface_limited_q(1.3e-4 / 2, TAN_DELTA_BETA) == pytest.approx(
        2 * surface_limited_q(1.3e-4, TAN_DELTA_BETA), rel=1e-12
    )
    assert surface_limited_q(1.3e-4, TAN_DELTA_ALPHA) == pytest.approx(9.5e6, rel=0.01)


def test_surface_limited_q_consistent_with_fit():
    pts = _line_points(TAN_DELTA_BETA, np.logspace(-4, -3, 8))
    fit = fit_tan_delta(pts)
    for p, m in pts:
        assert surface_limited_q(p, fit.tan_delta.value) == pytest.approx(
            m.value, rel=1e-9
        )


# ---------------------------------------------------------------------------
# oxide thickness


def _xps(i_ox=0.578, i_m=0.241, lam=1.51e-9, n_m=5.43e28, n_ox=2.24e28):
    return XpsInput(i_ox=i_ox, i_m=i_m, lambda_eff=lam, n_m=n_m, n_ox=n_ox)


def test_oxide_thickness_zero_intensity():
    assert oxide_thickness(_xps(i_ox=0.0)) == 0.0


def test_oxide_thickness_native_oxide_value():
    # intensity ratio ~2.40 with the tabulated densities: ~2.9 nm
    x = _xps(i_ox=2.40, i_m=1.0)
    assert oxide_thickness(x) == pytest.approx(2.8985e-9, rel=1e-3)
    assert abs(oxide_thickness(x) - 2.9e-9) < 0.05e-9


def test_oxide_thickness_scales_with_attenuation_length():
    x1 = _xps()
    x2 = _xps(lam=2 * 1.51e-9)
    assert oxide_thickness(x2) == pytest.approx(2 * oxide_thickness(x1), rel=1e-12)


@given(r1=st.floats(min_value=0.01, max_value=50.0),
       factor=st.floats(min_value=1.01, max_value=10.0))
def test_oxide_thickness_monotone_and_concave(r1, factor):
    t = lambda r: oxide_thickness(_xps(i_ox=r, i_m=1.0))
    r2 = r1 * factor
    assert t(r2) > t(r1)
    # concavity: midpoint value above the chord
    mid = 0.5 * (r1 + r2)
    assert t(mid) >= 0.5 * (t(r1) + t(r2)) - 1e-15


def test_xps_input_invariants():
    with pytest.raises(DomainError):
        _xps(i_ox=-0.1)
    with pytest.raises(DomainError):
        _xps(i_m=0.0)


# ---------------------------------------------------------------------------
# thickness-scaled metal-air loss apportioning


def test_ma_excess_fraction_reported_value():
    frac = ma_excess_fraction(2.9e-9, 2.45e-9, 6e-4, TAN_DELTA_BETA, TAN_DELTA_ALPHA)
    expected = 6e-4 * (2.9 / 2.45 - 1.0) / (TAN_DELTA_BETA - TAN_DELTA_ALPHA)
    assert frac == pytest.approx(expected, rel=1e-12)
    # reads as "about 20%" after rounding and uncertainties
    assert 0.10 < frac < 0.25


def test_ma_excess_fraction_no_thickness_excess():
    assert ma_excess_fraction(2.45e-9, 2.45e-9, 6e-4, TAN_DELTA_BETA, TAN_DELTA_ALPHA) == 0.0


def test_ma_excess_fraction_linear_in_excess():
    t_a = 2.0e-9
    f1 = ma_excess_fraction(2.2e-9, t_a, 6e-4, TAN_DELTA_BETA, TAN_DELTA_ALPHA)
    f2 = ma_excess_fraction(2.4e-9, t_a, 6e-4, TAN_DELTA_BETA, TAN_DELTA_ALPHA)
    assert f2 == pytest.approx(2 * f1, rel=1e-12)


def test_ma_excess_fraction_requires_excess():
    with pytest.raises(DomainError, match="no excess"):
        ma_excess_fraction(2.9e-9, 2.45e-9, 6e-4, TAN_DELTA_ALPHA, TAN_DELTA_BETA)
