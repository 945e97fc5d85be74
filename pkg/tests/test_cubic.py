import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lamedisp.cubic import CubicAssertionError, cubic_analysis, depressed_cubic_roots
from lamedisp.weierstrass import Lattice, build_context


def poly(report, x):
    return np.polyval(report.coefficients, x)


def test_reference_critical_points(ctx):
    r = cubic_analysis(ctx)
    plus = r.critical_points[np.argmax(r.critical_points.imag)]
    assert abs(plus.real - 0.0628169) < 1e-5
    assert abs(plus.imag - 0.195787) < 1e-5
    assert np.allclose(r.critical_points[0], np.conj(r.critical_points[1]))


def test_reference_critical_values(ctx):
    r = cubic_analysis(ctx)
    values = sorted(r.critical_values, key=lambda v: v.imag)
    assert abs(values[0] - (-0.0386656 - 0.0300201j)) < 1.5e-5
    assert abs(values[1] - (-0.0386656 + 0.0300201j)) < 1.5e-5


def test_critical_values_are_polynomial_values(any_ctx):
    r = cubic_analysis(any_ctx, strict=False)
    assert np.max(np.abs(poly(r, r.critical_points) - r.critical_values)) < 1e-10 * max(1.0, np.abs(r.critical_values).max())


def test_critical_points_are_stationary(any_ctx):
    r = cubic_analysis(any_ctx, strict=False)
    deriv = np.polyder(np.array(r.coefficients))
    assert np.max(np.abs(np.polyval(deriv, r.critical_points))) < 1e-10


def test_roots_are_roots(any_ctx):
    r = cubic_analysis(any_ctx, strict=False)
    scale = max(abs(c) for c in r.coefficients)
    assert np.max(np.abs(poly(r, r.roots))) < 1e-12 * scale


def test_band1_root(ctx):
    r = cubic_analysis(ctx)
    assert ctx.e2 < r.band1_root < ctx.e1
    assert r.band1_root == pytest.approx(0.20561218884, abs=1e-10)
    assert r.ok and r.generic and r.corollary_holds


def test_sign_changes_at_band_edges(any_ctx):
    # P(e2) and P(e1) bracket the band-1 root
    r = cubic_analysis(any_ctx)
    assert poly(r, any_ctx.e2) * poly(r, any_ctx.e1) < 0


def test_inflection_between_lower_edges(any_ctx):
    r = cubic_analysis(any_ctx)
    assert any_ctx.e3 < -r.zeta_ratio < any_ctx.e2


def test_depressed_roots_three_real():
    w = depressed_cubic_roots(-1.0, 0.5)
    assert np.all(np.abs(w.imag) == 0)
    assert np.max(np.abs(w**3 - 3 * w + 0.5)) < 1e-14


def test_depressed_roots_one_real():
    w = depressed_cubic_roots(1.0, 0.5)
    assert w[0].imag == 0 and abs(w[1] - np.conj(w[2])) < 1e-15
    assert np.max(np.abs(w**3 + 3 * w + 0.5)) < 1e-14


def test_triple_root_is_reported():
    w = depressed_cubic_roots(0.0, 0.0)
    assert np.all(w == 0)


def test_strict_mode_names_failed_check(ctx, monkeypatch):
    import lamedisp.cubic as cubic

    monkeypatch.setattr(cubic, "_local_root", lambda j, guess, *args: -1.0)
    with pytest.raises(CubicAssertionError) as info:
        cubic.cubic_analysis(ctx)
    assert info.value.check == "unique simple root in (e2, e1)"
    assert not cubic.cubic_analysis(ctx, strict=False).ok


def test_elongated_lattice_has_tight_root_cluster():
    r = cubic_analysis(build_context(Lattice(1.0, 5.0)))
    assert r.ok
    assert abs(r.disc_gap) < 1e-10


@settings(max_examples=60, deadline=None)
@given(
    omega=st.floats(min_value=0.5, max_value=8.0),
    omega_prime=st.floats(min_value=0.5, max_value=8.0),
)
def test_structural_checks_hold_everywhere(omega, omega_prime):
    r = cubic_analysis(build_context(Lattice(omega, omega_prime)), strict=False)
    assert r.ok, [name for name, ok in r.checks.items() if not ok]


@settings(max_examples=30, deadline=None)
@given(omega=st.floats(min_value=0.5, max_value=8.0), ratio=st.floats(min_value=0.2, max_value=5.0))
def test_scaling_covariance(omega, ratio):
    # p scales as s^-2 under a lattice dilation, so root positions scale the same way
    a = cubic_analysis(build_context(Lattice(omega, omega * ratio)), strict=False)
    b = cubic_analysis(build_context(Lattice(2 * omega, 2 * omega * ratio)), strict=False)
    assert b.band1_root == pytest.approx(a.band1_root / 4, rel=1e-9, abs=1e-15)
