from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, optimize

from cpinn.oracles import (
    BracketError,
    ConvergenceError,
    RootBracket,
    brent_root,
    eigenfunction_planar,
    nucleation_field_planar,
    nucleation_field_sphere,
    planar_mode,
    radial_fd_eigenvalue,
    shooting_eigenvalue_1d,
    sphere_radial_mode,
    sphere_residual,
)

SQRT2 = math.sqrt(2.0)


@pytest.mark.parametrize("r0", [0.5, 1.0, 3.7, 10.0])
def test_planar_no_defect(r0):
    assert nucleation_field_planar(r0, 0.0) == 1.0


@pytest.mark.parametrize(
    "r0,dk,expected",
    [
        (1.0, 1.0, 1 - (math.sqrt(5) - 1) ** 2 / 4),
        (10.0, 1.0, 1 - (math.sqrt(401) - 1) ** 2 / 400),
        (5.0, 0.5, 1 - (math.sqrt(51) - 1) ** 2 / 100),
    ],
)
def test_planar_closed_form_values(r0, dk, expected):
    assert abs(nucleation_field_planar(r0, dk) - expected) < 1e-12


def test_planar_frozen_values():
    assert nucleation_field_planar(1, 1) == pytest.approx(0.6180339887498948, abs=1e-12)
    assert nucleation_field_planar(10, 1) == pytest.approx(0.09512492197250377, abs=1e-12)
    assert nucleation_field_planar(5, 0.5) == pytest.approx(0.622828568570857, abs=1e-12)


def test_planar_monotone_and_bounded():
    r0 = np.linspace(1, 10, 30)[:, None]
    dk = np.linspace(0, 1, 30)[None, :]
    h = nucleation_field_planar(r0, dk)
    assert np.all((h >= 0) & (h <= 1))
    assert np.all(np.diff(h, axis=1) < 0)
    assert np.all(np.diff(h[:, 1:], axis=0) < 0)


def test_planar_vectorized_matches_scalar():
    r0, dk = np.array([1.0, 2.0]), np.array([0.3, 0.9])
    np.testing.assert_array_equal(nucleation_field_planar(r0, dk), [nucleation_field_planar(a, b) for a, b in zip(r0, dk)])


def test_planar_eigenfunction_even_and_normalized():
    z = np.linspace(0, 16, 101)
    for r0, dk in [(1.0, 1.0), (5.0, 0.5), (10.0, 0.2)]:
        phi, localized = eigenfunction_planar(z, r0, dk)
        assert localized
        assert np.array_equal(phi, eigenfunction_planar(-z, r0, dk)[0])
        mass, _ = integrate.quad(lambda s: eigenfunction_planar(s, r0, dk)[0] ** 2, -16, 16, points=[0.0], limit=200, epsabs=1e-13)
        assert abs(mass - 1.0) < 1e-8


def test_planar_exponent():
    assert planar_mode(1.0, 1.0).exponent == pytest.approx(0.618034, abs=1e-6)


def test_planar_no_bound_state_flag():
    phi, localized = eigenfunction_planar([0.0, 3.0], 4.0, 0.0)
    assert not localized
    assert phi[0] == phi[1]


@pytest.mark.parametrize("r0,dk", [(1.0, 1.0), (5.0, 0.5), (10.0, 1.0), (2.0, 0.1)])
def test_shooting_agrees_with_closed_form(r0, dk):
    assert abs(shooting_eigenvalue_1d(r0, dk) - nucleation_field_planar(r0, dk)) < 1e-6


def test_shooting_limits():
    assert shooting_eigenvalue_1d(3.0, 0.0) is None
    assert abs(shooting_eigenvalue_1d(5.0, 1e-4) - 1.0) < 1e-5


def test_brent_examples():
    assert abs(brent_root(lambda x: x * x - 2, (1.0, 2.0)) - SQRT2) < 1e-10
    assert abs(brent_root(math.cos, (1.0, 2.0)) - math.pi / 2) < 1e-10
    with pytest.raises(BracketError):
        brent_root(lambda x: x * x + 1, (0.0, 1.0))
    with pytest.raises(BracketError):
        RootBracket.of(lambda x: x * x + 1, 0.0, 1.0)


def test_brent_iteration_cap():
    with pytest.raises(ConvergenceError):
        brent_root(lambda x: x**3 - 0.3, (0.0, 1.0), tol=1e-15, maxiter=2)


@given(st.floats(0.05, 0.95), st.floats(0.5, 4.0))
def test_brent_matches_scipy(shift, power):
    f = lambda x: math.copysign(abs(x - shift) ** power, x - shift) + 0.1 * math.sin(7 * x)
    ours = brent_root(f, (0.0, 1.0), tol=1e-14)
    ref = optimize.brentq(f, 0.0, 1.0, xtol=1e-14)
    assert abs(f(ours)) <= 1e-10 or abs(ours - ref) < 1e-9


def test_brent_endpoint_root():
    assert brent_root(lambda x: x - 1.0, (1.0, 2.0)) == 1.0


def test_sphere_small_radius_is_one():
    assert nucleation_field_sphere(0.8, 1.0, 1.0) == 1.0
    assert nucleation_field_sphere(1.0, 1.0, 1.0) == 1.0


def test_sphere_large_radius_value():
    h = nucleation_field_sphere(10.0, 1.0, 1.0)
    assert h == pytest.approx(0.08135854282835134, abs=1e-12)
    assert abs(sphere_residual(h, 10.0, 1.0, 1.0)) < 1e-10
    # k = r0 sqrt(h) approaches pi from below for large inclusions
    k = 10.0 * math.sqrt(h)
    assert 2.5 < k < math.pi
    assert h == pytest.approx(k * k / 100.0)


@pytest.mark.parametrize("m,a", [(1.0, 1.0), (1.387, 1.5)])
def test_sphere_fig_lines(m, a):
    r0 = np.round(np.arange(1.0, 10.0001, 0.1), 10)
    assert len(r0) == 91
    h = np.array([nucleation_field_sphere(r, m, a) for r in r0])
    assert np.all((h > 0) & (h <= 1))
    assert np.all(np.diff(h) <= 0)
    for r, hv in zip(r0, h):
        if hv < 1:
            assert abs(sphere_residual(hv, r, m, a)) < 1e-10


def test_sphere_forms_coincide_when_ratios_equal():
    for r0 in (1.5, 3.0, 7.0):
        for ma in (1.0, 1.2, SQRT2):
            assert nucleation_field_sphere(r0, ma, ma, "matching") == nucleation_field_sphere(r0, ma, ma, "inverted-ratio")
    assert nucleation_field_sphere(4.0, 1.0, 2.0, "inverted_ratio") != nucleation_field_sphere(4.0, 1.0, 2.0)


@pytest.mark.parametrize("r0,m,a", [(3.0, 1.0, 1.0), (5.0, 1.387, 1.5), (2.5, 1.1, 1.9), (8.0, 1.4, 1.2)])
def test_matching_form_agrees_with_radial_finite_volumes(r0, m, a):
    h = nucleation_field_sphere(r0, m, a)
    assert abs(min(radial_fd_eigenvalue(r0, m, a), 1.0) - h) < 1e-4


def test_inverted_ratio_form_disagrees_with_radial_finite_volumes():
    r0, m, a = 5.0, 1.0, 2.0
    fd = radial_fd_eigenvalue(r0, m, a)
    assert abs(nucleation_field_sphere(r0, m, a, "inverted-ratio") - fd) > 1e-2


def test_sphere_tag_checks():
    with pytest.raises(ValueError):
        nucleation_field_sphere(5.0, 1.0, 3.0)
    with pytest.raises(ValueError):
        nucleation_field_sphere(-1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        nucleation_field_sphere(5.0, 1.0, 1.0, form="other")


def test_sphere_radial_mode_continuous_at_interface():
    for r0, m, a in [(4.0, 1.0, 1.0), (6.0, 1.387, 1.5)]:
        inner = sphere_radial_mode(1.0, r0, m, a)
        outer = sphere_radial_mode(1.0 + 1e-12, r0, m, a)
        assert abs(inner - outer) < 1e-9
        assert sphere_radial_mode(0.0, r0, m, a) == 1.0
