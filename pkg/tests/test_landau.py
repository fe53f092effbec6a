import math

import mpmath
import numpy as np
import pytest

from landau_lab.landau import (
    DomainError,
    LandauParams,
    ResolutionError,
    force_parameter,
    gradient_bounds,
    landau_pressure,
    landau_velocity,
    momentum_flux,
    residual_audit,
    shell_points,
    stationary_residual,
    truncated_background,
    weighted_bound,
    weighted_speed_bound,
)
from landau_lab.spectral import Grid, max_divergence, resample


def b_reference(c):
    c = mpmath.mpf(c)
    return 8 * mpmath.pi * c / (3 * (c * c - 1)) * (
        2 + 6 * c * c - 3 * c * (c * c - 1) * mpmath.log((c + 1) / (c - 1)))


def curl_of_potential(c, x, h=1e-5):
    """Curl of A = 2/(c r - x1) (0, -x3, x2) by centered differences."""
    def a(p):
        r = np.linalg.norm(p)
        return 2 / (c * r - p[0]) * np.array([0.0, -p[2], p[1]])

    jac = np.zeros((3, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        jac[:, j] = (a(x + e) - a(x - e)) / (2 * h)
    return np.array([jac[2, 1] - jac[1, 2], jac[0, 2] - jac[2, 0], jac[1, 0] - jac[0, 1]])


def test_axis_values():
    np.testing.assert_allclose(landau_velocity(2.0, [1.0, 0, 0]), [4.0, 0, 0], rtol=1e-15)
    assert landau_pressure(2.0, [1.0, 0, 0]) == pytest.approx(4.0, rel=1e-15)


@pytest.mark.parametrize("c", [1.2, 2.0, -3.0, 10.0])
def test_velocity_is_curl_of_potential(c, rng):
    for x in shell_points(rng, 5, 0.5, 2.0):
        np.testing.assert_allclose(landau_velocity(c, x), curl_of_potential(c, x), rtol=1e-7, atol=1e-8)


@pytest.mark.parametrize("c", [1.5, 2.0, 4.0])
def test_minus_one_homogeneous(c, rng):
    x = shell_points(rng, 10, 0.5, 2.0).T
    for lam in (0.3, 7.0):
        np.testing.assert_allclose(landau_velocity(c, lam * x), landau_velocity(c, x) / lam, rtol=1e-13)
        np.testing.assert_allclose(landau_pressure(c, lam * x), landau_pressure(c, x) / lam**2, rtol=1e-13)


@pytest.mark.parametrize("c", [1.01, 1.5, 2.0, 2.5, 4.0, 8.0, 100.0, 1e4])
def test_force_parameter_matches_high_precision(c):
    with mpmath.workdps(50):
        ref = float(b_reference(c))
    assert force_parameter(c) == pytest.approx(ref, rel=1e-12)


def test_force_parameter_odd_and_decreasing():
    cs = np.linspace(1.05, 50, 200)
    b = [force_parameter(c) for c in cs]
    assert np.all(np.diff(b) < 0)
    assert force_parameter(-3.0) == -force_parameter(3.0)


@pytest.mark.parametrize("c", [1.0, 0.5, -1.0, 0.0])
def test_domain_errors(c):
    with pytest.raises(DomainError):
        landau_velocity(c, [1.0, 0, 0])
    with pytest.raises(DomainError):
        force_parameter(c)


def test_origin_is_rejected():
    with pytest.raises(DomainError):
        landau_velocity(2.0, [0.0, 0.0, 0.0])
    with pytest.raises(DomainError):
        stationary_residual(2.0, [0.0, 0.0, 0.0], 1e-3)


def test_residual_is_second_order(rng):
    audit = residual_audit(2.0, shell_points(rng, 20, 0.5, 2.0), 1e-3)
    assert audit["order_ratio"] == pytest.approx(4.0, rel=0.05)


def test_residual_rejects_coarse_step():
    with pytest.raises(ValueError):
        stationary_residual(2.0, [0.5, 0, 0], 0.1)


@pytest.mark.parametrize("r", [0.5, 1.0, 2.0])
def test_flux_equals_force(r):
    f = momentum_flux(2.0, r)
    assert f[0] == pytest.approx(force_parameter(2.0), rel=1e-6)
    assert np.all(np.abs(f[1:]) < 1e-10)


@pytest.mark.parametrize("c", [1.5, 2.0, 3.0, 10.0])
def test_weighted_speed_supremum_is_on_axis(c):
    # |x||v_c| peaks on the positive x1 axis at 4/(|c|-1)
    sup, bound = weighted_speed_bound(c, 10_000)
    assert sup == pytest.approx(4 / (c - 1), rel=1e-3)
    assert sup <= 4 / (c - 1) * (1 + 1e-12)
    assert bound == pytest.approx(2 * math.sqrt(2) / (c - 1))


def test_weighted_bound_c3():
    assert weighted_bound(3.0) == pytest.approx(1.414214, abs=1e-6)


def test_gradient_bounds_scale_with_c():
    k2 = gradient_bounds(2.0, 500)
    k10 = gradient_bounds(10.0, 500)
    assert k2.shape == (3, 3)
    assert np.all(k10 <= k2)


class TestTruncatedBackground:
    def test_matches_landau_in_annulus(self):
        g = Grid(48)
        p = LandauParams.for_grid(5.0, g)
        bg = truncated_background(p, g)
        r = g.radius
        sel = (r >= 2 * p.delta) & (r <= p.r_in)
        assert np.count_nonzero(sel) > 100
        x = g.centered_coords[:, sel]
        np.testing.assert_allclose(bg.raw.values[:, sel], landau_velocity(5.0, x), rtol=1e-10, atol=1e-12)

    def test_solenoidal(self, background32):
        assert max_divergence(background32.velocity) < 1e-12
        assert max_divergence(background32.compensation) < 1e-10

    def test_profile_is_pointwise_exact(self, background32):
        p = background32.params
        x = np.array([[1.2, -0.4], [0.3, 0.9], [-0.5, 0.1]])
        x *= (2 * p.delta / np.linalg.norm(x, axis=0))[None]
        np.testing.assert_allclose(background32.profile(x), landau_velocity(p.c, x), rtol=1e-12)

    def test_resolution_guard(self):
        g = Grid(16)
        with pytest.raises(ResolutionError):
            truncated_background(LandauParams(c=2.0, delta=0.1, r_in=1.5, r_out=2.8), g)

    def test_window_must_fit(self, grid32):
        with pytest.raises(ValueError):
            truncated_background(LandauParams(c=2.0, delta=1.0, r_in=2.0, r_out=4.0), grid32)

    def test_scaled_off(self, background32):
        off = background32.scaled(0.0)
        assert off.max_speed == 0.0

    def test_resample_keeps_band_limited_background(self, background32):
        fine = Grid(48)
        back = resample(resample(background32.velocity, fine), background32.grid)
        np.testing.assert_allclose(back.values, background32.velocity.values, atol=1e-13)
