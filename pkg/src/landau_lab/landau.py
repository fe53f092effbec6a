"""Landau solutions of the stationary Navier-Stokes system and their box truncation."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .spectral import (
    Field,
    Grid,
    dealias_hat,
    laplacian_hat,
    leray_hat,
    rfft3,
    riesz_double_hat,
    tensor_divergence_hat,
)


class DomainError(ValueError):
    """Raised when the Landau formulas are evaluated outside their domain."""


class ResolutionError(ValueError):
    """Raised when a truncated background is not resolved by the grid."""


def _check_c(c: float) -> None:
    if not abs(c) > 1:
        raise DomainError(f"Landau parameter must satisfy |c| > 1, got {c}")


def _check_point(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[0] != 3:
        raise ValueError("points must have a leading axis of length 3")
    if np.any(np.sum(x**2, axis=0) == 0):
        raise DomainError("Landau fields are singular at the origin")
    return x


def landau_velocity(c: float, x) -> np.ndarray:
    """Velocity ``v_c(x)``; ``x`` has shape ``(3,)`` or ``(3, ...)``."""
    _check_c(c)
    x = _check_point(x)
    r = np.sqrt(np.sum(x**2, axis=0))
    d = c * r - x[0]
    denom = r * d * d
    v1 = 2 * (c * r * r - 2 * x[0] * r + c * x[0] ** 2) / denom
    common = 2 * (c * x[0] - r) / denom
    return np.array([v1, x[1] * common, x[2] * common])


def landau_pressure(c: float, x) -> np.ndarray | float:
    _check_c(c)
    x = _check_point(x)
    r = np.sqrt(np.sum(x**2, axis=0))
    d = c * r - x[0]
    return 4 * (c * x[0] - r) / (r * d * d)


def force_parameter(c: float) -> float:
    """Magnitude ``b(c)`` of the point force driving the Landau solution."""
    _check_c(c)
    s = math.copysign(1.0, c)
    a = abs(c)
    if a < 2:
        bracket = 2 + 6 * a * a - 3 * a * (a * a - 1) * math.log1p(2 / (a - 1))
    else:
        # 2 + 12 sum_m c^{-2m} / ((2m+1)(2m+3)); avoids cancellation for large c
        bracket = 2.0
        term = 1.0
        for m in range(200):
            inc = 12 * term / ((2 * m + 1) * (2 * m + 3))
            bracket += inc
            if inc < 1e-18 * bracket:
                break
            term /= a * a
    return s * 8 * math.pi * a / (3 * (a * a - 1)) * bracket


def weighted_bound(c: float) -> float:
    """The stated bound ``2*sqrt(2)/(|c|-1)`` on ``| |x| v_c |``."""
    _check_c(c)
    return 2 * math.sqrt(2) / (abs(c) - 1)


def fibonacci_sphere(n: int, radius: float = 1.0) -> np.ndarray:
    """Quasi-uniform points on a sphere, shape ``(3, n)``."""
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    rho = np.sqrt(1 - z * z)
    phi = math.pi * (3 - math.sqrt(5)) * i
    return radius * np.array([z, rho * np.cos(phi), rho * np.sin(phi)])


def weighted_speed_bound(c: float, n_samples: int = 10_000, radius: float = 1.0) -> tuple[float, float]:
    """Sampled ``sup |x||v_c(x)|`` on a sphere together with the stated bound."""
    if n_samples < 100:
        raise ValueError("need at least 100 sphere samples")
    pts = fibonacci_sphere(n_samples, radius)
    speed = np.sqrt(np.sum(landau_velocity(c, pts) ** 2, axis=0))
    return float(np.max(radius * speed)), weighted_bound(c)


def gradient_bounds(c: float, n_samples: int = 4000, rel_step: float = 1e-6) -> np.ndarray:
    """Estimate ``K_jk = sup |x|^2 |d_j v^k|`` on the unit sphere, indexed [j, k].

    Centered differences of the closed-form velocity; the quantity is
    0-homogeneous so the unit sphere suffices.
    """
    pts = fibonacci_sphere(n_samples)
    out = np.zeros((3, 3))
    for j in range(3):
        e = np.zeros((3, 1))
        e[j] = rel_step
        dv = (landau_velocity(c, pts + e) - landau_velocity(c, pts - e)) / (2 * rel_step)
        out[j] = np.max(np.abs(dv), axis=1)
    return out


def shell_points(rng: np.random.Generator, n: int, r_min: float, r_max: float) -> np.ndarray:
    """``n`` points uniformly distributed in the volume of the shell ``r_min <= |x| <= r_max``."""
    d = rng.standard_normal((n, 3))
    d /= np.linalg.norm(d, axis=1)[:, None]
    r = rng.uniform(r_min**3, r_max**3, n) ** (1 / 3)
    return d * r[:, None]


def residual_audit(c: float, points: np.ndarray, h: float) -> dict:
    """Residual magnitudes at ``h`` and ``h/2``; ``order_ratio`` compares their l2 sums over points."""
    r1 = np.array([np.linalg.norm(stationary_residual(c, x, h)) for x in points])
    r2 = np.array([np.linalg.norm(stationary_residual(c, x, h / 2)) for x in points])
    return {"max": float(r1.max()), "max_half": float(r2.max()),
            "order_ratio": float(np.linalg.norm(r1) / np.linalg.norm(r2))}


def stationary_residual(c: float, x, h: float) -> np.ndarray:
    """Finite-difference ``-lap v + (v.grad)v + grad p`` at ``x`` (second order)."""
    x = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(x))
    if r == 0:
        raise DomainError("residual undefined at the origin")
    if h > r / 10:
        raise ValueError(f"step {h} too large for |x| = {r}")
    v0 = landau_velocity(c, x)
    lap = -6 * v0
    grad_v = np.zeros((3, 3))  # [i, j] = d_j v_i
    grad_p = np.zeros(3)
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        vp, vm = landau_velocity(c, x + e), landau_velocity(c, x - e)
        lap = lap + vp + vm
        grad_v[:, j] = (vp - vm) / (2 * h)
        grad_p[j] = (landau_pressure(c, x + e) - landau_pressure(c, x - e)) / (2 * h)
    lap = lap / (h * h)
    return -lap + grad_v @ v0 + grad_p


def momentum_flux(c: float, r: float = 1.0, n_quad: int = 64, check: bool = True) -> np.ndarray:
    """Net momentum flux of the Landau solution through the sphere of radius ``r``.

    Integrates ``-dv/dn + v (v.n) + p n`` with Gauss-Legendre nodes in the
    polar cosine and the trapezoid rule in azimuth; the normal derivative is a
    centered difference. By the divergence theorem the result is the total
    force ``(b(c), 0, 0)``.
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    if n_quad < 32:
        raise ValueError("need at least 32 nodes per angular direction")
    result = _flux(c, r, n_quad)
    if check:
        finer = _flux(c, r, 2 * n_quad)
        scale = max(abs(result[0]), 1e-300)
        if np.max(np.abs(finer - result)) > 1e-3 * scale:
            warnings.warn(f"momentum flux under-resolved at n_quad={n_quad}", RuntimeWarning, stacklevel=2)
    return result


def _flux(c: float, r: float, n_quad: int) -> np.ndarray:
    mu, wmu = np.polynomial.legendre.leggauss(n_quad)
    n_phi = 2 * n_quad
    phi = 2 * math.pi * np.arange(n_phi) / n_phi
    mu_g, phi_g = np.meshgrid(mu, phi, indexing="ij")
    s = np.sqrt(1 - mu_g**2)
    n = np.array([mu_g, s * np.cos(phi_g), s * np.sin(phi_g)])
    x = r * n
    h = 1e-4 * r
    v = landau_velocity(c, x)
    dvdn = (landau_velocity(c, x + h * n) - landau_velocity(c, x - h * n)) / (2 * h)
    p = landau_pressure(c, x)
    integrand = -dvdn + v * np.sum(v * n, axis=0) + p * n
    weights = np.outer(wmu, np.full(n_phi, 2 * math.pi / n_phi)) * r * r
    return np.sum(integrand * weights, axis=(1, 2))


# -- periodic-box truncation --------------------------------------------------


def smoothstep(t: np.ndarray) -> np.ndarray:
    """Quintic C2 ramp from 0 (t <= 0) to 1 (t >= 1)."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10 - 15 * t + 6 * t * t)


def smoothstep_prime(t: np.ndarray) -> np.ndarray:
    inside = (t > 0) & (t < 1)
    t = np.clip(t, 0.0, 1.0)
    return np.where(inside, 30 * t * t * (1 - t) ** 2, 0.0)


@dataclass
class LandauParams:
    """Background family member plus its truncation geometry."""

    c: float
    delta: float
    r_in: float
    r_out: float
    kjk: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        _check_c(self.c)
        if not 0 < self.delta < self.r_in < self.r_out:
            raise ValueError("need 0 < delta < r_in < r_out")

    @classmethod
    def for_grid(cls, c: float, grid: Grid, delta: float | None = None,
                 r_in: float | None = None, r_out: float | None = None) -> LandauParams:
        return cls(
            c=c,
            delta=4 * grid.h if delta is None else delta,
            r_in=grid.l / 4 if r_in is None else r_in,
            r_out=0.45 * grid.l if r_out is None else r_out,
        )

    @property
    def b(self) -> float:
        return force_parameter(self.c)

    @property
    def k_c(self) -> float:
        return weighted_bound(self.c)

    def estimate_kjk(self, n_samples: int = 4000) -> np.ndarray:
        self.kjk = gradient_bounds(self.c, n_samples)
        return self.kjk


def _profile(params: LandauParams, x: np.ndarray) -> np.ndarray:
    """Windowed, core-regularized Landau velocity at centered points ``x``.

    Built as the curl of ``phi (0, -x3, x2)`` with ``phi = W(r) g`` and
    ``g = 2 / (c R(r) - x1)``, which reproduces ``v_c`` exactly where
    ``W = 1`` and ``R(r) = r``. Being a curl, it is solenoidal.
    """
    c, d = params.c, params.delta
    r = np.sqrt(np.sum(x**2, axis=0))
    t_core = (r - d) / d
    big_r = np.sqrt(r * r + d * d * (1 - smoothstep(t_core)))
    dbig_r = (2 * r - d * smoothstep_prime(t_core)) / (2 * big_r)
    span = params.r_out - params.r_in
    t_win = (r - params.r_in) / span
    win = 1 - smoothstep(t_win)
    dwin = -smoothstep_prime(t_win) / span
    g = 2 / (c * big_r - x[0])
    safe_r = np.where(r == 0, 1.0, r)
    radial = x / safe_r  # x/r, zero at the origin
    grad_phi = (dwin * g)[None] * radial - (win * g * g / 2)[None] * (
        c * dbig_r[None] * radial - np.array([1.0, 0.0, 0.0]).reshape((3,) + (1,) * (x.ndim - 1))
    )
    phi = win * g
    return np.array([
        2 * phi + x[1] * grad_phi[1] + x[2] * grad_phi[2],
        -x[1] * grad_phi[0],
        -x[2] * grad_phi[0],
    ])


@dataclass
class TruncatedBackground:
    """Landau background adapted to the periodic box.

    ``velocity`` is the band-limited, divergence-free field used by the
    solvers; ``compensation`` is the body force making ``velocity`` an exact
    discrete steady state of the forced system on the box.
    """

    params: LandauParams
    grid: Grid
    raw: Field
    velocity: Field
    pressure: Field
    compensation: Field

    def profile(self, x) -> np.ndarray:
        """Pointwise truncated field at coordinates relative to the box center."""
        return _profile(self.params, np.asarray(x, dtype=float))

    @cached_property
    def velocity_physical(self) -> np.ndarray:
        return self.velocity.values

    @cached_property
    def max_speed(self) -> float:
        return float(np.max(np.sqrt(np.sum(self.velocity_physical**2, axis=0))))

    def scaled(self, factor: float) -> TruncatedBackground:
        """Same geometry with the velocity multiplied by ``factor`` (0 switches it off)."""
        return TruncatedBackground(
            self.params, self.grid, self.raw * factor, self.velocity * factor,
            self.pressure * (factor * factor), self.compensation * factor,
        )


def stationary_forcing_hat(grid: Grid, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Spectral (force, pressure) with ``-lap v + div(v (x) v) + grad p = force``.

    ``v`` is a physical solenoidal array; products are dealiased exactly as in
    the time stepper.
    """
    v_hat = rfft3(v)
    conv = tensor_divergence_hat(grid, v, v)
    force = leray_hat(grid, -laplacian_hat(grid, v_hat) + conv)
    tensor = np.zeros(grid.spectral_shape, dtype=complex)
    for i in range(3):
        for j in range(3):
            tensor -= riesz_double_hat(grid, i, j, dealias_hat(grid, rfft3(v[i] * v[j])))
    return force, tensor


def truncated_background(params: LandauParams, grid: Grid) -> TruncatedBackground:
    if params.r_out > 0.5 * grid.l:
        raise ValueError("window does not fit in the box")
    if params.delta < 4 * grid.h or params.r_out - params.r_in < 4 * grid.h:
        raise ResolutionError("core or window transition spans fewer than 4 grid cells")
    raw = _profile(params, grid.centered_coords)
    v_hat = dealias_hat(grid, leray_hat(grid, rfft3(raw)))
    velocity = Field(grid, v_hat, spectral=True)
    force_hat, p_hat = stationary_forcing_hat(grid, velocity.values)
    return TruncatedBackground(
        params=params,
        grid=grid,
        raw=Field(grid, raw),
        velocity=velocity,
        pressure=Field(grid, p_hat, spectral=True),
        compensation=Field(grid, force_hat, spectral=True),
    )
