"""Norms, functional inequalities and the constants ledger."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .spectral import Field, Grid, grad_hat, irfft3, rfft3, riesz_double, vector_gradient

# sharp constant in ||g||_6 <= S ||grad g||_2 on R^3
SOBOLEV_CONSTANT = (1 / math.sqrt(3 * math.pi)) * (4 / math.sqrt(math.pi)) ** (1 / 3)


def pointwise_magnitude(f: Field) -> np.ndarray:
    v = f.values
    return np.sqrt(np.sum(v * v, axis=0)) if f.is_vector else np.abs(v)


def lq_norm(f: Field, q: float) -> float:
    """``(int |f|^q)^(1/q)`` by midpoint quadrature; ``q = inf`` gives the max norm."""
    if q < 1:
        raise ValueError(f"L^q norm needs q >= 1, got {q}")
    m = pointwise_magnitude(f)
    if math.isinf(q):
        return float(np.max(m))
    return float((np.sum(m**q) * f.grid.cell_volume) ** (1 / q))


def _singular_integral(grid: Grid, density: np.ndarray, alpha: float, center: np.ndarray | None) -> float:
    """``int density / |x - center|^(2 alpha)`` over the box.

    The singular part at the center is handled by subtracting
    ``density(center) * exp(-r^2/s^2)``, whose weighted integral over R^3 is
    known in closed form; the bounded remainder is summed by the midpoint
    rule, with the center cell valued by the mean of its six axis neighbours.
    """
    x = grid.centered_coords
    if center is not None:
        x = x - np.asarray(center, dtype=float)[:, None, None, None]
    r = np.sqrt(np.sum(x * x, axis=0))
    if alpha <= 0:
        return float(np.sum(density * r ** (-2 * alpha)) * grid.cell_volume)
    if alpha >= 1.5:
        raise ValueError("weight is not locally integrable for alpha >= 3/2")
    ic = np.unravel_index(np.argmin(r), r.shape)
    h = grid.h
    if r[ic] > 1e-12 * h:
        # center off the lattice: the weight is bounded on every cell
        return float(np.sum(density / r ** (2 * alpha)) * grid.cell_volume)
    sigma = 3 * h
    d0 = density[ic]
    safe = np.where(r == 0, 1.0, r)
    remainder = (density - d0 * np.exp(-(r / sigma) ** 2)) / safe ** (2 * alpha)
    nbrs = []
    for axis in range(3):
        for step in (-1, 1):
            idx = list(ic)
            idx[axis] = (idx[axis] + step) % grid.n
            nbrs.append(remainder[tuple(idx)])
    remainder[ic] = np.mean(nbrs)
    analytic = d0 * 2 * math.pi * sigma ** (3 - 2 * alpha) * math.gamma(1.5 - alpha)
    return float(np.sum(remainder) * grid.cell_volume + analytic)


def weighted_norm(f: Field, alpha: float = 1.0, center=None) -> float:
    """``(int |f|^2 / |x|^(2 alpha))^(1/2)`` with ``|x|`` measured from the box center."""
    density = pointwise_magnitude(f) ** 2
    return math.sqrt(max(_singular_integral(f.grid, density, alpha, center), 0.0))


def gradient_l2(f: Field) -> float:
    """``||grad f||_2`` (Frobenius for vector fields) from the coefficients."""
    g = f.grid
    c = f.coefficients
    k2 = np.sum(g.wavenumbers**2, axis=0)
    total = np.sum(g.hermitian_weight * k2 * np.abs(c) ** 2)
    return float(np.sqrt(total * g.volume))


def hardy_ratio(f: Field, center=None) -> float:
    """``||f/|x| ||_2 / (2 ||grad f||_2)``; at most 1 on R^3."""
    denom = 2 * gradient_l2(f)
    if denom == 0:
        raise ZeroDivisionError("gradient vanishes identically")
    return weighted_norm(f, 1.0, center) / denom


def log_sobolev_gap(u: Field, a: float) -> float:
    """Slack in the sharp logarithmic Sobolev inequality (nonnegative on R^3)."""
    if a <= 0:
        raise ValueError("a must be positive")
    m = pointwise_magnitude(u)
    dv = u.grid.cell_volume
    mass = float(np.sum(m * m) * dv)
    if mass == 0:
        raise ValueError("u vanishes identically")
    norm = math.sqrt(mass)
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = np.where(m > 0, m * m * np.log(m / norm), 0.0)
    entropy = 2 * float(np.sum(ent) * dv)
    dirichlet = gradient_l2(u) ** 2
    return a * a / math.pi * dirichlet - entropy - 3 * (1 + math.log(a)) * mass


def riesz_norm_constant(r: float) -> float:
    """L^r operator norm of a single Riesz transform: tan(pi/2r) for r <= 2, cot above."""
    if not 1 < r < math.inf:
        raise ValueError(f"Riesz norm defined for 1 < r < inf, got {r}")
    if r == 2:
        return 1.0
    if r < 2:
        return math.tan(math.pi / (2 * r))
    return 1 / math.tan(math.pi / (2 * r))


def riesz_double_constant(r: float) -> float:
    """Default bound for ``lap^{-1} d_i d_j`` on L^r: the square of the scalar norm."""
    return riesz_norm_constant(r) ** 2


def riesz_grid_ratio(f: Field, r: float) -> float:
    """Largest ``||lap^{-1} d_i d_j f||_r / ||f||_r`` over index pairs."""
    base = lq_norm(f, r)
    return max(lq_norm(riesz_double(i, j, f), r) for i in range(3) for j in range(i, 3)) / base


def grad_power_norm(w: Field, p: float) -> float:
    """``||grad(|w|^(p/2))||_2`` via the spectral gradient of the physical power."""
    if p < 2:
        raise ValueError("p must be at least 2")
    g = pointwise_magnitude(w) ** (p / 2)
    return gradient_l2(Field(w.grid, g))


def pointwise_grad_bound_check(u: Field) -> float:
    """Max over the grid of ``|grad |u|^2|^2 - 4 |grad u|^2 |u|^2`` (nonpositive in theory).

    ``grad |u|^2`` is assembled as ``2 sum_i u_i grad u_i`` from spectral
    derivatives of ``u``; differentiating ``|u|^2`` itself would alias.
    """
    grid = u.grid
    v = u.values if u.is_vector else u.values[None]
    if u.is_vector:
        du = vector_gradient(u)
    else:
        du = irfft3(grad_hat(grid, u.coefficients), grid.n)[None]
    grad_sq = 2 * np.einsum("i...,ij...->j...", v, du)
    lhs = np.sum(grad_sq**2, axis=0)
    rhs = 4 * np.sum(du**2, axis=(0, 1)) * np.sum(v * v, axis=0)
    return float(np.max(lhs - rhs))


# -- constants ledger ---------------------------------------------------------


@dataclass
class ConstantsLedger:
    """Constants entering the smallness and decay gates.

    ``c1``/``c2`` are the linear and bilinear estimate constants, ``c_stab``
    the global stability constant (defaults to ``2 c1``: the fixed point lies
    in the ball of radius twice the linear part), ``c3`` and ``c_r`` the
    weighted Riesz constants. Values marked empirical come from sampling,
    not from proofs.
    """

    c: float | None = None
    c1: float | None = None
    c2: float | None = None
    c3: float | None = None
    c_stab: float | None = None
    k_hardy: float | None = None
    c_r: dict[float, float] = field(default_factory=dict)
    empirical: bool = True
    notes: str = ""

    @property
    def eps0(self) -> float | None:
        if self.c1 is None or self.c2 is None:
            return None
        return 1 / (4 * self.c1 * self.c2)

    @property
    def populated(self) -> bool:
        return self.c1 is not None and self.c2 is not None

    def h_r(self, r: float) -> float:
        return riesz_double_constant(r)

    def weighted_riesz(self, r: float) -> float:
        if r in self.c_r:
            return self.c_r[r]
        # no weighted constant recorded: fall back to the unweighted bound,
        # which is a lower bound for the A_r-weighted operator norm
        return riesz_double_constant(r)

    def stability_constant(self) -> float:
        if self.c_stab is not None:
            return self.c_stab
        if self.c1 is None:
            raise ValueError("ledger has no linear constant")
        return 2 * self.c1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["eps0"] = self.eps0
        d["c_r"] = {str(k): v for k, v in self.c_r.items()}
        return d


@dataclass
class MuResult:
    mu: float
    argmin_r: float
    passed: bool


def mu_constant(q: float, ledger: ConstantsLedger, k_c: float, n_r: int = 201) -> MuResult:
    """Infimum over r in [3, q] of the decay-gate expression; passes when > 1/2."""
    if q < 3:
        raise ValueError("q must be at least 3")
    if not ledger.populated:
        raise ValueError("constants ledger is not populated")
    c = ledger.stability_constant()
    eps0 = ledger.eps0
    best, best_r = math.inf, 3.0
    for r in np.linspace(3.0, q, n_r):
        value = (1 - 0.25 * c * eps0 - 1.5 * k_c - 2 * ledger.weighted_riesz(float(r)) * k_c
                 - ledger.h_r(3 * r / (r + 1)) * c * eps0)
        if value < best:
            best, best_r = value, float(r)
    return MuResult(mu=best, argmin_r=best_r, passed=best > 0.5)


# -- randomized audits --------------------------------------------------------


def audit_record(inequality: str, margins: list[float], seed: int) -> dict:
    """JSON-ready audit summary; ``worst_margin`` < 0 means a violation."""
    return {
        "inequality": inequality,
        "n_trials": len(margins),
        "worst_margin": float(min(margins)) if margins else None,
        "seed": seed,
    }


# -- space-time norms on stored trajectories ----------------------------------


def trapezoid(times, values) -> float:
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if len(t) < 2:
        return 0.0
    return float(np.sum(0.5 * (v[1:] + v[:-1]) * np.diff(t)))


def lt_lx_norm(times, spatial_norms, p_time: float) -> float:
    """``|| ||f(t)||_X ||_{L^p_t}`` from per-snapshot spatial norms (trapezoid)."""
    if math.isinf(p_time):
        return float(np.max(spatial_norms))
    return trapezoid(times, np.asarray(spatial_norms) ** p_time) ** (1 / p_time)


def interpolation_check(times, fields: list[Field], slack: float = 1e-2) -> dict:
    """Check ``||a||_{L4 L6} <= ||a||_{Linf L3}^(1/4) ||grad |a|^(3/2)||_{L2 L2}^(1/2)``."""
    l6 = [lq_norm(f, 6) for f in fields]
    l3 = [lq_norm(f, 3) for f in fields]
    g = [grad_power_norm(f, 3) for f in fields]
    lhs = lt_lx_norm(times, l6, 4)
    rhs = max(l3) ** 0.25 * lt_lx_norm(times, g, 2) ** 0.5
    return {"lhs": lhs, "rhs": rhs, "passed": lhs <= rhs * (1 + slack)}
