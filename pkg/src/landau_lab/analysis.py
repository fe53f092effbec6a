"""Quantitative experiments: decay rates, weak-strong gap, continuity, resolvent."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .evolution import EvolutionConfig, State, Trajectory, evolve
from .inequalities import ConstantsLedger, lq_norm, trapezoid
from .landau import LandauParams, _profile, truncated_background
from .mild import smallness_gate
from .spectral import (
    Field,
    Grid,
    dealias_hat,
    fft3,
    ifft3,
    leray_hat,
    resample,
    rfft3,
)


def decay_constant(q: float) -> float:
    """``C_q = (1/3 - 1/q)^((3/2)(1/3 - 1/q))``, with ``C_3 = 1``."""
    if q < 3:
        raise ValueError("q must be at least 3")
    s = 1 / 3 - 1 / q
    return 1.0 if s == 0 else s ** (1.5 * s)


def decay_exponent(q: float) -> float:
    return 3 / (2 * q) - 0.5


def envelope(t: float, q: float, norm_w0_l3: float) -> float:
    if q == 3:
        return norm_w0_l3
    if t <= 0:
        return math.inf
    return decay_constant(q) * t ** decay_exponent(q) * norm_w0_l3


@dataclass
class DecayRecord:
    t: float
    q: float
    norm: float
    envelope: float
    ratio: float


@dataclass
class DecayResult:
    records: list[DecayRecord]
    exponents: dict[float, float | None]
    max_ratio: dict[float, float]
    t_min: float
    t_sat: dict[float, float]
    saturated: dict[float, bool]
    gate: dict = field(default_factory=dict)


def homogeneous_data(grid: Grid, core: float, norm_l3: float, c: float = 2.0,
                     r_in: float | None = None, r_out: float | None = None) -> Field:
    """Windowed ``|x|^-1``-homogeneous solenoidal data (a Landau-type profile).

    Scale-critical data make the ``L^q`` decay follow ``t^(3/(2q) - 1/2)``
    between the core diffusion time and the window scale.
    """
    p = LandauParams(c=c, delta=core, r_in=grid.l / 4 if r_in is None else r_in,
                     r_out=0.45 * grid.l if r_out is None else r_out)
    raw = _profile(p, grid.centered_coords)
    f = Field(grid, dealias_hat(grid, leray_hat(grid, rfft3(raw))), spectral=True)
    return f * (norm_l3 / lq_norm(f, 3))


def largest_mode_time(w0: Field, fraction: float = 1e-2) -> float:
    """``1/k^2`` for the largest wavenumber shell holding ``fraction`` of the peak shell energy."""
    g = w0.grid
    e = np.sum(np.abs(w0.coefficients) ** 2, axis=0) * g.hermitian_weight
    k0 = 2 * math.pi / g.l
    shells = np.rint(np.sqrt(g.k2) / k0).astype(int)
    spectrum = np.bincount(shells.ravel(), e.ravel())
    if spectrum.max() == 0:
        return 0.0
    k_max = max(np.nonzero(spectrum >= fraction * spectrum.max())[0].max(), 1) * k0
    return 1 / k_max**2


def local_rates(times, norms) -> np.ndarray:
    """``-d log||w|| / d log t`` by centered differences."""
    t = np.asarray(times, dtype=float)
    n = np.asarray(norms, dtype=float)
    return -np.gradient(np.log(n), np.log(t))


def saturation_time(times, norms, t_min: float, t_box: float) -> tuple[float, bool]:
    """First time after ``t_min`` the decay rate drops below 10% of its value there, capped by ``t_box``."""
    t = np.asarray(times, dtype=float)
    rates = local_rates(t, norms)
    after = np.nonzero(t >= t_min)[0]
    if len(after) < 2:
        return min(t_box, float(t[-1])), False
    r0 = rates[after[0]]
    for i in after[1:]:
        if t[i] > t_box:
            break
        if r0 > 0 and rates[i] < 0.1 * r0:
            return float(t[i]), True
    return float(min(t_box, t[-1])), False


def fit_exponent(times, norms, t_lo: float, t_hi: float) -> float | None:
    t = np.asarray(times, dtype=float)
    n = np.asarray(norms, dtype=float)
    sel = (t >= t_lo) & (t <= t_hi) & (n > 0)
    if np.count_nonzero(sel) < 3:
        return None
    slope, _ = np.polyfit(np.log(t[sel]), np.log(n[sel]), 1)
    return float(slope)


def decay_study(w0: Field, q_list, t_end: float, cfg: EvolutionConfig,
                ledger: ConstantsLedger | None = None, t_min: float | None = None,
                t_box: float | None = None) -> DecayResult:
    """Evolve ``w0`` and compare ``||w(t)||_q`` with the decay envelope."""
    q_list = [float(q) for q in q_list]
    if any(q < 3 or q > 12 for q in q_list):
        raise ValueError("q values must lie in [3, 12]")
    gate = {}
    if ledger is not None and ledger.populated:
        gate = smallness_gate(w0, ledger)
        if not gate["passed"]:
            raise ValueError(f"data fail the smallness gate: {gate}")
    n0 = lq_norm(w0, 3)
    grid = w0.grid
    t_min = largest_mode_time(w0) if t_min is None else t_min
    t_box = (grid.l / 16) ** 2 if t_box is None else t_box
    if n0 == 0:
        return DecayResult(
            records=[DecayRecord(0.0, q, 0.0, envelope(0.0, q, 0.0), 0.0) for q in q_list],
            exponents={q: None for q in q_list}, max_ratio={q: 0.0 for q in q_list},
            t_min=t_min, t_sat={q: t_end for q in q_list}, saturated={q: False for q in q_list},
            gate=gate,
        )
    traj = evolve(State(0.0, w0), replace(cfg, mode="full", t_end=t_end))
    times = np.array(traj.times)
    records, exps, ratios, t_sat, sat = [], {}, {}, {}, {}
    for q in q_list:
        norms = traj.norms(q)
        for t, nq in zip(times, norms):
            env = envelope(t, q, n0)
            records.append(DecayRecord(float(t), q, float(nq), env, nq / env if env > 0 else math.inf))
        pos = times > 0
        t_sat[q], sat[q] = saturation_time(times[pos], norms[pos], t_min, t_box)
        if sat[q]:
            warnings.warn(f"L^{q:g} norm stopped decaying at t = {t_sat[q]:.4g}", stacklevel=2)
        exps[q] = fit_exponent(times[pos], norms[pos], t_min, t_sat[q])
        window = [r.ratio for r in records if r.q == q and t_min <= r.t <= t_sat[q]]
        ratios[q] = max(window) if window else math.nan
    return DecayResult(records, exps, ratios, t_min, t_sat, sat, gate)


def rt_schedule(t_end: float, q: float, t: float) -> float:
    """``r(t) = 1 / ((1/T)(1/q - 1/3) t + 1/3)``, moving from 3 at t = 0 to q at t = T."""
    if q < 3:
        raise ValueError("q must be at least 3")
    if not 0 <= t <= t_end:
        raise ValueError("t outside [0, T]")
    if t == t_end:
        return float(q)
    return 1 / ((1 / t_end) * (1 / q - 1 / 3) * t + 1 / 3)


# -- weak-strong gap ----------------------------------------------------------


@dataclass
class WeakStrongResult:
    pair: tuple[int, int]
    times: np.ndarray
    energy: np.ndarray

    @property
    def final(self) -> float:
        return float(self.energy[-1])


def gap_energy(times, g_fields: list[Field]) -> np.ndarray:
    """``E(t) = sup_{s<=t} |g(s)|_2^2 + int_0^t |grad g|_2^2`` on the stored mesh."""
    from .inequalities import gradient_l2

    l2 = np.array([lq_norm(f, 2) ** 2 for f in g_fields])
    grad = np.array([gradient_l2(f) ** 2 for f in g_fields])
    t = np.asarray(times, dtype=float)
    integral = np.concatenate([[0.0], np.cumsum(0.5 * (grad[1:] + grad[:-1]) * np.diff(t))])
    return np.maximum.accumulate(l2) + integral


def _run_at(w0: Field, n: int, params: LandauParams | None, cfg: EvolutionConfig) -> Trajectory:
    grid = Grid(n, w0.grid.l, w0.grid.dealias_fraction)
    bg = None if params is None else truncated_background(params, grid)
    return evolve(State(0.0, resample(w0, grid)), replace(cfg, background=bg, mode="full"))


def weak_strong_experiment(w0: Field, res_pairs, t_end: float, cfg: EvolutionConfig,
                           params: LandauParams | None = None) -> list[WeakStrongResult]:
    """Run ``w0`` at each resolution and measure the gap energy per pair.

    The coarse trajectory is spectrally injected into the fine grid; the
    background geometry ``params`` is fixed in physical units.
    """
    cfg = replace(cfg, t_end=t_end)
    runs: dict[int, Trajectory] = {}
    out = []
    for lo, hi in res_pairs:
        for n in (lo, hi):
            if n not in runs:
                runs[n] = _run_at(w0, n, params, cfg)
        fine = runs[hi]
        g = [resample(a, fine.grid) - b for a, b in zip(runs[lo].fields, fine.fields)]
        out.append(WeakStrongResult((lo, hi), np.array(fine.times), gap_energy(fine.times, g)))
    return out


# -- continuous dependence ----------------------------------------------------


@dataclass
class ContinuityResult:
    delta_norms: np.ndarray
    z_sup: np.ndarray
    strichartz: float
    c_hat_per_delta: np.ndarray
    c_hat: float
    linear_ratios: np.ndarray
    stable: bool
    linear: bool


def minimal_c_hat(z_sup: float, delta_norm: float, strichartz: float) -> float:
    """Smallest ``C`` with ``z_sup <= 2 C delta_norm exp(C strichartz)`` (bisection)."""
    if z_sup <= 0:
        return 0.0

    def holds(c: float) -> bool:
        return z_sup <= 2 * c * delta_norm * math.exp(c * strichartz)

    hi = 1.0
    while not holds(hi):
        hi *= 2
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if holds(mid):
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-14 * hi:
            break
    return hi


def continuous_dependence_experiment(u0: Field, direction: Field, scales, t_end: float,
                                     cfg: EvolutionConfig) -> ContinuityResult:
    """Sweep ``delta0 = s * direction`` and fit the continuity constant.

    Each ``C_hat`` is the smallest value making the bound hold for that
    perturbation; the reported constant is their maximum, so it holds across
    the sweep.
    """
    cfg = replace(cfg, t_end=t_end, mode="full")
    base = evolve(State(0.0, u0), cfg)
    l6 = [lq_norm(f, 6) ** 4 for f in base.fields]
    strichartz = trapezoid(base.times, l6)
    norms, sups = [], []
    for s in scales:
        d0 = direction * float(s)
        pert = evolve(State(0.0, u0 + d0), cfg)
        sups.append(max(lq_norm(b - a, 3) for a, b in zip(base.fields, pert.fields)))
        norms.append(lq_norm(d0, 3))
    norms, sups = np.array(norms), np.array(sups)
    c_each = np.array([minimal_c_hat(z, d, strichartz) for z, d in zip(sups, norms)])
    c_hat = float(np.max(c_each)) if len(c_each) else 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(norms > 0, sups / norms, 0.0)
    ref = ratios[0] if len(ratios) else 0.0
    linear = bool(ref > 0 and np.all(np.abs(ratios / ref - 1) <= 0.2))
    stable = bool(c_hat > 0 and np.all(np.abs(c_each / c_hat - 1) <= 0.5))
    return ContinuityResult(norms, sups, strichartz, c_each, c_hat, ratios, stable, linear)


# -- resolvent ---------------------------------------------------------------


@dataclass
class ResolventProbe:
    lam: complex
    sector_angle: float
    ratio: float
    iterations: int
    converged: bool
    q: float = 2.0
    u: np.ndarray | None = field(default=None, repr=False)

    @property
    def magnitude(self) -> float:
        return abs(self.lam)

    @property
    def phase(self) -> float:
        return math.atan2(self.lam.imag, self.lam.real)


def complex_lq_norm(grid: Grid, u: np.ndarray, q: float) -> float:
    m = np.sqrt(np.sum(np.abs(u) ** 2, axis=0))
    if math.isinf(q):
        return float(np.max(m))
    return float((np.sum(m**q) * grid.cell_volume) ** (1 / q))


def _full_wavenumbers(grid: Grid) -> np.ndarray:
    k1 = np.fft.fftfreq(grid.n, d=grid.l / (2 * math.pi * grid.n))
    return np.array(np.meshgrid(k1, k1, k1, indexing="ij"))


def _full_leray(k: np.ndarray, k2: np.ndarray, v: np.ndarray) -> np.ndarray:
    safe = np.where(k2 == 0, 1.0, k2)
    return v - k * (np.sum(k * v, axis=0) / safe)[None]


def resolvent_probe(lam: complex, f: Field | np.ndarray, background_velocity: np.ndarray | None,
                    grid: Grid, q: float = 2.0, sector_angle: float = 0.1, tol: float = 1e-12,
                    max_iter: int = 500) -> ResolventProbe:
    """Solve ``lam u - lap u + P[(u.grad)V + (V.grad)u] = f`` by fixed-point iteration.

    Fields are complex (full FFT). The iteration is damped by 1/2 as soon as
    the residual fails to decrease.
    """
    lam = complex(lam)
    if lam == 0 or abs(math.atan2(lam.imag, lam.real)) >= math.pi / 2 + sector_angle:
        raise ValueError(f"lambda = {lam} lies outside the sector")
    f_phys = f.values if isinstance(f, Field) else np.asarray(f)
    k = _full_wavenumbers(grid)
    k2 = np.sum(k * k, axis=0)
    n = grid.n
    mask = np.ones_like(k2, dtype=bool)
    cut = grid.dealias_fraction * n / 2
    idx = np.abs(np.fft.fftfreq(n, 1 / n))
    for axis in range(3):
        shape = [1, 1, 1]
        shape[axis] = n
        mask = mask & (idx.reshape(shape) < cut)
    f_hat = _full_leray(k, k2, fft3(f_phys.astype(complex)))
    inv = 1 / (lam + k2)

    def coupling(u_hat: np.ndarray) -> np.ndarray:
        if background_velocity is None:
            return np.zeros_like(u_hat)
        u = ifft3(u_hat)
        v = background_velocity
        out = np.zeros_like(u_hat)
        for i in range(3):
            for j in range(3):
                out[i] += 1j * k[j] * fft3(u[j] * v[i] + v[j] * u[i]) * mask
        return _full_leray(k, k2, out)

    u_hat = inv * f_hat
    theta = 1.0
    prev_res = math.inf
    it = 0
    converged = background_velocity is None
    while not converged and it < max_iter:
        it += 1
        target = inv * (f_hat - coupling(u_hat))
        res = float(np.max(np.abs(target - u_hat)))
        if res >= prev_res:
            theta = 0.5
        u_hat = (1 - theta) * u_hat + theta * target
        prev_res = res
        converged = res <= tol * max(float(np.max(np.abs(u_hat))), 1e-300)
        if not math.isfinite(res):
            break
    u = ifft3(u_hat)
    ratio = abs(lam) * complex_lq_norm(grid, u, q) / complex_lq_norm(grid, ifft3(f_hat), q)
    return ResolventProbe(lam=lam, sector_angle=sector_angle, ratio=ratio, iterations=it,
                          converged=converged, q=q, u=u)


def single_mode_field(grid: Grid, mode=(1, 0, 0), polarization=(0.0, 1.0, 0.0)) -> Field:
    """Real divergence-free ``p cos(k . x)`` with ``k`` a lattice wavevector."""
    k = 2 * math.pi / grid.l * np.asarray(mode, dtype=float)
    p = np.asarray(polarization, dtype=float)
    if abs(np.dot(k, p)) > 1e-12:
        raise ValueError("polarization must be orthogonal to the wavevector")
    phase = np.tensordot(k, grid.coords, axes=1)
    return Field(grid, p[:, None, None, None] * np.cos(phase)[None])
