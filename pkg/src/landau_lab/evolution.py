"""Time stepping of the perturbation system around the truncated background.

The state is kept band-limited (inside the 2/3 mask) and solenoidal. Diffusion
is integrated exactly through exponential time differencing: ``imex_euler`` is
the exponential Euler scheme and ``imex_rk2`` the Cox-Matthews ETD2RK scheme.
Both reduce to the heat semigroup when the explicit part vanishes and keep the
compensated background as an exact fixed point.
"""

from __future__ import annotations

import csv
import math
import os
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .inequalities import lq_norm
from .landau import TruncatedBackground
from .spectral import (
    Field,
    Grid,
    irfft3,
    leray_hat,
    symmetric_divergence_hat,
    tensor_divergence_hat,
    write_field,
)

SCHEMES = ("imex_euler", "imex_rk2")
MODES = ("full", "linear", "mollified", "split")
DIAGNOSTIC_COLUMNS = ("step", "t", "l2", "l3", "l6", "grad_l2", "div_max", "energy_residual")


class CFLError(RuntimeError):
    pass


class SimulationError(RuntimeError):
    """Non-finite values appeared; ``last_good`` holds the state before the failing step."""

    def __init__(self, message: str, last_good: State):
        super().__init__(message)
        self.last_good = last_good


@dataclass(frozen=True)
class EvolutionConfig:
    dt: float
    t_end: float
    scheme: str = "imex_rk2"
    mode: str = "full"
    mollifier_eps: float | None = None
    snapshot_every: int = 10
    background: TruncatedBackground | None = field(default=None, repr=False, compare=False)
    coupling: float = 1.0
    cfl: float = 0.5
    split_gate: float | None = None
    keep_fields: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.snapshot_every < 1:
            raise ValueError("snapshot_every must be at least 1")
        if self.mode == "mollified" and not (self.mollifier_eps and self.mollifier_eps > 0):
            raise ValueError("mollified mode needs a positive mollifier_eps")

    @property
    def n_steps(self) -> int:
        n = round(self.t_end / self.dt)
        if not math.isclose(n * self.dt, self.t_end, rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError("t_end must be an integer multiple of dt")
        return n

    def background_velocity(self, grid: Grid) -> np.ndarray | None:
        """Physical coupling velocity, or None when the coupling is off."""
        if self.background is None or self.coupling == 0:
            return None
        if self.background.grid != grid:
            raise ValueError("background lives on a different grid")
        return self.coupling * self.background.velocity_physical


@dataclass
class State:
    t: float
    w: Field
    v1: Field | None = None
    v2: Field | None = None
    step: int = 0

    @classmethod
    def split(cls, v1: Field, v2: Field, t: float = 0.0) -> State:
        return cls(t=t, w=v1 + v2, v1=v1, v2=v2)


@dataclass
class Trajectory:
    grid: Grid
    config: EvolutionConfig
    times: list[float] = field(default_factory=list)
    steps: list[int] = field(default_factory=list)
    fields: list[Field] = field(default_factory=list)
    split_fields: list[tuple[Field, Field]] = field(default_factory=list)
    diagnostics: list[dict] = field(default_factory=list)
    energy: list[dict] = field(default_factory=list)
    final: State | None = None

    def norms(self, q: float) -> np.ndarray:
        return np.array([lq_norm(f, q) for f in self.fields])


# -- exponential integrators --------------------------------------------------


def _phi_functions(z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``exp(z)``, ``phi1`` and ``phi2`` with a Taylor branch near zero."""
    e = np.exp(z)
    small = np.abs(z) < 1e-2
    zs = np.where(small, 1.0, z)
    phi1 = np.where(small, 1 + z / 2 + z * z / 6 + z**3 / 24 + z**4 / 120, np.expm1(zs) / zs)
    phi2 = np.where(small, 0.5 + z / 6 + z * z / 24 + z**3 / 120 + z**4 / 720,
                    (np.expm1(zs) - zs) / (zs * zs))
    return e, phi1, phi2


class ExponentialIntegrator:
    """One step of ``u' = lap u + N(u, t)`` for spectral arrays of any leading shape."""

    def __init__(self, grid: Grid, dt: float, scheme: str):
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}")
        self.grid, self.dt, self.scheme = grid, dt, scheme
        self.e, phi1, phi2 = _phi_functions(-grid.k2 * dt)
        self.h_phi1 = dt * phi1
        self.h_phi2 = dt * phi2

    def step(self, u: np.ndarray, rhs: Callable[[np.ndarray, float], np.ndarray], t: float,
             n0: np.ndarray | None = None) -> np.ndarray:
        if n0 is None:
            n0 = rhs(u, t)
        a = self.e * u + self.h_phi1 * n0
        if self.scheme == "imex_euler":
            return a
        return a + self.h_phi2 * (rhs(a, t + self.dt) - n0)


# -- right-hand sides ---------------------------------------------------------


def _speed(v: np.ndarray) -> float:
    return float(np.sqrt(np.max(np.sum(v * v, axis=0))))


def mollifier_multiplier(grid: Grid, eps: float) -> np.ndarray:
    """Gaussian ``eta_hat(eps k)``: unit mass, radial, bounded by 1."""
    return np.exp(-0.5 * eps * eps * grid.k2)


def coupling_hat(grid: Grid, v: np.ndarray | None, w: np.ndarray) -> np.ndarray:
    """Spectral ``P[(w . grad) v + (v . grad) w]`` for physical ``v``, ``w``."""
    if v is None:
        return np.zeros((3,) + grid.spectral_shape, dtype=complex)
    return leray_hat(grid, symmetric_divergence_hat(grid, v, w))


class _System:
    """Explicit part of one evolution mode, plus the bookkeeping it needs."""

    def __init__(self, grid: Grid, cfg: EvolutionConfig):
        self.grid = grid
        self.cfg = cfg
        self.mask = grid.dealias_mask
        self.v = cfg.background_velocity(grid)
        self.v_speed = 0.0 if self.v is None else _speed(self.v)
        self.speed = 0.0
        if cfg.mode == "mollified":
            if cfg.mollifier_eps < 2 * grid.h:
                raise ValueError("mollifier width must span at least 2 grid cells")
            self.j = mollifier_multiplier(grid, cfg.mollifier_eps)

    def _phys(self, u: np.ndarray) -> np.ndarray:
        return irfft3(u, self.grid.n)

    def rhs(self, u: np.ndarray, t: float) -> np.ndarray:
        g, mode, v = self.grid, self.cfg.mode, self.v
        if mode == "split":
            v1, v2 = self._phys(u[0]), self._phys(u[1])
            self.speed = self.v_speed + _speed(v1) + _speed(v2)
            base1 = 0.5 * v1 if v is None else v + 0.5 * v1
            out = np.empty_like(u)
            out[0] = -leray_hat(g, symmetric_divergence_hat(g, base1, v1))
            out[1] = -leray_hat(g, symmetric_divergence_hat(g, base1 + 0.5 * (v1 + v2), v2))
            return out
        w = self._phys(u)
        self.speed = self.v_speed + _speed(w)
        if mode == "linear":
            return -coupling_hat(g, v, w)
        if mode == "full":
            base = 0.5 * w if v is None else v + 0.5 * w
            return -leray_hat(g, symmetric_divergence_hat(g, base, w))
        jw = self._phys(self.j * u)
        conv = tensor_divergence_hat(g, jw, w)
        if v is not None:
            conv = conv + symmetric_divergence_hat(g, v, jw)
        return -leray_hat(g, conv)

    def audited(self, u: np.ndarray) -> np.ndarray:
        """Component whose energy balance is audited (``v2`` in split mode)."""
        return u[1] if self.cfg.mode == "split" else u

    def primary(self, u: np.ndarray) -> np.ndarray:
        return u[0] + u[1] if self.cfg.mode == "split" else u


def _pairing(grid: Grid, a: np.ndarray, b: np.ndarray) -> float:
    """``int a . b`` from rfft coefficients."""
    return float(np.sum(grid.hermitian_weight * np.real(np.conj(a) * b)) * grid.volume)


def _grad_sq(grid: Grid, a: np.ndarray) -> float:
    return float(np.sum(grid.hermitian_weight * grid.k2 * np.abs(a) ** 2) * grid.volume)


def _log_mean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Logarithmic mean, the exact average of an exponential through ``a`` and ``b``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        x = b / a - 1
        close = (np.abs(x) < 1e-4) | (a <= 0) | (b <= 0)
        lm = np.where(close, 0.5 * (a + b), (b - a) / np.log1p(np.where(close, 0.0, x)))
    return np.where((a <= 0) | (b <= 0), 0.5 * (a + b), lm)


def _dissipation(grid: Grid, f0: np.ndarray, f1: np.ndarray, dt: float) -> float:
    """``int |grad u|^2`` over one step from modal energies at its ends."""
    return float(np.sum(grid.hermitian_weight * grid.k2 * _log_mean(f0, f1)) * grid.volume * dt)


def _max_div(grid: Grid, a: np.ndarray) -> float:
    d = 1j * np.sum(grid.wavenumbers * a, axis=0)
    return float(np.max(np.abs(irfft3(d, grid.n))))


# -- drivers ------------------------------------------------------------------


def _pack(state: State, cfg: EvolutionConfig) -> np.ndarray:
    g = state.w.grid
    if cfg.mode == "split":
        if state.v1 is None or state.v2 is None:
            raise ValueError("split mode needs v1 and v2")
        u = np.stack([state.v1.coefficients, state.v2.coefficients])
    else:
        u = state.w.coefficients.copy()
    return u * g.dealias_mask


def _unpack(grid: Grid, u: np.ndarray, t: float, step: int, cfg: EvolutionConfig) -> State:
    if cfg.mode == "split":
        v1 = Field(grid, u[0].copy(), spectral=True)
        v2 = Field(grid, u[1].copy(), spectral=True)
        return State(t=t, w=Field(grid, u[0] + u[1], spectral=True), v1=v1, v2=v2, step=step)
    return State(t=t, w=Field(grid, u.copy(), spectral=True), step=step)


def evolve(state0: State, cfg: EvolutionConfig) -> Trajectory:
    """Advance ``state0`` to ``t_end``, recording snapshots and an energy audit."""
    grid = state0.w.grid
    if state0.w.ncomp != 3:
        raise ValueError("evolution needs a vector field")
    system = _System(grid, cfg)
    stepper = ExponentialIntegrator(grid, cfg.dt, cfg.scheme)
    n_steps = cfg.n_steps
    traj = Trajectory(grid=grid, config=cfg)

    u = _pack(state0, cfg)
    if cfg.mode == "split" and cfg.split_gate is not None:
        norm_v10 = lq_norm(state0.v1, 3)
        if norm_v10 >= cfg.split_gate:
            warnings.warn(f"split data ||v10||_3 = {norm_v10:.3g} exceeds the gate {cfg.split_gate:.3g}",
                          stacklevel=2)
    e0 = 0.5 * _pairing(grid, system.audited(u), system.audited(u))
    grad_int = work_int = 0.0
    prev = None
    t = state0.t
    last_good = _unpack(grid, u, t, 0, cfg)
    for n in range(n_steps + 1):
        t = state0.t + n * cfg.dt
        n0 = system.rhs(u, t)
        a = system.audited(u)
        modal = np.abs(a) ** 2
        work_now = _pairing(grid, a, system.audited(n0))
        if prev is not None:
            grad_int += _dissipation(grid, prev[0], modal, cfg.dt)
            work_int += 0.5 * cfg.dt * (work_now + prev[1])
        prev = (modal, work_now)
        energy = 0.5 * _pairing(grid, a, a)
        residual = energy + grad_int - e0 - work_int
        traj.energy.append({"t": t, "l2sq": 2 * energy, "grad_int": grad_int,
                            "work_int": work_int, "residual": residual})
        if n % cfg.snapshot_every == 0 or n == n_steps:
            _record(traj, system, u, t, n, residual)
        if n == n_steps:
            break
        if system.speed > 0 and cfg.dt > cfg.cfl * grid.h / system.speed:
            raise CFLError(f"dt = {cfg.dt:.3g} exceeds the CFL limit "
                           f"{cfg.cfl * grid.h / system.speed:.3g} at t = {t:.6g}")
        u_new = stepper.step(u, system.rhs, t, n0) * grid.dealias_mask
        if not np.all(np.isfinite(u_new)) or np.max(np.abs(u_new)) > 1e100:
            raise SimulationError(f"non-finite state after step {n + 1}", last_good)
        u = u_new
        last_good = _unpack(grid, u, t + cfg.dt, n + 1, cfg)
    traj.final = _unpack(grid, u, t, n_steps, cfg)
    return traj


def _record(traj: Trajectory, system: _System, u: np.ndarray, t: float, n: int, residual: float) -> None:
    grid = traj.grid
    p = system.primary(u)
    f = Field(grid, p.copy(), spectral=True)
    traj.times.append(t)
    traj.steps.append(n)
    traj.diagnostics.append({
        "step": n,
        "t": t,
        "l2": math.sqrt(max(_pairing(grid, p, p), 0.0)),
        "l3": lq_norm(f, 3),
        "l6": lq_norm(f, 6),
        "grad_l2": math.sqrt(_grad_sq(grid, p)),
        "div_max": _max_div(grid, p),
        "energy_residual": residual,
    })
    if traj.config.keep_fields:
        traj.fields.append(f)
        if system.cfg.mode == "split":
            traj.split_fields.append((Field(grid, u[0].copy(), spectral=True),
                                      Field(grid, u[1].copy(), spectral=True)))


def step(state: State, cfg: EvolutionConfig) -> State:
    """One time step of ``cfg.mode``; returns the new state."""
    one = replace(cfg, t_end=cfg.dt, snapshot_every=1, keep_fields=False)
    traj = evolve(state, one)
    final = traj.final
    final.step = state.step + 1
    return final


def evolve_linear(a0: Field, cfg: EvolutionConfig) -> Trajectory:
    return evolve(State(t=0.0, w=a0), replace(cfg, mode="linear"))


def evolve_mollified(w0: Field, eps: float, cfg: EvolutionConfig) -> Trajectory:
    return evolve(State(t=0.0, w=w0), replace(cfg, mode="mollified", mollifier_eps=eps))


def evolve_split(v10: Field, v20: Field, cfg: EvolutionConfig) -> Trajectory:
    return evolve(State.split(v10, v20), replace(cfg, mode="split"))


def energy_report(traj: Trajectory) -> list[dict]:
    """Per-step energy audit: ``l2sq``, cumulative ``grad_int`` and ``work_int``, ``residual``.

    ``residual = 1/2 |u(t)|^2 + int |grad u|^2 - 1/2 |u0|^2 - int work`` where
    ``work`` is the background-coupling power (``v2`` in split mode).
    """
    return [dict(r) for r in traj.energy]


# -- total field with compensation --------------------------------------------


def evolve_total(background: TruncatedBackground, perturbation: Field | None, dt: float, n_steps: int,
                 scheme: str = "imex_rk2") -> list[np.ndarray]:
    """Evolve ``U = V + w`` under ``U_t = lap U - P div(U U) + F``.

    Returns the spectral state after every step; with ``w = 0`` the
    background is a fixed point up to roundoff.
    """
    grid = background.grid
    force = background.compensation.coefficients
    u = background.velocity.coefficients.copy()
    if perturbation is not None:
        u = u + perturbation.coefficients * grid.dealias_mask

    def rhs(x: np.ndarray, t: float) -> np.ndarray:
        v = irfft3(x, grid.n)
        return force - leray_hat(grid, tensor_divergence_hat(grid, v, v))

    stepper = ExponentialIntegrator(grid, dt, scheme)
    out = []
    for n in range(n_steps):
        u = stepper.step(u, rhs, n * dt) * grid.dealias_mask
        out.append(u.copy())
    return out


# -- trajectory directory -----------------------------------------------------


def write_trajectory(traj: Trajectory, path: str | os.PathLike, config_text: str = "") -> Path:
    """Write ``config.txt``, ``snapshots/NNNN.field`` and ``diagnostics.csv``."""
    root = Path(path)
    (root / "snapshots").mkdir(parents=True, exist_ok=True)
    (root / "config.txt").write_text(config_text)
    for i, f in enumerate(traj.fields):
        write_field(root / "snapshots" / f"{i:04d}.field", f)
    with open(root / "diagnostics.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(DIAGNOSTIC_COLUMNS)
        for d in traj.diagnostics:
            writer.writerow([d["step"]] + [format(float(d[c]), ".17g") for c in DIAGNOSTIC_COLUMNS[1:]])
    return root
