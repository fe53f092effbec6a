"""Mild-solution construction: semigroup, Duhamel term and Picard iteration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .evolution import (
    EvolutionConfig,
    ExponentialIntegrator,
    Trajectory,
    coupling_hat,
    evolve_linear,
)
from .inequalities import ConstantsLedger, grad_power_norm, lq_norm, lt_lx_norm
from .spectral import Field, Grid, irfft3, leray_hat, random_solenoidal, tensor_divergence_hat


class MeshMismatchError(ValueError):
    pass


@dataclass
class PicardReport:
    iterates: int = 0
    residual_history: list[float] = field(default_factory=list)
    contraction_ratio: float | None = None
    converged: bool = False
    gate: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "iterates": self.iterates,
            "residual_history": list(self.residual_history),
            "contraction_ratio": self.contraction_ratio,
            "converged": self.converged,
            "gate": dict(self.gate),
        }


def _dense(cfg: EvolutionConfig, t_end: float | None = None) -> EvolutionConfig:
    """Same stepping with a snapshot at every step, as the Duhamel forcing needs."""
    return replace(cfg, snapshot_every=1, keep_fields=True,
                   t_end=cfg.t_end if t_end is None else t_end)


def semigroup_apply(w0: Field, t: float, cfg: EvolutionConfig) -> Field:
    """``e^{-tL} w0`` as the endpoint of the linear flow."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return Field(w0.grid, w0.data.copy(), spectral=w0.spectral_rep)
    traj = evolve_linear(w0, replace(cfg, t_end=t, snapshot_every=max(1, round(t / cfg.dt)),
                                     keep_fields=False))
    return traj.final.w


def _field_trajectory(grid: Grid, cfg: EvolutionConfig, times: list[float], fields: list[Field]) -> Trajectory:
    return Trajectory(grid=grid, config=cfg, times=list(times), steps=list(range(len(times))),
                      fields=fields)


def _check_mesh(a: Trajectory, b: Trajectory) -> None:
    if a.grid != b.grid:
        raise MeshMismatchError("trajectories live on different grids")
    if len(a.times) != len(b.times) or not np.allclose(a.times, b.times, rtol=0, atol=1e-12):
        raise MeshMismatchError("trajectories have different time meshes")
    if len(a.fields) != len(a.times) or len(b.fields) != len(b.times):
        raise MeshMismatchError("trajectories must store a field at every mesh time")
    if len(a.times) > 1:
        steps = np.diff(a.times)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
            raise MeshMismatchError("time mesh must be uniform")


def duhamel_bilinear(w1: Trajectory, w2: Trajectory, cfg: EvolutionConfig) -> Trajectory:
    """Solve ``z_t + L z = -P div(w1 (x) w2)`` with ``z(0) = 0`` on the mesh of ``w1``.

    The forcing at a stage time is read from the stored field at that mesh time.
    """
    _check_mesh(w1, w2)
    grid = w1.grid
    times = w1.times
    if len(times) > 1 and not math.isclose(times[1] - times[0], cfg.dt, rel_tol=1e-9):
        raise MeshMismatchError("trajectory mesh does not match cfg.dt")
    v = cfg.background_velocity(grid)
    t0 = times[0]
    cache: dict[int, np.ndarray] = {}

    def forcing(n: int) -> np.ndarray:
        if n not in cache:
            cache.clear() if len(cache) > 2 else None
            a, b = w1.fields[n].values, w2.fields[n].values
            cache[n] = -leray_hat(grid, tensor_divergence_hat(grid, a, b))
        return cache[n]

    def rhs(z: np.ndarray, t: float) -> np.ndarray:
        n = round((t - t0) / cfg.dt)
        return forcing(n) - coupling_hat(grid, v, irfft3(z, grid.n))

    stepper = ExponentialIntegrator(grid, cfg.dt, cfg.scheme)
    z = np.zeros((3,) + grid.spectral_shape, dtype=complex)
    out = [Field(grid, z.copy(), spectral=True)]
    for n in range(len(times) - 1):
        z = stepper.step(z, rhs, times[n]) * grid.dealias_mask
        out.append(Field(grid, z.copy(), spectral=True))
    return _field_trajectory(grid, cfg, times, out)


def sup_l3_difference(a: Trajectory, b: Trajectory) -> float:
    return max(lq_norm(x - y, 3) for x, y in zip(a.fields, b.fields))


def smallness_gate(w0: Field, ledger: ConstantsLedger) -> dict:
    if not ledger.populated:
        raise ValueError("constants ledger is not populated")
    norm = lq_norm(w0, 3)
    return {"norm_w0_l3": norm, "epsilon0": ledger.eps0, "passed": norm < ledger.eps0}


def picard_solve(w0: Field, t_end: float, tol: float, max_iter: int, cfg: EvolutionConfig,
                 ledger: ConstantsLedger | None = None,
                 initial: Trajectory | None = None) -> tuple[Trajectory, PicardReport]:
    """Iterate ``w <- a + N(w, w)`` from ``a = e^{-tL} w0`` (or from ``initial``)."""
    dense = _dense(cfg, t_end)
    a = evolve_linear(w0, dense)
    report = PicardReport()
    if ledger is not None and ledger.populated:
        report.gate = smallness_gate(w0, ledger)
    w = a if initial is None else initial
    _check_mesh(a, w)
    growth = 0
    for k in range(1, max_iter + 1):
        z = duhamel_bilinear(w, w, dense)
        new = _field_trajectory(a.grid, dense, a.times, [x + y for x, y in zip(a.fields, z.fields)])
        res = sup_l3_difference(new, w)
        hist = report.residual_history
        growth = growth + 1 if hist and res > hist[-1] else 0
        hist.append(res)
        report.iterates = k
        w = new
        if res <= tol:
            report.converged = True
            break
        if growth >= 3 or not math.isfinite(res):
            break
    hist = [r for r in report.residual_history if r > 0]
    if report.iterates >= 3 and len(hist) >= 2:
        report.contraction_ratio = (hist[-1] / hist[0]) ** (1 / (len(hist) - 1))
    return w, report


def fixed_point_defect(w: Trajectory, w0: Field, cfg: EvolutionConfig) -> float:
    """Sup-in-time L3 norm of ``w - a - N(w, w)``."""
    dense = _dense(cfg, w.times[-1] - w.times[0])
    a = evolve_linear(w0, dense)
    z = duhamel_bilinear(w, w, dense)
    return max(lq_norm(x - y - s, 3) for x, y, s in zip(w.fields, a.fields, z.fields))


# -- empirical constants ------------------------------------------------------


def strichartz_type_norm(traj: Trajectory) -> float:
    """``||u||_{C L3} + ||u||_{L4 L6} + ||grad |u|^(3/2)||_{L2 L2}^(2/3)`` over the stored mesh."""
    l3 = [lq_norm(f, 3) for f in traj.fields]
    l6 = [lq_norm(f, 6) for f in traj.fields]
    g = [grad_power_norm(f, 3) for f in traj.fields]
    return max(l3) + lt_lx_norm(traj.times, l6, 4) + lt_lx_norm(traj.times, g, 2) ** (2 / 3)


def l4_l6(traj: Trajectory) -> float:
    return lt_lx_norm(traj.times, [lq_norm(f, 6) for f in traj.fields], 4)


def linear_ratio(w0: Field, cfg: EvolutionConfig) -> float:
    return strichartz_type_norm(evolve_linear(w0, _dense(cfg))) / lq_norm(w0, 3)


def bilinear_ratio(w1: Trajectory, w2: Trajectory, cfg: EvolutionConfig) -> float:
    z = duhamel_bilinear(w1, w2, _dense(cfg))
    return strichartz_type_norm(z) / (l4_l6(w1) * l4_l6(w2))


def trial_fields(grid: Grid, seed: int, n_trials: int, amplitude: float = 1.0) -> list[tuple[Field, Field]]:
    """Per-trial field pairs from independent child seeds of ``seed``."""
    out = []
    for child in np.random.SeedSequence(seed).spawn(n_trials):
        rng = np.random.default_rng(child)
        k_peak = rng.uniform(1.5, 3.0)
        out.append((random_solenoidal(grid, rng, k_peak=k_peak, amplitude=amplitude),
                    random_solenoidal(grid, rng, k_peak=k_peak, amplitude=amplitude)))
    return out


def constants_estimate(n_trials: int, seed: int, cfg: EvolutionConfig, grid: Grid | None = None,
                       safety: float = 1.5) -> ConstantsLedger:
    """Empirical ``C1``, ``C2`` (safety times the sampled suprema) and derived ``eps0``."""
    if n_trials < 10:
        raise ValueError("need at least 10 trials")
    if grid is None:
        if cfg.background is None:
            raise ValueError("grid required when the config carries no background")
        grid = cfg.background.grid
    dense = _dense(cfg)
    c1 = c2 = 0.0
    for f1, f2 in trial_fields(grid, seed, n_trials):
        t1 = evolve_linear(f1, dense)
        t2 = evolve_linear(f2, dense)
        c1 = max(c1, strichartz_type_norm(t1) / lq_norm(f1, 3))
        c2 = max(c2, bilinear_ratio(t1, t2, dense))
    c = None if cfg.background is None else cfg.background.params.c
    return ConstantsLedger(
        c=c,
        c1=safety * c1,
        c2=safety * c2,
        k_hardy=2.0,
        empirical=True,
        notes=f"sampled over {n_trials} trials, seed {seed}, grid {grid.n}, T {cfg.t_end}, "
              f"coupling {cfg.coupling}",
    )
