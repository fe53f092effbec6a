"""Experiment registry and output writers."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import analysis, evolution, inequalities, landau, mild
from .config import EXPERIMENTS, RunConfig, _format, echo
from .spectral import (
    Field,
    Grid,
    divergence,
    leray_project,
    localized_scalar,
    random_solenoidal,
)


@dataclass
class Outcome:
    metrics: dict[str, dict] = field(default_factory=dict)
    tables: dict[str, tuple[tuple[str, ...], list[tuple]]] = field(default_factory=dict)
    documents: dict[str, dict] = field(default_factory=dict)
    trajectories: dict[str, evolution.Trajectory] = field(default_factory=dict)

    def metric(self, name: str, value, threshold=None, passed: bool | None = None) -> None:
        v = None if value is None else float(value)
        if passed is None:
            passed = v is not None and threshold is not None and math.isfinite(v) and v <= threshold
        self.metrics[name] = {
            "value": v if v is None or math.isfinite(v) else None,
            "threshold": None if threshold is None else float(threshold),
            "passed": bool(passed),
        }


# -- shared builders ----------------------------------------------------------


def make_grid(cfg: RunConfig, n: int | None = None) -> Grid:
    return Grid(cfg["grid.n"] if n is None else n, cfg["grid.l"])


def make_params(cfg: RunConfig, grid: Grid, c: float | None = None) -> landau.LandauParams:
    return landau.LandauParams.for_grid(
        cfg["landau.c"] if c is None else c, grid,
        delta=cfg["landau.delta"], r_in=cfg["landau.r_in"], r_out=cfg["landau.r_out"],
    )


def make_background(cfg: RunConfig, grid: Grid, c: float | None = None) -> landau.TruncatedBackground:
    return landau.truncated_background(make_params(cfg, grid, c), grid)


def make_evolution(cfg: RunConfig, background, **overrides) -> evolution.EvolutionConfig:
    grid = background.grid if background is not None else None
    eps = cfg["evolution.eps"]
    if eps is None and grid is not None:
        eps = 4 * grid.h
    kw = dict(
        dt=cfg["evolution.dt"],
        t_end=cfg["evolution.t_end"],
        scheme=cfg["evolution.scheme"],
        mode=cfg["evolution.mode"],
        mollifier_eps=eps,
        snapshot_every=cfg["evolution.snapshot_every"],
        background=background,
        coupling=cfg["evolution.coupling"],
    )
    kw.update(overrides)
    return evolution.EvolutionConfig(**kw)


def child_rngs(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def estimate_ledger(cfg: RunConfig) -> mild.ConstantsLedger:
    g = make_grid(cfg, cfg["constants.n"])
    bg = make_background(cfg, g)
    ev = make_evolution(cfg, bg, t_end=cfg["constants.t_end"], mode="full")
    return mild.constants_estimate(cfg["constants.n_trials"], cfg.seed, ev, g)


# -- experiments --------------------------------------------------------------


def run_landau_verify(cfg: RunConfig, log: Callable[[str], None]) -> Outcome:
    out = Outcome()
    c = cfg["landau.c"]
    rng = np.random.default_rng(cfg.seed)
    audit = landau.residual_audit(c, landau.shell_points(rng, 20, 0.5, 2.0), 1e-3)
    out.metric("residual_max", audit["max"], 1e-4)
    out.metric("residual_order_error", abs(audit["order_ratio"] / 4 - 1), 0.25)
    b = landau.force_parameter(c)
    flux = [landau.momentum_flux(c, r, n_quad=64)[0] for r in (0.5, 1.0, 2.0)]
    spread = (max(flux) - min(flux)) / abs(b)
    err = max(abs(f - b) for f in flux) / abs(b)
    out.metric("flux_spread", spread, 5e-3)
    out.metric("flux_vs_b", err, 1e-2)
    out.metric("flux_check", max(spread / 5e-3, err / 1e-2), 1.0)
    rows = []
    for cc in cfg["landau.check_c"]:
        sup, bound = landau.weighted_speed_bound(cc, cfg["landau.n_samples"])
        out.metric(f"weighted_bound_c{_format(cc)}", sup, bound + 1e-9)
        rows.append((cc, sup, bound))
        log(f"c = {cc:g}: sup |x||v| = {sup:.6g}, bound {bound:.6g}")
    out.tables["weighted_bound.csv"] = (("c", "sup_weighted_speed", "bound"), rows)
    out.tables["flux.csv"] = (("r", "flux", "b"), [(r, f, b) for r, f in zip((0.5, 1.0, 2.0), flux)])
    out.documents["landau.json"] = {
        "c": c,
        "b": b,
        "k_c": landau.weighted_bound(c),
        "kjk": landau.gradient_bounds(c).tolist(),
        "flux_check": out.metrics["flux_check"]["passed"],
        "residual_check": out.metrics["residual_max"]["passed"] and out.metrics["residual_order_error"]["passed"],
    }
    return out


def run_inequalities(cfg: RunConfig, log: Callable[[str], None]) -> Outcome:
    out = Outcome()
    n_trials = cfg["inequalities.n_trials"]
    gh = Grid(cfg["inequalities.hardy_n"], cfg["inequalities.hardy_l"])
    gauss = Field(gh, np.exp(-0.5 * gh.radius**2))
    out.metric("hardy_gaussian_error", abs(inequalities.hardy_ratio(gauss) - 1 / math.sqrt(3)), 1e-3)
    rngs = child_rngs(cfg.seed, n_trials)
    hardy = [inequalities.hardy_ratio(localized_scalar(gh, r, width=gh.l / 16)) for r in rngs]
    out.metric("hardy_random_max", max(hardy), 1 + 1e-3)
    gaps = [inequalities.log_sobolev_gap(gauss, a) for a in (0.5, 1.0, math.sqrt(math.pi), 3.0)]
    gaps += [inequalities.log_sobolev_gap(localized_scalar(gh, r, width=gh.l / 16), 1.5) for r in rngs[:5]]
    scale = max(abs(x) for x in gaps) or 1.0
    out.metric("lsi_min_gap", -min(gaps) / scale, 1e-6)
    g = make_grid(cfg)
    fields = [localized_scalar(g, r) for r in child_rngs(cfg.seed + 1, n_trials)]
    ledger = inequalities.ConstantsLedger()
    rows = []
    for r in cfg["inequalities.riesz_r"]:
        worst = max(inequalities.riesz_grid_ratio(f, r) for f in fields)
        h = ledger.h_r(r)
        out.metric(f"riesz_r{_format(r)}", worst, h)
        rows.append((r, worst, h))
    out.tables["riesz.csv"] = (("r", "max_ratio", "h_r"), rows)
    vecs = [random_solenoidal(g, r) + Field(g, np.stack([f.values] * 3)) for r, f in
            zip(child_rngs(cfg.seed + 2, 5), fields)]
    idem = max(float(np.max(np.abs((leray_project(leray_project(v)) - leray_project(v)).values))) for v in vecs)
    div = max(float(np.max(np.abs(divergence(leray_project(v)).values))) for v in vecs)
    out.metric("leray_idempotence", idem, 1e-12)
    out.metric("leray_divergence", div, 1e-12)
    grad = max(inequalities.pointwise_grad_bound_check(random_solenoidal(g, r)) for r in child_rngs(cfg.seed + 3, 5))
    out.metric("pointwise_grad_bound", grad, 1e-6)
    log(f"hardy max {max(hardy):.4f}, riesz {rows}")
    return out


def run_linear_decay(cfg: RunConfig, log: Callable[[str], None]) -> Outcome:
    out = Outcome()
    g = make_grid(cfg)
    rows = []
    for c in cfg["linear.c_list"]:
        bg = make_background(cfg, g, c)
        ev = make_evolution(cfg, bg, mode="linear", snapshot_every=1)
        for k, rng in enumerate(child_rngs(cfg.seed, cfg["data.n_fields"])):
            a0 = random_solenoidal(g, rng, cfg["data.k_peak"], cfg["data.amplitude"])
            traj = evolution.evolve_linear(a0, ev)
            if not out.trajectories:
                out.trajectories["trajectory"] = traj
            for p in cfg["linear.p_list"]:
                norms = traj.norms(p)
                inc = float(np.max(np.diff(norms) / norms[:-1]))
                rows.append((c, k, p, inc))
                name = f"monotone_c{_format(c)}_p{_format(p)}"
                prev = out.metrics.get(name, {}).get("value")
                out.metric(name, inc if prev is None else max(prev, inc), 1e-10)
            log(f"c = {c:g}, field {k}: done")
    out.tables["linear_monotonicity.csv"] = (("c", "field", "p", "max_relative_increase"), rows)
    return out


def run_picard(cfg: RunConfig, log: Callable[[str], None]) -> Outcome:
    out = Outcome()
    ledger = estimate_ledger(cfg)
    log(f"ledger: C1 = {ledger.c1:.4g}, C2 = {ledger.c2:.4g}, eps0 = {ledger.eps0:.4g}")
    g = make_grid(cfg)
    bg = make_background(cfg, g)
    ev = make_evolution(cfg, bg, mode="full")
    w0 = random_solenoidal(g, np.random.default_rng(cfg.seed), cfg["data.k_peak"],
                           cfg["picard.gate_fraction"] * ledger.eps0)
    traj, report = mild.picard_solve(w0, cfg["evolution.t_end"], cfg["picard.tol"], cfg["picard.max_iter"],
                                     ev, ledger)
    direct = evolution.evolve(evolution.State(0.0, w0), replace(ev, snapshot_every=1))
    diff = mild.sup_l3_difference(traj, direct)
    out.metric("gate_passed", report.gate.get("norm_w0_l3"), ledger.eps0, report.gate.get("passed", False))
    out.metric("picard_iterations", report.iterates, cfg["picard.max_iter"], report.converged)
    ratio = report.contraction_ratio
    out.metric("contraction_ratio", ratio, 0.5, ratio is not None and ratio < 0.5)
    out.metric("picard_vs_direct", diff, 1e-3)
    mu = inequalities.mu_constant(6.0, ledger, bg.params.k_c)
    out.metric("mu_gate", mu.mu, 0.5, mu.passed)
    out.documents["picard.json"] = report.to_dict()
    out.documents["ledger.json"] = ledger.to_dict()
    out.trajectories["trajectory"] = _thin(traj, cfg["evolution.snapshot_every"])
    return out


def _thin(traj: evolution.Trajectory, stride: int) -> evolution.Trajectory:
    """Every ``stride``-th stored field with its diagnostics (no energy audit)."""
    idx = sorted(set(range(0, len(traj.fields), stride)) | {len(traj.fields) - 1})
    fields = [traj.fields[i] for i in idx]
    diags = []
    for i, f in zip(idx, fields):
        diags.append({
            "step": i, "t": traj.times[i],
            "l2": inequalities.lq_norm(f, 2), "l3": inequalities.lq_norm(f, 3),
            "l6": inequalities.lq_norm(f, 6), "grad_l2": inequalities.gradient_l2(f),
            "div_max": float(np.max(np.abs(divergence(f).values))), "energy_residual": math.nan,
        })
    return evolution.Trajectory(grid=traj.grid, config=traj.config, times=[traj.times[i] for i in idx],
                                steps=idx, fields=fields, diagnostics=diags)


def run_decay(cfg: RunConfig, log: Callable[[str], None]) -> Outcome:
    out = Outcome()
    ledger = estimate_ledger(cfg)
    g = make_grid(cfg)
    bg = make_background(cfg, g)
    core = cfg["data.core"] or 2 * g.h
    w0 = analysis.homogeneous_data(g, core, min(cfg["data.amplitude"], 0.5 * ledger.eps0))
    ev = make_evolution(cfg, bg, mode="full")
    res = analysis.decay_study(w0, cfg["decay.q_list"], cfg["evolution.t_end"], ev, ledger,
                               cfg["decay.t_min"], cfg["decay.t_box"])
    out.tables["decay.csv"] = (("t", "q", "norm", "envelope", "ratio"),
                               [(r.t, r.q, r.norm, r.envelope, r.ratio) for r in res.records])
    for q in res.exponents:
        expo = res.exponents[q]
        target = analysis.decay_exponent(q)
        err = None if expo is None else abs(expo - target)
        if q == 3:
            # at q = 3 the envelope is a bound, not a rate: record the fit only
            out.metric("exponent_q3.0", expo, None, True)
        else:
            out.metric(f"exponent_error_q{_format(q)}", err, 0.15)
        out.metric(f"max_ratio_q{_format(q)}", res.max_ratio[q], 1.25)
        out.metric(f"t_sat_q{_format(q)}", res.t_sat[q], None, True)
        log(f"q = {q:g}: exponent {expo}, max ratio {res.max_ratio[q]:.4g}, t_sat {res.t_sat[q]:.4g}")
    out.metric("t_min", res.t_min, None, True)
    out.documents["ledger.json"] = ledger.to_dict()
    return out


def run_split(cfg: RunConfig, log: Callable[[str], None]) -> Outcome:
    out = Outcome()
    g = make_grid(cfg)
    bg = make_background(cfg, g)
    r1, r2 = child_rngs(cfg.seed, 2)
    v10 = random_solenoidal(g, r1, cfg["data.k_peak"], cfg["data.amplitude"])
    v20 = random_solenoidal(g, r2, cfg["data.k_peak"], cfg["split.v2_amplitude"])
    ev = make_evolution(cfg, bg)
    split = evolution.evolve_split(v10, v20, ev)
    full = evolution.evolve(evolution.State(0.0, v10 + v20), replace(ev, mode="full"))
    diff = inequalities.lq_norm(split.final.w - full.final.w, 3)
    e0 = inequalities.lq_norm(v20, 2) ** 2
    res = max(abs(r["residual"]) for r in split.energy) / cfg["evolution.t_end"]
    out.metric("split_consistency_l3", diff, 1e-8)
    out.metric("v2_energy_residual_rate", res, 1e-6 * max(1.0, e0))
    out.trajectories["trajectory"] = split
    log(f"split difference {diff:.3g}, v2 residual rate {res:.3g}")
    return out


def run_weakstrong(cfg: RunConfig, log: Callable[[str], None]) -> Outcome:
    out = Outcome()
    res_list = cfg["weakstrong.resolutions"]
    pairs = list(zip(res_list[:-1], res_list[1:]))
    coarse = make_grid(cfg, min(res_list))
    params = make_params(cfg, coarse)
    w0 = random_solenoidal(coarse, np.random.default_rng(cfg.seed), cfg["data.k_peak"], cfg["data.amplitude"])
    ev = make_evolution(cfg, None, mode="full")
    results = analysis.weak_strong_experiment(w0, pairs, cfg["evolution.t_end"], ev, params)
    rows = []
    for r in results:
        label = f"{r.pair[0]}-{r.pair[1]}"
        rows += [(t, e, label) for t, e in zip(r.times, r.energy)]
        out.metric(f"E_T_{label}", r.final, None, True)
        out.metric(f"E_nondecreasing_{label}", float(np.min(np.diff(r.energy))) if len(r.energy) > 1 else 0.0,
                   None, bool(np.all(np.diff(r.energy) >= 0)))
        log(f"pair {label}: E(T) = {r.final:.4g}")
    finals = [r.final for r in results]
    mono = all(b < a for a, b in zip(finals[:-1], finals[1:]))
    out.metric("E_T_decreasing", finals[-1] / finals[0] if finals[0] > 0 else None, 1.0, mono)
    out.tables["weakstrong.csv"] = (("t", "E", "res_pair"), rows)
    return out


def run_continuity(cfg: RunConfig, log: Callable[[str], None]) -> Outcome:
    out = Outcome()
    g = make_grid(cfg)
    bg = make_background(cfg, g)
    r1, r2 = child_rngs(cfg.seed, 2)
    u0 = random_solenoidal(g, r1, cfg["data.k_peak"], cfg["data.amplitude"])
    direction = random_solenoidal(g, r2, cfg["data.k_peak"], 1.0)
    ev = make_evolution(cfg, bg, mode="full")
    res = analysis.continuous_dependence_experiment(u0, direction, cfg["continuity.scales"],
                                                    cfg["evolution.t_end"], ev)
    dev = float(np.max(np.abs(res.linear_ratios / res.linear_ratios[0] - 1)))
    out.metric("linear_response_deviation", dev, 0.2)
    spread = float(np.max(np.abs(res.c_hat_per_delta / res.c_hat - 1))) if res.c_hat > 0 else None
    out.metric("c_hat_spread", spread, 0.5)
    out.metric("c_hat", res.c_hat, None, True)
    out.tables["continuity.csv"] = (("delta_l3", "z_sup_l3", "c_hat"),
                                    list(zip(res.delta_norms, res.z_sup, res.c_hat_per_delta)))
    log(f"C_hat = {res.c_hat:.4g}, linear deviation {dev:.3g}")
    return out


def run_resolvent(cfg: RunConfig, log: Callable[[str], None]) -> Outcome:
    out = Outcome()
    g = make_grid(cfg)
    bg = make_background(cfg, g)
    f = analysis.single_mode_field(g)
    on, off = [], []
    for q in cfg["resolvent.q"]:
        for rho in cfg["resolvent.rho"]:
            for th in cfg["resolvent.theta"]:
                lam = rho * complex(math.cos(th), math.sin(th))
                kw = dict(grid=g, q=q, sector_angle=cfg["resolvent.sector_angle"])
                p_on = analysis.resolvent_probe(lam, f, cfg["evolution.coupling"] * bg.velocity_physical, **kw)
                p_off = analysis.resolvent_probe(lam, f, None, **kw)
                on.append((lam.real, lam.imag, q, p_on.ratio, p_on.iterations, p_on.converged, rho, th))
                off.append((lam.real, lam.imag, q, p_off.ratio, p_off.iterations))
    head = ("re_lambda", "im_lambda", "q", "ratio", "iters")
    out.tables["resolvent.csv"] = (head, [r[:5] for r in on])
    out.tables["resolvent_uncoupled.csv"] = (head, off)
    off2 = [r[3] for r in off if r[2] == 2]
    if off2:
        out.metric("uncoupled_q2_max_ratio", max(off2), 1 + 1e-6)
    for q in cfg["resolvent.q"]:
        sel = [r for r in on if r[2] == q]
        ref = [r[3] for r in sel if r[6] == 1 and r[7] == 0]
        finite = all(math.isfinite(r[3]) and r[5] for r in sel)
        if ref:
            spread = max(max(r[3] / ref[0], ref[0] / r[3]) for r in sel)
            out.metric(f"coupled_spread_q{_format(q)}", spread, 10.0, finite and spread <= 10)
        out.metric(f"coupled_converged_q{_format(q)}", sum(r[5] for r in sel), len(sel), finite)
    log(f"{len(on)} resolvent probes")
    return out


REGISTRY: dict[str, Callable[[RunConfig, Callable[[str], None]], Outcome]] = {
    "landau-verify": run_landau_verify,
    "inequalities": run_inequalities,
    "linear-decay": run_linear_decay,
    "picard": run_picard,
    "decay": run_decay,
    "split": run_split,
    "weakstrong": run_weakstrong,
    "continuity": run_continuity,
    "resolvent": run_resolvent,
}
assert set(REGISTRY) == set(EXPERIMENTS)


# -- output -------------------------------------------------------------------


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: str | Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def summary_document(cfg: RunConfig, outcome: Outcome, wallclock: float) -> dict:
    return {
        "experiment": cfg.experiment,
        "params": {k: _format(v) for k, v in cfg.values},
        "seed": cfg.seed,
        "metrics": outcome.metrics,
        "wallclock": wallclock,
    }


def write_outputs(cfg: RunConfig, outcome: Outcome, out_dir: str | Path, wallclock: float) -> Path:
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    text = echo(cfg)
    (root / "config.txt").write_text(text)
    for name, (header, rows) in outcome.tables.items():
        write_csv(root / name, header, rows)
    for name, doc in outcome.documents.items():
        (root / name).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    for name, traj in outcome.trajectories.items():
        evolution.write_trajectory(traj, root / name, text)
    summary = summary_document(cfg, outcome, wallclock)
    (root / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return root


def run_experiment(cfg: RunConfig, out_dir: str | Path | None = None,
                   log: Callable[[str], None] = lambda s: None) -> tuple[Outcome, Path]:
    if cfg.experiment not in REGISTRY:
        raise KeyError(f"unknown experiment {cfg.experiment!r}")
    start = time.perf_counter()
    outcome = REGISTRY[cfg.experiment](cfg, log)
    wall = time.perf_counter() - start
    path = write_outputs(cfg, outcome, cfg["run.out"] if out_dir is None else out_dir, wall)
    return outcome, path
