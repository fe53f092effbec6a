import csv
import math
import warnings

import numpy as np
import pytest

from landau_lab.evolution import (
    DIAGNOSTIC_COLUMNS,
    CFLError,
    EvolutionConfig,
    SimulationError,
    State,
    energy_report,
    evolve,
    evolve_linear,
    evolve_mollified,
    evolve_split,
    evolve_total,
    mollifier_multiplier,
    step,
    write_trajectory,
)
from landau_lab.inequalities import lq_norm
from landau_lab.landau import LandauParams, truncated_background
from landau_lab.spectral import Field, Grid, random_solenoidal, read_field


def _data(grid, seed=0, amplitude=0.05, k_peak=2.0):
    return random_solenoidal(grid, np.random.default_rng(seed), k_peak=k_peak, amplitude=amplitude)


def _diff3(a, b):
    return lq_norm(a - b, 3)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            EvolutionConfig(dt=0.0, t_end=1.0)
        with pytest.raises(ValueError):
            EvolutionConfig(dt=0.1, t_end=1.0, scheme="rk4")
        with pytest.raises(ValueError):
            EvolutionConfig(dt=0.1, t_end=1.0, mode="mollified")
        with pytest.raises(ValueError):
            EvolutionConfig(dt=0.3, t_end=1.0).n_steps

    def test_background_on_other_grid(self, grid16, background24):
        cfg = EvolutionConfig(dt=0.01, t_end=0.01, background=background24)
        with pytest.raises(ValueError):
            evolve(State(0.0, Field.zeros(grid16)), cfg)

    def test_scalar_state_rejected(self, grid16):
        with pytest.raises(ValueError):
            evolve(State(0.0, Field.zeros(grid16, vector=False)), EvolutionConfig(dt=0.1, t_end=0.1))


class TestSteadyState:
    def test_zero_perturbation_stays_zero(self, grid32, background32):
        cfg = EvolutionConfig(dt=0.01, t_end=1.0, background=background32, snapshot_every=100)
        traj = evolve(State(0.0, Field.zeros(grid32)), cfg)
        assert np.max(np.abs(traj.final.w.values)) <= 1e-12

    def test_total_field_fixed_point(self, grid32, background32):
        v0 = background32.velocity.coefficients
        scale = np.max(np.abs(background32.velocity.values))
        states = evolve_total(background32, None, 0.01, 100)
        drift = [np.max(np.abs(np.fft.irfftn(s - v0, s=(32,) * 3, axes=(1, 2, 3), norm="forward")))
                 for s in states]
        assert max(drift) <= 1e-12 * max(scale, 1.0)


class TestLinear:
    @pytest.mark.parametrize("scheme", ["imex_euler", "imex_rk2"])
    def test_single_mode_heat_decay(self, grid16, scheme):
        x = grid16.coords
        f = np.zeros((3,) + grid16.physical_shape)
        f[1] = np.cos(2 * x[0])
        dt = 0.05
        cfg = EvolutionConfig(dt=dt, t_end=0.5, scheme=scheme, snapshot_every=1)
        traj = evolve_linear(Field(grid16, f), cfg)
        amps = [np.max(np.abs(s.values[1])) for s in traj.fields]
        factors = np.array(amps[1:]) / np.array(amps[:-1])
        assert np.allclose(factors, math.exp(-4 * dt), rtol=0, atol=1e-12)

    def test_superposition(self, grid24, background24):
        cfg = EvolutionConfig(dt=0.01, t_end=0.2, background=background24, snapshot_every=20)
        a, b = _data(grid24, 1), _data(grid24, 2)
        ua = evolve_linear(a, cfg).final.w
        ub = evolve_linear(b, cfg).final.w
        uab = evolve_linear(a + b, cfg).final.w
        assert np.max(np.abs((uab - ua - ub).values)) <= 1e-10

    @pytest.mark.parametrize("c", [5.0, 10.0])
    def test_lp_norms_nonincreasing(self, grid24, c):
        bg = truncated_background(LandauParams.for_grid(c, grid24), grid24)
        cfg = EvolutionConfig(dt=0.01, t_end=0.3, background=bg, snapshot_every=1)
        traj = evolve_linear(_data(grid24, 3), cfg)
        for p in (2, 3, 4, 6):
            norms = traj.norms(p)
            assert np.all(np.diff(norms) <= 1e-10 * norms[:-1]), p

    def test_heat_energy_identity(self, grid16):
        cfg = EvolutionConfig(dt=0.02, t_end=0.5)
        rep = energy_report(evolve_linear(_data(grid16, 4, amplitude=1.0), cfg))
        assert max(abs(r["residual"]) for r in rep) <= 1e-8
        assert all(r["work_int"] == 0 for r in rep)

    def test_zero_field_report(self, grid16, background24):
        rep = energy_report(evolve_linear(Field.zeros(grid16), EvolutionConfig(dt=0.1, t_end=0.5)))
        assert all(r[k] == 0 for r in rep for k in ("l2sq", "grad_int", "work_int", "residual"))


class TestFull:
    def test_divergence_and_energy(self, grid24, background24):
        w0 = _data(grid24, 5)
        cfg = EvolutionConfig(dt=0.005, t_end=0.5, background=background24, snapshot_every=10)
        traj = evolve(State(0.0, w0), cfg)
        assert max(d["div_max"] for d in traj.diagnostics) <= 1e-10
        budget = 1e-6 * max(1.0, lq_norm(w0, 2) ** 2) * cfg.t_end
        assert max(abs(r["residual"]) for r in energy_report(traj)) <= budget
        l2 = [r["l2sq"] for r in traj.energy]
        assert np.all(np.diff(l2) <= 0)

    def test_determinism(self, grid16):
        bg = truncated_background(LandauParams.for_grid(5.0, Grid(24)), Grid(24))
        g = bg.grid
        cfg = EvolutionConfig(dt=0.01, t_end=0.1, background=bg, snapshot_every=5)
        a = evolve(State(0.0, _data(g, 6)), cfg)
        b = evolve(State(0.0, _data(g, 6)), cfg)
        assert all(np.array_equal(x.coefficients, y.coefficients) for x, y in zip(a.fields, b.fields))
        assert a.diagnostics == b.diagnostics

    def test_step_matches_evolve(self, grid24, background24):
        w0 = _data(grid24, 7)
        cfg = EvolutionConfig(dt=0.01, t_end=0.01, background=background24)
        s = step(State(0.0, w0), cfg)
        assert s.step == 1 and s.t == pytest.approx(0.01)
        assert np.array_equal(s.w.coefficients, evolve(State(0.0, w0), cfg).final.w.coefficients)

    @pytest.mark.parametrize("scheme,order", [("imex_rk2", 2.0), ("imex_euler", 1.0)])
    def test_richardson_order(self, grid16, scheme, order):
        bg = truncated_background(LandauParams.for_grid(5.0, Grid(24)), Grid(24))
        g = bg.grid
        w0 = _data(g, 8, amplitude=0.5)
        finals = []
        for dt in (0.02, 0.01, 0.005):
            cfg = EvolutionConfig(dt=dt, t_end=0.2, scheme=scheme, background=bg, snapshot_every=1000)
            finals.append(evolve(State(0.0, w0), cfg).final.w)
        p = math.log2(_diff3(finals[0], finals[1]) / _diff3(finals[1], finals[2]))
        assert p == pytest.approx(order, abs=0.2)

    def test_cfl_violation(self, grid16):
        w0 = _data(grid16, 9, amplitude=50.0)
        with pytest.raises(CFLError):
            evolve(State(0.0, w0), EvolutionConfig(dt=0.5, t_end=1.0))

    def test_non_finite_aborts_with_last_good(self, grid16):
        w0 = _data(grid16, 10)
        vals = w0.values.copy()
        vals[0, 0, 0, 0] = np.nan
        with pytest.raises(SimulationError) as info:
            evolve(State(0.0, Field(grid16, vals)), EvolutionConfig(dt=0.01, t_end=0.1))
        assert info.value.last_good.step == 0


class TestMollified:
    def test_multiplier_properties(self, grid24, rng):
        j = mollifier_multiplier(grid24, 4 * grid24.h)
        assert j[0, 0, 0] == 1.0 and np.all((j > 0) & (j <= 1))
        w = _data(grid24, 11)
        jw = Field(grid24, j * w.coefficients, spectral=True)
        assert np.max(np.abs(jw.coefficients[:, 0, 0, 0] - w.coefficients[:, 0, 0, 0])) <= 1e-12
        k = grid24.wavenumbers
        assert np.max(np.abs(np.sum(k * jw.coefficients, axis=0))) <= 1e-12
        assert lq_norm(jw, 2) <= lq_norm(w, 2)

    def test_width_below_two_cells(self, grid24):
        with pytest.raises(ValueError):
            evolve_mollified(_data(grid24, 12), grid24.h, EvolutionConfig(dt=0.01, t_end=0.01))

    def test_refinement_in_eps(self, grid32, background32):
        w0 = _data(grid32, 13, amplitude=0.5)
        cfg = EvolutionConfig(dt=0.01, t_end=0.2, background=background32, snapshot_every=100)
        full = evolve(State(0.0, w0), cfg).final.w
        diffs = [_diff3(evolve_mollified(w0, m * grid32.h, cfg).final.w, full) for m in (8, 4, 2)]
        assert diffs[0] > diffs[1] > diffs[2] > 0


class TestSplit:
    def test_zero_v1_reproduces_full(self, grid24, background24):
        w0 = _data(grid24, 14)
        cfg = EvolutionConfig(dt=0.01, t_end=0.2, background=background24, snapshot_every=20)
        split = evolve_split(Field.zeros(grid24), w0, cfg)
        full = evolve(State(0.0, w0), cfg)
        assert np.max(np.abs(split.final.v1.values)) == 0
        assert np.max(np.abs((split.final.v2 - full.final.w).values)) <= 1e-12

    def test_zero_v2_stays_zero(self, grid24, background24):
        cfg = EvolutionConfig(dt=0.01, t_end=0.2, background=background24)
        split = evolve_split(_data(grid24, 15), Field.zeros(grid24), cfg)
        assert np.max(np.abs(split.final.v2.values)) <= 1e-10

    def test_consistency_with_full(self, grid32, background32):
        v10, v20 = _data(grid32, 16), _data(grid32, 17, amplitude=0.5)
        cfg = EvolutionConfig(dt=0.01, t_end=0.2, background=background32, snapshot_every=20)
        split = evolve_split(v10, v20, cfg)
        full = evolve(State(0.0, v10 + v20), cfg)
        assert _diff3(split.final.w, full.final.w) <= 1e-8
        assert len(split.split_fields) == len(split.fields)

    def test_gate_violation_warns(self, grid16):
        cfg = EvolutionConfig(dt=0.01, t_end=0.01, split_gate=1e-3)
        with pytest.warns(UserWarning):
            evolve_split(_data(grid16, 18), Field.zeros(grid16), cfg)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            evolve_split(_data(grid16, 18, amplitude=1e-4), Field.zeros(grid16), cfg)

    def test_v2_energy_audit(self, grid24, background24):
        cfg = EvolutionConfig(dt=0.005, t_end=0.2, background=background24)
        split = evolve_split(_data(grid24, 19), _data(grid24, 20, amplitude=0.5), cfg)
        budget = 1e-6 * max(1.0, split.energy[0]["l2sq"]) * cfg.t_end
        assert max(abs(r["residual"]) for r in energy_report(split)) <= budget


def test_write_trajectory(tmp_path, grid16):
    cfg = EvolutionConfig(dt=0.05, t_end=0.5, snapshot_every=5)
    traj = evolve(State(0.0, _data(grid16, 21)), cfg)
    root = write_trajectory(traj, tmp_path / "traj", "evolution.dt = 0.05\n")
    assert (root / "config.txt").read_text() == "evolution.dt = 0.05\n"
    snaps = sorted((root / "snapshots").glob("*.field"))
    assert [p.name for p in snaps] == ["0000.field", "0001.field", "0002.field"]
    back = read_field(snaps[-1])
    assert np.allclose(back.values, traj.fields[-1].values, atol=1e-15)
    with open(root / "diagnostics.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == DIAGNOSTIC_COLUMNS
    assert [int(r[0]) for r in rows[1:]] == [0, 5, 10]
