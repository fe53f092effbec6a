import math
import warnings

import numpy as np
import pytest

from landau_lab.analysis import (
    complex_lq_norm,
    continuous_dependence_experiment,
    decay_constant,
    decay_exponent,
    decay_study,
    envelope,
    fit_exponent,
    gap_energy,
    homogeneous_data,
    largest_mode_time,
    minimal_c_hat,
    resolvent_probe,
    rt_schedule,
    saturation_time,
    single_mode_field,
    weak_strong_experiment,
)
from landau_lab.evolution import EvolutionConfig
from landau_lab.inequalities import ConstantsLedger, lq_norm
from landau_lab.landau import LandauParams
from landau_lab.spectral import Field, Grid, random_solenoidal


class TestDecayFormulas:
    def test_constants(self):
        assert decay_constant(6) == pytest.approx((1 / 6) ** 0.25, rel=1e-14)
        assert decay_constant(6) == pytest.approx(0.6389, abs=1e-4)
        assert decay_constant(3) == 1.0
        assert decay_exponent(6) == pytest.approx(-0.25)
        assert decay_exponent(3) == 0.0
        with pytest.raises(ValueError):
            decay_constant(2.5)

    def test_envelope(self):
        assert envelope(5.0, 3, 0.7) == 0.7
        assert envelope(4.0, 6, 1.0) == pytest.approx(decay_constant(6) * 4.0**-0.25)
        assert envelope(0.0, 6, 1.0) == math.inf
        for q in (4, 6, 12):
            assert envelope(0.3, q, 1.0) > 0

    def test_rt_schedule(self):
        assert rt_schedule(2.0, 6.0, 0.0) == 3.0
        assert rt_schedule(2.0, 6.0, 2.0) == 6.0
        r = [rt_schedule(2.0, 6.0, t) for t in np.linspace(0, 2, 21)]
        assert np.all(np.diff(r) >= 0)
        assert rt_schedule(1.0, 3.0, 0.5) == pytest.approx(3.0)
        with pytest.raises(ValueError):
            rt_schedule(1.0, 6.0, 1.5)
        with pytest.raises(ValueError):
            rt_schedule(1.0, 2.0, 0.5)


class TestDecayHelpers:
    def test_fit_exact_power_law(self):
        t = np.geomspace(0.1, 10, 40)
        assert fit_exponent(t, 3 * t**-0.25, 0.2, 5) == pytest.approx(-0.25, abs=1e-12)
        assert fit_exponent(t, t, 20, 30) is None

    def test_saturation_detected(self):
        t = np.geomspace(0.1, 10, 60)
        norms = np.where(t < 1, t**-0.5, 1.0)
        t_sat, hit = saturation_time(t, norms, 0.1, 100)
        assert hit and 0.9 <= t_sat <= 1.3
        t_sat, hit = saturation_time(t, t**-0.5, 0.1, 2.0)
        assert not hit and t_sat == 2.0

    def test_largest_mode_time(self, grid16):
        f = single_mode_field(grid16, mode=(2, 0, 0))
        assert largest_mode_time(f) == pytest.approx(0.25)
        assert largest_mode_time(Field.zeros(grid16)) == 0.0

    def test_homogeneous_data_normalized(self, grid32):
        w = homogeneous_data(grid32, core=2 * grid32.h, norm_l3=0.1)
        assert lq_norm(w, 3) == pytest.approx(0.1, rel=1e-12)
        assert np.max(np.abs(np.sum(grid32.wavenumbers * w.coefficients, axis=0))) <= 1e-12


class TestDecayStudy:
    def test_zero_data(self, grid16):
        res = decay_study(Field.zeros(grid16), [3, 6], 0.1, EvolutionConfig(dt=0.05, t_end=0.1))
        assert all(r.norm == 0 for r in res.records)
        assert res.exponents == {3.0: None, 6.0: None}

    def test_q_range(self, grid16):
        with pytest.raises(ValueError):
            decay_study(Field.zeros(grid16), [2], 0.1, EvolutionConfig(dt=0.05, t_end=0.1))
        with pytest.raises(ValueError):
            decay_study(Field.zeros(grid16), [13], 0.1, EvolutionConfig(dt=0.05, t_end=0.1))

    def test_gate_enforced(self, grid16):
        w0 = random_solenoidal(grid16, np.random.default_rng(0), amplitude=1.0)
        with pytest.raises(ValueError):
            decay_study(w0, [3], 0.1, EvolutionConfig(dt=0.05, t_end=0.1), ledger=ConstantsLedger(c1=2, c2=1))

    def test_small_run(self):
        g = Grid(32, 8.0)
        w0 = homogeneous_data(g, core=2 * g.h, norm_l3=0.05)
        cfg = EvolutionConfig(dt=0.01, t_end=0.5, snapshot_every=2)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = decay_study(w0, [3, 6], 0.5, cfg)
        q3 = [r for r in res.records if r.q == 3.0]
        assert all(r.norm <= r.envelope * (1 + 1e-12) for r in q3)
        assert res.exponents[6.0] is not None and res.exponents[6.0] < 0
        assert len(q3) == len(res.records) // 2


class TestWeakStrong:
    def test_identical_resolutions(self, grid16):
        w0 = random_solenoidal(grid16, np.random.default_rng(1), amplitude=0.5)
        cfg = EvolutionConfig(dt=0.02, t_end=0.2, snapshot_every=1)
        (res,) = weak_strong_experiment(w0, [(16, 16)], 0.2, cfg)
        assert np.all(res.energy == 0)

    def test_refinement_and_monotonicity(self):
        g = Grid(24)
        w0 = random_solenoidal(g, np.random.default_rng(2), k_peak=3.0, amplitude=2.0)
        cfg = EvolutionConfig(dt=0.01, t_end=0.1, snapshot_every=1)
        params = LandauParams(c=5.0, delta=1.05, r_in=math.pi / 2, r_out=0.45 * 2 * math.pi)
        lo, hi = weak_strong_experiment(w0, [(24, 32), (32, 48)], 0.1, cfg, params)
        assert lo.final > hi.final > 0
        assert np.all(np.diff(lo.energy) >= 0) and np.all(np.diff(hi.energy) >= 0)

    def test_gap_energy_constant_field(self, grid16):
        f = single_mode_field(grid16)
        e = gap_energy([0.0, 0.5, 1.0], [f, f, f])
        l2, gr = lq_norm(f, 2) ** 2, 1.0 * lq_norm(f, 2) ** 2
        assert np.allclose(e, l2 + gr * np.array([0.0, 0.5, 1.0]))


class TestContinuity:
    def test_minimal_c_hat(self):
        c = minimal_c_hat(0.3, 0.1, 0.5)
        assert 0.3 == pytest.approx(2 * c * 0.1 * math.exp(0.5 * c), rel=1e-10)
        assert minimal_c_hat(0.0, 0.1, 0.5) == 0.0

    def test_sweep(self, grid24, background24):
        rng = np.random.default_rng(3)
        u0 = random_solenoidal(grid24, rng, amplitude=0.05)
        d = random_solenoidal(grid24, rng, amplitude=1.0)
        cfg = EvolutionConfig(dt=0.01, t_end=0.2, background=background24, snapshot_every=1)
        res = continuous_dependence_experiment(u0, d, [0.0, 1e-3, 2e-3, 1e-2], 0.2, cfg)
        assert res.z_sup[0] == 0 and res.c_hat_per_delta[0] == 0
        # halving the perturbation halves the response
        assert res.z_sup[1] / res.z_sup[2] == pytest.approx(0.5, rel=0.2)
        c = res.c_hat
        bound = 2 * c * res.delta_norms * math.exp(c * res.strichartz)
        assert np.all(res.z_sup <= bound * (1 + 1e-12))
        nz = res.c_hat_per_delta[1:]
        assert np.all(np.abs(nz / c - 1) <= 0.5)


class TestResolvent:
    def test_single_mode_closed_form(self, grid16):
        f = single_mode_field(grid16)
        probe = resolvent_probe(1.0, f, None, grid16)
        assert np.allclose(probe.u.real, 0.5 * f.values, atol=1e-14)
        assert np.max(np.abs(probe.u.imag)) <= 1e-14
        assert probe.ratio == pytest.approx(0.5, rel=1e-12)

    def test_uncoupled_ratio_bounded(self, grid16):
        f = random_solenoidal(grid16, np.random.default_rng(4))
        for rho in (0.1, 1.0, 10.0):
            for theta in (0.0, math.pi / 3, -math.pi / 3):
                lam = rho * complex(math.cos(theta), math.sin(theta))
                assert resolvent_probe(lam, f, None, grid16, q=2).ratio <= 1 + 1e-6

    def test_outside_sector(self, grid16):
        f = single_mode_field(grid16)
        with pytest.raises(ValueError):
            resolvent_probe(-1.0, f, None, grid16)
        with pytest.raises(ValueError):
            resolvent_probe(0.0, f, None, grid16)

    def test_coupled_solves_the_system(self, background24):
        g = background24.grid
        f = single_mode_field(g)
        v = background24.velocity_physical
        probe = resolvent_probe(1.0, f, v, g, tol=1e-12)
        assert probe.converged and probe.iterations > 0
        # check lam u - lap u + P div(u v + v u) = f through the real solver pieces
        from landau_lab.spectral import leray_hat, rfft3, symmetric_divergence_hat

        u = probe.u.real
        lhs = rfft3(u) * (1.0 + g.k2) + leray_hat(g, symmetric_divergence_hat(g, v, u)) * g.dealias_mask
        assert np.max(np.abs(lhs - rfft3(f.values))) <= 1e-9

    def test_complex_norm(self, grid16):
        u = np.ones((3,) + grid16.physical_shape, dtype=complex) * (1 + 1j)
        assert complex_lq_norm(grid16, u, 2) == pytest.approx(math.sqrt(6) * grid16.l**1.5)
        assert complex_lq_norm(grid16, u, math.inf) == pytest.approx(math.sqrt(6))
