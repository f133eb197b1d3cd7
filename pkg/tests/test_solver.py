"""Псевдоспектральный решатель и эксперимент с финальными данными."""
import math

import numpy as np
import pytest
from pydantic import ValidationError

from config import SolverConfig
from errors import DomainError, InstabilityError, ShapeError
from solver import (EvolutionState, KleinGordonSplitStep, SpectralGrid, energy, evolve, final_value_experiment,
                    half_kg_variables, linear_propagator, profile_state, state_from_half_kg)
from profiles import canonical_data, phase_pair, u_tilde_eval


def packet(grid, amplitude=0.1, t=1.0):
    return EvolutionState(t, amplitude * np.exp(-0.25 * grid.x ** 2), np.zeros(grid.points))


class TestHalfKleinGordon:

    def test_right_mover(self):
        """u = e^{i k x}, u_t = -i <k> u: только phi_+."""
        grid = SpectralGrid(32.0, 256)
        k0 = 5.0 * math.pi / grid.half_width
        u = np.exp(1j * k0 * grid.x)
        state = EvolutionState(0.0, u, -1j * math.sqrt(1.0 + k0 * k0) * u)
        phi_p, phi_m = half_kg_variables(state, grid)
        assert np.max(np.abs(phi_p - u)) < 1e-12
        assert np.max(np.abs(phi_m)) < 1e-12

    def test_real_field(self):
        """Для вещественных u, u_t: phi_- = conj(phi_+)."""
        grid = SpectralGrid(32.0, 256)
        rng = np.random.default_rng(1)
        state = EvolutionState(0.0, rng.standard_normal(256), rng.standard_normal(256))
        phi_p, phi_m = half_kg_variables(state, grid)
        assert np.max(np.abs(phi_m - np.conj(phi_p))) < 1e-12

    def test_round_trip(self):
        grid = SpectralGrid(32.0, 256)
        rng = np.random.default_rng(0)
        state = EvolutionState(2.0, rng.standard_normal(256) + 1j * rng.standard_normal(256),
                               rng.standard_normal(256) + 1j * rng.standard_normal(256))
        back = state_from_half_kg(*half_kg_variables(state, grid), state.t, grid)
        assert np.max(np.abs(back.u - state.u)) < 1e-12
        assert np.max(np.abs(back.ut - state.ut)) < 1e-12

    def test_grid_size(self):
        with pytest.raises(DomainError):
            SpectralGrid(32.0, 100)

    def test_state_shapes(self):
        with pytest.raises(ShapeError):
            EvolutionState(0.0, np.zeros(8), np.zeros(16))


class TestLinearPropagator:

    def test_zero_step(self):
        grid = SpectralGrid(32.0, 256)
        state = packet(grid)
        same = linear_propagator(state, 0.0, grid)
        assert np.max(np.abs(same.u - state.u)) < 1e-14

    def test_plane_wave_period(self):
        """Через 2 pi / <k> плоская волна возвращается в себя."""
        grid = SpectralGrid(32.0, 256)
        k0 = 3.0 * math.pi / grid.half_width
        w = math.sqrt(1.0 + k0 * k0)
        u = np.exp(1j * k0 * grid.x)
        state = EvolutionState(0.0, u, -1j * w * u)
        later = linear_propagator(state, 2.0 * math.pi / w, grid)
        assert np.max(np.abs(later.u - u)) < 1e-12

    def test_half_kg_norm_conserved(self):
        grid = SpectralGrid(32.0, 256)
        state = packet(grid)
        phi_p, _ = half_kg_variables(state, grid)
        for _ in range(1000):
            state = linear_propagator(state, 0.05, grid)
        phi_later, _ = half_kg_variables(state, grid)
        assert abs(grid.l2(phi_later) / grid.l2(phi_p) - 1.0) < 1e-12


class TestSplitStep:

    def config(self, **kw):
        base = dict(half_width=64.0, points=512, dt=0.05, coupling=1.0, t_start=1.0, t_end=11.0, snapshots=2)
        base.update(kw)
        return SolverConfig(**base)

    def test_free_evolution_matches_propagator(self):
        """lambda = 0: схема совпадает с точным линейным потоком."""
        cfg = self.config(coupling=0.0, t_end=10.0)
        grid = SpectralGrid.from_config(cfg)
        start = packet(grid)
        traj = evolve(cfg, start, [10.0])
        exact = linear_propagator(start, 9.0, grid)
        assert np.max(np.abs(traj.states[-1].u - exact.u)) < 1e-11

    def test_reversible(self):
        """Шаги вперёд, затем назад возвращают исходное состояние."""
        cfg = self.config(t_end=6.0)
        grid = SpectralGrid.from_config(cfg)
        start = packet(grid, amplitude=0.5)
        forward = evolve(cfg, start, [6.0]).states[-1]
        back = evolve(cfg, forward, [1.0]).states[-1]
        assert abs(back.t - 1.0) < 1e-12
        assert np.max(np.abs(back.u - start.u)) < 1e-8

    def test_output_times_hit_exactly(self):
        cfg = self.config()
        grid = SpectralGrid.from_config(cfg)
        traj = evolve(cfg, packet(grid), [1.33, 2.0, 7.77])
        assert traj.times == (1.33, 2.0, 7.77)

    def test_non_monotone_times(self):
        cfg = self.config()
        grid = SpectralGrid.from_config(cfg)
        with pytest.raises(DomainError):
            evolve(cfg, packet(grid), [5.0, 3.0])

    @pytest.mark.parametrize("coupling", [1.0, -1.0])
    def test_energy_conserved_small_data(self, coupling):
        cfg = SolverConfig(half_width=128.0, points=2048, dt=0.025, coupling=coupling, t_start=1.0, t_end=51.0,
                           snapshots=2)
        grid = SpectralGrid.from_config(cfg)
        traj = evolve(cfg, packet(grid, amplitude=0.05), [51.0])
        assert traj.energy_deviation < 1e-6
        assert traj.energy_drift < 1e-6

    def test_energy_error_second_order(self):
        """Ошибка энергии схемы Странга уменьшается в 4 раза при dt / 2."""
        deviations = []
        for dt in (0.1, 0.05):
            cfg = self.config(dt=dt, coupling=-1.0)
            grid = SpectralGrid.from_config(cfg)
            deviations.append(evolve(cfg, packet(grid, amplitude=0.5), [11.0]).energy_deviation)
        assert deviations[0] / deviations[1] >= 3.5

    def test_energy_value(self):
        """Плоская волна u = a: E = a^2/2 - lambda a^4 / 4 на единицу длины."""
        grid = SpectralGrid(4.0, 64)
        state = EvolutionState(0.0, np.full(64, 0.5), np.zeros(64))
        expected = 8.0 * (0.125 - 0.0625 / 4.0)
        assert abs(energy(state, 1.0, grid) - expected) < 1e-13

    def test_blow_up_detected(self):
        cfg = self.config(blowup_factor=2.0)
        grid = SpectralGrid.from_config(cfg)
        g = np.exp(-0.25 * grid.x ** 2)
        with pytest.raises(InstabilityError) as info:
            evolve(cfg, EvolutionState(1.0, 0.1 * g, g), [11.0])
        assert info.value.sup_norm > 0.2

    def test_dealiased_step_runs(self):
        grid = SpectralGrid(32.0, 256)
        stepper = KleinGordonSplitStep(grid, 1.0, dealias=True)
        state = stepper(packet(grid, amplitude=0.5), 0.05)
        assert abs(state.t - 1.05) < 1e-15
        assert np.all(np.isfinite(state.u))


class TestSolverConfig:

    def test_power_of_two(self):
        with pytest.raises(ValidationError):
            SolverConfig(points=1000)

    def test_domain_contains_cone(self):
        with pytest.raises(ValidationError):
            SolverConfig(half_width=100.0)

    def test_step_limit(self):
        with pytest.raises(ValidationError):
            SolverConfig(dt=0.1)


class TestProfileState:

    def test_matches_u_tilde(self, data_1d, phases_1d):
        grid = SpectralGrid(64.0, 1024)
        state = profile_state(data_1d, phases_1d, 20.0, grid)
        field = u_tilde_eval(data_1d, phases_1d, 20.0, grid.x)
        assert np.max(np.abs(state.u - field.values)) < 1e-15

    def test_one_dimensional_only(self, data_2d, phases_2d):
        with pytest.raises(DomainError):
            profile_state(data_2d, phases_2d, 20.0, SpectralGrid(64.0, 1024))

    def test_coupling_mismatch(self, data_1d, phases_1d):
        cfg = SolverConfig(coupling=2.0)
        with pytest.raises(DomainError):
            final_value_experiment(cfg, data_1d, phases_1d)


@pytest.mark.slow
class TestFinalValueExperiment:

    def test_canonical_run(self):
        data = canonical_data(1)
        phases = phase_pair(data)
        report = final_value_experiment(SolverConfig(), data, phases)
        assert report.error_tilde[0] < 1e-12
        assert report.tracking_ok
        assert report.smallness_ok
        assert report.complexness_ok
        assert report.passed
        for e_ap, e_tilde, v in zip(report.error_ap, report.error_tilde, report.v_norms):
            assert abs(e_ap - e_tilde) <= v + 1e-12
