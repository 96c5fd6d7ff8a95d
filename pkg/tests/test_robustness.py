import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from qgrl.checkpoint import CheckpointError
from qgrl.env import EnvConfig, GateControlEnv, controls_hamiltonian, geometric_phase_schedule
from qgrl.geometric import RYY_BETAS, RYY_COUPLING, compose_ryy, nonadiabatic_params
from qgrl.linalg import expm_hermitian, gate_fidelity
from qgrl.ppo import RegularizerSpec, init_policy, sample_action
from qgrl.robustness import (
    Heatmap,
    PulseSchedule,
    centralize,
    cheat_margin,
    dynamical_phase_audit,
    extract_pulses,
    heatmap_from_csv,
    heatmap_to_csv,
    pulses_from_csv,
    pulses_to_csv,
    replay,
    robust_area,
    sweep_heatmap,
)

TWO_PI = 2 * math.pi


def analytic_entangler_schedule(cfg=None, j=0.3187):
    """Stepwise schedule driving the entangling block for one period."""
    if cfg is None:
        cfg = EnvConfig(total_time=1.0, n_max=100)
    p = nonadiabatic_params(cfg.omega_drive, j)
    rows = np.zeros((cfg.n_max, 5))
    rows[:, 2] = p.rabi
    rows[:, 3] = p.detuning
    rows[:, 4] = p.coupling
    return PulseSchedule(dt=cfg.dt, controls=rows), cfg


def detuning_shifted_zero_schedule(cfg, cell):
    """Zero schedule pre-shifted by one heatmap cell of detuning offset.

    The error-free zero schedule keeps the propagator at the identity, whose
    fidelity (1/2) is the global maximum over pure product evolutions, so
    the shifted schedule's swept argmax sits exactly one cell off center.
    """
    rows = np.zeros((cfg.n_max, 5))
    rows[:, 1] = rows[:, 3] = -cfg.delta_max * cell
    return PulseSchedule(dt=cfg.dt, controls=rows)


def trained_like_params(rng):
    return init_policy(rng, obs_dim=38, act_dim=5, hidden=(8,))


class TestExtractPulses:
    def test_replay_reproduces_rollout_fidelity(self):
        rng = np.random.default_rng(0)
        params = trained_like_params(rng)
        cfg = EnvConfig(n_max=20)
        schedule = extract_pulses(params, cfg)
        env = GateControlEnv(cfg)
        obs = env.reset()
        done = False
        while not done:
            sample = sample_action(obs, params, RegularizerSpec("none"),
                                   rng, mode="eval")
            obs, _, done, info = env.step(sample.action)
        assert replay(schedule, (0.0, 0.0), cfg) == pytest.approx(
            info["fidelity"], abs=1e-12)

    def test_deterministic(self):
        rng = np.random.default_rng(1)
        params = trained_like_params(rng)
        cfg = EnvConfig(n_max=15)
        s1 = extract_pulses(params, cfg)
        s2 = extract_pulses(params, cfg)
        assert np.array_equal(s1.controls, s2.controls)

    def test_length_bounded_by_horizon(self):
        rng = np.random.default_rng(2)
        params = trained_like_params(rng)
        cfg = EnvConfig(n_max=12)
        schedule = extract_pulses(params, cfg)
        assert len(schedule) <= cfg.n_max

    def test_incompatible_checkpoint(self):
        rng = np.random.default_rng(3)
        params = init_policy(rng, obs_dim=10, act_dim=5, hidden=(8,))
        with pytest.raises(CheckpointError, match="10"):
            extract_pulses(params, EnvConfig())


class TestReplay:
    def test_zero_offsets_equal_error_free(self):
        schedule, cfg = analytic_entangler_schedule()
        f0 = replay(schedule, (0.0, 0.0), cfg)
        cfg_err = EnvConfig(**{**cfg.__dict__, "error_offsets": (0.0, 0.0)})
        assert replay(schedule, (0.0, 0.0), cfg_err) == f0
        # nonzero offsets move the fidelity
        assert replay(schedule, (0.05, 0.0), cfg) != f0

    def test_all_zero_schedule(self):
        cfg = EnvConfig()
        schedule = PulseSchedule(dt=cfg.dt, controls=np.zeros((cfg.n_max, 5)))
        assert replay(schedule, (0.0, 0.0), cfg) == pytest.approx(0.5, abs=1e-12)

    def test_matches_stepwise_product(self):
        schedule, cfg = analytic_entangler_schedule()
        offsets = (0.03, -0.05)
        u = np.eye(4, dtype=complex)
        for i in range(len(schedule)):
            h = controls_hamiltonian(schedule.controls[i], i * schedule.dt,
                                     cfg, offsets)
            u = expm_hermitian(h, schedule.dt) @ u
        from qgrl.env import TARGET_GATE
        assert replay(schedule, offsets, cfg) == pytest.approx(
            gate_fidelity(u, TARGET_GATE), abs=1e-10)


class TestSweepHeatmap:
    def test_center_cell_is_zero_offset_replay(self):
        schedule, cfg = analytic_entangler_schedule()
        hm = sweep_heatmap(schedule, 0.1, 11, cfg)
        i, j = hm.center_cell()
        expected = math.log10(1.0 - replay(schedule, (0.0, 0.0), cfg))
        assert hm.values[i, j] == pytest.approx(expected, abs=1e-12)

    def test_csv_byte_identical(self):
        schedule, cfg = analytic_entangler_schedule()
        t1 = heatmap_to_csv(sweep_heatmap(schedule, 0.1, 7, cfg))
        t2 = heatmap_to_csv(sweep_heatmap(schedule, 0.1, 7, cfg))
        assert t1 == t2

    def test_grid_size(self):
        schedule, cfg = analytic_entangler_schedule()
        hm = sweep_heatmap(schedule, 0.08, 5, cfg)
        assert hm.values.shape == (5, 5)
        assert hm.d_omega_grid[0] == -0.08
        assert hm.d_omega_grid[-1] == 0.08

    def test_swap_symmetric_schedule(self):
        # identical drives on both qubits, no exchange: swapping the qubits
        # leaves the schedule invariant, and a single shared offset per axis
        # keeps the heatmap equal to itself under the swap
        cfg = EnvConfig(total_time=1.0, n_max=40)
        rows = np.zeros((cfg.n_max, 5))
        rows[:, 0] = rows[:, 2] = 2.0
        rows[:, 1] = rows[:, 3] = -1.0
        schedule = PulseSchedule(dt=cfg.dt, controls=rows)
        hm = sweep_heatmap(schedule, 0.1, 5, cfg)
        swapped = PulseSchedule(dt=cfg.dt, controls=rows[:, [2, 3, 0, 1, 4]])
        hm2 = sweep_heatmap(swapped, 0.1, 5, cfg)
        assert_allclose(hm.values, hm2.values, atol=1e-12)

    def test_too_few_steps(self):
        schedule, cfg = analytic_entangler_schedule()
        with pytest.raises(ValueError, match="grid points"):
            sweep_heatmap(schedule, 0.1, 1, cfg)


class TestCentralize:
    def test_already_centered_unchanged(self):
        cfg = EnvConfig()
        schedule = PulseSchedule(dt=cfg.dt, controls=np.zeros((cfg.n_max, 5)))
        hm = sweep_heatmap(schedule, 0.1, 11, cfg)
        assert hm.argmax_fidelity() == hm.center_cell()
        result = centralize(schedule, hm, cfg)
        assert np.array_equal(result.schedule.controls, schedule.controls)
        assert result.shift == (0.0, 0.0)

    def test_shifted_schedule_recentered(self):
        # pre-shift the zero schedule by exactly one grid cell of detuning;
        # centralization must undo it and the re-swept argmax must land on
        # the center cell
        cfg = EnvConfig()
        sweep_range, steps = 0.1, 11
        cell = 2 * sweep_range / (steps - 1)
        shifted = detuning_shifted_zero_schedule(cfg, cell)
        hm = sweep_heatmap(shifted, sweep_range, steps, cfg)
        i, j = hm.argmax_fidelity()
        assert (i, j) != hm.center_cell()
        result = centralize(shifted, hm, cfg)
        assert result.shift[1] == pytest.approx(cell)
        assert not result.saturated
        re_swept = sweep_heatmap(result.schedule, sweep_range, steps, cfg)
        assert re_swept.argmax_fidelity() == re_swept.center_cell()
        # fidelity at the new center equals the old maximum (the shift is
        # absorbed exactly, no clamping involved)
        i_new, j_new = re_swept.center_cell()
        assert re_swept.values[i_new, j_new] == pytest.approx(
            hm.values[i, j], abs=1e-12)

    def test_idempotent_at_grid_resolution(self):
        cfg = EnvConfig()
        cell = 0.2 / 10
        shifted = detuning_shifted_zero_schedule(cfg, cell)
        hm = sweep_heatmap(shifted, 0.1, 11, cfg)
        once = centralize(shifted, hm, cfg)
        hm2 = sweep_heatmap(once.schedule, 0.1, 11, cfg)
        twice = centralize(once.schedule, hm2, cfg)
        assert np.array_equal(once.schedule.controls, twice.schedule.controls)

    def test_saturation_reported(self):
        cfg = EnvConfig(total_time=1.0, n_max=10)
        rows = np.zeros((10, 5))
        rows[:, 0] = cfg.omega_max  # already at the bound
        schedule = PulseSchedule(dt=cfg.dt, controls=rows)
        grid = np.array([-0.1, 0.0, 0.1])
        values = np.array([[0., 0., 0.], [0., 0., 0.], [-3., 0., 0.]])
        hm = Heatmap(grid, grid, values)
        result = centralize(schedule, hm, cfg)
        assert result.saturated
        assert np.all(result.schedule.controls[:, 0] <= cfg.omega_max)


class TestRobustArea:
    def test_all_perfect(self):
        grid = np.linspace(-0.1, 0.1, 5)
        hm = Heatmap(grid, grid, np.full((5, 5), -12.0))
        assert robust_area(hm, 0.99) == 1.0

    def test_all_half_fidelity(self):
        grid = np.linspace(-0.1, 0.1, 5)
        hm = Heatmap(grid, grid, np.full((5, 5), math.log10(0.5)))
        assert robust_area(hm, 0.99) == 0.0

    def test_zero_threshold(self):
        grid = np.linspace(-0.1, 0.1, 3)
        hm = Heatmap(grid, grid, np.full((3, 3), math.log10(0.5)))
        assert robust_area(hm, 0.0) == 1.0

    def test_monotone_in_threshold(self):
        rng = np.random.default_rng(4)
        grid = np.linspace(-0.1, 0.1, 9)
        hm = Heatmap(grid, grid, rng.uniform(-6, 0, (9, 9)))
        areas = [robust_area(hm, t) for t in np.linspace(0.5, 0.999999, 50)]
        assert np.all(np.diff(areas) <= 1e-12)


class TestCheatMargin:
    def direct_sum(self, n, n_max, gamma, f_hold, f_final):
        total = 0.0
        for i in range(n - 1, n_max):
            total += gamma**i * (1.0 - math.log10(1.0 - f_hold))
        total += gamma**n_max * (10.0 - math.log10(1.0 - f_final))
        total -= gamma**n * (10.0 - math.log10(1.0 - f_final))
        return total

    def test_index_collapse_at_horizon(self):
        got = cheat_margin(100, 100, 1.0, 0.96, 0.995)
        assert got == pytest.approx(1.0 - math.log10(0.04), abs=1e-12)

    def test_degenerate_discount(self):
        assert cheat_margin(1, 50, 0.0, 0.96, 0.995) == pytest.approx(
            1.0 - math.log10(0.04), abs=1e-12)
        assert cheat_margin(2, 50, 0.0, 0.96, 0.995) == pytest.approx(0.0, abs=1e-12)

    def test_matches_direct_sum(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            n_max = int(rng.integers(2, 200))
            n = int(rng.integers(1, n_max + 1))
            gamma = rng.uniform(0.0, 1.0)
            f_hold = rng.uniform(0.5, 0.99)
            f_final = rng.uniform(0.99, 0.9999)
            assert cheat_margin(n, n_max, gamma, f_hold, f_final) == pytest.approx(
                self.direct_sum(n, n_max, gamma, f_hold, f_final), abs=1e-12)

    def test_positive_for_small_n(self):
        assert cheat_margin(5, 100, 0.99, 0.96, 0.995) > 0

    def test_invalid_n(self):
        with pytest.raises(ValueError, match="n_max"):
            cheat_margin(0, 10, 0.9, 0.9, 0.99)


class TestAudit:
    def test_zero_schedule(self):
        cfg = EnvConfig(hamiltonian_kind="geometric", total_time=17.05,
                        reward_mode="terminal")
        schedule = PulseSchedule(dt=cfg.dt, controls=np.zeros((cfg.n_max, 5)))
        phases = dynamical_phase_audit(schedule, cfg, steps=200)
        for v in phases.values():
            assert v == pytest.approx(0.0, abs=1e-12)

    def test_analytic_schedule_cancels(self):
        cfg = EnvConfig(hamiltonian_kind="geometric", total_time=17.05,
                        reward_mode="terminal")
        t1, t2 = geometric_phase_schedule(cfg)
        omega = cfg.omega_drive
        p = nonadiabatic_params(omega, 0.3187)
        rows = []
        for i in range(cfg.n_max):
            t = i * cfg.dt
            if t1 <= t < t2:
                rows.append([0.0, 0.0, p.rabi, p.detuning, p.coupling])
            else:
                b1, b2 = 0.35, 0.75
                rows.append([
                    omega * math.sin(b1) * math.cos(b1),
                    omega * math.cos(b1) ** 2,
                    omega * math.sin(b2) * math.cos(b2),
                    omega * math.cos(b2) ** 2,
                    0.0,
                ])
        schedule = PulseSchedule(dt=cfg.dt, controls=np.array(rows))
        phases = dynamical_phase_audit(schedule, cfg, steps=1000)
        assert len(phases) == 4
        for v in phases.values():
            assert abs(v) <= 1e-6


class TestCsvRoundtrip:
    def test_pulses(self):
        schedule, cfg = analytic_entangler_schedule()
        text = pulses_to_csv(schedule, {"config_hash": "deadbeef"})
        back, meta = pulses_from_csv(text)
        assert meta["config_hash"] == "deadbeef"
        assert back.dt == schedule.dt
        assert_allclose(back.controls, schedule.controls, rtol=0, atol=0)

    def test_pulses_17_digit_roundtrip_is_exact(self):
        rng = np.random.default_rng(6)
        schedule = PulseSchedule(dt=1 / 3, controls=rng.standard_normal((9, 5)))
        back, _ = pulses_from_csv(pulses_to_csv(schedule))
        assert np.array_equal(back.controls, schedule.controls)

    def test_heatmap(self):
        schedule, cfg = analytic_entangler_schedule()
        hm = sweep_heatmap(schedule, 0.1, 5, cfg)
        text = heatmap_to_csv(hm, {"config_hash": "cafe"})
        back, meta = heatmap_from_csv(text)
        assert meta["config_hash"] == "cafe"
        assert np.array_equal(back.values, hm.values)
        assert back.pulse_hash == hm.pulse_hash

    def test_malformed_rejected(self):
        with pytest.raises(ValueError):
            pulses_from_csv("step,t\n0,0\n")
        with pytest.raises(ValueError):
            heatmap_from_csv("# dt: 1\nbogus\n")
