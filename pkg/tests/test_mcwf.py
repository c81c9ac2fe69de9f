import math

import numpy as np
import pytest

from rydchi.basis import MATRIX_UNIT, OperatorBasis
from rydchi.errors import DimensionCapError
from rydchi.linalg import expm_hermitian
from rydchi.mcwf import (EnsembleResult, HamiltonianSegment, InstantUnitary,
                         JumpOperator, PulseSchedule, TrajectoryConfig,
                         evolve_trajectory, extract_chi, jackknife_sigma,
                         no_jump_estimate, run_ensemble, trajectory_seed)
from rydchi.process import chi_from_kraus, identity_chi, trace_distance

from oracles import master_propagate, random_hermitian

OMEGA = 2 * np.pi * 1e6
GAMMA = 2 * np.pi * 0.1e6
T_HOLD = 5e-6

SX = np.array([[0, 1], [1, 0]], dtype=complex)
DECAY = np.sqrt(GAMMA) * np.array([[0, 1], [0, 0]], dtype=complex)
B1 = OperatorBasis((2,), MATRIX_UNIT)

KET_G = np.array([1, 0], dtype=complex)
KET_E = np.array([0, 1], dtype=complex)


def drive_schedule(duration=T_HOLD, omega=OMEGA, dim=2):
    h = np.zeros((dim, dim), dtype=complex)
    h[0, 1] = h[1, 0] = 0.5 * omega
    return PulseSchedule((HamiltonianSegment(h, duration, "drive"),), (dim,))


def hold_schedule(duration=T_HOLD, dim=2):
    return PulseSchedule(
        (HamiltonianSegment(np.zeros((dim, dim)), duration, "hold"),), (dim,))


class TestTypes:
    def test_segment_requires_hermitian(self):
        with pytest.raises(ValueError):
            HamiltonianSegment(np.array([[0, 1], [0, 0]], dtype=complex), 1.0)

    def test_segment_requires_positive_duration(self):
        with pytest.raises(ValueError):
            HamiltonianSegment(np.zeros((2, 2)), 0.0)

    def test_instant_unitary_checked(self):
        with pytest.raises(ValueError):
            InstantUnitary(np.array([[1, 0], [0, 2]], dtype=complex))

    def test_schedule_dimension_checked(self):
        with pytest.raises(ValueError):
            PulseSchedule((HamiltonianSegment(np.zeros((2, 2)), 1.0),), (3,))

    def test_config_bounds(self):
        with pytest.raises(ValueError):
            TrajectoryConfig(n_traj=0)
        with pytest.raises(ValueError):
            TrajectoryConfig(steps_per_min_pulse=5)


class TestTrajectorySeeding:
    def test_matches_documented_rule(self):
        # splitmix64 of the index, xored onto the base seed
        def splitmix64(x):
            mask = (1 << 64) - 1
            x = (x + 0x9E3779B97F4A7C15) & mask
            x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & mask
            x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & mask
            return (x ^ (x >> 31)) & mask

        for base, idx in ((0, 0), (12345, 7), (2 ** 63, 999)):
            assert trajectory_seed(base, idx) == base ^ splitmix64(idx)

    def test_seeds_distinct(self):
        seeds = {trajectory_seed(42, i) for i in range(1000)}
        assert len(seeds) == 1000


class TestEvolveTrajectory:
    def test_closed_system_matches_exact_exponential(self):
        rng = np.random.default_rng(0)
        h = random_hermitian(rng, 4, scale=1.0)
        psi0 = rng.normal(size=4) + 1j * rng.normal(size=4)
        psi0 /= np.linalg.norm(psi0)
        sched = PulseSchedule((HamiltonianSegment(h, 2.0, "h"),), (4,))
        res = evolve_trajectory(sched, [], psi0, seed=3)
        exact = expm_hermitian(h, 2.0) @ psi0
        assert res.jumps == ()
        assert np.abs(res.state - exact).max() < 1e-8

    def test_decay_jump_fraction_follows_exponential_law(self):
        n = 2000
        sched = hold_schedule()
        jop = JumpOperator(DECAY, "decay e->g")
        jumped = 0
        for i in range(n):
            res = evolve_trajectory(sched, [jop], KET_E, trajectory_seed(5, i))
            jumped += bool(res.jumps)
        p_expect = 1 - math.exp(-GAMMA * T_HOLD)
        se = math.sqrt(p_expect * (1 - p_expect) / n)
        assert abs(jumped / n - p_expect) < 3 * se

    def test_dephasing_jumps_trivial_on_r_free_state(self):
        # sqrt(gamma)(1 - 2|r><r|) jumps at the full rate but acts as the
        # identity (up to global phase) on states without |r> population.
        gamma_d = 2 * np.pi * 50e3
        l = np.eye(3, dtype=complex)
        l[2, 2] = -1.0
        jop = JumpOperator(np.sqrt(gamma_d) * l, "dephasing")
        psi0 = np.array([1, 1, 0], dtype=complex) / np.sqrt(2)
        duration = 10e-6
        n = 400
        jumped = 0
        for i in range(n):
            res = evolve_trajectory(hold_schedule(duration, dim=3), [jop],
                                    psi0, trajectory_seed(6, i))
            jumped += bool(res.jumps)
            assert abs(abs(np.vdot(psi0, res.state)) - 1.0) < 1e-8
        p_expect = 1 - math.exp(-gamma_d * duration)
        se = math.sqrt(p_expect * (1 - p_expect) / n)
        assert abs(jumped / n - p_expect) < 3 * se

    def test_jump_rate_matches_expectation_value(self):
        # on a superposition input the jump probability is one minus the
        # norm of the no-jump state, (1 - exp(-gamma t))/2; its short-time
        # expansion is delta_t * <L^dag L> per step
        duration = 1e-6
        psi0 = np.array([1, 1], dtype=complex) / np.sqrt(2)
        jop = JumpOperator(DECAY, "decay")
        n = 2000
        jumped = 0
        for i in range(n):
            res = evolve_trajectory(hold_schedule(duration), [jop], psi0,
                                    trajectory_seed(8, i))
            jumped += bool(res.jumps)
        p_expect = 0.5 * (1 - math.exp(-GAMMA * duration))
        se = math.sqrt(p_expect * (1 - p_expect) / n)
        assert abs(jumped / n - p_expect) < 3 * se

    def test_requires_normalized_state(self):
        with pytest.raises(ValueError):
            evolve_trajectory(hold_schedule(), [], 2.0 * KET_G, 0)


class TestRunEnsemble:
    def test_closed_system_average_is_pure(self):
        cfg = TrajectoryConfig(n_traj=10, base_seed=1)
        ens = run_ensemble(drive_schedule(), [], KET_G, cfg)
        assert ens.no_jump_fraction == 1.0
        assert ens.jump_counts == {}
        w = np.linalg.eigvalsh(ens.rho_avg)
        assert w[-1] == pytest.approx(1.0, abs=1e-10)

    def test_driven_lossy_atom_matches_liouvillian_oracle(self):
        cfg = TrajectoryConfig(n_traj=1000, base_seed=2)
        jop = JumpOperator(DECAY, "decay")
        ens = run_ensemble(drive_schedule(), [jop], KET_G, cfg)
        h = 0.5 * OMEGA * SX
        rho_exact = master_propagate(h, [DECAY], np.outer(KET_G, KET_G), T_HOLD)
        # standard error of the excited population from trajectory variance
        pop = ens.rho_avg[1, 1].real
        pop_exact = rho_exact[1, 1].real
        se = math.sqrt(pop * (1 - pop) / cfg.n_traj)
        assert abs(pop - pop_exact) < 3 * se
        assert abs(ens.rho_avg.trace() - 1.0) < 1e-10

    def test_three_level_system_matches_liouvillian_oracle(self):
        # driven three-level atom with decay and Rydberg-style dephasing
        gamma_r = 2 * np.pi * 30e3
        gamma_d = 2 * np.pi * 20e3
        omega = 2 * np.pi * 0.8e6
        h = np.zeros((3, 3), dtype=complex)
        h[0, 2] = h[2, 0] = 0.5 * omega
        l_decay = np.zeros((3, 3), dtype=complex)
        l_decay[1, 2] = math.sqrt(gamma_r)
        l_deph = math.sqrt(gamma_d) * np.diag([1.0, 1.0, -1.0]).astype(complex)
        jumps = [JumpOperator(l_decay, "decay"), JumpOperator(l_deph, "deph")]
        duration = 4e-6
        sched = PulseSchedule((HamiltonianSegment(h, duration, "drive"),), (3,))
        psi0 = np.array([1, 0, 0], dtype=complex)
        cfg = TrajectoryConfig(n_traj=800, base_seed=17)
        ens = run_ensemble(sched, jumps, psi0, cfg)
        rho_exact = master_propagate(h, [l_decay, l_deph],
                                     np.diag([1.0, 0, 0]).astype(complex),
                                     duration)
        for level in range(3):
            pop = ens.rho_avg[level, level].real
            exact = rho_exact[level, level].real
            se = max(math.sqrt(max(pop * (1 - pop), 1e-6) / cfg.n_traj), 1e-4)
            assert abs(pop - exact) < 3 * se

    def test_doubling_trajectories_converges_within_error(self):
        # the estimate moves by less than a few standard errors when the
        # ensemble doubles at the same seed family
        cfg_a = TrajectoryConfig(n_traj=150, base_seed=19)
        cfg_b = TrajectoryConfig(n_traj=300, base_seed=19)
        jop = JumpOperator(DECAY, "decay")
        ens_a = run_ensemble(drive_schedule(), [jop], KET_G, cfg_a)
        ens_b = run_ensemble(drive_schedule(), [jop], KET_G, cfg_b)
        stat = lambda rho: rho[1, 1].real  # noqa: E731
        sigma = math.hypot(jackknife_sigma(ens_a, stat),
                           jackknife_sigma(ens_b, stat))
        assert abs(stat(ens_a.rho_avg) - stat(ens_b.rho_avg)) < 3 * sigma

    def test_decay_only_no_jump_fraction(self):
        cfg = TrajectoryConfig(n_traj=2000, base_seed=3)
        ens = run_ensemble(hold_schedule(), [JumpOperator(DECAY, "decay")],
                           KET_E, cfg)
        p_expect = math.exp(-GAMMA * T_HOLD)
        se = math.sqrt(p_expect * (1 - p_expect) / cfg.n_traj)
        assert abs(ens.no_jump_fraction - p_expect) < 3 * se
        assert set(ens.jump_counts) == {"decay"}

    def test_bit_reproducible(self):
        cfg = TrajectoryConfig(n_traj=64, base_seed=9)
        jop = JumpOperator(DECAY, "decay")
        a = run_ensemble(drive_schedule(), [jop], KET_E, cfg)
        b = run_ensemble(drive_schedule(), [jop], KET_E, cfg)
        assert np.array_equal(a.rho_avg, b.rho_avg)
        assert a.jump_counts == b.jump_counts
        assert a.no_jump_fraction == b.no_jump_fraction


class TestExtractChi:
    def test_identity_schedule(self):
        chi = extract_chi(PulseSchedule((), (2,)), [], B1,
                          TrajectoryConfig(n_traj=1, base_seed=0))
        assert trace_distance(chi, identity_chi(B1)) < 1e-10

    def test_closed_hadamard(self):
        had = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
        sched = PulseSchedule(
            (InstantUnitary(had, "H"),
             HamiltonianSegment(np.zeros((2, 2)), 1e-7, "idle")), (2,))
        chi = extract_chi(sched, [], B1, TrajectoryConfig(n_traj=1, base_seed=0))
        assert trace_distance(chi, chi_from_kraus([had], B1)) < 1e-8

    def test_decay_gives_amplitude_damping(self):
        cfg = TrajectoryConfig(n_traj=4000, base_seed=4)
        chi = extract_chi(hold_schedule(), [JumpOperator(DECAY, "decay")],
                          B1, cfg)
        geff = 1 - math.exp(-GAMMA * T_HOLD)
        k0 = np.diag([1, math.sqrt(1 - geff)]).astype(complex)
        k1 = np.zeros((2, 2), dtype=complex)
        k1[0, 1] = math.sqrt(geff)
        oracle = chi_from_kraus([k0, k1], B1)
        # statistical agreement at a few standard errors of a 4000-shot run
        assert trace_distance(chi, oracle) < 0.05
        chi.validate(statistical=True)

    def test_dimension_cap(self):
        sched = hold_schedule(dim=2)
        with pytest.raises(DimensionCapError):
            extract_chi(sched, [], B1, TrajectoryConfig(n_traj=1), max_dim=2)

    def test_qubit_input_matches_projected_full(self):
        # on a three-level atom the qubit-entangled input reproduces the
        # qubit-subspace restriction of the full extraction exactly for a
        # deterministic channel
        from rydchi.process import project_to_qubit_subspace

        omega = 2 * np.pi * 2e6
        h = np.zeros((3, 3), dtype=complex)
        h[1, 2] = h[2, 1] = 0.5 * omega  # leaks |1> toward |r>
        sched = PulseSchedule(
            (HamiltonianSegment(h, 0.3 * np.pi / omega, "leak"),), (3,))
        cfg = TrajectoryConfig(n_traj=1, base_seed=0)
        basis3 = OperatorBasis((3,), MATRIX_UNIT)
        full = extract_chi(sched, [], basis3, cfg)
        restricted = extract_chi(sched, [], B1, cfg, input_subspace="qubit")
        assert trace_distance(project_to_qubit_subspace(full), restricted) < 1e-10
        assert restricted.trace < 1.0  # coherent leakage shows as trace loss

    def test_register_mismatch_rejected(self):
        with pytest.raises(ValueError):
            extract_chi(hold_schedule(dim=3), [], B1, TrajectoryConfig(n_traj=1))


class TestNoJumpEstimate:
    def test_closed_system_exact(self):
        # the 5 us drive spans ten Rabi half-periods, so resolve it finely;
        # the only residual is the integrator's own attenuation
        est, bound = no_jump_estimate(drive_schedule(), [], B1,
                                      steps_per_min_pulse=2000)
        assert bound == pytest.approx(0.0, abs=1e-8)
        oracle = chi_from_kraus([expm_hermitian(0.5 * OMEGA * SX, T_HOLD)], B1)
        assert trace_distance(est.normalized(), oracle) < 1e-8

    def test_decay_bound_matches_survival_weight(self):
        # gamma*t = 0.01; the decaying level carries half the Choi weight,
        # so p_nj = (1 + exp(-gamma t))/2
        duration = 0.01 / GAMMA
        est, bound = no_jump_estimate(hold_schedule(duration),
                                      [JumpOperator(DECAY, "decay")], B1)
        expected = 0.5 * (1 - math.exp(-GAMMA * duration))
        assert bound == pytest.approx(expected, abs=1e-8)
        assert est.trace == pytest.approx(1 - expected, abs=1e-8)

    def test_bound_holds_against_exact_master_equation(self):
        from oracles import master_choi
        from rydchi.process import from_choi

        sched = drive_schedule()
        jop = JumpOperator(DECAY, "decay")
        est, bound = no_jump_estimate(sched, [jop], B1)
        chi_exact = from_choi(master_choi(sched, [jop], steps_per_segment=800), B1)
        assert trace_distance(est.normalized(), chi_exact) <= bound


class TestJackknife:
    def test_sigma_scale_on_synthetic_blocks(self):
        rng = np.random.default_rng(21)
        cfg = TrajectoryConfig(n_traj=400, base_seed=5)
        ens = run_ensemble(drive_schedule(), [JumpOperator(DECAY, "decay")],
                           KET_G, cfg)
        sigma = jackknife_sigma(ens, lambda rho: rho[1, 1].real)
        pop = ens.rho_avg[1, 1].real
        binomial = math.sqrt(pop * (1 - pop) / cfg.n_traj)
        assert 0.2 * binomial < sigma < 5 * binomial

    def test_single_block_returns_zero(self):
        ens = EnsembleResult(np.eye(2) / 2, {}, 1.0, 1, 0,
                             block_sums=np.eye(2)[None, :, :],
                             block_counts=np.array([1]))
        assert jackknife_sigma(ens, lambda rho: 1.0) == 0.0
