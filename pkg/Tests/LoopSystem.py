import math
import unittest

import numpy as np

from LoopRes.main.loop_system import (LoopSystem, build_dynamics_matrix, critical_kappa,
                                      drive_vector, integrate_to_steady, observables_stack,
                                      solve_steady_state, stationarity_residual)
from LoopRes.main.spectra import preset_system, solve_detunings
from LoopRes.main.utils.errors import InvalidParameterError


def random_system(rng: np.random.Generator) -> LoopSystem:
    couplings = {}
    for i in range(1, 4):
        for j in range(i, 4):
            couplings[(i, j)] = rng.uniform(0, 50) * np.exp(1j * rng.uniform(-math.pi, math.pi))

    return LoopSystem.from_couplings(couplings, delta=rng.uniform(-100, 100, size=3))


def transmission(sys: LoopSystem, deltas: np.ndarray) -> np.ndarray:
    return observables_stack(sys.kappa, sys.a_in, solve_detunings(sys, deltas))["T"]


def reflection(sys: LoopSystem, deltas: np.ndarray) -> np.ndarray:
    return observables_stack(sys.kappa, sys.a_in, solve_detunings(sys, deltas))["R"]


class TestLoopSystem(unittest.TestCase):
    def test_critical_coupling_extinction(self):
        sys = LoopSystem(delta=0.0, gamma=1.0)
        self.assertAlmostEqual(sys.kappa, 0.5)
        self.assertLess(solve_steady_state(sys).T, 1e-12)

        far = transmission(sys, np.array([-1000.0, 1000.0]))
        self.assertTrue(np.all(far >= 0.999))

    def test_single_resonator_lorentzian(self):
        sys = LoopSystem(gamma=1.0)
        for delta in (-3.0, -0.5, 0.25, 2.0):
            state = solve_steady_state(sys.with_detuning(delta))
            self.assertAlmostEqual(state.T, delta**2 / (delta**2 + 1), places=12)
            self.assertAlmostEqual(state.R, 0.0, places=14)

    def test_critical_kappa(self):
        self.assertAlmostEqual(critical_kappa(30j, 1.0), math.sqrt(900.25))
        with self.assertRaises(InvalidParameterError):
            critical_kappa(1.0, 0.0)

    def test_chiral_preset_transmission(self):
        sys = preset_system("chiral")
        for delta in (-20.0, 20.0):
            self.assertAlmostEqual(solve_steady_state(sys.with_detuning(delta)).T, 0.82, delta=0.02)

    def test_symmetric_preset_transmission_dips(self):
        sys = preset_system("symmetric")
        for delta in (-20.0, 20.0):
            self.assertLessEqual(solve_steady_state(sys.with_detuning(delta)).T, 0.02)

    def test_linear_solve_matches_time_integration(self):
        rng = np.random.default_rng(20240611)
        for _ in range(100):
            sys = random_system(rng)
            radius = float(np.abs(np.linalg.eigvals(build_dynamics_matrix(sys))).max())

            linear = solve_steady_state(sys)
            integrated = integrate_to_steady(sys, dt=0.5 / radius)
            np.testing.assert_allclose(integrated.amplitudes, linear.amplitudes, rtol=0, atol=1e-8)

    def test_time_integration_default_step(self):
        sys = LoopSystem.from_polar({(1, 1): 3.0, (1, 2): 2.0, (2, 2): 1.0}, {(1, 2): 0.3}, delta=1.5)
        integrated = integrate_to_steady(sys, t_end=100.0)
        np.testing.assert_allclose(integrated.amplitudes, solve_steady_state(sys).amplitudes, atol=1e-8)

    def test_unstable_time_step_rejected(self):
        sys = preset_system("symmetric")
        with self.assertRaises(InvalidParameterError):
            integrate_to_steady(sys, dt=1.0)

    def test_steady_state_is_stationary(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            sys = random_system(rng)
            state = solve_steady_state(sys)
            self.assertLessEqual(
                stationarity_residual(sys, state.amplitudes), 1e-10 * np.linalg.norm(drive_vector(sys))
            )

    def test_power_balance(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            state = solve_steady_state(random_system(rng))
            self.assertGreaterEqual(state.T, 0.0)
            self.assertGreaterEqual(state.R, 0.0)
            self.assertGreaterEqual(state.loss, -1e-12)

    def test_conjugation_symmetry(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            sys = random_system(rng)
            mirrored = LoopSystem(delta=-sys.delta, xi=sys.xi.conj(), gamma=sys.gamma)

            state = solve_steady_state(sys)
            mirror = solve_steady_state(mirrored)
            self.assertAlmostEqual(state.T, mirror.T, places=10)
            self.assertAlmostEqual(state.R, mirror.R, places=10)
            np.testing.assert_allclose(mirror.amplitudes[0::2], state.amplitudes[0::2].conj(), atol=1e-10)
            np.testing.assert_allclose(mirror.amplitudes[1::2], -state.amplitudes[1::2].conj(), atol=1e-10)

    def test_scattering_phase_without_cross_coupling(self):
        base = LoopSystem.from_couplings({(1, 1): 30.0})
        turned = base.with_phase(1, 1, 0.7)
        deltas = np.linspace(-60, 60, 121)
        np.testing.assert_allclose(
            transmission(base, deltas), transmission(turned, deltas), atol=1e-12
        )

    def test_cross_phase_invariance_for_two_cavities(self):
        base = LoopSystem.from_couplings({(1, 1): 30.0, (1, 2): 30.0})
        deltas = np.linspace(-100, 100, 401)

        for phi in (0.3, 1.7, -2.9):
            turned = base.with_phase(1, 2, phi)
            np.testing.assert_allclose(transmission(turned, deltas), transmission(base, deltas), atol=1e-10)
            np.testing.assert_allclose(reflection(turned, deltas), reflection(base, deltas), atol=1e-10)

    def test_loop_without_scattering_ignores_phases(self):
        base = LoopSystem.from_couplings({(1, 2): 30.0, (1, 3): 30.0, (2, 3): 15.0})
        turned = LoopSystem.from_couplings(
            {(1, 2): 30.0 * np.exp(0.7j), (1, 3): 30.0 * np.exp(-1.1j), (2, 3): 15.0 * np.exp(2.3j)}
        )
        deltas = np.linspace(-100, 100, 401)

        np.testing.assert_allclose(transmission(turned, deltas), transmission(base, deltas), atol=1e-10)
        np.testing.assert_allclose(reflection(turned, deltas), reflection(base, deltas), atol=1e-10)

    def test_drive_phase_covariance(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            sys = random_system(rng)
            chi = rng.uniform(-math.pi, math.pi)
            turn = np.exp(1j * chi)

            state = solve_steady_state(sys)
            turned = solve_steady_state(sys.with_drive(turn))
            np.testing.assert_allclose(turned.amplitudes, turn * state.amplitudes, atol=1e-12)
            self.assertAlmostEqual(turned.a_out, turn * state.a_out, places=12)
            self.assertAlmostEqual(turned.b_out, turn * state.b_out, places=12)
            self.assertAlmostEqual(turned.T, state.T, places=12)
            self.assertAlmostEqual(turned.R, state.R, places=12)

    def test_dynamics_matrix_structure(self):
        sys = preset_system("chiral_pair").with_detuning([1.0, -2.0, 3.0])
        matrix = build_dynamics_matrix(sys)

        np.testing.assert_allclose(np.diag(matrix), -(1j * np.repeat(sys.delta, 2) + sys.total_decay() / 2))
        self.assertAlmostEqual(matrix[0, 3], -1j * sys.coupling(1, 2))
        self.assertAlmostEqual(matrix[3, 0], -1j * sys.coupling(1, 2).conjugate())
        self.assertAlmostEqual(np.trace(matrix), -np.sum(1j * np.repeat(sys.delta, 2) + sys.total_decay() / 2))

    def test_drive_vector(self):
        sys = LoopSystem(kappa=2.0, a_in=0.5j)
        np.testing.assert_allclose(drive_vector(sys), [2.0 * 0.5j, 0, 0, 0, 0, 0])

    def test_rejects_asymmetric_xi(self):
        xi = np.zeros((3, 3), dtype=complex)
        xi[0, 1] = 1.0
        with self.assertRaises(InvalidParameterError):
            LoopSystem(xi=xi)

    def test_rejects_bad_parameters(self):
        with self.assertRaises(InvalidParameterError):
            LoopSystem(gamma=[1.0, -1.0, 1.0])

        with self.assertRaises(InvalidParameterError):
            LoopSystem(delta=[1.0, 2.0])

        with self.assertRaises(InvalidParameterError):
            LoopSystem(kappa=-1.0)

        with self.assertRaises(InvalidParameterError):
            LoopSystem.from_couplings({(1, 4): 1.0})

    def test_phase_of_zero_coupling(self):
        with self.assertRaises(InvalidParameterError):
            preset_system("symmetric").with_phase(2, 3, 0.5)

    def test_phase_is_wrapped(self):
        sys = LoopSystem.from_couplings({(1, 2): 2.0}).with_phase(1, 2, 3 * math.pi / 2)
        self.assertAlmostEqual(sys.phase(1, 2), -math.pi / 2)
        self.assertAlmostEqual(sys.phase(2, 1), -math.pi / 2)

    def test_critical_kappa_follows_xi11(self):
        sys = preset_system("symmetric")
        self.assertTrue(sys.is_critical)
        self.assertAlmostEqual(sys.kappa, critical_kappa(30.0, 1.0))

        changed = sys.with_coupling(1, 1, 50.0)
        self.assertAlmostEqual(changed.kappa, critical_kappa(50.0, 1.0))

        pinned = sys.with_kappa(2.0).with_coupling(1, 1, 50.0)
        self.assertFalse(pinned.is_critical)
        self.assertEqual(pinned.kappa, 2.0)

    def test_value_semantics(self):
        first = preset_system("symmetric")
        second = preset_system("symmetric")
        self.assertEqual(first, second)
        self.assertEqual(hash(first), hash(second))
        self.assertNotEqual(first, first.with_detuning(1.0))

        with self.assertRaises(ValueError):
            first.xi[0, 0] = 0.0

    def test_occupancies(self):
        sys = preset_system("weak_loop").with_detuning(-19.5)
        state = solve_steady_state(sys)
        occupancy = state.intracavity_occupancy(sys.kappa, sys.a_in)

        self.assertAlmostEqual(occupancy[0], state.occupancy_a1)
        self.assertAlmostEqual(occupancy[1], state.occupancy_b1)
        self.assertAlmostEqual(state.phi_a, abs(state.phase_a1))

    def test_drive_amplitude_does_not_change_ratios(self):
        sys = preset_system("chiral").with_detuning(5.0)
        state = solve_steady_state(sys)
        scaled = solve_steady_state(sys.with_drive(3.0 - 2.0j))
        self.assertAlmostEqual(state.T, scaled.T, places=12)
        self.assertAlmostEqual(state.R, scaled.R, places=12)


if __name__ == "__main__":
    unittest.main()
