import unittest
from dataclasses import replace

import numpy as np

from data_preprocess.channels import synthesize_channels
from model.beamforming import BfSurrogate, bf_surrogate_objective, build_bf_surrogate, kkt_residuals, project_power, solve_ball_qp, solve_bf_qp
from model.errors import BeamformingSolverError
from model.network import bs_power, build_aggregates, wssr
from unit_tests.test_functions import TestFunctions


class TestBeamforming(unittest.TestCase):
    """
    Unit tests for the beamforming surrogate and its ball-constrained QP solver.
    """

    def setUp(self):
        self.rng = np.random.default_rng(7)
        self.scenario = TestFunctions.small_scenario(num_ris=2, elements=3, antennas=2, num_users=2, seed=3)
        self.aggregates = build_aggregates(synthesize_channels(self.scenario), self.scenario)
        self.budgets = self.scenario.power_budget

    def _feasible_beamformers(self) -> np.ndarray:
        W = TestFunctions.random_beamformers(self.scenario.num_users, self.scenario.bf_dim, self.rng, scale=1.0)
        # random radius inside every BS ball
        return project_power(W, self.budgets * self.rng.uniform(0.05, 1.0))

    def test_surrogate_touches_at_expansion_point(self):
        for trial in range(20):
            W_t = self._feasible_beamformers()
            mu_t = TestFunctions.random_phases(self.scenario.phase_dim, self.rng)
            surrogate = build_bf_surrogate(self.aggregates, W_t, mu_t, self.scenario.weights)
            objective, _, _ = wssr(self.scenario, self.aggregates, W_t, mu_t)
            with self.subTest(trial=trial):
                self.assertAlmostEqual(surrogate.constant() - bf_surrogate_objective(surrogate, W_t), objective, delta=1e-9 * max(1.0, abs(objective)))

    def test_surrogate_is_a_lower_bound(self):
        W_t = self._feasible_beamformers()
        mu_t = TestFunctions.random_phases(self.scenario.phase_dim, self.rng)
        surrogate = build_bf_surrogate(self.aggregates, W_t, mu_t, self.scenario.weights)
        constant = surrogate.constant()
        for point in range(100):
            W = self._feasible_beamformers()
            objective, _, _ = wssr(self.scenario, self.aggregates, W, mu_t)
            bound = constant - bf_surrogate_objective(surrogate, W)
            with self.subTest(point=point):
                self.assertGreaterEqual(objective - bound, -1e-9 * max(1.0, abs(objective)), "Surrogate exceeds the WSSR")

    def test_quadratic_form_matches_termwise_objective(self):
        W_t = self._feasible_beamformers()
        mu_t = TestFunctions.random_phases(self.scenario.phase_dim, self.rng)
        surrogate = build_bf_surrogate(self.aggregates, W_t, mu_t, self.scenario.weights)
        Q, b, offset = surrogate.quadratic_form()
        for block in Q:
            self.assertGreaterEqual(np.linalg.eigvalsh(block).min(), -1e-9 * np.abs(block).max(), "Q must be PSD")
        for point in range(10):
            W = self._feasible_beamformers()
            quadratic = float(np.real(np.einsum("kd,kde,ke->", W.conj(), Q, W)) - 2.0 * np.real(np.sum(b.conj() * W))) + offset
            termwise = bf_surrogate_objective(surrogate, W)
            with self.subTest(point=point):
                self.assertAlmostEqual(quadratic, termwise, delta=1e-9 * max(1.0, abs(termwise)))

    def test_project_power(self):
        W = TestFunctions.random_beamformers(2, 4, self.rng, scale=1.0)
        budgets = np.array([0.5, 2.0])
        projected = project_power(W, budgets)
        self.assertTrue(np.all(bs_power(projected, 2) <= budgets * (1.0 + 1e-12)))
        np.testing.assert_allclose(project_power(projected, budgets), projected)
        inside = 1e-3 * W
        np.testing.assert_array_equal(project_power(inside, budgets), inside)

    def test_ball_qp_beats_random_feasible_points(self):
        for trial in range(5):
            Q = np.stack([TestFunctions.random_psd(4, 4, self.rng) + 0.5 * np.eye(4) for _ in range(2)])
            b = 3.0 * (self.rng.standard_normal((2, 4)) + 1j * self.rng.standard_normal((2, 4)))
            budgets = np.array([0.3, 1.0])
            W, info = solve_ball_qp(Q, b, budgets, np.zeros((2, 4), dtype=complex), tol=1e-8, max_iter=20000)
            residuals = kkt_residuals(Q, b, W, budgets, 1e-8)
            with self.subTest(trial=trial):
                self.assertFalse(info["cap_hit"])
                self.assertLessEqual(residuals["stationarity"], 1e-6 * (1.0 + residuals["gradient_norm"]))
                self.assertTrue(np.all(bs_power(W, 2) <= budgets * (1.0 + 1e-8)))
                for _ in range(200):
                    candidate = project_power(self.rng.standard_normal((2, 4)) + 1j * self.rng.standard_normal((2, 4)), budgets * self.rng.uniform(0.0, 1.0))
                    value = float(np.real(np.einsum("kd,kde,ke->", candidate.conj(), Q, candidate)) - 2.0 * np.real(np.sum(b.conj() * candidate)))
                    self.assertLessEqual(info["objective"], value + 1e-9 * max(1.0, abs(value)))

    def test_zero_quadratic_aligns_with_linear_term(self):
        b = np.array([[1.0 + 1.0j, 0.0, 2.0, 0.0]])
        W, _ = solve_ball_qp(np.zeros((1, 4, 4), dtype=complex), b, np.array([1.0, 4.0]), np.zeros((1, 4), dtype=complex))
        np.testing.assert_allclose(bs_power(W, 2), [1.0, 4.0], rtol=1e-12)
        np.testing.assert_allclose(W[0, :2] / np.linalg.norm(W[0, :2]), b[0, :2] / np.linalg.norm(b[0, :2]))

    def test_non_psd_quadratic_raises(self):
        Q = np.array([[[1.0, 0.0], [0.0, -1.0]]], dtype=complex)
        with self.assertRaises(BeamformingSolverError) as context:
            solve_ball_qp(Q, np.zeros((1, 2), dtype=complex), np.array([1.0]), np.zeros((1, 2), dtype=complex))
        self.assertIn("min_eigenvalue", context.exception.diagnostics)

    def test_bf_step_does_not_decrease_wssr(self):
        for trial in range(5):
            W_t = self._feasible_beamformers()
            mu_t = TestFunctions.random_phases(self.scenario.phase_dim, self.rng)
            surrogate = build_bf_surrogate(self.aggregates, W_t, mu_t, self.scenario.weights)
            W, _ = solve_bf_qp(surrogate, self.budgets)
            before, _, _ = wssr(self.scenario, self.aggregates, W_t, mu_t)
            after, _, _ = wssr(self.scenario, self.aggregates, W, mu_t)
            with self.subTest(trial=trial):
                start = bf_surrogate_objective(surrogate, W_t)
                self.assertLessEqual(bf_surrogate_objective(surrogate, W), start + 1e-10 * max(1.0, abs(start)))
                self.assertGreaterEqual(after, before - 1e-9 * max(1.0, abs(before)))
                self.assertTrue(np.all(bs_power(W, self.scenario.num_bs) <= self.budgets * (1.0 + 1e-8)))

    def _scalar_surrogate(self, user_row: float) -> BfSurrogate:
        """
        Single user, single antenna, no Eve: the surrogate is gain*c^2 |w|^2 - 2 Re{c w} with gain 1/2.
        """
        return BfSurrogate(
            alpha_t=np.ones(1, dtype=complex),
            beta_t=np.ones(1),
            chi_t=np.zeros(1),
            eve_leak_t=np.zeros(1),
            user_rows=np.array([[user_row]], dtype=complex),
            eve_rows=np.zeros((1, 1), dtype=complex),
            fixed_W=np.zeros((1, 1), dtype=complex),
            fixed_mu=np.ones(1, dtype=complex),
            weights=np.ones(1),
        )

    def test_scalar_qp_examples(self):
        # c = 2 gives 2(|w|^2 - 2 Re w): minimizer w = 1 inside |w|^2 <= 4
        W, info = solve_bf_qp(self._scalar_surrogate(2.0), np.array([4.0]))
        self.assertAlmostEqual(complex(W[0, 0]), 1.0, places=6)
        self.assertFalse(info["cap_hit"])
        # c = 1/2 gives (|w|^2 - 8 Re w)/8: the ball |w|^2 <= 1 is active at w = 1
        W, info = solve_bf_qp(self._scalar_surrogate(0.5), np.array([1.0]))
        self.assertAlmostEqual(complex(W[0, 0]), 1.0, places=9)
        self.assertGreater(info["residuals"]["multipliers"][0], 0.0)

    def test_surrogate_without_eavesdropper(self):
        zero_eve = replace(self.aggregates, h_eve=np.zeros_like(self.aggregates.h_eve))
        W_t = self._feasible_beamformers()
        surrogate = build_bf_surrogate(zero_eve, W_t, TestFunctions.random_phases(self.scenario.phase_dim, self.rng), self.scenario.weights)
        np.testing.assert_array_equal(surrogate.chi_t, np.zeros(2))
        np.testing.assert_array_equal(surrogate.eve_leak_t, np.zeros(2))
        for k in range(2):
            np.testing.assert_array_equal(surrogate.omega_gram(k), np.zeros((2 * self.scenario.bf_dim, 2 * self.scenario.bf_dim)))

    def test_single_user_has_no_interference(self):
        scenario = TestFunctions.small_scenario(num_ris=2, elements=3, antennas=2, num_users=1, seed=3)
        aggregates = build_aggregates(synthesize_channels(scenario), scenario)
        W_t = TestFunctions.random_beamformers(1, scenario.bf_dim, self.rng)
        mu_t = TestFunctions.random_phases(scenario.phase_dim, self.rng)
        surrogate = build_bf_surrogate(aggregates, W_t, mu_t, scenario.weights)
        np.testing.assert_array_equal(surrogate.beta_t, [1.0])
        np.testing.assert_array_equal(surrogate.eve_leak_t, [0.0])
        expected = np.conj(mu_t) @ aggregates.h_user[0] @ W_t[0]
        self.assertLessEqual(abs(surrogate.alpha_t[0] - expected), 1e-12 * max(1.0, abs(expected)))

    def test_zero_budget_gives_zero_beamformers(self):
        surrogate = build_bf_surrogate(self.aggregates, np.zeros((2, self.scenario.bf_dim), dtype=complex), np.ones(self.scenario.phase_dim, dtype=complex), self.scenario.weights)
        W, _ = solve_bf_qp(surrogate, np.zeros(self.scenario.num_bs))
        self.assertFalse(np.any(W))


if __name__ == "__main__":
    unittest.main()
