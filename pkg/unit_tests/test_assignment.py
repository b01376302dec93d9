import unittest

import numpy as np

from data_preprocess.channels import synthesize_channels
from model.assignment import (
    LcrSolution,
    _LiftedSpace,
    assignment_matrix,
    build_assignment_problem,
    eval_T_terms,
    g_tilde,
    g_true,
    lcr_residuals,
    linearize_T34,
    round_assignment,
    solve_lcr_sdp,
)
from model.network import build_aggregates, user_rate_gaps
from unit_tests.test_functions import TestFunctions


class TestAssignment(unittest.TestCase):
    """
    Unit tests for the convexified assignment subproblem and its log-barrier solver.
    """

    def setUp(self):
        self.rng = np.random.default_rng(314)
        self.scenario = TestFunctions.small_scenario(num_ris=3, elements=3, antennas=2, num_users=2, r_assign=2, seed=21)
        self.channels = synthesize_channels(self.scenario)
        self.mu = TestFunctions.random_phases(self.scenario.phase_dim, self.rng)
        self.W = TestFunctions.random_beamformers(2, self.scenario.bf_dim, self.rng)
        self.aggregates = build_aggregates(self.channels, self.scenario, self.mu)
        self.problem = build_assignment_problem(self.aggregates, self.W, self.mu, self.scenario.weights, self.scenario.r_assign)

    def test_gram_matrices_are_hermitian_psd(self):
        for k in range(2):
            for j in range(2):
                with self.subTest(user=k, stream=j):
                    D = self.problem.D[k, j]
                    np.testing.assert_allclose(D, D.conj().T)
                    self.assertGreaterEqual(np.linalg.eigvalsh(D)[0], -1e-9 * max(1.0, np.abs(D).max()))

    def test_g_true_matches_masked_rates(self):
        for u in TestFunctions.enumerate_assignments(3, 2):
            masked = build_aggregates(self.channels.masked(np.repeat(u[:3, None], 2, axis=1)), self.scenario)
            gaps = user_rate_gaps(masked, self.W, self.mu)
            for k in range(2):
                with self.subTest(assignment=u.tolist(), user=k):
                    expected = -self.scenario.weights[k] * gaps[k]
                    self.assertAlmostEqual(g_true(self.problem, np.outer(u, u), k), expected, delta=1e-9 * max(1.0, abs(expected)))

    def test_g_tilde_upper_bounds_g_and_touches(self):
        for k in range(2):
            U_t = self.problem.U_t[k]
            self.assertAlmostEqual(g_tilde(self.problem, U_t, k), g_true(self.problem, U_t, k), places=12)
            for u in TestFunctions.enumerate_assignments(3, 2):
                U = np.outer(u, u)
                with self.subTest(user=k, assignment=u.tolist()):
                    self.assertGreaterEqual(g_tilde(self.problem, U, k) - g_true(self.problem, U, k), -1e-12)

    def test_linearization_gradients(self):
        step = 1e-6
        for k in range(2):
            linearization = linearize_T34(self.problem, k)
            U_t = self.problem.U_t[k]
            E = self.rng.standard_normal((4, 4))
            E = 0.5 * (E + E.T)
            plus = eval_T_terms(self.problem, U_t + step * E, k)
            minus = eval_T_terms(self.problem, U_t - step * E, k)
            numeric3 = (plus[2] - minus[2]) / (2.0 * step)
            numeric4 = (plus[3] - minus[3]) / (2.0 * step)
            analytic3 = float(np.real(np.sum(linearization.grad3 * E.T)))
            analytic4 = float(np.real(np.sum(linearization.grad4 * E.T)))
            with self.subTest(user=k):
                self.assertAlmostEqual(analytic3, numeric3, delta=1e-5 * max(1.0, abs(numeric3)))
                self.assertAlmostEqual(analytic4, numeric4, delta=1e-5 * max(1.0, abs(numeric4)))

    def test_lifted_interior_point_is_strictly_feasible(self):
        for num_ris in range(1, 6):
            for r_assign in range(1, num_ris + 1):
                space = _LiftedSpace(num_ris, r_assign)
                with self.subTest(num_ris=num_ris, r_assign=r_assign):
                    self.assertTrue(space.is_strictly_feasible(space.interior_point()))

    def test_relaxation_lower_bounds_the_binary_optimum(self):
        solution = solve_lcr_sdp(self.problem)
        enumeration = sum(
            min(g_tilde(self.problem, np.outer(u, u), k) for u in TestFunctions.enumerate_assignments(3, 2))
            for k in range(2)
        )
        self.assertLessEqual(solution.objective, enumeration + 1e-6)
        self.assertLessEqual(solution.gap, 1e-7)

    def test_relaxed_solution_is_feasible(self):
        solution = solve_lcr_sdp(self.problem)
        for k in range(2):
            residuals = lcr_residuals(solution.u[k], solution.U[k], 2)
            with self.subTest(user=k):
                self.assertLessEqual(residuals["diagonal"], 1e-12)
                self.assertEqual(residuals["last_entry"], 0.0)
                self.assertLessEqual(residuals["cardinality"], 1e-9)
                self.assertLessEqual(residuals["row_sums"], 1e-9)
                self.assertGreaterEqual(residuals["min_eigenvalue"], -1e-9)

    def test_expansion_at_a_binary_point(self):
        u = TestFunctions.enumerate_assignments(3, 2)[4]
        U_t = np.repeat(np.outer(u, u)[None], 2, axis=0)
        problem = build_assignment_problem(self.aggregates, self.W, self.mu, self.scenario.weights, 2, U_t=U_t)
        for k in range(2):
            with self.subTest(user=k):
                self.assertAlmostEqual(g_tilde(problem, U_t[k], k), g_true(problem, U_t[k], k), places=12)
        self.assertLessEqual(solve_lcr_sdp(problem).objective, sum(g_true(problem, U_t[k], k) for k in range(2)) + 1e-6)

    def test_round_assignment(self):
        binary, column = round_assignment(np.array([0.5, 0.5, 0.2, 1.0]), 1)
        np.testing.assert_array_equal(binary, [1.0, 0.0, 0.0, 1.0])
        np.testing.assert_array_equal(column, [1.0, 0.0, 0.0])
        binary, _ = round_assignment(np.array([0.1, 0.7, 0.6, 1.0]), 2)
        np.testing.assert_array_equal(binary, [0.0, 1.0, 1.0, 1.0])

    def test_assignment_matrix_has_r_assign_ones_per_user(self):
        u = np.array([[0.2, 0.9, 0.4, 1.0], [0.6, 0.1, 0.6, 1.0], [0.3, 0.3, 0.3, 1.0]])
        solution = LcrSolution(u=u, U=np.zeros((3, 4, 4)), objective=0.0, gap=0.0, newton_iters=0)
        matrix = assignment_matrix(solution, 2)
        self.assertEqual(matrix.shape, (3, 3))
        np.testing.assert_array_equal(matrix.sum(axis=0), [2.0, 2.0, 2.0])
        np.testing.assert_array_equal(matrix[:, 2], [1.0, 1.0, 0.0])


if __name__ == "__main__":
    unittest.main()
