import unittest

import numpy as np

from data_preprocess.channels import make_generator, path_loss, rayleigh_channel, rician_channel, steering_vector, synthesize_channels
from model.errors import ScenarioError
from unit_tests.test_functions import TestFunctions


class TestChannels(unittest.TestCase):
    """
    Unit tests for the channel synthesis.
    """

    def setUp(self):
        self.scenario = TestFunctions.small_scenario(num_ris=2, elements=4, antennas=3, num_users=2, seed=11)

    def test_shapes(self):
        channels = synthesize_channels(self.scenario)
        expected = {
            "H_direct_user": (2, 2, 3),
            "H_direct_eve": (2, 3),
            "G": (2, 2, 4, 3),
            "F_user": (2, 2, 4),
            "F_eve": (2, 2, 4),
        }
        for name, shape in expected.items():
            with self.subTest(array=name):
                self.assertEqual(getattr(channels, name).shape, shape, f"{name} has the wrong shape")
        self.assertTrue(channels.is_finite())
        self.assertEqual(channels.drawn_reflect_links, 8)

    def test_same_seed_same_channels(self):
        first, second = synthesize_channels(self.scenario), synthesize_channels(self.scenario)
        np.testing.assert_array_equal(first.G, second.G)
        np.testing.assert_array_equal(first.F_user, second.F_user)
        other = synthesize_channels(self.scenario, seed=12)
        self.assertFalse(np.allclose(first.H_direct_user, other.H_direct_user))

    def test_blocks_redraw_small_scale_fading(self):
        block0 = synthesize_channels(self.scenario, block=0)
        block1 = synthesize_channels(self.scenario, block=1)
        self.assertFalse(np.allclose(block0.F_user, block1.F_user))

    def test_reflect_mask_skips_unselected_links(self):
        full = synthesize_channels(self.scenario)
        mask = np.array([[True, False], [False, False]])
        partial = synthesize_channels(self.scenario, reflect_mask=mask)
        self.assertEqual(partial.drawn_reflect_links, 2)
        np.testing.assert_array_equal(partial.F_user[0, 0], full.F_user[0, 0])
        np.testing.assert_array_equal(partial.F_eve[0, 0], full.F_eve[0, 0])
        np.testing.assert_array_equal(partial.G[:, 0], full.G[:, 0])
        for r, k in [(0, 1), (1, 0), (1, 1)]:
            with self.subTest(ris=r, user=k):
                self.assertFalse(np.any(partial.F_user[r, k]), "Unselected RIS-user link was drawn")
                self.assertFalse(np.any(partial.F_eve[r, k]), "Unselected RIS-Eve link was drawn")
        self.assertFalse(np.any(partial.G[:, 1]), "BS-RIS links of an idle RIS were drawn")
        np.testing.assert_array_equal(partial.H_direct_user, full.H_direct_user)

    def test_masked_matches_reflect_mask(self):
        mask = np.array([[1.0, 0.0], [1.0, 1.0]])
        np.testing.assert_array_equal(
            synthesize_channels(self.scenario).masked(mask).F_user,
            synthesize_channels(self.scenario, reflect_mask=mask.astype(bool)).F_user,
        )

    def test_eve_reflect_channel_shared_across_streams(self):
        channels = synthesize_channels(self.scenario)
        np.testing.assert_array_equal(channels.F_eve[0, 0], channels.F_eve[0, 1])
        independent = synthesize_channels(TestFunctions.small_scenario(num_ris=2, elements=4, antennas=3, seed=11, independent_eve_reflect=True))
        self.assertFalse(np.allclose(independent.F_eve[0, 0], independent.F_eve[0, 1]))

    def test_path_loss(self):
        self.assertAlmostEqual(path_loss(10.0, 2.0, 1e-3), 1e-5, places=18)
        self.assertAlmostEqual(path_loss(1.0, 3.5, 1e-3), 1e-3, places=15)
        gains = [path_loss(distance, 2.2, 1e-3) for distance in np.linspace(0.5, 500.0, 200)]
        self.assertTrue(np.all(np.diff(gains) < 0.0), "Path loss gain must fall with distance")
        for distance, reference in [(0.0, 1.0), (-1.0, 1.0), (5.0, 0.0)]:
            with self.subTest(distance=distance, reference=reference):
                with self.assertRaises(ScenarioError):
                    path_loss(distance, 2.0, 1e-3, reference)

    def test_rayleigh_unit_variance(self):
        draw = rayleigh_channel(200, 100, make_generator(3, 0))
        self.assertAlmostEqual(float(np.mean(np.abs(draw) ** 2)), 1.0, delta=0.05)
        self.assertAlmostEqual(abs(complex(np.mean(draw))), 0.0, delta=0.03)

    def test_rician_limits(self):
        los = rician_channel(4, 3, np.inf, 0.3, -0.7, make_generator(0, 1))
        np.testing.assert_allclose(np.abs(los), np.ones((4, 3)), atol=1e-12)
        self.assertEqual(np.linalg.matrix_rank(los), 1)
        scattered = rician_channel(4, 3, 0.0, 0.3, -0.7, make_generator(0, 1))
        np.testing.assert_allclose(scattered, rayleigh_channel(4, 3, make_generator(0, 1)), atol=1e-15)
        with self.assertRaises(ScenarioError):
            rician_channel(4, 3, -1.0, 0.0, 0.0, make_generator(0, 1))

    def test_rician_power(self):
        draws = np.stack([rician_channel(2, 2, 3.0, 0.1, 0.2, make_generator(5, i)) for i in range(3000)])
        self.assertAlmostEqual(float(np.mean(np.abs(draws) ** 2)), 1.0, delta=0.05)

    def test_steering_vector(self):
        vector = steering_vector(0.4, 6)
        np.testing.assert_allclose(np.abs(vector), np.ones(6), atol=1e-14)
        self.assertEqual(vector[0], 1.0)
        np.testing.assert_allclose(steering_vector(np.pi / 2.0, 2, 0.5), [1.0, -1.0], atol=1e-15)
        np.testing.assert_allclose(steering_vector(0.0, 4), np.ones(4), atol=0.0)
        np.testing.assert_allclose(steering_vector(1.1, 1), [1.0], atol=0.0)

    def test_coincident_endpoints(self):
        scenario = TestFunctions.small_scenario(eve_position=[0, 0, 4])
        with self.assertRaises(ScenarioError):
            synthesize_channels(scenario)


if __name__ == "__main__":
    unittest.main()
