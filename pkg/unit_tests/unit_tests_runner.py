import unittest

from unit_tests.test_acceptance import TestAcceptance
from unit_tests.test_assignment import TestAssignment
from unit_tests.test_beamforming import TestBeamforming
from unit_tests.test_channels import TestChannels
from unit_tests.test_network import TestNetwork
from unit_tests.test_output_api import TestOutputApi
from unit_tests.test_phase_shift import TestPhaseShift
from unit_tests.test_runner import TestAlternatingOptimization
from unit_tests.test_scenario import TestScenario

TEST_CASES = [
    TestScenario,
    TestChannels,
    TestNetwork,
    TestBeamforming,
    TestPhaseShift,
    TestAssignment,
    TestAlternatingOptimization,
    TestOutputApi,
    TestAcceptance,
]


def build_suite() -> unittest.TestSuite:
    """
    Collect every test case, bottom-up from the scenario layer to the drivers.
    The acceptance experiments skip themselves unless RIS_ACCEPTANCE=1.
    """
    loader = unittest.TestLoader()
    return unittest.TestSuite(loader.loadTestsFromTestCase(test_case) for test_case in TEST_CASES)


if __name__ == "__main__":
    unittest.TextTestRunner(verbosity=2).run(build_suite())
