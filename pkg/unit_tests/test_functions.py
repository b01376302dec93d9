from itertools import combinations
from typing import Callable, List

import numpy as np

from data_preprocess.channels import ChannelSet
from data_preprocess.scenario import Scenario, scenario_from_dict


class TestFunctions:
    """
    Class containing independent oracles for the secrecy rate calculations.
    """

    @staticmethod
    def small_scenario(num_ris: int = 2, elements: int = 3, antennas: int = 2, num_users: int = 2, r_assign: int = 1, seed: int = 0, **overrides) -> Scenario:
        """
        A compact two-BS layout that keeps the solvers fast.
        Args:
            num_ris (int): RISs placed on the line y=30 m.
            elements (int): Elements per RIS.
            antennas (int): Antennas per BS.
            num_users (int): Users placed on the line y=35 m.
            r_assign (int): Maximum RISs per user.
            seed (int): Scenario seed.
            overrides: Extra scenario keys.
        Returns:
            Scenario: The validated scenario.
        """
        config = {
            "antennas_per_bs": antennas,
            "elements_per_ris": elements,
            "bs_positions": [[0, 0, 4], [40, 0, 4]],
            "ris_positions": [[10 + 20 * r, 30, 8] for r in range(num_ris)],
            "user_positions": [[15 + 5 * k, 35, 1.5] for k in range(num_users)],
            "eve_position": [20, 25, 1.5],
            "power_budget_dbm": 0.0,
            "noise_user_dbm": -80.0,
            "noise_eve_dbm": -80.0,
            "weights": 1.0,
            "reference_path_loss_db": -30.0,
            "r_assign": r_assign,
            "rng_seed": seed,
        }
        config.update(overrides)
        return scenario_from_dict(config)

    @staticmethod
    def random_phases(dim: int, rng: np.random.Generator) -> np.ndarray:
        """
        Random stacked phase vector of length `dim` whose last entry is one.
        """
        mu = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, dim))
        mu[-1] = 1.0
        return mu

    @staticmethod
    def random_beamformers(num_users: int, dim: int, rng: np.random.Generator, scale: float = 1e-2) -> np.ndarray:
        return scale * (rng.standard_normal((num_users, dim)) + 1j * rng.standard_normal((num_users, dim)))

    @staticmethod
    def direct_amplitude(channels: ChannelSet, scenario: Scenario, mu: np.ndarray, w: np.ndarray, k: int, eve: bool = False) -> complex:
        """
        Received amplitude of beamformer `w` at user k (or at Eve for stream k) by the explicit double sum
        over BSs and RISs, over the noise standard deviation.
        Args:
            channels (ChannelSet): Raw channels.
            scenario (Scenario): Scenario of the channels.
            mu (np.ndarray): Stacked phases, last entry one.
            w (np.ndarray): (M*B,) stacked beamformer.
            k (int): User index.
            eve (bool): Evaluate at Eve instead of user k.
        Returns:
            complex: The normalized amplitude.
        """
        M, N = scenario.antennas_per_bs, scenario.elements_per_ris
        total = 0.0 + 0.0j
        for b in range(scenario.num_bs):
            w_b = w[b * M:(b + 1) * M]
            direct = channels.H_direct_eve[b] if eve else channels.H_direct_user[b, k]
            total += np.vdot(direct, w_b)
            for r in range(scenario.num_ris):
                theta = mu[r * N:(r + 1) * N]
                reflect = channels.F_eve[r, k] if eve else channels.F_user[r, k]
                total += np.vdot(reflect, np.conj(theta) * (channels.G[b, r] @ w_b))
        noise = scenario.noise_eve if eve else scenario.noise_user[k]
        return total / np.sqrt(noise)

    @staticmethod
    def direct_sinr(channels: ChannelSet, scenario: Scenario, mu: np.ndarray, W: np.ndarray, k: int, eve: bool = False) -> float:
        amplitudes = [TestFunctions.direct_amplitude(channels, scenario, mu, W[j], k, eve) for j in range(scenario.num_users)]
        power = np.abs(np.array(amplitudes)) ** 2
        return float(power[k] / (power.sum() - power[k] + 1.0))

    @staticmethod
    def direct_wssr(channels: ChannelSet, scenario: Scenario, mu: np.ndarray, W: np.ndarray) -> float:
        """
        Unclamped weighted secrecy rate sum from the explicit double sums.
        """
        total = 0.0
        for k in range(scenario.num_users):
            gap = np.log(1.0 + TestFunctions.direct_sinr(channels, scenario, mu, W, k)) - np.log(1.0 + TestFunctions.direct_sinr(channels, scenario, mu, W, k, eve=True))
            total += scenario.weights[k] * gap
        return float(total)

    @staticmethod
    def enumerate_assignments(num_ris: int, r_assign: int) -> List[np.ndarray]:
        """
        Every lifted binary vector (u_1..u_R, 1) with at most `r_assign` selected RISs.
        """
        vectors = []
        for count in range(r_assign + 1):
            for chosen in combinations(range(num_ris), count):
                u = np.zeros(num_ris + 1)
                u[list(chosen)] = 1.0
                u[-1] = 1.0
                vectors.append(u)
        return vectors

    @staticmethod
    def random_unit_modulus(dim: int, count: int, rng: np.random.Generator) -> np.ndarray:
        """
        `count` random unit-modulus vectors as rows, last entry one.
        """
        samples = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, (count, dim)))
        samples[:, -1] = 1.0
        return samples

    @staticmethod
    def random_psd(dim: int, rank: int, rng: np.random.Generator) -> np.ndarray:
        factor = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
        return factor @ factor.conj().T

    @staticmethod
    def finite_difference_gradient(function: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-6) -> np.ndarray:
        """
        Central differences of a real function of a real vector.
        """
        gradient = np.zeros_like(x, dtype=float)
        for i in range(x.size):
            shift = np.zeros_like(x, dtype=float)
            shift[i] = step
            gradient[i] = (function(x + shift) - function(x - shift)) / (2.0 * step)
        return gradient
