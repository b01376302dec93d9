import json
import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np

from model.errors import ScenarioError

logger = logging.getLogger(__name__)

# Link classes: BS-user, BS-Eve, BS-RIS, RIS-user, RIS-Eve
LINK_CLASSES = ("bu", "be", "br", "ru", "re")
# Height used for users/Eve/RISs placed by the sweep layouts (meters)
USER_HEIGHT = 1.5
RIS_HEIGHT = 8.0


def dbm_to_watts(value_dbm):
    """
    Convert a power in dBm to watts.
    """
    return 10.0 ** ((np.asarray(value_dbm, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(value_watts):
    """
    Convert a power in watts to dBm.
    """
    return 10.0 * np.log10(np.asarray(value_watts, dtype=float)) + 30.0


def db_to_linear(value_db):
    """
    Convert a gain in dB to a linear power ratio.
    """
    return 10.0 ** (np.asarray(value_db, dtype=float) / 10.0)


@dataclass(frozen=True)
class Scenario:
    """
    Geometry, radio parameters, weights and budgets of one RIS-aided cell-free network.
    All powers are stored in watts and all gains are linear.
    Args:
        antennas_per_bs (int): Number of antennas M at every BS.
        elements_per_ris (int): Number of reflecting elements N at every RIS.
        bs_positions (np.ndarray): (B, 3) BS coordinates in meters.
        ris_positions (np.ndarray): (R, 3) RIS coordinates in meters.
        user_positions (np.ndarray): (K, 3) user coordinates in meters.
        eve_position (np.ndarray): (3,) Eve coordinates in meters.
        power_budget (np.ndarray): (B,) maximum transmit power per BS, watts.
        noise_user (np.ndarray): (K,) noise power at every user, watts.
        noise_eve (float): Noise power at Eve, watts.
        weights (np.ndarray): (K,) secrecy rate weights in [0, 1].
        pathloss_exponents (dict): Exponent per link class (bu, be, br, ru, re).
        rician_factors (dict): Rician factor per link class (bu, be, br, ru, re).
        reference_path_loss (float): Linear path loss L0 at the reference distance.
        reference_distance (float): Reference distance d0, meters.
        antenna_spacing_over_wavelength (float): ULA spacing in wavelengths.
        r_assign (int): Maximum number of RISs serving one user.
        phase_bits (int): 0 for continuous phases, otherwise the phase resolution in bits.
        rng_seed (int): Seed of every random draw made for this scenario.
        independent_eve_reflect (bool): Draw the RIS-Eve channel independently per user.
    """
    antennas_per_bs: int
    elements_per_ris: int
    bs_positions: np.ndarray
    ris_positions: np.ndarray
    user_positions: np.ndarray
    eve_position: np.ndarray
    power_budget: np.ndarray
    noise_user: np.ndarray
    noise_eve: float
    weights: np.ndarray
    pathloss_exponents: dict = field(default_factory=lambda: {"bu": 3.5, "be": 3.5, "br": 2.0, "ru": 2.5, "re": 2.5})
    rician_factors: dict = field(default_factory=lambda: {"bu": 0.0, "be": 0.0, "br": 3.0, "ru": 3.0, "re": 3.0})
    reference_path_loss: float = 1e-3
    reference_distance: float = 1.0
    antenna_spacing_over_wavelength: float = 0.5
    r_assign: int = 1
    phase_bits: int = 0
    rng_seed: int = 0
    independent_eve_reflect: bool = False

    @property
    def num_bs(self) -> int:
        return int(self.bs_positions.shape[0])

    @property
    def num_ris(self) -> int:
        return int(self.ris_positions.shape[0])

    @property
    def num_users(self) -> int:
        return int(self.user_positions.shape[0])

    @property
    def phase_dim(self) -> int:
        """
        Length N*R+1 of the stacked phase vector mu.
        """
        return self.elements_per_ris * self.num_ris + 1

    @property
    def bf_dim(self) -> int:
        """
        Length M*B of one user's stacked beamformer.
        """
        return self.antennas_per_bs * self.num_bs

    def validate(self) -> "Scenario":
        """
        Check the scenario invariants and return the scenario itself.
        Raises:
            ScenarioError: If any count, shape or radio parameter is inconsistent.
        """
        if self.antennas_per_bs < 0 or self.elements_per_ris < 0:
            raise ScenarioError("Antenna and element counts must be non-negative.")
        if self.num_users < 1:
            raise ScenarioError("At least one user is required.")
        for name, positions in (("bs_positions", self.bs_positions), ("ris_positions", self.ris_positions), ("user_positions", self.user_positions)):
            if positions.ndim != 2 or positions.shape[1] != 3:
                raise ScenarioError(f"{name} must be an array of 3-D coordinates, got shape {positions.shape}.")
        if self.eve_position.shape != (3,):
            raise ScenarioError(f"eve_position must be one 3-D coordinate, got shape {self.eve_position.shape}.")
        if self.power_budget.shape != (self.num_bs,):
            raise ScenarioError(f"power_budget needs {self.num_bs} entries, got {self.power_budget.shape}.")
        if self.noise_user.shape != (self.num_users,) or self.weights.shape != (self.num_users,):
            raise ScenarioError(f"noise_user and weights need {self.num_users} entries.")
        if np.any(self.power_budget < 0):
            raise ScenarioError("Power budgets must be non-negative.")
        if np.any(self.noise_user <= 0) or self.noise_eve <= 0:
            raise ScenarioError("Noise powers must be strictly positive.")
        if np.any(self.weights < 0) or np.any(self.weights > 1):
            raise ScenarioError("Weights must lie in [0, 1].")
        missing = [key for key in LINK_CLASSES if key not in self.pathloss_exponents or key not in self.rician_factors]
        if missing:
            raise ScenarioError(f"Missing path loss exponent or Rician factor for link classes {missing}.")
        if any(value < 0 for value in self.rician_factors.values()):
            raise ScenarioError("Rician factors must be non-negative.")
        if self.reference_path_loss <= 0 or self.reference_distance <= 0:
            raise ScenarioError("Reference path loss and distance must be strictly positive.")
        if self.num_ris > 0 and not 1 <= self.r_assign <= self.num_ris:
            raise ScenarioError(f"r_assign must lie in [1, {self.num_ris}], got {self.r_assign}.")
        if self.phase_bits < 0:
            raise ScenarioError("phase_bits must be non-negative.")
        return self

    # Layout variants used by the evaluation sweeps
    def with_power_dbm(self, power_dbm: float) -> "Scenario":
        """
        Same scenario with every BS budget set to `power_dbm`.
        """
        return replace(self, power_budget=np.full(self.num_bs, float(dbm_to_watts(power_dbm)))).validate()

    def with_ris_elements(self, elements: int) -> "Scenario":
        return replace(self, elements_per_ris=int(elements)).validate()

    def with_phase_bits(self, bits: int) -> "Scenario":
        return replace(self, phase_bits=int(bits)).validate()

    def with_r_assign(self, r_assign: int) -> "Scenario":
        return replace(self, r_assign=int(r_assign)).validate()

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, rng_seed=int(seed))

    def with_user_line(self, x: float) -> "Scenario":
        """
        Users 5 m apart on the line y=50 m centred at `x`, Eve at (x, 40 m).
        """
        offsets = (np.arange(self.num_users) - (self.num_users - 1) / 2.0) * 5.0
        users = np.column_stack([x + offsets, np.full(self.num_users, 50.0), np.full(self.num_users, USER_HEIGHT)])
        eve = np.array([float(x), 40.0, USER_HEIGHT])
        return replace(self, user_positions=users, eve_position=eve).validate()

    def with_num_users(self, num_users: int) -> "Scenario":
        """
        `num_users` users, the k-th one (1-based) located at (30+k m, 50 m).
        """
        k = np.arange(1, int(num_users) + 1, dtype=float)
        users = np.column_stack([30.0 + k, np.full(k.size, 50.0), np.full(k.size, USER_HEIGHT)])
        return replace(
            self,
            user_positions=users,
            noise_user=np.full(k.size, float(self.noise_user[0])),
            weights=np.full(k.size, float(self.weights[0])),
        ).validate()

    def with_ris_line(self, num_ris: int) -> "Scenario":
        """
        `num_ris` RISs, the r-th one (1-based) located at (10+20(r-1) m, 60 m).
        """
        r = np.arange(int(num_ris), dtype=float)
        ris = np.column_stack([10.0 + 20.0 * r, np.full(r.size, 60.0), np.full(r.size, RIS_HEIGHT)])
        return replace(self, ris_positions=ris, r_assign=min(self.r_assign, max(int(num_ris), 1))).validate()

    def without_ris(self) -> "Scenario":
        return replace(self, ris_positions=np.zeros((0, 3)), r_assign=1).validate()

    def to_dict(self) -> dict:
        """
        JSON-serializable representation using linear units.
        """
        return {
            "antennas_per_bs": self.antennas_per_bs,
            "elements_per_ris": self.elements_per_ris,
            "bs_positions": self.bs_positions.tolist(),
            "ris_positions": self.ris_positions.tolist(),
            "user_positions": self.user_positions.tolist(),
            "eve_position": self.eve_position.tolist(),
            "power_budget": self.power_budget.tolist(),
            "noise_user": self.noise_user.tolist(),
            "noise_eve": self.noise_eve,
            "weights": self.weights.tolist(),
            "pathloss_exponents": dict(self.pathloss_exponents),
            "rician_factors": dict(self.rician_factors),
            "reference_path_loss": self.reference_path_loss,
            "reference_distance": self.reference_distance,
            "antenna_spacing_over_wavelength": self.antenna_spacing_over_wavelength,
            "r_assign": self.r_assign,
            "phase_bits": self.phase_bits,
            "rng_seed": self.rng_seed,
            "independent_eve_reflect": self.independent_eve_reflect,
        }


def _convert_units(config: dict) -> dict:
    """
    Convert keys suffixed with `_dbm` (powers) and `_db` (gains) to linear units and strip the suffix.
    """
    converted = {}
    for key, value in config.items():
        if key.endswith("_dbm"):
            converted[key[:-4]] = dbm_to_watts(value).tolist()
        elif key.endswith("_db"):
            converted[key[:-3]] = db_to_linear(value).tolist()
        elif isinstance(value, dict):
            converted[key] = _convert_units(value)
        else:
            converted[key] = value
    return converted


def scenario_from_dict(config: dict) -> Scenario:
    """
    Build a validated Scenario from a configuration dictionary.
    Args:
        config (dict): Keys as in `Scenario`; `_dbm`/`_db` suffixed keys are accepted, scalars broadcast.
    Returns:
        Scenario: The validated scenario.
    """
    config = _convert_units(config)
    try:
        bs = np.asarray(config["bs_positions"], dtype=float).reshape(-1, 3)
        ris = np.asarray(config.get("ris_positions", []), dtype=float).reshape(-1, 3)
        users = np.asarray(config["user_positions"], dtype=float).reshape(-1, 3)
        eve = np.asarray(config["eve_position"], dtype=float)
        num_bs, num_users = bs.shape[0], users.shape[0]
        defaults = Scenario.__dataclass_fields__
        scenario = Scenario(
            antennas_per_bs=int(config["antennas_per_bs"]),
            elements_per_ris=int(config["elements_per_ris"]),
            bs_positions=bs,
            ris_positions=ris,
            user_positions=users,
            eve_position=eve,
            power_budget=np.broadcast_to(np.asarray(config["power_budget"], dtype=float), (num_bs,)).copy(),
            noise_user=np.broadcast_to(np.asarray(config["noise_user"], dtype=float), (num_users,)).copy(),
            noise_eve=float(config["noise_eve"]),
            weights=np.broadcast_to(np.asarray(config.get("weights", 1.0), dtype=float), (num_users,)).copy(),
            pathloss_exponents={**defaults["pathloss_exponents"].default_factory(), **config.get("pathloss_exponents", {})},
            rician_factors={**defaults["rician_factors"].default_factory(), **config.get("rician_factors", {})},
            reference_path_loss=float(config.get("reference_path_loss", 1e-3)),
            reference_distance=float(config.get("reference_distance", 1.0)),
            antenna_spacing_over_wavelength=float(config.get("antenna_spacing_over_wavelength", 0.5)),
            r_assign=int(config.get("r_assign", 1)),
            phase_bits=int(config.get("phase_bits", 0)),
            rng_seed=int(config.get("rng_seed", 0)),
            independent_eve_reflect=bool(config.get("independent_eve_reflect", False)),
        )
    except KeyError as error:
        raise ScenarioError(f"Missing scenario key: {error.args[0]}") from error
    except ValueError as error:
        raise ScenarioError(f"Malformed scenario value: {error}") from error
    return scenario.validate()


def load_scenario(path: str) -> Scenario:
    """
    Load a scenario from a JSON configuration file.
    Args:
        path (str): Path to the JSON file.
    Returns:
        Scenario: The validated scenario.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"Scenario config does not exist: {path}")
    with open(path, "r") as file:
        try:
            config = json.load(file)
        except json.JSONDecodeError as error:
            raise ScenarioError(f"Scenario config {path} is not valid JSON: {error}") from error
    logger.debug("Loaded scenario config %s", path)
    return scenario_from_dict(config)


def baseline_scenario(seed: int = 0) -> Scenario:
    """
    The evaluation baseline: B=3, K=3, R=2, M=5, N=50, P_b=0 dBm, noise -80 dBm.
    """
    return scenario_from_dict({
        "antennas_per_bs": 5,
        "elements_per_ris": 50,
        "bs_positions": [[10, 0, 4], [50, 0, 4], [90, 0, 4]],
        "ris_positions": [[30, 60, RIS_HEIGHT], [70, 60, RIS_HEIGHT]],
        "user_positions": [[30, 50, USER_HEIGHT], [35, 50, USER_HEIGHT], [40, 50, USER_HEIGHT]],
        "eve_position": [35, 40, USER_HEIGHT],
        "power_budget_dbm": 0.0,
        "noise_user_dbm": -80.0,
        "noise_eve_dbm": -80.0,
        "weights": 1.0,
        "reference_path_loss_db": -30.0,
        "r_assign": 1,
        "rng_seed": seed,
    })
