import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from data_preprocess.scenario import LINK_CLASSES, Scenario
from model.errors import ScenarioError

logger = logging.getLogger(__name__)

# Stream keys that are not link draws
INIT_STREAM = len(LINK_CLASSES)
ASSIGNMENT_STREAM = len(LINK_CLASSES) + 1


def make_generator(seed: int, *key: int) -> np.random.Generator:
    """
    Counter-based generator (Philox) for one named stream of a seed.
    Args:
        seed (int): Scenario seed.
        key (int): Stream key, e.g. (block, link class, endpoint i, endpoint j).
    Returns:
        np.random.Generator: Independent generator for the stream.
    """
    sequence = np.random.SeedSequence(int(seed) % (1 << 64), spawn_key=tuple(int(value) for value in key))
    return np.random.Generator(np.random.Philox(sequence))


def path_loss(distance: float, exponent: float, reference_path_loss: float, reference_distance: float = 1.0) -> float:
    """
    Distance-dependent path loss L0*(d/d0)^(-tau) as a linear power gain.
    Args:
        distance (float): Link distance d in meters.
        exponent (float): Path loss exponent tau.
        reference_path_loss (float): Linear gain L0 at the reference distance.
        reference_distance (float): Reference distance d0 in meters.
    Returns:
        float: Linear power gain.
    """
    if distance <= 0 or reference_distance <= 0:
        raise ScenarioError(f"Distances must be strictly positive, got d={distance}, d0={reference_distance}.")
    return reference_path_loss * (distance / reference_distance) ** (-exponent)


def steering_vector(angle: float, count: int, spacing_over_wavelength: float = 0.5) -> np.ndarray:
    """
    Uniform linear array response; element i is exp(j*2*pi*spacing*i*sin(angle)).
    """
    return np.exp(1j * 2.0 * np.pi * spacing_over_wavelength * np.arange(count) * np.sin(angle))


def rayleigh_channel(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """
    I.i.d. circularly-symmetric complex Gaussian entries with unit variance.
    """
    draw = rng.standard_normal((2, rows, cols))
    return (draw[0] + 1j * draw[1]) / np.sqrt(2.0)


def rician_channel(
    rows: int,
    cols: int,
    rician_factor: float,
    aoa: float,
    aod: float,
    rng: np.random.Generator,
    spacing_over_wavelength: float = 0.5,
) -> np.ndarray:
    """
    Rician small-scale fading: sqrt(K/(K+1))*q(aoa)q(aod)^H + sqrt(1/(K+1))*NLoS.
    Args:
        rows (int): Size of the array on the arrival side.
        cols (int): Size of the array on the departure side.
        rician_factor (float): LoS to scattered power ratio K'.
        aoa (float): Angle at the row array in radians.
        aod (float): Angle at the column array in radians.
        rng (np.random.Generator): Source of the scattered component.
        spacing_over_wavelength (float): Element spacing of both arrays.
    Returns:
        np.ndarray: Complex (rows, cols) channel.
    """
    if rician_factor < 0:
        raise ScenarioError(f"Rician factor must be non-negative, got {rician_factor}.")
    scattered = rayleigh_channel(rows, cols, rng)
    if np.isinf(rician_factor):
        scattered = np.zeros_like(scattered)
        los_weight, nlos_weight = 1.0, 0.0
    else:
        los_weight = np.sqrt(rician_factor / (rician_factor + 1.0))
        nlos_weight = np.sqrt(1.0 / (rician_factor + 1.0))
    los = np.outer(steering_vector(aoa, rows, spacing_over_wavelength), steering_vector(aod, cols, spacing_over_wavelength).conj())
    return los_weight * los + nlos_weight * scattered


def azimuth(origin: np.ndarray, target: np.ndarray) -> float:
    """
    Angle in the x-y plane of the direction from `origin` to `target`.
    """
    delta = np.asarray(target, dtype=float) - np.asarray(origin, dtype=float)
    return float(np.arctan2(delta[1], delta[0]))


@dataclass(frozen=True)
class ChannelSet:
    """
    Raw per-link channels of one coherence block.
    Args:
        H_direct_user (np.ndarray): (B, K, M) BS-user channels H_{b,k}.
        H_direct_eve (np.ndarray): (B, M) BS-Eve channels H_{b,e}.
        G (np.ndarray): (B, R, N, M) BS-RIS channels G_{b,r}.
        F_user (np.ndarray): (R, K, N) RIS-user channels F_{r,k}.
        F_eve (np.ndarray): (R, K, N) RIS-Eve channels F_{r,e,k}.
        drawn_reflect_links (int): Number of RIS-user/Eve links whose CSI was drawn.
        reflect_mask (np.ndarray): (R, K) pairs whose reflect CSI was drawn, None when all were.
    """
    H_direct_user: np.ndarray
    H_direct_eve: np.ndarray
    G: np.ndarray
    F_user: np.ndarray
    F_eve: np.ndarray
    drawn_reflect_links: int = 0
    reflect_mask: Optional[np.ndarray] = None

    @property
    def num_bs(self) -> int:
        return int(self.H_direct_user.shape[0])

    @property
    def num_users(self) -> int:
        return int(self.H_direct_user.shape[1])

    @property
    def num_ris(self) -> int:
        return int(self.F_user.shape[0])

    def masked(self, assignment: np.ndarray) -> "ChannelSet":
        """
        Copy with F_user[r][k] and F_eve[r][k] multiplied by assignment[r][k].
        """
        factors = np.asarray(assignment, dtype=float)[:, :, None]
        return replace(self, F_user=self.F_user * factors, F_eve=self.F_eve * factors)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(array)) for array in (self.H_direct_user, self.H_direct_eve, self.G, self.F_user, self.F_eve))


def _link(scenario: Scenario, link_class: str, origin: np.ndarray, target: np.ndarray, rows: int, cols: int, rng: np.random.Generator, row_end: str) -> np.ndarray:
    """
    Large-scale gain times Rician fading for one link.
    `row_end` names which endpoint ("origin" or "target") owns the row array.
    """
    distance = float(np.linalg.norm(np.asarray(target) - np.asarray(origin)))
    if distance <= 0:
        raise ScenarioError(f"Coincident endpoints on a {link_class} link at {origin}.")
    gain = path_loss(distance, scenario.pathloss_exponents[link_class], scenario.reference_path_loss, scenario.reference_distance)
    angle_at_origin = azimuth(origin, target)
    angle_at_target = azimuth(target, origin)
    if row_end == "origin":
        row_angle, col_angle = angle_at_origin, angle_at_target
    else:
        row_angle, col_angle = angle_at_target, angle_at_origin
    fading = rician_channel(rows, cols, scenario.rician_factors[link_class], row_angle, col_angle, rng, scenario.antenna_spacing_over_wavelength)
    return np.sqrt(gain) * fading


def synthesize_channels(scenario: Scenario, seed: Optional[int] = None, block: int = 0, reflect_mask: Optional[np.ndarray] = None) -> ChannelSet:
    """
    Draw every link channel of the scenario. Each link uses its own Philox stream keyed by
    (block, link class, endpoint indices), so draws do not depend on which other links exist.
    Args:
        scenario (Scenario): Geometry and radio parameters.
        seed (int): Seed of the draw, defaults to the scenario seed.
        block (int): Coherence block index; blocks share geometry and redraw small-scale fading.
        reflect_mask (np.ndarray): Optional (R, K) boolean selection. RIS-user/Eve links outside the
            selection are left at zero without being drawn, as are BS-RIS links of RISs serving nobody.
    Returns:
        ChannelSet: The synthesized channels.
    """
    seed = scenario.rng_seed if seed is None else seed
    B, R, K = scenario.num_bs, scenario.num_ris, scenario.num_users
    M, N = scenario.antennas_per_bs, scenario.elements_per_ris
    mask = np.ones((R, K), dtype=bool) if reflect_mask is None else np.asarray(reflect_mask, dtype=bool)
    if mask.shape != (R, K):
        raise ScenarioError(f"reflect_mask must have shape {(R, K)}, got {mask.shape}.")
    bu, be, br, ru, re = (LINK_CLASSES.index(name) for name in ("bu", "be", "br", "ru", "re"))

    H_direct_user = np.zeros((B, K, M), dtype=complex)
    H_direct_eve = np.zeros((B, M), dtype=complex)
    G = np.zeros((B, R, N, M), dtype=complex)
    F_user = np.zeros((R, K, N), dtype=complex)
    F_eve = np.zeros((R, K, N), dtype=complex)

    for b, bs in enumerate(scenario.bs_positions):
        for k, user in enumerate(scenario.user_positions):
            H_direct_user[b, k] = _link(scenario, "bu", bs, user, M, 1, make_generator(seed, block, bu, b, k), "origin")[:, 0]
        H_direct_eve[b] = _link(scenario, "be", bs, scenario.eve_position, M, 1, make_generator(seed, block, be, b, 0), "origin")[:, 0]
    drawn = 0
    for r, ris in enumerate(scenario.ris_positions):
        if not mask[r].any():
            continue
        for b, bs in enumerate(scenario.bs_positions):
            G[b, r] = _link(scenario, "br", bs, ris, N, M, make_generator(seed, block, br, b, r), "target")
        shared_eve = None
        for k, user in enumerate(scenario.user_positions):
            if not mask[r, k]:
                continue
            F_user[r, k] = _link(scenario, "ru", ris, user, N, 1, make_generator(seed, block, ru, r, k), "origin")[:, 0]
            if scenario.independent_eve_reflect:
                F_eve[r, k] = _link(scenario, "re", ris, scenario.eve_position, N, 1, make_generator(seed, block, re, r, k), "origin")[:, 0]
            else:
                if shared_eve is None:
                    shared_eve = _link(scenario, "re", ris, scenario.eve_position, N, 1, make_generator(seed, block, re, r, 0), "origin")[:, 0]
                F_eve[r, k] = shared_eve
            drawn += 2
    logger.debug("Synthesized channels for seed %s block %s (%s reflect links)", seed, block, drawn)
    return ChannelSet(
        H_direct_user=H_direct_user,
        H_direct_eve=H_direct_eve,
        G=G,
        F_user=F_user,
        F_eve=F_eve,
        drawn_reflect_links=drawn,
        reflect_mask=None if reflect_mask is None else mask.copy(),
    )
