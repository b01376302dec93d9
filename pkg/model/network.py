import logging
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from data_preprocess.channels import ChannelSet
from data_preprocess.scenario import Scenario

logger = logging.getLogger(__name__)


def _stack_user_rows(F: np.ndarray, G: np.ndarray, H_direct: np.ndarray) -> np.ndarray:
    """
    Rows diag(F^H) G_b per RIS element, one column block per BS, direct row H^H last.
    F is (R, N), G is (B, R, N, M), H_direct is (B, M).
    """
    B, R, N, M = G.shape
    reflect = np.conj(F)[None, :, :, None] * G  # (B, R, N, M)
    reflect = reflect.transpose(1, 2, 0, 3).reshape(R * N, B * M)
    direct = np.conj(H_direct).reshape(1, B * M)
    return np.vstack([reflect, direct])


def aggregate_user_channel(channels: ChannelSet, scenario: Scenario, k: int) -> np.ndarray:
    """
    Noise-normalized phase-domain aggregate of user k, shape (N*R+1, M*B).
    mu^H @ result @ w_k is the received amplitude of w_k at user k over the scaled noise.
    """
    h = _stack_user_rows(channels.F_user[:, k, :], channels.G, channels.H_direct_user[:, k, :])
    return h / np.sqrt(scenario.noise_user[k])


def aggregate_eve_channel(channels: ChannelSet, scenario: Scenario, k: int) -> np.ndarray:
    """
    Noise-normalized phase-domain aggregate seen by Eve for the stream of user k.
    """
    h = _stack_user_rows(channels.F_eve[:, k, :], channels.G, channels.H_direct_eve)
    return h / np.sqrt(scenario.noise_eve)


def _to_assignment_domain(h: np.ndarray, mu: np.ndarray, num_ris: int, elements: int) -> np.ndarray:
    """
    Collapse the element rows of each RIS under fixed phases: row r is a_r = theta_r^H diag(F_r^H) G_r.
    """
    if num_ris == 0:
        return h[-1:].copy()
    reflect = h[:-1].reshape(num_ris, elements, h.shape[1])  # explicit width, N may be 0
    theta = mu[:-1].reshape(num_ris, elements)
    rows = np.einsum("rn,rnd->rd", np.conj(theta), reflect)
    return np.vstack([rows, h[-1:]])


def aggregate_assignment_channels(channels: ChannelSet, scenario: Scenario, mu: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Assignment-domain aggregates (b_user[k], b_eve[k]) of shape (R+1, M*B) under phases `mu`.
    Args:
        channels (ChannelSet): Unmasked channels.
        scenario (Scenario): Scenario the channels belong to.
        mu (np.ndarray): Phase vector held fixed during assignment.
        k (int): User index.
    Returns:
        tuple: Noise-normalized b_user[k] and b_eve[k].
    """
    R, N = channels.num_ris, scenario.elements_per_ris
    b_user = _to_assignment_domain(aggregate_user_channel(channels, scenario, k), mu, R, N)
    b_eve = _to_assignment_domain(aggregate_eve_channel(channels, scenario, k), mu, R, N)
    return b_user, b_eve


@dataclass(frozen=True)
class AggregateChannels:
    """
    Stacked normalized aggregates of every user.
    Args:
        h_user (np.ndarray): (K, N*R+1, M*B) user aggregates.
        h_eve (np.ndarray): (K, N*R+1, M*B) Eve aggregates per user stream.
        b_user (np.ndarray): (K, R+1, M*B) assignment-domain user aggregates, if built.
        b_eve (np.ndarray): (K, R+1, M*B) assignment-domain Eve aggregates, if built.
        num_ris (int): Number of RISs R behind the element rows.
    """
    h_user: np.ndarray
    h_eve: np.ndarray
    b_user: Optional[np.ndarray] = None
    b_eve: Optional[np.ndarray] = None
    num_ris: int = 0

    @property
    def num_users(self) -> int:
        return int(self.h_user.shape[0])

    @property
    def phase_dim(self) -> int:
        return int(self.h_user.shape[1])

    @property
    def bf_dim(self) -> int:
        return int(self.h_user.shape[2])

    def effective_user(self, mu: np.ndarray) -> np.ndarray:
        """
        Rows mu^H h_user[k], shape (K, M*B).
        """
        return np.einsum("n,knd->kd", np.conj(mu), self.h_user)

    def effective_eve(self, mu: np.ndarray) -> np.ndarray:
        return np.einsum("n,knd->kd", np.conj(mu), self.h_eve)

    def with_assignment_domain(self, mu: np.ndarray) -> "AggregateChannels":
        """
        Copy carrying the assignment-domain aggregates b_user and b_eve under phases `mu`.
        """
        elements = (self.phase_dim - 1) // self.num_ris if self.num_ris else 0
        b_user = np.stack([_to_assignment_domain(h, mu, self.num_ris, elements) for h in self.h_user])
        b_eve = np.stack([_to_assignment_domain(h, mu, self.num_ris, elements) for h in self.h_eve])
        return replace(self, b_user=b_user, b_eve=b_eve)


def build_aggregates(channels: ChannelSet, scenario: Scenario, mu: Optional[np.ndarray] = None) -> AggregateChannels:
    """
    Build the phase-domain aggregates of every user, plus the assignment-domain ones when `mu` is given.
    """
    K = scenario.num_users
    h_user = np.stack([aggregate_user_channel(channels, scenario, k) for k in range(K)])
    h_eve = np.stack([aggregate_eve_channel(channels, scenario, k) for k in range(K)])
    aggregates = AggregateChannels(h_user=h_user, h_eve=h_eve, num_ris=channels.num_ris)
    return aggregates if mu is None else aggregates.with_assignment_domain(mu)


def sinr(h_agg: np.ndarray, vector: np.ndarray, W: np.ndarray, k: int) -> float:
    """
    SINR of stream k through a normalized aggregate.
    Args:
        h_agg (np.ndarray): Normalized aggregate (rows, M*B).
        vector (np.ndarray): Stacking vector mu (phase domain) or u (assignment domain).
        W (np.ndarray): (K, M*B) beamformers, one row per user.
        k (int): Stream index.
    Returns:
        float: |v^H h w_k|^2 / (sum_{j != k} |v^H h w_j|^2 + 1).
    """
    amplitudes = np.abs(np.conj(vector) @ h_agg @ W.T) ** 2
    interference = amplitudes.sum() - amplitudes[k]
    return float(amplitudes[k] / (interference + 1.0))


def secrecy_rate(gamma_user, gamma_eve):
    """
    Secrecy rate max(ln(1+gamma_user) - ln(1+gamma_eve), 0) in nats; accepts scalars or per-user arrays.
    """
    rate = np.maximum(np.log1p(gamma_user) - np.log1p(gamma_eve), 0.0)
    return float(rate) if np.ndim(rate) == 0 else rate


def user_sinrs(aggregates: AggregateChannels, W: np.ndarray, mu: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    SINR of every stream at its user and at Eve, each of shape (K,).
    """
    K = aggregates.num_users
    gamma_user = np.array([sinr(aggregates.h_user[k], mu, W, k) for k in range(K)])
    gamma_eve = np.array([sinr(aggregates.h_eve[k], mu, W, k) for k in range(K)])
    return gamma_user, gamma_eve


def user_rate_gaps(aggregates: AggregateChannels, W: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """
    Unclamped ln(1+gamma_k) - ln(1+gamma_k^e) per user.
    """
    gamma_user, gamma_eve = user_sinrs(aggregates, W, mu)
    return np.log1p(gamma_user) - np.log1p(gamma_eve)


def wssr(scenario: Scenario, aggregates: AggregateChannels, W: np.ndarray, mu: np.ndarray) -> Tuple[float, float, np.ndarray]:
    """
    Weighted sum secrecy rate.
    Args:
        scenario (Scenario): Supplies the weights.
        aggregates (AggregateChannels): Normalized aggregates.
        W (np.ndarray): (K, M*B) beamformers.
        mu (np.ndarray): Phase vector.
    Returns:
        tuple: (unclamped objective, clamped sum, per-user clamped secrecy rates), all in nats.
    """
    gamma_user, gamma_eve = user_sinrs(aggregates, W, mu)
    gaps = np.log1p(gamma_user) - np.log1p(gamma_eve)  # the optimizer works on the unclamped sum
    rates = np.atleast_1d(secrecy_rate(gamma_user, gamma_eve))
    return float(scenario.weights @ gaps), float(scenario.weights @ rates), rates


def bs_power(W: np.ndarray, num_bs: int) -> np.ndarray:
    """
    Per-BS transmit power sum_k ||w_{b,k}||^2.
    """
    K = W.shape[0]
    return np.sum(np.abs(W.reshape(K, num_bs, -1)) ** 2, axis=(0, 2))


def is_valid_phase_vector(mu: np.ndarray, atol: float = 1e-12) -> bool:
    return bool(np.all(np.abs(np.abs(mu) - 1.0) <= atol) and mu[-1] == 1.0)
