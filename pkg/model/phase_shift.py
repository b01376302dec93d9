import logging
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from model.errors import SolverError
from model.network import AggregateChannels

logger = logging.getLogger(__name__)

PENALTY_MARGIN = 0.05
PENALTY_FLOOR = 1e-6


@dataclass(frozen=True)
class PhaseQuadratic:
    """
    Phase subproblem min mu^H A mu - 2 Re{mu^H v} at a fixed beamformer set.
    The true WSSR objective is at least `constant - value(mu)`, with equality at mu_t.
    Args:
        A (np.ndarray): Hermitian PSD (N*R+1, N*R+1) matrix.
        v (np.ndarray): (N*R+1,) linear term.
        lambda_max_A (float): Largest eigenvalue of A.
        constant (float): Weighted sum of the dropped surrogate constants.
    """
    A: np.ndarray
    v: np.ndarray
    lambda_max_A: float
    constant: float = 0.0

    @property
    def dim(self) -> int:
        return int(self.v.shape[0])

    def value(self, mu: np.ndarray) -> float:
        return float(np.real(np.conj(mu) @ self.A @ mu) - 2.0 * np.real(np.conj(mu) @ self.v))


@dataclass(frozen=True)
class AdmmState:
    p: np.ndarray
    mu: np.ndarray
    lam: np.ndarray
    delta: float
    iteration: int = 0


def make_phase_quadratic(A: np.ndarray, v: np.ndarray, constant: float = 0.0) -> PhaseQuadratic:
    """
    Wrap (A, v) after symmetrizing A and caching its largest eigenvalue.
    """
    A = 0.5 * (np.asarray(A, dtype=complex) + np.asarray(A, dtype=complex).conj().T)
    lambda_max = float(max(linalg.eigvalsh(A)[-1], 0.0))
    return PhaseQuadratic(A=A, v=np.asarray(v, dtype=complex), lambda_max_A=lambda_max, constant=constant)


def build_phase_quadratic(aggregates: AggregateChannels, W_t: np.ndarray, mu_t: np.ndarray, weights: np.ndarray) -> PhaseQuadratic:
    """
    Compute the SCA quadratic of the phase subproblem at (W_t, mu_t).
    Args:
        aggregates (AggregateChannels): Normalized aggregates.
        W_t (np.ndarray): (K, M*B) beamformers held fixed.
        mu_t (np.ndarray): Expansion point.
        weights (np.ndarray): (K,) secrecy weights.
    Returns:
        PhaseQuadratic: The quadratic with A = sum_k eta_k A_k and v = sum_k eta_k v_k.
    """
    n = aggregates.phase_dim
    A = np.zeros((n, n), dtype=complex)
    v = np.zeros(n, dtype=complex)
    constant = 0.0
    for k in range(aggregates.num_users):
        eta = float(weights[k])
        user_cols = aggregates.h_user[k] @ W_t.T  # column j is h_k w_j
        eve_cols = aggregates.h_eve[k] @ W_t.T
        user_amp = np.conj(mu_t) @ user_cols
        eve_amp = np.conj(mu_t) @ eve_cols
        alpha_t = user_amp[k]
        power_t = abs(alpha_t) ** 2
        beta_t = float(np.sum(np.abs(user_amp) ** 2) - power_t + 1.0)
        chi_t = float(np.sum(np.abs(eve_amp) ** 2))
        leak_t = chi_t - abs(eve_amp[k]) ** 2

        others = [j for j in range(W_t.shape[0]) if j != k]
        psi_gram = eve_cols[:, others] @ eve_cols[:, others].conj().T
        gain = power_t / (beta_t * (beta_t + power_t))
        A_k = (
            gain * (user_cols @ user_cols.conj().T)
            + (eve_cols @ eve_cols.conj().T) / (chi_t + 1.0)
            + psi_gram * leak_t / (1.0 + leak_t)
        )
        v_k = psi_gram @ mu_t + user_cols[:, k] * np.conj(alpha_t) / beta_t
        A += eta * A_k
        v += eta * v_k
        ratio = power_t / beta_t
        constant += eta * (
            np.log1p(ratio) - ratio
            - np.log1p(chi_t) + chi_t / (1.0 + chi_t)
            + np.log1p(leak_t) - leak_t - leak_t / (1.0 + leak_t)
            - gain
        )
    return make_phase_quadratic(A, v, float(constant))


def select_penalty(quadratic: PhaseQuadratic, margin: float = PENALTY_MARGIN) -> float:
    """
    Penalty delta = 2*lambda_max(A)*(1+margin), floored at 1e-6, so that delta/2*I - A is positive definite.
    """
    delta = max(2.0 * quadratic.lambda_max_A * (1.0 + margin), PENALTY_FLOOR)
    smallest = linalg.eigvalsh(0.5 * delta * np.eye(quadratic.dim) - quadratic.A)[0]
    if smallest <= 0:
        logger.warning("Penalty %.3e fails the positive definiteness check (min eigenvalue %.3e), enlarging it", delta, smallest)
        delta = (delta - 2.0 * smallest) * (1.0 + margin) + PENALTY_FLOOR
    return float(delta)


def factor_p_system(quadratic: PhaseQuadratic, delta: float):
    """
    Cholesky factor of 2A + delta*I, reused by every p-update of one subproblem.
    """
    try:
        return linalg.cho_factor(2.0 * quadratic.A + delta * np.eye(quadratic.dim))
    except linalg.LinAlgError as error:
        raise SolverError("The p-update system is singular.", diagnostics={"delta": delta, "lambda_max_A": quadratic.lambda_max_A}) from error


def admm_update_p(state: AdmmState, quadratic: PhaseQuadratic, factor=None) -> np.ndarray:
    """
    p = (2A + delta*I)^-1 (2v + lambda + delta*mu).
    """
    if factor is None:
        factor = factor_p_system(quadratic, state.delta)
    return linalg.cho_solve(factor, 2.0 * quadratic.v + state.lam + state.delta * state.mu)


def admm_update_mu(state: AdmmState) -> np.ndarray:
    """
    Unit-modulus projection of p - lambda/delta; zero entries keep their previous phase, last entry is 1.
    """
    target = state.p - state.lam / state.delta
    modulus = np.abs(target)
    mu = np.where(modulus > 0, target / np.where(modulus > 0, modulus, 1.0), state.mu)
    mu = mu.astype(complex)
    mu[-1] = 1.0
    return mu


def admm_update_lambda(state: AdmmState, quadratic: PhaseQuadratic) -> np.ndarray:
    return 2.0 * quadratic.A @ state.p - 2.0 * quadratic.v


def augmented_lagrangian(state: AdmmState, quadratic: PhaseQuadratic) -> float:
    """
    p^H A p - 2 Re{p^H v} + Re{lambda^H (mu - p)} + delta/2 ||p - mu||^2.
    """
    gap = state.p - state.mu
    return float(
        quadratic.value(state.p)
        - np.real(np.conj(state.lam) @ gap)
        + 0.5 * state.delta * np.real(np.conj(gap) @ gap)
    )


def admm_solve(
    quadratic: PhaseQuadratic,
    mu_init: np.ndarray,
    tol: float = 1e-7,
    max_iter: int = 2000,
    delta: Optional[float] = None,
) -> Tuple[np.ndarray, dict]:
    """
    ADMM for min mu^H A mu - 2 Re{mu^H v} subject to |mu_n| = 1 and mu_last = 1.
    Args:
        quadratic (PhaseQuadratic): Phase subproblem.
        mu_init (np.ndarray): Feasible starting phases.
        tol (float): Stop once ||p - mu||_inf <= tol.
        max_iter (int): Iteration cap.
        delta (float): Penalty, defaults to `select_penalty`.
    Returns:
        tuple: Lowest-objective feasible iterate (mu_init included) and an info dict.
    """
    delta = select_penalty(quadratic) if delta is None else float(delta)
    factor = factor_p_system(quadratic, delta)
    mu = np.array(mu_init, dtype=complex)
    # lambda starts at the gradient form 2A mu - 2v, so the first p-update returns mu_init
    state = AdmmState(p=mu.copy(), mu=mu, lam=admm_update_lambda(AdmmState(p=mu, mu=mu, lam=mu, delta=delta), quadratic), delta=delta)
    best_mu, best_value = mu, quadratic.value(mu)
    previous_lagrangian = augmented_lagrangian(state, quadratic)
    info = {"iterations": 0, "cap_hit": False, "lagrangian_increases": 0, "delta": delta}

    for iteration in range(1, max_iter + 1):
        p = admm_update_p(state, quadratic, factor)  # quadratic step, cached factor
        state = replace(state, p=p)
        state = replace(state, mu=admm_update_mu(state))  # projection onto the unit circle
        state = replace(state, lam=admm_update_lambda(state, quadratic), iteration=iteration)  # dual update

        lagrangian = augmented_lagrangian(state, quadratic)
        if lagrangian > previous_lagrangian + 1e-8 * (1.0 + abs(previous_lagrangian)):
            info["lagrangian_increases"] += 1
        previous_lagrangian = lagrangian
        value = quadratic.value(state.mu)
        if value < best_value:
            best_mu, best_value = state.mu, value
        info["iterations"] = iteration
        if np.max(np.abs(state.p - state.mu)) <= tol:  # primal feasibility
            break
    else:
        info["cap_hit"] = True
        logger.warning("ADMM hit the iteration cap (%s); returning the best iterate", max_iter)
    info["objective"] = best_value
    return best_mu, info


def project_discrete(mu: np.ndarray, bits: int) -> np.ndarray:
    """
    Snap every reflect phase to the circularly nearest point of the 2^bits alphabet {0, 2pi/L, ...}.
    """
    levels = 2 ** int(bits)
    step = 2.0 * np.pi / levels
    index = np.mod(np.round(np.angle(mu[:-1]) / step), levels)
    projected = np.empty_like(np.asarray(mu, dtype=complex))
    projected[:-1] = np.exp(1j * step * index)
    projected[-1] = 1.0
    return projected
