import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import linalg

from model.errors import BeamformingSolverError
from model.network import AggregateChannels

logger = logging.getLogger(__name__)

STALL_LIMIT = 200  # consecutive rejected steps before giving up on further progress


@dataclass(frozen=True)
class BfSurrogate:
    """
    Frozen SCA coefficients of the beamforming subproblem at the point (W_t, mu_t).
    Args:
        alpha_t (np.ndarray): (K,) desired amplitudes mu_t^H h_k w_k^t.
        beta_t (np.ndarray): (K,) interference plus one at the users.
        chi_t (np.ndarray): (K,) total received power at Eve per user stream.
        eve_leak_t (np.ndarray): (K,) power at Eve from the other streams, ||Omega_k^H W_t||^2.
        user_rows (np.ndarray): (K, M*B) effective user channels mu_t^H h_k.
        eve_rows (np.ndarray): (K, M*B) effective Eve channels mu_t^H h_{e,k}.
        fixed_W (np.ndarray): (K, M*B) expansion point.
        fixed_mu (np.ndarray): Phase vector held fixed.
        weights (np.ndarray): (K,) secrecy weights.
    """
    alpha_t: np.ndarray
    beta_t: np.ndarray
    chi_t: np.ndarray
    eve_leak_t: np.ndarray
    user_rows: np.ndarray
    eve_rows: np.ndarray
    fixed_W: np.ndarray
    fixed_mu: np.ndarray
    weights: np.ndarray

    @property
    def num_users(self) -> int:
        return int(self.alpha_t.shape[0])

    @property
    def bf_dim(self) -> int:
        return int(self.user_rows.shape[1])

    def xi_eve(self, k: int) -> np.ndarray:
        """
        Eve Gram matrix h_{e,k}^H mu_t mu_t^H h_{e,k}.
        """
        return np.outer(self.eve_rows[k].conj(), self.eve_rows[k])

    def omega_gram(self, k: int) -> np.ndarray:
        """
        Block-diagonal Omega_k Omega_k^H on the stacked W, with a zero k-th block.
        """
        K, d = self.num_users, self.bf_dim
        gram = np.zeros((K * d, K * d), dtype=complex)
        xi = self.xi_eve(k)
        for j in range(K):
            if j != k:
                gram[j * d:(j + 1) * d, j * d:(j + 1) * d] = xi
        return gram

    def user_gain(self) -> np.ndarray:
        """
        Coefficient |alpha_t|^2 / (beta_t (beta_t + |alpha_t|^2)) per user.
        """
        power = np.abs(self.alpha_t) ** 2
        return power / (self.beta_t * (self.beta_t + power))

    def constant(self) -> float:
        """
        Weighted sum of the terms dropped from the surrogate objective. The true WSSR objective
        is at least `constant() - bf_surrogate_objective(W)`, with equality at W = W_t.
        """
        ratio = np.abs(self.alpha_t) ** 2 / self.beta_t
        leak = self.eve_leak_t
        per_user = (
            np.log1p(ratio) - ratio
            - np.log1p(self.chi_t) + self.chi_t / (1.0 + self.chi_t)
            + np.log1p(leak) - leak - leak / (1.0 + leak)
        )
        return float(self.weights @ per_user)

    def quadratic_form(self) -> Tuple[np.ndarray, np.ndarray, float]:
        """
        Separable form of the surrogate: sum_j w_j^H Q_j w_j - 2 Re{b_j^H w_j} + offset.
        Returns:
            tuple: Q (K, d, d) Hermitian PSD blocks, b (K, d) linear terms, scalar offset.
        """
        K, d = self.num_users, self.bf_dim
        eta = self.weights
        user_gram = np.einsum("kd,ke->kde", self.user_rows.conj(), self.user_rows)
        eve_gram = np.einsum("kd,ke->kde", self.eve_rows.conj(), self.eve_rows)
        gain = eta * self.user_gain()
        eve_total = eta / (self.chi_t + 1.0)
        eve_cross = eta * self.eve_leak_t / (1.0 + self.eve_leak_t)

        shared = np.einsum("k,kde->de", gain, user_gram) + np.einsum("k,kde->de", eve_total + eve_cross, eve_gram)
        Q = np.repeat(shared[None], K, axis=0)
        Q -= eve_cross[:, None, None] * eve_gram  # the leak term skips the user's own stream
        Q = 0.5 * (Q + Q.conj().transpose(0, 2, 1))

        b = (eta * self.alpha_t / self.beta_t)[:, None] * self.user_rows.conj()
        for j in range(K):
            for k in range(K):
                if k != j:
                    b[j] += eta[k] * eve_gram[k] @ self.fixed_W[j]
        return Q, b, float(gain.sum())


def build_bf_surrogate(aggregates: AggregateChannels, W_t: np.ndarray, mu_t: np.ndarray, weights: np.ndarray) -> BfSurrogate:
    """
    Compute the SCA coefficients of the beamforming subproblem.
    Args:
        aggregates (AggregateChannels): Normalized aggregates.
        W_t (np.ndarray): (K, M*B) current beamformers.
        mu_t (np.ndarray): Current phase vector.
        weights (np.ndarray): (K,) secrecy weights.
    Returns:
        BfSurrogate: The frozen coefficients.
    """
    user_rows = aggregates.effective_user(mu_t)
    eve_rows = aggregates.effective_eve(mu_t)
    user_amp = user_rows @ W_t.T  # [k, j] = mu_t^H h_k w_j
    eve_amp = eve_rows @ W_t.T
    user_power = np.abs(user_amp) ** 2
    eve_power = np.abs(eve_amp) ** 2
    alpha_t = np.diag(user_amp).copy()
    beta_t = user_power.sum(axis=1) - np.diag(user_power) + 1.0
    chi_t = eve_power.sum(axis=1)
    eve_leak_t = chi_t - np.diag(eve_power)
    return BfSurrogate(
        alpha_t=alpha_t,
        beta_t=beta_t,
        chi_t=chi_t,
        eve_leak_t=eve_leak_t,
        user_rows=user_rows,
        eve_rows=eve_rows,
        fixed_W=np.array(W_t, dtype=complex),
        fixed_mu=np.array(mu_t, dtype=complex),
        weights=np.asarray(weights, dtype=float),
    )


def bf_surrogate_objective(surrogate: BfSurrogate, W: np.ndarray) -> float:
    """
    Minimization objective of the convex beamforming problem, evaluated term by term.
    """
    s = surrogate
    user_amp = s.user_rows @ W.T
    eve_amp = s.eve_rows @ W.T
    user_power = np.abs(user_amp) ** 2
    eve_power = np.abs(eve_amp) ** 2
    alpha = np.diag(user_amp)
    beta = user_power.sum(axis=1) - np.diag(user_power) + 1.0
    chi = eve_power.sum(axis=1)
    leak = chi - np.diag(eve_power)
    # Re{W^H Omega_k Omega_k^H W_t} = sum_{j != k} Re{conj(e_k w_j) e_k w_j^t}
    eve_amp_t = s.eve_rows @ s.fixed_W.T
    cross = np.real(np.conj(eve_amp) * eve_amp_t)
    cross = cross.sum(axis=1) - np.diag(cross)

    power_t = np.abs(s.alpha_t) ** 2
    value = (
        -2.0 * np.real(np.conj(s.alpha_t) * alpha) / s.beta_t
        + power_t * (beta + np.abs(alpha) ** 2) / (s.beta_t * (s.beta_t + power_t))
        + chi / (s.chi_t + 1.0)
        - 2.0 * cross
        + s.eve_leak_t * leak / (1.0 + s.eve_leak_t)
    )
    return float(s.weights @ value)


def _quadratic_value(Q: np.ndarray, b: np.ndarray, W: np.ndarray) -> float:
    return float(np.real(np.einsum("kd,kde,ke->", W.conj(), Q, W)) - 2.0 * np.real(np.sum(b.conj() * W)))


def project_power(W: np.ndarray, budgets: np.ndarray) -> np.ndarray:
    """
    Exact projection onto the product of per-BS balls sum_k ||w_{b,k}||^2 <= P_b.
    """
    K, B = W.shape[0], budgets.shape[0]
    blocks = W.reshape(K, B, -1).copy()
    power = np.sum(np.abs(blocks) ** 2, axis=(0, 2))
    for b in range(B):
        if power[b] > budgets[b]:
            blocks[:, b, :] *= np.sqrt(budgets[b] / power[b]) if power[b] > 0 else 0.0
    return blocks.reshape(W.shape)


def kkt_residuals(Q: np.ndarray, b: np.ndarray, W: np.ndarray, budgets: np.ndarray, tol: float) -> dict:
    """
    Stationarity, complementarity and feasibility residuals of the ball-constrained QP at W,
    with the multipliers of the active balls fitted by least squares.
    """
    K, B = W.shape[0], budgets.shape[0]
    gradient = 2.0 * (np.einsum("kde,ke->kd", Q, W) - b)
    grad_blocks = gradient.reshape(K, B, -1)
    w_blocks = W.reshape(K, B, -1)
    power = np.sum(np.abs(w_blocks) ** 2, axis=(0, 2))
    multipliers = np.zeros(B)
    for bs in range(B):
        active = power[bs] >= budgets[bs] * (1.0 - 1e-6) and power[bs] > 0
        if active:
            fitted = -np.real(np.sum(grad_blocks[:, bs, :].conj() * w_blocks[:, bs, :])) / (2.0 * power[bs])
            multipliers[bs] = max(fitted, 0.0)
    lagrangian_grad = grad_blocks + 2.0 * multipliers[None, :, None] * w_blocks
    return {
        "stationarity": float(np.linalg.norm(lagrangian_grad)),
        "gradient_norm": float(np.linalg.norm(gradient)),
        "complementarity": float(np.max(np.abs(multipliers * (power - budgets)), initial=0.0)),
        "infeasibility": float(np.max(power - budgets * (1.0 + tol), initial=-np.inf)),
        "multipliers": multipliers,
    }


def solve_ball_qp(
    Q: np.ndarray,
    b: np.ndarray,
    budgets: np.ndarray,
    W0: np.ndarray,
    tol: float = 1e-8,
    max_iter: int = 5000,
) -> Tuple[np.ndarray, dict]:
    """
    Minimize sum_j w_j^H Q_j w_j - 2 Re{b_j^H w_j} over per-BS power balls with accelerated
    projected gradient and adaptive momentum restart.
    Args:
        Q (np.ndarray): (K, d, d) Hermitian PSD blocks.
        b (np.ndarray): (K, d) linear terms.
        budgets (np.ndarray): (B,) per-BS power budgets; d must be a multiple of B.
        W0 (np.ndarray): (K, d) starting point, projected before use.
        tol (float): KKT tolerance.
        max_iter (int): Iteration cap.
    Returns:
        tuple: Best iterate (K, d) and an info dict (iterations, cap_hit, residuals).
    """
    eigenvalues = np.stack([linalg.eigvalsh(block) for block in Q])
    largest = float(eigenvalues.max(initial=0.0))
    smallest = float(eigenvalues.min(initial=0.0))
    if smallest < -1e-9 * max(largest, 1.0):
        raise BeamformingSolverError(
            "Beamforming quadratic form is not positive semidefinite.",
            diagnostics={"min_eigenvalue": smallest, "max_eigenvalue": largest, "condition": abs(largest / smallest) if smallest else np.inf},
        )

    x = project_power(np.array(W0, dtype=complex), budgets)
    info = {"iterations": 0, "cap_hit": False, "restarts": 0, "stalled": False}
    if largest == 0.0:
        # Linear objective: each BS block aligns with b at full power
        if np.any(b):
            x = _align_with_budget(b, budgets)
        info["residuals"] = kkt_residuals(Q, b, x, budgets, tol)
        info["objective"] = _quadratic_value(Q, b, x)
        return x, info
    step = 1.0 / (2.0 * largest * 1.05)  # below 1/L with L = 2 lambda_max(Q)

    y, momentum, value = x, 1.0, _quadratic_value(Q, b, x)
    rejected = 0
    for iteration in range(1, max_iter + 1):
        residuals = kkt_residuals(Q, b, x, budgets, tol)
        if residuals["stationarity"] <= tol * (1.0 + residuals["gradient_norm"]) and residuals["complementarity"] <= tol:
            break
        gradient = 2.0 * (np.einsum("kde,ke->kd", Q, y) - b)  # at the extrapolated point
        x_next = project_power(y - step * gradient, budgets)
        value_next = _quadratic_value(Q, b, x_next)
        if value_next > value and momentum > 1.0:
            # restart
            momentum, y = 1.0, x
            info["restarts"] += 1
            continue
        momentum_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * momentum ** 2))
        y = x_next + ((momentum - 1.0) / momentum_next) * (x_next - x)
        if value_next <= value:
            x, value, rejected = x_next, value_next, 0
        else:
            rejected += 1
        momentum = momentum_next
        info["iterations"] = iteration
        if rejected >= STALL_LIMIT:
            # value differences are below rounding
            info["stalled"] = True
            break
    else:
        info["cap_hit"] = True
        logger.warning("Beamforming QP hit the iteration cap (%s)", max_iter)
    info["residuals"] = kkt_residuals(Q, b, x, budgets, tol)
    info["objective"] = value
    return x, info


def _align_with_budget(b: np.ndarray, budgets: np.ndarray) -> np.ndarray:
    """
    Maximizer of Re{b^H w} over the per-BS balls: every BS block scaled to its full budget.
    """
    K, B = b.shape[0], budgets.shape[0]
    blocks = b.reshape(K, B, -1).copy()
    norms = np.sqrt(np.sum(np.abs(blocks) ** 2, axis=(0, 2)))
    for bs in range(B):
        blocks[:, bs, :] = blocks[:, bs, :] * np.sqrt(budgets[bs]) / norms[bs] if norms[bs] > 0 else 0.0
    return blocks.reshape(b.shape)


def solve_bf_qp(surrogate: BfSurrogate, budgets: np.ndarray, tol: float = 1e-8, max_iter: int = 5000) -> Tuple[np.ndarray, dict]:
    """
    Solve the convex beamforming problem at a frozen surrogate, starting from its expansion point.
    Returns:
        tuple: Beamformers (K, M*B) and the solver info dict.
    """
    Q, b, _ = surrogate.quadratic_form()
    W, info = solve_ball_qp(Q, b, np.asarray(budgets, dtype=float), surrogate.fixed_W, tol, max_iter)
    logger.debug("Beamforming QP finished in %s iterations (cap hit: %s)", info["iterations"], info["cap_hit"])
    return W, info
