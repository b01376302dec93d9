import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy import linalg

from data_preprocess.channels import ChannelSet
from model.errors import AssignmentSolverError
from model.network import AggregateChannels

logger = logging.getLogger(__name__)

BARRIER_GROWTH = 5.0
NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 100


@dataclass(frozen=True)
class AssignmentProblem:
    """
    Assignment subproblem at fixed (W, mu).
    Args:
        D (np.ndarray): (K, K, R+1, R+1) Gram matrices b_k w_j w_j^H b_k^H.
        D_eve (np.ndarray): (K, K, R+1, R+1) Gram matrices b_{e,k} w_j w_j^H b_{e,k}^H.
        U_t (np.ndarray): (K, R+1, R+1) expansion points.
        weights (np.ndarray): (K,) secrecy weights.
        r_assign (int): Maximum number of RISs per user.
    """
    D: np.ndarray
    D_eve: np.ndarray
    U_t: np.ndarray
    weights: np.ndarray
    r_assign: int

    @property
    def num_users(self) -> int:
        return int(self.D.shape[0])

    @property
    def num_ris(self) -> int:
        return int(self.D.shape[2]) - 1


@dataclass(frozen=True)
class Linearization:
    """
    First-order models T3~(U) = value3 + Tr(grad3 (U - U_t)) and likewise for T4.
    """
    grad3: np.ndarray
    grad4: np.ndarray
    value3: float
    value4: float
    U_t: np.ndarray

    def t3(self, U: np.ndarray) -> float:
        return self.value3 + _trace(self.grad3, U - self.U_t)

    def t4(self, U: np.ndarray) -> float:
        return self.value4 + _trace(self.grad4, U - self.U_t)


@dataclass(frozen=True)
class LcrSolution:
    """
    Relaxed assignment of every user.
    Args:
        u (np.ndarray): (K, R+1) lifted vectors, last entry 1.
        U (np.ndarray): (K, R+1, R+1) lifted matrices.
        objective (float): Sum over users of the convexified objective at the returned point.
        gap (float): Largest duality gap estimate m/t over users.
        newton_iters (int): Total Newton steps.
    """
    u: np.ndarray
    U: np.ndarray
    objective: float
    gap: float
    newton_iters: int


def _trace(D: np.ndarray, U: np.ndarray) -> float:
    """
    Re Tr(D U) for Hermitian D and real symmetric U.
    """
    return float(np.real(np.sum(D * U.T)))


def full_assignment_point(num_ris: int) -> np.ndarray:
    """
    Expansion point U = u u^T of the all-ones assignment.
    """
    return np.ones((num_ris + 1, num_ris + 1))


def build_assignment_problem(
    aggregates: AggregateChannels,
    W: np.ndarray,
    mu: np.ndarray,
    weights: np.ndarray,
    r_assign: int,
    U_t: Optional[np.ndarray] = None,
) -> AssignmentProblem:
    """
    Build the Gram matrices of the assignment subproblem.
    Args:
        aggregates (AggregateChannels): Aggregates of the unmasked channels.
        W (np.ndarray): (K, M*B) beamformers held fixed.
        mu (np.ndarray): Phases held fixed.
        weights (np.ndarray): (K,) secrecy weights.
        r_assign (int): Maximum number of RISs per user.
        U_t (np.ndarray): (K, R+1, R+1) expansion points, the full assignment by default.
    Returns:
        AssignmentProblem: The subproblem data.
    """
    if aggregates.b_user is None:
        aggregates = aggregates.with_assignment_domain(mu)
    user_amp = np.einsum("krd,jd->kjr", aggregates.b_user, W)  # b_k w_j
    eve_amp = np.einsum("krd,jd->kjr", aggregates.b_eve, W)
    D = np.einsum("kjr,kjs->kjrs", user_amp, user_amp.conj())
    D_eve = np.einsum("kjr,kjs->kjrs", eve_amp, eve_amp.conj())
    K, R = aggregates.num_users, aggregates.num_ris
    if U_t is None:
        U_t = np.repeat(full_assignment_point(R)[None], K, axis=0)
    return AssignmentProblem(D=D, D_eve=D_eve, U_t=np.asarray(U_t, dtype=float), weights=np.asarray(weights, dtype=float), r_assign=int(r_assign))


def _sums(problem: AssignmentProblem, U: np.ndarray, k: int) -> Tuple[float, float, float, float]:
    traces = np.array([_trace(problem.D[k, j], U) for j in range(problem.num_users)])
    traces_eve = np.array([_trace(problem.D_eve[k, j], U) for j in range(problem.num_users)])
    return traces.sum(), traces_eve.sum() - traces_eve[k], traces.sum() - traces[k], traces_eve.sum()


def eval_T_terms(problem: AssignmentProblem, U: np.ndarray, k: int) -> Tuple[float, float, float, float]:
    """
    The four logarithms whose combination T1 + T2 - T3 - T4 is the virtual secrecy rate gap of user k.
    """
    s1, s2, s3, s4 = _sums(problem, U, k)
    return float(np.log1p(s1)), float(np.log1p(s2)), float(np.log1p(s3)), float(np.log1p(s4))


def linearize_T34(problem: AssignmentProblem, k: int) -> Linearization:
    """
    Tangent models of the concave terms T3 and T4 at U_t[k]; both upper-bound the terms.
    """
    U_t = problem.U_t[k]
    others = [j for j in range(problem.num_users) if j != k]
    _, _, s3, s4 = _sums(problem, U_t, k)
    grad3 = problem.D[k, others].sum(axis=0) / (s3 + 1.0) if others else np.zeros_like(problem.D[k, k])
    grad4 = problem.D_eve[k].sum(axis=0) / (s4 + 1.0)
    return Linearization(grad3=grad3, grad4=grad4, value3=float(np.log1p(s3)), value4=float(np.log1p(s4)), U_t=U_t)


def g_true(problem: AssignmentProblem, U: np.ndarray, k: int) -> float:
    """
    g(U_k) = eta_k (-T1 - T2 + T3 + T4).
    """
    t1, t2, t3, t4 = eval_T_terms(problem, U, k)
    return float(problem.weights[k] * (-t1 - t2 + t3 + t4))


def g_tilde(problem: AssignmentProblem, U: np.ndarray, k: int, linearization: Optional[Linearization] = None) -> float:
    """
    Convex model of g with T3 and T4 replaced by their tangents.
    """
    linearization = linearization or linearize_T34(problem, k)
    t1, t2, _, _ = eval_T_terms(problem, U, k)
    return float(problem.weights[k] * (-t1 - t2 + linearization.t3(U) + linearization.t4(U)))


class _LiftedSpace:
    """
    Free coordinates x = (u_1..u_R, U_ij for i<j<=R) of one user's lifted variable. The BS entries
    of u and U are fixed to one and U_ii = U_i,R+1 = u_i, so U(x) is affine in x.
    """
    def __init__(self, num_ris: int, r_assign: int):
        self.num_ris = num_ris
        self.r_assign = r_assign
        self.pairs = [(i, j) for i in range(num_ris) for j in range(i + 1, num_ris)]
        self.size = num_ris + len(self.pairs)
        n = num_ris + 1
        self.base = np.zeros((n, n))
        self.base[num_ris, num_ris] = 1.0
        basis = []
        for i in range(num_ris):
            E = np.zeros((n, n))
            E[i, i] = 1.0
            E[i, num_ris] = E[num_ris, i] = 1.0
            basis.append(E)
        for i, j in self.pairs:
            E = np.zeros((n, n))
            E[i, j] = E[j, i] = 1.0
            basis.append(E)
        self.basis = np.array(basis).reshape(self.size, n, n)
        self.G, self.h = self._linear_constraints()

    def _linear_constraints(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        Rows of G x <= h: the cardinality cut on u, then the row-sum cuts of U with vanishing rows dropped.
        """
        rows, bounds = [np.concatenate([np.ones(self.num_ris), np.zeros(len(self.pairs))])], [float(self.r_assign)]
        for j in range(self.num_ris):
            row = np.zeros(self.size)
            row[j] = -(self.r_assign - 1.0)
            for index, (a, b) in enumerate(self.pairs):
                if j in (a, b):
                    row[self.num_ris + index] = 1.0
            if np.any(row):
                rows.append(row)
                bounds.append(0.0)
        return np.array(rows), np.array(bounds)

    def matrix(self, x: np.ndarray) -> np.ndarray:
        return self.base + np.tensordot(x, self.basis, axes=1)

    def affine_trace(self, D: np.ndarray) -> Tuple[np.ndarray, float]:
        """
        Coefficients (a, c) with Re Tr(D U(x)) = a @ x + c.
        """
        return np.array([_trace(D, E) for E in self.basis]), _trace(D, self.base)

    def interior_point(self) -> np.ndarray:
        """
        Strictly feasible start: u_i = c and a common off-diagonal value between the PSD and row-sum limits.
        """
        R, r_assign = self.num_ris, self.r_assign
        c = 0.5 * min(1.0, r_assign / R)
        if R == 1:
            return np.array([c])
        lower = c ** 2 - (c - c ** 2) / (R - 1)
        upper = min(c, (r_assign - 1.0) * c / (R - 1))
        return np.concatenate([np.full(R, c), np.full(len(self.pairs), 0.5 * (lower + upper))])

    def slacks(self, x: np.ndarray) -> np.ndarray:
        return self.h - self.G @ x

    def is_strictly_feasible(self, x: np.ndarray) -> bool:
        if np.any(self.slacks(x) <= 0):
            return False
        try:
            np.linalg.cholesky(self.matrix(x))
        except np.linalg.LinAlgError:
            return False
        return True

    @property
    def barrier_degree(self) -> int:
        return self.num_ris + 1 + len(self.h)


def _user_objective(problem: AssignmentProblem, space: _LiftedSpace, k: int) -> Tuple[np.ndarray, float, np.ndarray, float, np.ndarray, float]:
    """
    Affine data of g~ for user k: eta*(-ln(a1 x + c1 + 1) - ln(a2 x + c2 + 1) + l x + l0).
    """
    others = [j for j in range(problem.num_users) if j != k]
    D_sum = problem.D[k].sum(axis=0)
    D_eve_others = problem.D_eve[k, others].sum(axis=0) if others else np.zeros_like(D_sum)
    a1, c1 = space.affine_trace(D_sum)
    a2, c2 = space.affine_trace(D_eve_others)
    linearization = linearize_T34(problem, k)
    a3, c3 = space.affine_trace(linearization.grad3)
    a4, c4 = space.affine_trace(linearization.grad4)
    offset = linearization.value3 + linearization.value4 - _trace(linearization.grad3, linearization.U_t) - _trace(linearization.grad4, linearization.U_t)
    return a1, c1 + 1.0, a2, c2 + 1.0, a3 + a4, c3 + c4 + offset


def _solve_user(problem: AssignmentProblem, k: int, tol: float) -> Tuple[np.ndarray, float, float, int]:
    """
    Log-barrier path following for one user's relaxed assignment.
    Returns:
        tuple: (x, objective, gap, newton steps).
    """
    space = _LiftedSpace(problem.num_ris, problem.r_assign)
    eta = float(problem.weights[k])
    a1, c1, a2, c2, lin, lin0 = _user_objective(problem, space, k)

    def objective(x: np.ndarray) -> float:
        return eta * (-np.log(a1 @ x + c1) - np.log(a2 @ x + c2) + lin @ x + lin0)

    def barrier_value(x: np.ndarray, t: float) -> float:
        sign, logdet = np.linalg.slogdet(space.matrix(x))
        return t * objective(x) - logdet - np.sum(np.log(space.slacks(x)))

    def derivatives(x: np.ndarray, t: float) -> Tuple[np.ndarray, np.ndarray]:
        s1, s2 = a1 @ x + c1, a2 @ x + c2
        grad = t * eta * (-a1 / s1 - a2 / s2 + lin)
        hess = t * eta * (np.outer(a1, a1) / s1 ** 2 + np.outer(a2, a2) / s2 ** 2)
        inverse = np.linalg.inv(space.matrix(x))
        projected = np.einsum("ab,mbc->mac", inverse, space.basis)  # U^-1 E_m
        grad = grad - np.einsum("maa->m", projected)
        hess = hess + np.einsum("mab,nba->mn", projected, projected)
        slack = space.slacks(x)
        grad = grad + space.G.T @ (1.0 / slack)
        hess = hess + space.G.T @ (space.G / slack[:, None] ** 2)
        return grad, hess

    x = space.interior_point()
    if not space.is_strictly_feasible(x):
        raise AssignmentSolverError("No strictly feasible starting point for the relaxed assignment.", last_iterate=x, diagnostics={"user": k})
    t, steps = 1.0, 0
    degree = space.barrier_degree
    while True:
        for _ in range(NEWTON_MAX_ITER):
            grad, hess = derivatives(x, t)
            try:
                direction = -linalg.solve(hess, grad, assume_a="pos")
            except (linalg.LinAlgError, ValueError) as error:
                raise AssignmentSolverError(
                    "Newton system of the barrier problem is singular.", last_iterate=x, diagnostics={"user": k, "t": t}
                ) from error
            decrement = float(-grad @ direction)
            if decrement / 2.0 <= NEWTON_TOL:
                break
            step, current = 1.0, barrier_value(x, t)
            stalled = False
            while not space.is_strictly_feasible(x + step * direction) or barrier_value(x + step * direction, t) > current - 0.25 * step * decrement:
                step *= 0.5
                if step < 1e-12:
                    stalled = True
                    break
            if stalled:
                # Rounding noise of t*objective dominates a tiny decrement near the center
                if decrement <= 1e-6 * max(1.0, abs(current)):
                    break
                raise AssignmentSolverError(
                    "Barrier line search lost feasibility.", last_iterate=x, diagnostics={"user": k, "t": t, "decrement": decrement}
                )
            x = x + step * direction
            steps += 1
        if degree / t < tol:
            break
        t *= BARRIER_GROWTH
    return x, float(objective(x)), degree / t, steps


def solve_lcr_sdp(problem: AssignmentProblem, tol: float = 1e-7) -> LcrSolution:
    """
    Solve every user's relaxed assignment with the log-barrier method.
    Args:
        problem (AssignmentProblem): Subproblem data.
        tol (float): Target duality gap estimate.
    Returns:
        LcrSolution: Relaxed (u_k, U_k) per user.
    """
    K, R = problem.num_users, problem.num_ris
    space = _LiftedSpace(R, problem.r_assign)
    u = np.ones((K, R + 1))
    U = np.zeros((K, R + 1, R + 1))
    total, gap, steps = 0.0, 0.0, 0
    for k in range(K):
        x, value, user_gap, user_steps = _solve_user(problem, k, tol)
        U[k] = space.matrix(x)
        u[k, :R] = x[:R]
        total += value
        gap = max(gap, user_gap)
        steps += user_steps
    logger.debug("Relaxed assignment solved (objective %.6e, gap %.2e, %s Newton steps)", total, gap, steps)
    return LcrSolution(u=u, U=U, objective=total, gap=gap, newton_iters=steps)


def lcr_residuals(u: np.ndarray, U: np.ndarray, r_assign: int) -> dict:
    """
    Residuals of the lifted constraints of one user; positive values are violations.
    """
    schur = np.block([[np.ones((1, 1)), u[None, :]], [u[:, None], U]])
    return {
        "diagonal": float(np.max(np.abs(np.diag(U) - u))),
        "last_entry": float(abs(u[-1] - 1.0)),
        "cardinality": float(np.sum(u) - (r_assign + 1)),
        "row_sums": float(np.max(np.sum(U, axis=0) - (r_assign + 1) * u)),
        "min_eigenvalue": float(linalg.eigvalsh(schur)[0]),
    }


def round_assignment(u: np.ndarray, r_assign: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Keep the BS entry and the r_assign largest reflect entries; ties go to the lower RIS index.
    Returns:
        tuple: Binary (R+1,) vector and the (R,) assignment column.
    """
    R = u.shape[0] - 1
    chosen = np.argsort(-np.asarray(u[:R], dtype=float), kind="stable")[:r_assign]
    binary = np.zeros(R + 1)
    binary[chosen] = 1.0
    binary[R] = 1.0
    return binary, binary[:R].copy()


def assignment_matrix(solution: LcrSolution, r_assign: int) -> np.ndarray:
    """
    Binary (R, K) assignment matrix from a relaxed solution.
    """
    columns: List[np.ndarray] = [round_assignment(u_k, r_assign)[1] for u_k in solution.u]
    return np.column_stack(columns)


def apply_assignment(channels: ChannelSet, assignment: np.ndarray) -> ChannelSet:
    """
    Mask the RIS-user and RIS-Eve channels with the assignment; direct and BS-RIS channels are untouched.
    """
    return channels.masked(assignment)
