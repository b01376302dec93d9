import logging
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from data_preprocess.channels import ASSIGNMENT_STREAM, INIT_STREAM, ChannelSet, make_generator, synthesize_channels
from data_preprocess.scenario import Scenario
from model.assignment import (
    apply_assignment,
    assignment_matrix,
    build_assignment_problem,
    full_assignment_point,
    round_assignment,
    solve_lcr_sdp,
)
from model.beamforming import build_bf_surrogate, solve_bf_qp
from model.errors import ScenarioError, SolverError
from model.network import AggregateChannels, bs_power, build_aggregates, wssr
from model.phase_shift import admm_solve, build_phase_quadratic, project_discrete

logger = logging.getLogger(__name__)

ALGORITHMS = ("ao", "assign")
SCHEMES = ("ideal", "discrete", "assign", "random_phase", "no_ris")


@dataclass(frozen=True)
class SolverConfig:
    """
    Knobs of the alternating optimization.
    Args:
        epsilon (float): Stop once the WSSR objective improves by at most this many nats.
        max_ao_iters (int): Cap on outer iterations.
        qp_tol (float): KKT tolerance of the beamforming QP.
        qp_max_iter (int): Iteration cap of the beamforming QP.
        admm_tol (float): Primal residual tolerance of the phase ADMM.
        admm_max_iter (int): Iteration cap of the phase ADMM.
        sdp_tol (float): Duality gap target of the relaxed assignment.
        phase_bits (int): Phase resolution; None uses the scenario value, 0 means continuous.
        algorithm (str): "ao" (beamformers and phases) or "assign" (also the RIS assignment).
        rng_seed (int): Seed; None uses the scenario seed.
        optimize_phases (bool): Keep the initial random phases when False.
        deterministic (bool): Report zero wall times so repeated runs write identical files.
    """
    epsilon: float = 1e-3
    max_ao_iters: int = 50
    qp_tol: float = 1e-8
    qp_max_iter: int = 5000
    admm_tol: float = 1e-7
    admm_max_iter: int = 2000
    sdp_tol: float = 1e-7
    phase_bits: Optional[int] = None
    algorithm: str = "ao"
    rng_seed: Optional[int] = None
    optimize_phases: bool = True
    deterministic: bool = False

    def validate(self) -> "SolverConfig":
        if self.epsilon <= 0 or min(self.qp_tol, self.admm_tol, self.sdp_tol) <= 0:
            raise ScenarioError("epsilon and solver tolerances must be strictly positive.")
        if self.max_ao_iters < 1:
            raise ScenarioError("max_ao_iters must be at least 1.")
        if self.algorithm not in ALGORITHMS:
            raise ScenarioError(f"Unknown algorithm '{self.algorithm}', expected one of {ALGORITHMS}.")
        if self.phase_bits is not None and self.phase_bits < 0:
            raise ScenarioError("phase_bits must be non-negative.")
        return self

    def bits_for(self, scenario: Scenario) -> int:
        return scenario.phase_bits if self.phase_bits is None else int(self.phase_bits)

    def seed_for(self, scenario: Scenario) -> int:
        return scenario.rng_seed if self.rng_seed is None else int(self.rng_seed)


@dataclass
class IterationTrace:
    """
    Per-iteration record of one alternating optimization run.
    """
    num_users: int
    num_bs: int
    initial_objective: float = 0.0
    initial_clamped: float = 0.0
    rows: List[dict] = field(default_factory=list)
    power_usage: List[np.ndarray] = field(default_factory=list)
    converged: bool = False
    qp_cap_hits: int = 0
    admm_cap_hits: int = 0
    lagrangian_increases: int = 0

    def record(self, objective: float, clamped: float, rates: np.ndarray, power: np.ndarray, admm_iters: int, qp_iters: int, sdp_gap: float, wall_ms: float):
        row = {"iter": len(self.rows) + 1, "wssr_nats": objective, "wssr_clamped_nats": clamped}
        row.update({f"rate_user_{k + 1}": float(rate) for k, rate in enumerate(rates)})
        row.update({"admm_iters": int(admm_iters), "qp_iters": int(qp_iters), "sdp_gap": float(sdp_gap), "wall_ms": float(wall_ms)})
        self.rows.append(row)
        self.power_usage.append(np.asarray(power, dtype=float))

    @property
    def iterations(self) -> int:
        return len(self.rows)

    @property
    def total_ms(self) -> float:
        return float(sum(row["wall_ms"] for row in self.rows))

    def objectives(self) -> np.ndarray:
        return np.array([self.initial_objective] + [row["wssr_nats"] for row in self.rows])

    def largest_decrease(self) -> float:
        """
        Largest drop of the objective between consecutive iterations (0 when monotone).
        """
        steps = np.diff(self.objectives())
        return float(max(-steps.min(initial=0.0), 0.0))

    def to_frame(self) -> pd.DataFrame:
        columns = ["iter", "wssr_nats", "wssr_clamped_nats"] + [f"rate_user_{k + 1}" for k in range(self.num_users)] + ["admm_iters", "qp_iters", "sdp_gap", "wall_ms"]
        return pd.DataFrame(self.rows, columns=columns)


@dataclass
class RunResult:
    """
    Final state of one optimization run.
    """
    W: np.ndarray
    mu: np.ndarray
    trace: IterationTrace
    objective: float
    clamped: float
    rates: np.ndarray
    assignment: Optional[np.ndarray] = None


@dataclass
class BlockResult:
    block: int
    result: RunResult
    csi_links: int


@dataclass
class ScheduleResult:
    """
    Outcome of the two-timescale schedule: one large block fixing the assignment, then small blocks.
    """
    assignment: np.ndarray
    large_block: RunResult
    small_blocks: List[BlockResult]

    def average_small_block_clamped(self) -> float:
        return float(np.mean([block.result.clamped for block in self.small_blocks]))


class _Stopwatch:
    def __init__(self, deterministic: bool):
        self.deterministic = deterministic
        self.start = time.perf_counter()

    def elapsed_ms(self) -> float:
        return 0.0 if self.deterministic else 1e3 * (time.perf_counter() - self.start)


@contextmanager
def _partial_trace(trace: IterationTrace):
    """
    Attach the trace recorded so far to any solver failure raised inside the block.
    """
    try:
        yield trace
    except SolverError as error:
        error.diagnostics["partial_trace"] = trace
        logger.error("Subproblem failure after %s AO iterations: %s", trace.iterations, error)
        raise


def initialize(scenario: Scenario, channels: ChannelSet, rng: Optional[np.random.Generator] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Random phases and per-user matched filters rescaled so every BS spends its full budget.
    Args:
        scenario (Scenario): Scenario of the channels.
        channels (ChannelSet): Channels to match.
        rng (np.random.Generator): Phase source, the scenario's initialization stream by default.
    Returns:
        tuple: (W0 of shape (K, M*B), mu0 of length N*R+1).
    """
    rng = rng or make_generator(scenario.rng_seed, 0, INIT_STREAM)
    aggregates = build_aggregates(channels, scenario)
    mu = np.ones(aggregates.phase_dim, dtype=complex)
    mu[:-1] = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, aggregates.phase_dim - 1))
    rows = aggregates.effective_user(mu)  # mu^H h_k per user
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    W = np.divide(rows.conj(), norms, out=np.zeros_like(rows), where=norms > 0)
    K, B = scenario.num_users, scenario.num_bs
    blocks = W.reshape(K, B, -1)
    power = np.sum(np.abs(blocks) ** 2, axis=(0, 2))
    for b in range(B):
        # Scale every BS to its full budget
        blocks[:, b, :] *= np.sqrt(scenario.power_budget[b] / power[b]) if power[b] > 0 else 0.0
    return blocks.reshape(K, -1), mu


def _optimize_phases(aggregates: AggregateChannels, W: np.ndarray, mu: np.ndarray, scenario: Scenario, config: SolverConfig, trace: IterationTrace) -> Tuple[np.ndarray, int]:
    quadratic = build_phase_quadratic(aggregates, W, mu, scenario.weights)
    mu_next, info = admm_solve(quadratic, mu, config.admm_tol, config.admm_max_iter)
    trace.admm_cap_hits += int(info["cap_hit"])
    trace.lagrangian_increases += info["lagrangian_increases"]
    bits = config.bits_for(scenario)
    if bits > 0:
        mu_next = project_discrete(mu_next, bits)
    return mu_next, info["iterations"]


def algorithm1(
    scenario: Scenario,
    channels: ChannelSet,
    config: SolverConfig,
    W0: Optional[np.ndarray] = None,
    mu0: Optional[np.ndarray] = None,
) -> RunResult:
    """
    Alternate the beamforming QP and the phase ADMM until the WSSR stops improving by more than epsilon.
    Args:
        scenario (Scenario): Scenario of the channels.
        channels (ChannelSet): Channels, already masked by any fixed assignment.
        config (SolverConfig): Solver knobs.
        W0 (np.ndarray): Optional warm start beamformers.
        mu0 (np.ndarray): Optional warm start phases.
    Returns:
        RunResult: Best state reached and the per-iteration trace.
    """
    config.validate()
    aggregates = build_aggregates(channels, scenario)
    if W0 is None or mu0 is None:
        W0, mu0 = initialize(scenario, channels, make_generator(config.seed_for(scenario), 0, INIT_STREAM))
    W, mu = np.array(W0, dtype=complex), np.array(mu0, dtype=complex)  # copies, the caller keeps its warm start
    if config.bits_for(scenario) > 0:
        mu = project_discrete(mu, config.bits_for(scenario))
    objective, clamped, rates = wssr(scenario, aggregates, W, mu)
    trace = IterationTrace(num_users=scenario.num_users, num_bs=scenario.num_bs, initial_objective=objective, initial_clamped=clamped)
    best = RunResult(W=W, mu=mu, trace=trace, objective=objective, clamped=clamped, rates=rates)

    with _partial_trace(trace):
        for iteration in range(1, config.max_ao_iters + 1):
            watch = _Stopwatch(config.deterministic)
            # Beamforming step at fixed phases
            surrogate = build_bf_surrogate(aggregates, W, mu, scenario.weights)
            W, qp_info = solve_bf_qp(surrogate, scenario.power_budget, config.qp_tol, config.qp_max_iter)
            trace.qp_cap_hits += int(qp_info["cap_hit"])  # the best iterate is kept even on a cap hit
            admm_iters = 0
            # Phase step at fixed beamformers
            if scenario.num_ris > 0 and config.optimize_phases:
                mu, admm_iters = _optimize_phases(aggregates, W, mu, scenario, config, trace)
            new_objective, clamped, rates = wssr(scenario, aggregates, W, mu)
            trace.record(new_objective, clamped, rates, bs_power(W, scenario.num_bs), admm_iters, qp_info["iterations"], float("nan"), watch.elapsed_ms())
            logger.debug("AO iteration %s: WSSR %.6f nats (clamped %.6f)", iteration, new_objective, clamped)
            if new_objective > best.objective:
                best = RunResult(W=W, mu=mu, trace=trace, objective=new_objective, clamped=clamped, rates=rates)
            improvement = new_objective - objective  # may be negative with discrete phases
            objective = new_objective
            if improvement <= config.epsilon:
                trace.converged = True
                break
    logger.info("AO finished after %s iterations: WSSR %.6f nats", trace.iterations, best.objective)
    return best


def algorithm2(scenario: Scenario, channels: ChannelSet, config: SolverConfig) -> RunResult:
    """
    Alternate beamformers, phases and the RIS-to-user assignment. The WSSR is evaluated on the channels
    masked by the current assignment; the best (W, mu, L) seen is returned.
    Args:
        scenario (Scenario): Scenario with at least one RIS.
        channels (ChannelSet): Unmasked channels.
        config (SolverConfig): Solver knobs.
    Returns:
        RunResult: Best state, with `assignment` holding the (R, K) binary matrix.
    """
    config.validate()
    if scenario.num_ris < 1:
        raise ScenarioError("The assignment algorithm needs at least one RIS.")
    R, K = scenario.num_ris, scenario.num_users
    full_aggregates = build_aggregates(channels, scenario)
    assignment = np.ones((R, K))
    U_t = np.repeat(full_assignment_point(R)[None], K, axis=0)
    aggregates = full_aggregates
    W, mu = initialize(scenario, channels, make_generator(config.seed_for(scenario), 0, INIT_STREAM))
    if config.bits_for(scenario) > 0:
        mu = project_discrete(mu, config.bits_for(scenario))
    objective, clamped, rates = wssr(scenario, aggregates, W, mu)
    trace = IterationTrace(num_users=K, num_bs=scenario.num_bs, initial_objective=objective, initial_clamped=clamped)
    # the all-ones start violates the per-user RIS limit, so only assigned iterates qualify as best
    best = None

    with _partial_trace(trace):
        for iteration in range(1, config.max_ao_iters + 1):
            watch = _Stopwatch(config.deterministic)
            # Beamforming step at fixed phases
            surrogate = build_bf_surrogate(aggregates, W, mu, scenario.weights)
            W, qp_info = solve_bf_qp(surrogate, scenario.power_budget, config.qp_tol, config.qp_max_iter)
            trace.qp_cap_hits += int(qp_info["cap_hit"])  # the best iterate is kept even on a cap hit
            admm_iters = 0
            if config.optimize_phases:  # a RIS is guaranteed here
                mu, admm_iters = _optimize_phases(aggregates, W, mu, scenario, config, trace)

            # Assignment step at fixed beamformers and phases
            problem = build_assignment_problem(full_aggregates.with_assignment_domain(mu), W, mu, scenario.weights, scenario.r_assign, U_t)
            solution = solve_lcr_sdp(problem, config.sdp_tol)
            assignment = assignment_matrix(solution, scenario.r_assign)
            U_t = np.stack([np.outer(binary, binary) for binary in (round_assignment(u_k, scenario.r_assign)[0] for u_k in solution.u)])
            aggregates = build_aggregates(apply_assignment(channels, assignment), scenario)

            new_objective, clamped, rates = wssr(scenario, aggregates, W, mu)
            trace.record(new_objective, clamped, rates, bs_power(W, scenario.num_bs), admm_iters, qp_info["iterations"], solution.gap, watch.elapsed_ms())
            logger.debug("Assignment iteration %s: WSSR %.6f nats, assignment %s", iteration, new_objective, assignment.astype(int).tolist())
            if best is None or new_objective > best.objective:
                best = RunResult(W=W, mu=mu, trace=trace, objective=new_objective, clamped=clamped, rates=rates, assignment=assignment)
            improvement = new_objective - objective  # may be negative with discrete phases
            objective = new_objective
            if improvement <= config.epsilon:
                trace.converged = True
                break
    logger.info("Assignment AO finished after %s iterations: WSSR %.6f nats", trace.iterations, best.objective)
    return best


def run_scenario(scenario: Scenario, config: SolverConfig, channels: Optional[ChannelSet] = None) -> RunResult:
    """
    Synthesize the channels (unless given) and run the configured algorithm.
    """
    if channels is None:
        channels = synthesize_channels(scenario, config.seed_for(scenario))
    if config.algorithm == "assign":
        return algorithm2(scenario, channels, config)
    return algorithm1(scenario, channels, config)


def random_assignment(scenario: Scenario, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    Uniformly drawn (R, K) assignment with exactly r_assign RISs per user.
    """
    rng = rng or make_generator(scenario.rng_seed, 0, ASSIGNMENT_STREAM)
    assignment = np.zeros((scenario.num_ris, scenario.num_users))
    for k in range(scenario.num_users):
        assignment[rng.choice(scenario.num_ris, size=scenario.r_assign, replace=False), k] = 1.0
    return assignment


def run_coherence_schedule(scenario: Scenario, config: SolverConfig, n_small_blocks: int, assignment: Optional[np.ndarray] = None) -> ScheduleResult:
    """
    Two-timescale operation. The large block draws full CSI and fixes the assignment (by `algorithm2` unless
    one is given); every small block redraws small-scale fading for the selected RIS links only and runs
    `algorithm1` warm-started from the previous block.
    Args:
        scenario (Scenario): Scenario with at least one RIS.
        config (SolverConfig): Solver knobs.
        n_small_blocks (int): Number of small blocks, at least one.
        assignment (np.ndarray): Optional fixed (R, K) assignment.
    Returns:
        ScheduleResult: Assignment, large-block run and per-small-block runs.
    """
    if n_small_blocks < 1:
        raise ScenarioError("At least one small block is required.")
    seed = config.seed_for(scenario)
    channels = synthesize_channels(scenario, seed, block=0)
    if assignment is None:
        large = algorithm2(scenario, channels, config)
        assignment = large.assignment
    else:
        large = algorithm1(scenario, apply_assignment(channels, assignment), config)
        large.assignment = assignment
    W, mu = large.W, large.mu
    blocks = []
    for block in range(1, n_small_blocks + 1):
        small = synthesize_channels(scenario, seed, block=block, reflect_mask=assignment.astype(bool))
        result = algorithm1(scenario, small, config, W0=W, mu0=mu)
        result.assignment = assignment
        W, mu = result.W, result.mu
        blocks.append(BlockResult(block=block, result=result, csi_links=small.drawn_reflect_links))
        logger.info("Small block %s: WSSR %.6f nats with %s reflect links estimated", block, result.objective, small.drawn_reflect_links)
    return ScheduleResult(assignment=assignment, large_block=large, small_blocks=blocks)


def run_schemes(scenario: Scenario, config: SolverConfig, discrete_bits: int = 3) -> Dict[str, RunResult]:
    """
    Run the comparison schemes on the same channel draw.
    """
    seed = config.seed_for(scenario)
    channels = synthesize_channels(scenario, seed)
    continuous = replace(config, phase_bits=0)
    results = {
        "ideal": algorithm1(scenario, channels, continuous),
        "discrete": algorithm1(scenario, channels, replace(config, phase_bits=discrete_bits)),
    }
    if scenario.num_ris > 0:
        results["assign"] = algorithm2(scenario, channels, continuous)
    results["random_phase"] = algorithm1(scenario, channels, replace(continuous, optimize_phases=False))
    bare = scenario.without_ris()
    results["no_ris"] = algorithm1(bare, synthesize_channels(bare, seed), continuous)
    return results


def compare_schemes(scenario: Scenario, config: SolverConfig, discrete_bits: int = 3) -> Dict[str, float]:
    """
    Final clamped WSSR of every comparison scheme.
    """
    return {scheme: result.clamped for scheme, result in run_schemes(scenario, config, discrete_bits).items()}


SWEEP_PARAMETERS: Dict[str, Callable[[Scenario, float], Scenario]] = {
    "power_dbm": lambda scenario, value: scenario.with_power_dbm(float(value)),
    "ris_elements": lambda scenario, value: scenario.with_ris_elements(int(value)),
    "user_line_x": lambda scenario, value: scenario.with_user_line(float(value)),
    "num_users": lambda scenario, value: scenario.with_num_users(int(value)),
    "r_assign": lambda scenario, value: scenario.with_r_assign(int(value)),
    "phase_bits": lambda scenario, value: scenario.with_phase_bits(int(value)),
}


def run_sweep_cell(scenario: Scenario, config: SolverConfig, param: str, value: float, seed: int) -> dict:
    """
    One (value, seed) cell of a sweep.
    """
    cell = SWEEP_PARAMETERS[param](scenario, value).with_seed(seed)
    watch = _Stopwatch(config.deterministic)
    result = run_scenario(cell, replace(config, rng_seed=None))
    return {
        "param_value": value,
        "seed": int(seed),
        "final_wssr_nats": result.objective,
        "final_wssr_clamped_nats": result.clamped,
        "iters": result.trace.iterations,
        "total_ms": watch.elapsed_ms(),
    }


def run_sweep(scenario: Scenario, config: SolverConfig, param: str, values: Sequence[float], seeds: Sequence[int], workers: int = 1) -> pd.DataFrame:
    """
    Run the configured algorithm for every (value, seed) pair.
    Args:
        scenario (Scenario): Base scenario.
        config (SolverConfig): Solver knobs.
        param (str): One of SWEEP_PARAMETERS.
        values (Sequence[float]): Parameter values.
        seeds (Sequence[int]): Channel seeds.
        workers (int): Worker processes; cells are independent.
    Returns:
        pd.DataFrame: One row per cell, sorted by (param_value, seed).
    """
    if param not in SWEEP_PARAMETERS:
        raise ScenarioError(f"Unknown sweep parameter '{param}', expected one of {sorted(SWEEP_PARAMETERS)}.")
    if not seeds or not values:
        raise ScenarioError("A sweep needs at least one value and one seed.")
    config.validate()
    cells = [(value, seed) for value in values for seed in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            rows = list(executor.map(run_sweep_cell, *zip(*[(scenario, config, param, value, seed) for value, seed in cells])))
    else:
        rows = [run_sweep_cell(scenario, config, param, value, seed) for value, seed in cells]
    frame = pd.DataFrame(rows, columns=["param_value", "seed", "final_wssr_nats", "final_wssr_clamped_nats", "iters", "total_ms"])
    return frame.sort_values(["param_value", "seed"], kind="mergesort").reset_index(drop=True)


class SecrecyRateOptimization:
    """
    Class representing the optimization of one scenario with a fixed set of solver settings.
    """

    def __init__(self, scenario: Scenario, solver_config: SolverConfig):
        """
        Initialize the SecrecyRateOptimization.
        Args:
            scenario (Scenario): The network layout, budgets and channel statistics.
            solver_config (SolverConfig): Tolerances, caps and the algorithm to run.
        """
        self.scenario = scenario  # Scenario being optimized
        self.solver_config = solver_config.validate()  # Solver knobs shared by every run
        self.seed = solver_config.seed_for(scenario)  # Channel and initialization seed

    def run(self, channels: Optional[ChannelSet] = None) -> RunResult:
        """
        Run the configured algorithm once.
        Args:
            channels (ChannelSet): Channels to optimize on, synthesized from the seed when omitted.
        Returns:
            RunResult: Best beamformers, phases and (for the assignment algorithm) the RIS assignment.
        """
        return run_scenario(self.scenario, self.solver_config, channels)

    def random_assignment(self) -> np.ndarray:
        # Drawn from its own stream so it never shifts the channel draws
        return random_assignment(self.scenario, make_generator(self.seed, 0, ASSIGNMENT_STREAM))

    def schedule(self, n_small_blocks: int, assignment: Optional[np.ndarray] = None) -> ScheduleResult:
        """
        Run the two-timescale schedule, optimizing the assignment on the large block unless one is given.
        """
        return run_coherence_schedule(self.scenario, self.solver_config, n_small_blocks, assignment)

    def compare(self, discrete_bits: int = 3) -> Dict[str, RunResult]:
        return run_schemes(self.scenario, self.solver_config, discrete_bits)

    def sweep(self, param: str, values: Sequence[float], seeds: Sequence[int], workers: int = 1) -> pd.DataFrame:
        return run_sweep(self.scenario, self.solver_config, param, values, seeds, workers)
