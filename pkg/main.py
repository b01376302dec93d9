import logging
import os
import sys
import unittest
from functools import wraps
from typing import List, Optional, Sequence

import click

from data_preprocess.data_process import DataProcess
from data_preprocess.scenario import Scenario, load_scenario
from model.errors import ScenarioError, SolverError
from model.output_handler import OutputHandler
from model.runner import SWEEP_PARAMETERS, RunResult, SecrecyRateOptimization, SolverConfig

logger = logging.getLogger(__name__)

DEFAULT_CONFIG = "./data/input/baseline_scenario.json"
DEFAULT_OUTPUT = "./data/output"
EXIT_SOLVER = 3


class OptimizationWorkflow:
    """
    High-level class to handle the secrecy rate optimization workflow:
        - Load the scenario and solver settings.
        - Run the requested optimization (single run, schedule, sweep or scheme comparison).
        - Save the outputs and optionally archive them in the results database.
    """
    def __init__(
        self,
        config_path: str,
        output_path: str,
        solver_config: SolverConfig,
        seed: Optional[int] = None,
        r_assign: Optional[int] = None,
        db_path: Optional[str] = None,
    ):
        self.config_path = config_path  # Scenario JSON file
        self.output_path = output_path  # Path to the output folder
        self.solver_config = solver_config.validate()  # Solver knobs
        self.seed = seed  # Overrides the scenario seed
        self.r_assign = r_assign  # Overrides the scenario R_assign
        self.db_path = db_path  # Optional SQLite archive
        self.output_handler = OutputHandler(output_path)

    def validate_paths(self):
        """
        Ensures that the scenario config exists. Create the output folder if it does not exist.
        """
        if not os.path.exists(self.config_path):
            raise FileNotFoundError(f"Scenario config does not exist: {self.config_path}")
        if not os.path.exists(self.output_path):
            os.makedirs(self.output_path)

    def load_scenario(self) -> Scenario:
        """
        Load the scenario and apply the command line overrides.
        """
        scenario = load_scenario(self.config_path)
        if self.seed is not None:
            scenario = scenario.with_seed(self.seed)
        if self.r_assign is not None:
            scenario = scenario.with_r_assign(self.r_assign)
        return scenario

    def run_optimization_workflow(self) -> RunResult:
        """
        Run the configured algorithm once and save trace.csv and result.json.
        """
        scenario = self.load_scenario()
        logger.info("Running %s on %s (seed %s)", self.solver_config.algorithm, self.config_path, self.solver_config.seed_for(scenario))
        try:
            result = SecrecyRateOptimization(scenario, self.solver_config).run()
        except SolverError as error:
            self.save_partial_trace(error)
            raise
        trace_path = self.output_handler.save_trace(result)
        result_path = self.output_handler.save_result(scenario, result, self.solver_config)
        self.archive_trace(trace_path, scenario.num_users)
        self.output_handler.print_summary(result)
        click.echo(f"Outputs written to {trace_path} and {result_path}")
        return result

    def run_schedule_workflow(self, n_small_blocks: int, use_random_assignment: bool = False):
        """
        Run the two-timescale schedule with the optimized or a random RIS assignment.
        """
        optimization = SecrecyRateOptimization(self.load_scenario(), self.solver_config)
        assignment = optimization.random_assignment() if use_random_assignment else None  # None lets the large block optimize it
        schedule = optimization.schedule(n_small_blocks, assignment)
        paths = self.output_handler.save_schedule(schedule)
        click.echo(f"Assignment: {schedule.assignment.astype(int).tolist()}")
        click.echo(f"Average small-block WSSR (clamped): {schedule.average_small_block_clamped():.6f} nats")
        click.echo(f"Outputs written to {', '.join(paths)}")
        return schedule

    def run_sweep_workflow(self, param: str, values: Sequence[float], seeds: Sequence[int], workers: int = 1):
        """
        Sweep one scenario parameter over values and seeds and save sweep.csv.
        """
        sweep = SecrecyRateOptimization(self.load_scenario(), self.solver_config).sweep(param, values, seeds, workers)
        path = self.output_handler.save_sweep(sweep)
        if self.db_path:
            data_process = DataProcess()
            data_process.connect_db(db_dir=self.db_path)
            data_process.archive_sweep(path)
            data_process.disconnect_db()
        for value, group in sweep.groupby("param_value", sort=True):
            click.echo(f"{param}={value}: mean WSSR (clamped) {group['final_wssr_clamped_nats'].mean():.6f} nats over {len(group)} seeds")
        click.echo(f"Sweep written to {path}")
        return sweep

    def run_compare_workflow(self, discrete_bits: int = 3):
        """
        Run every comparison scheme on the same channel draw and save compare.csv.
        """
        results = SecrecyRateOptimization(self.load_scenario(), self.solver_config).compare(discrete_bits)
        path = self.output_handler.save_comparison(results)
        for scheme, result in results.items():
            click.echo(f"{scheme:>12}: {result.clamped:.6f} nats")
        click.echo(f"Comparison written to {path}")
        return results

    def archive_trace(self, trace_path: str, num_users: int):
        if not self.db_path:
            return
        data_process = DataProcess()
        data_process.connect_db(db_dir=self.db_path)
        data_process.archive_trace(trace_path, num_users)
        data_process.disconnect_db()

    def save_partial_trace(self, error: SolverError):
        trace = error.diagnostics.get("partial_trace")
        if trace is None:
            return
        path = os.path.join(self.output_path, "trace.csv")
        trace.to_frame().to_csv(path, index=False)
        click.echo(f"Partial trace written to {path}", err=True)


class TestRunner:
    """
    Class to perform the unit tests.
    """
    @staticmethod
    def run_tests(exit_on_failure: bool = True) -> bool:
        """
        Executes all unit tests.
        Args:
            exit_on_failure (bool): Exit with status 1 when a test fails.
        Returns:
            bool: Whether all tests passed.
        """
        from unit_tests.unit_tests_runner import build_suite  # the suite imports this module

        click.echo("Running the unit tests...")
        result = unittest.TextTestRunner().run(build_suite())
        if not result.wasSuccessful():
            click.echo("Unit tests failed.")
            if exit_on_failure:
                sys.exit(1)
            return False
        click.echo("Unit tests passed successfully.")
        return True


def _parse_list(cast):
    def callback(ctx, param, value):
        if value is None:
            return None
        try:
            return [cast(item.strip()) for item in value.split(",") if item.strip()]
        except ValueError as error:
            raise click.BadParameter(f"expected a comma-separated list ({error})")
    return callback


def _handle_errors(command):
    """
    Map scenario problems to usage errors (exit 2) and solver failures to exit 3.
    """
    @wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except (ScenarioError, FileNotFoundError) as error:
            raise click.UsageError(str(error))
        except SolverError as error:
            click.echo(f"Solver failure: {error}", err=True)
            sys.exit(EXIT_SOLVER)
    return wrapper


def _solver_options(command):
    options = [
        click.option("--config", "config_path", default=DEFAULT_CONFIG, show_default=True, help="Scenario JSON file."),
        click.option("--seed", type=click.IntRange(min=0), default=None, help="Channel/initialization seed (overrides the config)."),
        click.option("--out", "output_path", default=DEFAULT_OUTPUT, show_default=True, help="Output folder."),
        click.option("--algorithm", type=click.Choice(["ao", "assign"]), default=None, help="Alternating optimization with or without RIS assignment."),
        click.option("--phase-bits", type=click.IntRange(min=0), default=None, help="Phase resolution in bits, 0 for continuous."),
        click.option("--r-assign", type=click.IntRange(min=1), default=None, help="Maximum RISs per user."),
        click.option("--epsilon", type=float, default=1e-3, show_default=True, help="AO stopping threshold in nats."),
        click.option("--max-ao-iters", type=click.IntRange(min=1), default=50, show_default=True),
        click.option("--deterministic", is_flag=True, help="Write zero wall times so repeated runs are byte-identical."),
        click.option("--db", "db_path", default=None, help="SQLite database to archive the CSV outputs in."),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def _build_workflow(config_path, seed, output_path, algorithm, phase_bits, r_assign, epsilon, max_ao_iters, deterministic, db_path, default_algorithm="ao"):
    solver_config = SolverConfig(
        epsilon=epsilon,
        max_ao_iters=max_ao_iters,
        phase_bits=phase_bits,
        algorithm=algorithm or default_algorithm,
        deterministic=deterministic,
    )
    workflow = OptimizationWorkflow(config_path, output_path, solver_config, seed=seed, r_assign=r_assign, db_path=db_path)
    workflow.validate_paths()
    return workflow


@click.group()
@click.option("--verbose", is_flag=True, help="Log solver progress at DEBUG level.")
def cli(verbose: bool):
    """
    Secrecy rate optimization for RIS-aided cell-free networks.
    """
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format="%(asctime)s %(name)s %(levelname)s: %(message)s")


@cli.command()
@_solver_options
@_handle_errors
def optimize(**options):
    """
    Jointly optimize beamformers and phase shifts (or the assignment too with --algorithm assign).
    """
    _build_workflow(**options).run_optimization_workflow()


@cli.command()
@_solver_options
@_handle_errors
def assign(**options):
    """
    Jointly optimize beamformers, phase shifts and the RIS-to-user assignment.
    """
    _build_workflow(**options, default_algorithm="assign").run_optimization_workflow()


@cli.command()
@_solver_options
@click.option("--n-blocks", type=click.IntRange(min=1), default=5, show_default=True, help="Small coherence blocks per large block.")
@click.option("--random-assignment", is_flag=True, help="Use a random RIS assignment instead of the optimized one.")
@_handle_errors
def schedule(n_blocks: int, random_assignment: bool, **options):
    """
    Two-timescale operation: fix the assignment once, then re-optimize in every small block.
    """
    _build_workflow(**options).run_schedule_workflow(n_blocks, random_assignment)


@cli.command()
@_solver_options
@click.option("--sweep-param", type=click.Choice(sorted(SWEEP_PARAMETERS)), required=True)
@click.option("--sweep-values", callback=_parse_list(float), required=True, help="Comma-separated parameter values.")
@click.option("--seeds", callback=_parse_list(int), default="0", show_default=True, help="Comma-separated channel seeds.")
@click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True, help="Worker processes.")
@_handle_errors
def sweep(sweep_param: str, sweep_values: List[float], seeds: List[int], workers: int, **options):
    """
    Sweep one scenario parameter over values and seeds.
    """
    if not sweep_values or not seeds:
        raise click.UsageError("--sweep-values and --seeds must not be empty.")
    _build_workflow(**options).run_sweep_workflow(sweep_param, sweep_values, seeds, workers)


@cli.command()
@_solver_options
@click.option("--discrete-bits", type=click.IntRange(min=1), default=3, show_default=True)
@_handle_errors
def compare(discrete_bits: int, **options):
    """
    Compare ideal, discrete, assignment, random-phase and no-RIS schemes on one channel draw.
    """
    _build_workflow(**options).run_compare_workflow(discrete_bits)


@cli.command()
def test():
    """
    Run the unit tests.
    """
    TestRunner.run_tests()


if __name__ == "__main__":
    cli()
