import json
import logging
import os
from typing import Dict, List, Optional

import click
import numpy as np
import pandas as pd

from data_preprocess.scenario import Scenario
from model.network import bs_power
from model.runner import RunResult, ScheduleResult, SolverConfig

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ["param_value", "seed", "final_wssr_nats", "final_wssr_clamped_nats", "iters", "total_ms"]
SCHEDULE_COLUMNS = ["block", "final_wssr_nats", "final_wssr_clamped_nats", "iters", "csi_links", "total_ms"]
COMPARE_COLUMNS = ["scheme", "final_wssr_nats", "final_wssr_clamped_nats", "iters", "total_ms"]


def _complex_field(values: np.ndarray) -> dict:
    values = np.asarray(values, dtype=complex)
    return {
        "shape": list(values.shape),
        "real": values.real.ravel().tolist(),
        "imag": values.imag.ravel().tolist(),
    }


class OutputHandler:
    """
    Class to handle the output files of the optimization runs.
    """
    def __init__(self, output_path: str, file_names: Optional[Dict[str, str]] = None):
        """
        Initialize the OutputHandler.
        Args:
            output_path (str): Folder the output files are written to.
            file_names (dict): Optional overrides of the default file names, keyed by output kind.
        """
        self.output_path = output_path  # Folder the output files are written to
        self.file_names = {
            "trace": "trace.csv",
            "sweep": "sweep.csv",
            "result": "result.json",
            "schedule": "schedule.csv",
            "compare": "compare.csv",
            **(file_names or {}),
        }  # File name per output kind

    def path_of(self, kind: str) -> str:
        return os.path.join(self.output_path, self.file_names[kind])

    def save_trace(self, result: RunResult, file_name: Optional[str] = None) -> str:
        """
        Save the per-iteration trace to a CSV file.
        Args:
            result (RunResult): Run whose trace is written.
            file_name (str): Optional file name, `trace.csv` by default.
        Returns:
            str: Path of the written file.
        """
        path = os.path.join(self.output_path, file_name) if file_name else self.path_of("trace")
        result.trace.to_frame().to_csv(path, index=False)
        return path

    def save_result(self, scenario: Scenario, result: RunResult, config: SolverConfig) -> str:
        """
        Save the final W, mu and assignment as flat arrays with their dimensions.
        """
        payload = {
            "num_bs": scenario.num_bs,
            "num_ris": scenario.num_ris,
            "num_users": scenario.num_users,
            "antennas_per_bs": scenario.antennas_per_bs,
            "elements_per_ris": scenario.elements_per_ris,
            "algorithm": config.algorithm,
            "phase_bits": config.bits_for(scenario),
            "rng_seed": config.seed_for(scenario),
            "final_wssr_nats": result.objective,
            "final_wssr_clamped_nats": result.clamped,
            "secrecy_rates_nats": np.asarray(result.rates, dtype=float).tolist(),
            "bs_power_watts": bs_power(result.W, scenario.num_bs).tolist(),
            "iterations": result.trace.iterations,
            "converged": result.trace.converged,
            "W": _complex_field(result.W),
            "mu": _complex_field(result.mu),
            "assignment": None if result.assignment is None else {
                "shape": list(result.assignment.shape),
                "values": np.asarray(result.assignment, dtype=int).ravel().tolist(),
            },
        }
        path = self.path_of("result")
        with open(path, "w") as file:
            json.dump(payload, file, indent=2)
        return path

    def save_sweep(self, sweep: pd.DataFrame) -> str:
        path = self.path_of("sweep")
        sweep[SWEEP_COLUMNS].to_csv(path, index=False)
        return path

    def save_schedule(self, schedule: ScheduleResult) -> List[str]:
        """
        Save the schedule summary (one row per block, the large block as block 0) and every block trace.
        Returns:
            list: Paths of the written files.
        """
        runs = [(0, schedule.large_block, 0)] + [(block.block, block.result, block.csi_links) for block in schedule.small_blocks]
        summary = pd.DataFrame(
            [
                {
                    "block": block,
                    "final_wssr_nats": result.objective,
                    "final_wssr_clamped_nats": result.clamped,
                    "iters": result.trace.iterations,
                    "csi_links": csi_links,
                    "total_ms": result.trace.total_ms,
                }
                for block, result, csi_links in runs
            ],
            columns=SCHEDULE_COLUMNS,
        )
        paths = [self.path_of("schedule")]
        summary.to_csv(paths[0], index=False)
        for block, result, _ in runs:
            paths.append(self.save_trace(result, f"trace_block_{block}.csv"))
        return paths

    def save_comparison(self, results: Dict[str, RunResult]) -> str:
        comparison = pd.DataFrame(
            [
                {
                    "scheme": scheme,
                    "final_wssr_nats": result.objective,
                    "final_wssr_clamped_nats": result.clamped,
                    "iters": result.trace.iterations,
                    "total_ms": result.trace.total_ms,
                }
                for scheme, result in results.items()
            ],
            columns=COMPARE_COLUMNS,
        )
        path = self.path_of("compare")
        comparison.to_csv(path, index=False)
        return path

    def print_summary(self, result: RunResult):
        """
        Print the summary of an optimization run.
        """
        click.echo(f"Final WSSR: {result.objective:.6f} nats (clamped {result.clamped:.6f} nats) after {result.trace.iterations} iterations")
        if result.assignment is not None:
            click.echo(f"RIS assignment (rows RIS, columns users): {np.asarray(result.assignment, dtype=int).tolist()}")
