import logging
import os

import numpy as np
from flask import Flask, jsonify, request

from data_preprocess.data_process import DataProcess
from main import OptimizationWorkflow, TestRunner
from model.errors import ScenarioError
from model.runner import SolverConfig

logger = logging.getLogger(__name__)


class SecrecyOptimizationAPI:
    # Specify variables
    default_input_path = "./data/input"
    default_output_path = "./data/output"
    default_config = "baseline_scenario.json"
    default_db = "./data/database.db"

    def __init__(self, data_processor: DataProcess, db_path: str = default_db):
        # Initialize Flask app
        self.app = Flask(__name__)
        self.data_processor = data_processor
        self.db_path = db_path
        # Register routes
        self.app.add_url_rule('/run-optimization', 'run_optimization', self.run_optimization, methods=['GET'])
        self.app.add_url_rule('/run-tests', 'run_tests', self.run_tests, methods=['GET'])
        self.app.add_url_rule('/sweep-results', 'sweep_results', self.sweep_results, methods=['GET'])

    def _optional_int(self, name: str):
        value = request.args.get(name)
        return None if value is None else int(value)

    def run_optimization(self):
        """
        Run one optimization and return the final WSSR, the assignment and the trace.
        URL (example): http://127.0.0.1:8080/run-optimization?config=baseline_scenario.json&seed=3&algorithm=assign
        """
        try:
            # Only configs shipped in the input folder can be selected
            config_name = os.path.basename(request.args.get('config', self.default_config))
            solver_config = SolverConfig(
                phase_bits=self._optional_int('phase_bits'),
                algorithm=request.args.get('algorithm', 'ao'),
                deterministic=request.args.get('deterministic', 'false').lower() == 'true',
            )
            optimization_workflow = OptimizationWorkflow(
                config_path=os.path.join(self.default_input_path, config_name),
                output_path=self.default_output_path,
                solver_config=solver_config,
                seed=self._optional_int('seed'),
                r_assign=self._optional_int('r_assign'),
                db_path=self.db_path,
            )
            optimization_workflow.validate_paths()
            result = optimization_workflow.run_optimization_workflow()
            trace = result.trace.to_frame()
            return jsonify({
                "final_wssr_nats": result.objective,
                "final_wssr_clamped_nats": result.clamped,
                "secrecy_rates_nats": np.asarray(result.rates, dtype=float).tolist(),
                "iterations": result.trace.iterations,
                "assignment": None if result.assignment is None else np.asarray(result.assignment, dtype=int).tolist(),
                "trace": trace.astype(object).where(trace.notna(), None).to_dict(orient="records"),
            })
        # If the run fails, return an error message
        except FileNotFoundError as e:
            return jsonify({"error": str(e)}), 404
        except (ScenarioError, ValueError) as e:
            return jsonify({"error": f"Invalid request: {str(e)}"}), 400
        except Exception as e:
            logger.exception("Optimization request failed")
            return jsonify({"error": f"An error occurred: {str(e)}"}), 500

    def run_tests(self):
        """
        Endpoint to run unit tests.
        Returns:
            JSON response with test results showing whether the test was successful.
        """
        try:
            if TestRunner.run_tests(exit_on_failure=False):
                return jsonify({"status": "success", "message": "All unit tests passed successfully."})
            return jsonify({"status": "failure", "message": "Some unit tests failed."}), 500
        except Exception as e:
            return jsonify({"error": f"Unit tests failed: {str(e)}"}), 500

    def sweep_results(self):
        """
        Return the archived sweep rows, optionally filtered by parameter value.
        URL (example): http://127.0.0.1:8080/sweep-results?param_value=10
        """
        if not os.path.exists(self.db_path):
            return jsonify({"error": f"Results database does not exist: {self.db_path}"}), 404
        try:
            self.data_processor.connect_db(db_dir=self.db_path)
            param_value = request.args.get('param_value')
            if param_value is None:
                rows = self.data_processor.get_data("SELECT * FROM sweep ORDER BY param_value, seed")
            else:
                rows = self.data_processor.get_data("SELECT * FROM sweep WHERE param_value = ? ORDER BY seed", (float(param_value),))
            return jsonify(rows.to_dict(orient="records"))
        except ValueError as e:
            return jsonify({"error": f"Invalid request: {str(e)}"}), 400
        except Exception as e:
            return jsonify({"error": f"An error occurred: {str(e)}"}), 500
        finally:
            self.data_processor.disconnect_db()

    def run(self):
        """
        Runs the Flask application.
        """
        self.app.run(debug=True, host='127.0.0.1', port=8080)


# Main function to start the app
if __name__ == '__main__':
    logging.basicConfig(level=logging.INFO)
    secrecy_optimization_api = SecrecyOptimizationAPI(data_processor=DataProcess())
    secrecy_optimization_api.run()
