class RisSecrecyError(Exception):
    """
    Base class for all errors raised by the RIS secrecy optimization model.
    """


class ScenarioError(RisSecrecyError, ValueError):
    """
    Invalid scenario, configuration file or domain input (e.g. a non-positive distance).
    """


class SolverError(RisSecrecyError, RuntimeError):
    """
    A numerical subproblem solver failed.
    Args:
        message (str): Human readable description.
        diagnostics (dict): Solver state useful to reproduce the failure.
    """
    def __init__(self, message: str, diagnostics: dict = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class BeamformingSolverError(SolverError):
    """
    The beamforming QP could not be solved (e.g. its quadratic form is not PSD).
    """


class AssignmentSolverError(SolverError):
    """
    The LCR barrier method lost feasibility along the central path.
    Args:
        message (str): Human readable description.
        last_iterate (object): Last strictly feasible iterate reached.
        diagnostics (dict): Solver state useful to reproduce the failure.
    """
    def __init__(self, message: str, last_iterate=None, diagnostics: dict = None):
        super().__init__(message, diagnostics)
        self.last_iterate = last_iterate
