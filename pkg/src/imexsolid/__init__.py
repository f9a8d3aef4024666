"""Semi-implicit BDF2 finite element solver for nearly and fully incompressible elastodynamics."""

from .bench import Scenario, ScenarioName, scenario
from .fem import FEModel, Loads, Scheme, TimeState
from .integrators import SchemeConfig, SimulationAborted, SolverConfig, Startup, run_simulation
from .material import INFINITE, MaterialParams, VolModel

__all__ = [
    "INFINITE", "FEModel", "Loads", "MaterialParams", "Scenario", "ScenarioName", "Scheme",
    "SchemeConfig", "SimulationAborted", "SolverConfig", "Startup", "TimeState", "VolModel",
    "run_simulation", "scenario",
]
