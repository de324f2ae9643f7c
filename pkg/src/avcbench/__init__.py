"""Deep-RL workbench for autonomous voltage control on small transmission grids."""
from .grid import GridCase, load_case, load_fixture
from .powerflow import PowerFlowSolution, SolverSettings, VoltageClass, solve

__version__ = "0.1.0"

__all__ = ["GridCase", "PowerFlowSolution", "SolverSettings", "VoltageClass", "load_case",
           "load_fixture", "solve"]
