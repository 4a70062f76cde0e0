"""Simulation and evaluation of look-ahead holding control on a circular bus line."""

from .control import LookaheadHolding, NoControl, TerminalHolding, decide_nsla, make_strategy
from .engine import ReplicationResult, Simulation, SystemState, run_replication
from .experiment import Cell, run_cell, table_cells
from .headway import build_virtual_map, expected_dwell_fixed_point, headway_snapshot
from .metrics import aggregate, replication_metrics
from .scenario import Scenario, ScenarioError, load_scenario

__version__ = "0.1.0"

__all__ = [
    "Cell", "LookaheadHolding", "NoControl", "ReplicationResult", "Scenario", "ScenarioError",
    "Simulation", "SystemState", "TerminalHolding", "aggregate", "build_virtual_map",
    "decide_nsla", "expected_dwell_fixed_point", "headway_snapshot", "load_scenario",
    "make_strategy", "replication_metrics", "run_cell", "run_replication", "table_cells",
]
