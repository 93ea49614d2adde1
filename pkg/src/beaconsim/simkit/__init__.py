"""Discrete-event engine, scenarios, metrics, experiments, and the CLI."""

from .engine import EventQueue, Simulation  # noqa: F401
from .experiments import ScenarioRun, run_scenario  # noqa: F401
from .metrics import BeaconRoundResult, Metrics, compute_metrics  # noqa: F401
from .scenario import ScenarioConfig, ScenarioError, load_scenario, parse_scenario  # noqa: F401
