"""Scenario loading, simulation orchestration, metrics output and the oracle suite."""

from .scenario import ParseError, Scenario, ValidationError, load_scenario, parse_scenario
from .simulation import SimulationError, SimulationResult, run
from .verify import verify
