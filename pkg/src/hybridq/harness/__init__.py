"""Scenario files, sweep execution and invariant suites behind the ``hybridq`` command."""

from .checks import SUITES, CheckResult, run_suite
from .config import ConfigError, Scenario, parse_scenario, serialize_scenario
from .runner import RunError, RunReport, run, write_outputs
from .schema import KINDS

__all__ = [
    "SUITES", "CheckResult", "run_suite", "ConfigError", "Scenario", "parse_scenario",
    "serialize_scenario", "RunError", "RunReport", "run", "write_outputs", "KINDS",
]
