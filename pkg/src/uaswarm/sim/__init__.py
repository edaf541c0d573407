"""Seeded discrete-event simulation harness and benchmark suites."""

from .engine import EventQueue, RunResult, Simulation, run
from .metrics import Metrics, alignment_error_stats, alignment_errors, count_collisions
from .outputs import read_rows, write_run
from .scenario import (SCHEMA_VERSION, AgentSpec, DriftSpec, Scenario, dump_scenario,
                       load_scenario, parse_scenario, scenario_schema)
from .suites import SUITES, run_suite, suite_cases
from .world import drift_transform, inject_drift, make_landmarks, scripted_pose, trefoil

__all__ = [
    "SCHEMA_VERSION", "SUITES", "AgentSpec", "DriftSpec", "EventQueue", "Metrics", "RunResult",
    "Scenario", "Simulation", "alignment_error_stats", "alignment_errors", "count_collisions",
    "drift_transform", "dump_scenario", "inject_drift", "load_scenario", "make_landmarks",
    "parse_scenario", "read_rows", "run", "run_suite", "scenario_schema", "scripted_pose",
    "suite_cases", "trefoil", "write_run",
]
