from trainyard.harness.checks import CHECKS, run_checks
from trainyard.harness.report import build_report, render_report, write_report
from trainyard.harness.scenario import (
    Scenario,
    Submission,
    build_platform_from,
    load_scenario,
    parse_scenario,
    run_scenario,
    run_scenario_capturing,
)

__all__ = [
    "CHECKS",
    "Scenario",
    "Submission",
    "build_platform_from",
    "build_report",
    "load_scenario",
    "parse_scenario",
    "render_report",
    "run_checks",
    "run_scenario",
    "run_scenario_capturing",
    "write_report",
]
