"""Flow-level simulator of bounded service degradation for flexible traffic."""

from .core import (
    INF,
    FlowSpec,
    LinkSpec,
    PhaseConfig,
    Priority,
    Scenario,
    ScenarioError,
    Scheme,
    SchemeKind,
    SimConfig,
    Topology,
    validate_scenario,
)
from .engine import Engine, RunResult, run
from .scenario import ScenarioFile, load_scenario, parse_scenario

__all__ = [
    "INF", "FlowSpec", "LinkSpec", "PhaseConfig", "Priority", "Scenario", "ScenarioError",
    "Scheme", "SchemeKind", "SimConfig", "Topology", "validate_scenario",
    "Engine", "RunResult", "run", "ScenarioFile", "load_scenario", "parse_scenario",
]
__version__ = "0.1.0"
