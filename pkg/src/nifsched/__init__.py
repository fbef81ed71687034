"""User scheduling and power allocation on interference graphs for multi-cell mmWave networks."""

from .config import ConfigError, RadioConfig, RunConfig, load_config, parse_config
from .graph import InterferenceGraph, build_graph, lower_bound_n0
from .power import CsiState, InfeasibleError, joint_pipeline
from .scenario import NetworkScenario, build_scenario, rate_requirements_for_seed
from .scheduler import schedule_nif, schedule_rf_sufficient, validate_schedule
from .simulate import run_consecutive, summarize_metrics

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "CsiState", "InfeasibleError", "InterferenceGraph", "NetworkScenario",
    "RadioConfig", "RunConfig", "build_graph", "build_scenario", "joint_pipeline",
    "load_config", "lower_bound_n0", "parse_config", "rate_requirements_for_seed",
    "run_consecutive", "schedule_nif", "schedule_rf_sufficient", "summarize_metrics",
    "validate_schedule",
]
