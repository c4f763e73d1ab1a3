"""Packet-level simulator for DropTail, PIE, MADPIE and CoDel bottlenecks."""
from .aqm import DropCause, DropRecord
from .engine import Engine, SchedulingInPast
from .netsim import ConfigError, ScenarioConfig, Simulation, build_preset, preset_config, run_scenario

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DropCause",
    "DropRecord",
    "Engine",
    "ScenarioConfig",
    "SchedulingInPast",
    "Simulation",
    "build_preset",
    "preset_config",
    "run_scenario",
]
