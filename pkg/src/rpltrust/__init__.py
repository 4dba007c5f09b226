"""Deterministic RPL network simulator with selective-forwarding attacks and trust-based detection."""

from .network import Network, RunResult, simulate
from .scenario import ScenarioConfig, load_scenario

__all__ = ["Network", "RunResult", "ScenarioConfig", "load_scenario", "simulate"]
__version__ = "0.1.0"
