"""Trace-driven cluster simulator."""

from .config import ClusterConfig, LatencyModel, Policy, load_config
from .engine import SimReport, run

__all__ = ["ClusterConfig", "LatencyModel", "Policy", "SimReport", "load_config", "run"]
