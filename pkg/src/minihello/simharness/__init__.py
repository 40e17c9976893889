"""Deterministic in-process multi-host simulation for tests and demos."""

from .scenario import Scenario, ScenarioDeadlock, Transcript, run_scenario
from .scheduler import SimScheduler
from .topology import Topology, parse_topology, parse_topology_text

__all__ = ["Scenario", "ScenarioDeadlock", "SimScheduler", "Topology",
           "Transcript", "parse_topology", "parse_topology_text", "run_scenario"]
