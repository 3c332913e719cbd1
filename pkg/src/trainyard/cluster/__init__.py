"""Simulation core: event loop, cluster resources, fault injection."""

from trainyard.cluster.faults import CRASH, OUTAGE, FaultInjector, FaultSpec
from trainyard.cluster.resources import Cluster, Node, Unit, UnitState, Volume
from trainyard.cluster.sim import Handle, Payload, Process, Simulator

__all__ = [
    "CRASH",
    "Cluster",
    "FaultInjector",
    "FaultSpec",
    "Handle",
    "Node",
    "OUTAGE",
    "Payload",
    "Process",
    "Simulator",
    "Unit",
    "UnitState",
    "Volume",
]
