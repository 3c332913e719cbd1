"""Deterministic fault injection.

A fault is (time, target, kind).  Targets are strings:

    node:<name>          kill a node; its units restart elsewhere
    task:<identity>      crash one task unit
    replica:<identity>   crash one replica
    helper:<identity>    crash one helper unit (alias of task targeting)
    api / lcm            crash a control-plane service
    store:<name>         metadata | kv | objects

Kinds: CRASH (lose memory / process) and OUTAGE (unavailable for a
window, nothing lost).  A fault whose target does not exist when it
fires is logged as a miss and otherwise ignored, so schedules stay
valid across wildly different runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from trainyard.errors import UnknownTarget
from trainyard.cluster.resources import Cluster
from trainyard.cluster.sim import Simulator

CRASH = "CRASH"
OUTAGE = "OUTAGE"


@dataclass(frozen=True)
class FaultSpec:
    at: float
    target: str
    kind: str = CRASH
    duration: float = 0.0  # OUTAGE only

    @classmethod
    def from_dict(cls, d: dict) -> "FaultSpec":
        spec = cls(
            at=float(d["at"]),
            target=str(d["target"]),
            kind=str(d.get("kind", CRASH)).upper(),
            duration=float(d.get("duration", 0.0)),
        )
        if spec.kind not in (CRASH, OUTAGE):
            raise UnknownTarget(f"unknown fault kind {spec.kind}")
        validate_spec(spec)
        return spec


def validate_spec(spec: FaultSpec) -> None:
    """Reject targets outside the grammar above; kind must fit the target."""
    kind, _, rest = spec.target.partition(":")
    if kind in ("node", "task", "replica", "helper") and rest:
        if spec.kind == OUTAGE:
            raise UnknownTarget(f"{spec.target} does not support OUTAGE")
        return
    if spec.target in ("api", "lcm"):
        if spec.kind == OUTAGE:
            raise UnknownTarget(f"{spec.target} does not support OUTAGE")
        return
    if kind == "store" and rest in ("metadata", "kv", "objects"):
        return
    raise UnknownTarget(f"unrecognized fault target {spec.target!r}")


class FaultInjector:
    """Schedules fault specs onto the simulator and routes them to handlers."""

    def __init__(self, sim: Simulator, cluster: Cluster):
        self.sim = sim
        self.cluster = cluster
        # name -> (crash_handler, outage_handler); registered by the platform
        self._services: dict[str, Callable[[], bool]] = {}
        self._stores: dict[str, tuple[Callable[[], None], Callable[[float], None]]] = {}

    def register_service(self, name: str, crash: Callable[[], bool]) -> None:
        self._services[name] = crash

    def register_store(self, name: str, crash: Callable[[], None],
                       outage: Callable[[float], None]) -> None:
        self._stores[name] = (crash, outage)

    def schedule(self, spec: FaultSpec) -> None:
        validate_spec(spec)
        self.sim.call_at(spec.at, lambda: self._fire(spec))

    def schedule_all(self, specs: list[FaultSpec]) -> None:
        for spec in specs:
            self.schedule(spec)

    def _fire(self, spec: FaultSpec) -> None:
        hit = self._route(spec)
        if hit:
            self.sim.log("fault_injected", spec.target,
                         f"kind={spec.kind} duration={spec.duration:.3f}")
        else:
            self.sim.log("fault_miss", spec.target, f"kind={spec.kind}")

    def _route(self, spec: FaultSpec) -> bool:
        kind, _, rest = spec.target.partition(":")
        if kind == "node":
            return self.cluster.crash_node(rest)
        if kind in ("task", "replica", "helper"):
            return self.cluster.crash_unit(rest)
        if spec.target in self._services:
            return self._services[spec.target]()
        if kind == "store":
            handlers = self._stores.get(rest)
            if handlers is None:
                return False
            crash, outage = handlers
            if spec.kind == CRASH:
                crash()
            else:
                outage(spec.duration)
            return True
        return False
