"""Simulated cluster: nodes, schedulable units, shared volumes.

Two unit flavors share one mechanism.  A *task* is run-to-completion:
the platform keeps restarting it after crashes until its payload returns,
and its completion is latched exactly once.  A *replica* is a stable
member of a replica set: an orderly payload return parks it as EXITED
(any failure detail is the payload's business, recorded on the shared
volume), while a crash brings it back under the same identity after its
restart delay.

Placement is first fit over nodes in index order.  Queued units are
served oldest first, but a small unit may jump past a stuck bigger one
(no head-of-line blocking).  A demand larger than the whole cluster is
rejected as unschedulable rather than queued forever.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from trainyard.errors import DuplicateId, NotFound, Unschedulable
from trainyard.cluster.sim import Payload, Process, Simulator


class UnitState(str, Enum):
    QUEUED = "QUEUED"
    RUNNING = "RUNNING"
    RESTART_WAIT = "RESTART_WAIT"
    EXITED = "EXITED"
    COMPLETED = "COMPLETED"


@dataclass
class Node:
    name: str
    gpu_capacity: int
    up: bool = True
    used: int = 0

    @property
    def free(self) -> int:
        return self.gpu_capacity - self.used if self.up else 0


class Unit:
    """One schedulable workload with a stable identity."""

    def __init__(self, identity: str, kind: str, tag: str, gpus: int,
                 payload_factory: Callable[[], Payload], restart_delay: float):
        self.identity = identity
        self.kind = kind  # "task" or "replica"
        self.tag = tag  # owning job id, for inventory and teardown
        self.gpus = gpus
        self.payload_factory = payload_factory
        self.restart_delay = restart_delay
        self.state = UnitState.QUEUED
        self.node: Node | None = None
        self.process: Process | None = None
        self.execution_count = 0
        self.completed_once = False
        self.queued_since = 0.0
        self.enqueue_seq = 0


@dataclass
class Volume:
    """Job-shared filesystem; whole-file writes are atomic replacements."""

    volume_id: str
    tag: str
    files: dict[str, bytes] = field(default_factory=dict)

    def write(self, path: str, data: bytes) -> None:
        self.files[path] = data

    def read(self, path: str) -> bytes:
        if path not in self.files:
            raise NotFound(f"volume file {path}")
        return self.files[path]

    def exists(self, path: str) -> bool:
        return path in self.files

    def list_dir(self, prefix: str) -> list[str]:
        return sorted(p for p in self.files if p.startswith(prefix))

    def delete(self, path: str) -> None:
        self.files.pop(path, None)


class Cluster:
    def __init__(self, sim: Simulator, node_gpus: list[int], node_restart_delay: float = 10.0):
        self.sim = sim
        self.nodes = [Node(name=f"node{i}", gpu_capacity=g) for i, g in enumerate(node_gpus)]
        self.node_restart_delay = node_restart_delay
        self.units: dict[str, Unit] = {}
        self.volumes: dict[str, Volume] = {}
        self._pending: list[Unit] = []
        self._enqueue_seq = 0
        self.net_policies: dict[str, str] = {}  # policy id -> tag

    # -- capacity ---------------------------------------------------------------

    def total_capacity(self) -> int:
        return sum(n.gpu_capacity for n in self.nodes)

    def _fits_anywhere_ever(self, gpus: int) -> bool:
        return any(gpus <= n.gpu_capacity for n in self.nodes)

    # -- volumes ----------------------------------------------------------------

    def create_volume(self, volume_id: str, tag: str) -> Volume:
        if volume_id in self.volumes:
            raise DuplicateId(f"volume {volume_id}")
        vol = Volume(volume_id=volume_id, tag=tag)
        self.volumes[volume_id] = vol
        self.sim.log("resource_created", volume_id, f"kind=volume tag={tag}")
        return vol

    def get_volume(self, volume_id: str) -> Volume:
        if volume_id not in self.volumes:
            raise NotFound(f"volume {volume_id}")
        return self.volumes[volume_id]

    def destroy_volume(self, volume_id: str) -> None:
        if self.volumes.pop(volume_id, None) is not None:
            self.sim.log("resource_destroyed", volume_id, "kind=volume")

    # -- network policies (bookkeeping only; isolation is not simulated) ---------

    def create_net_policy(self, policy_id: str, tag: str) -> None:
        if policy_id in self.net_policies:
            raise DuplicateId(f"policy {policy_id}")
        self.net_policies[policy_id] = tag
        self.sim.log("resource_created", policy_id, f"kind=policy tag={tag}")

    def destroy_net_policy(self, policy_id: str) -> None:
        if self.net_policies.pop(policy_id, None) is not None:
            self.sim.log("resource_destroyed", policy_id, "kind=policy")

    # -- units --------------------------------------------------------------------

    def create_task(self, identity: str, tag: str, payload_factory: Callable[[], Payload],
                    gpus: int = 0, restart_delay: float = 1.0) -> Unit:
        return self._create_unit(identity, "task", tag, gpus, payload_factory, restart_delay)

    def create_replicas(self, set_id: str, tag: str, count: int, gpus_each: int,
                        payload_factory: Callable[[int], Callable[[], Payload]],
                        restart_delay: float) -> list[Unit]:
        """Create ``count`` stable-identity replicas ``{set_id}-{i}``."""
        demand = count * gpus_each
        if demand > self.total_capacity() or not self._fits_anywhere_ever(gpus_each):
            raise Unschedulable(
                f"{set_id}: needs {count}x{gpus_each} gpus, cluster holds {self.total_capacity()}"
            )
        return [
            self._create_unit(f"{set_id}-{i}", "replica", tag, gpus_each,
                              payload_factory(i), restart_delay)
            for i in range(count)
        ]

    def _create_unit(self, identity: str, kind: str, tag: str, gpus: int,
                     payload_factory: Callable[[], Payload], restart_delay: float) -> Unit:
        if identity in self.units:
            raise DuplicateId(f"unit {identity}")
        if gpus and not self._fits_anywhere_ever(gpus):
            raise Unschedulable(f"{identity}: no node holds {gpus} gpus")
        unit = Unit(identity, kind, tag, gpus, payload_factory, restart_delay)
        self.units[identity] = unit
        self._enqueue(unit)
        self._schedule_pending()
        return unit

    def destroy_unit(self, identity: str) -> None:
        unit = self.units.pop(identity, None)
        if unit is None:
            return
        self._release(unit)
        if unit.process is not None:
            unit.process.kill()
            unit.process = None
        if unit in self._pending:
            self._pending.remove(unit)
        self.sim.log("resource_destroyed", identity, f"kind={unit.kind}")
        self._schedule_pending()

    def get_unit(self, identity: str) -> Unit:
        if identity not in self.units:
            raise NotFound(f"unit {identity}")
        return self.units[identity]

    def inventory(self, tag: str) -> list[str]:
        """Live resources owned by a job; the leak check after teardown."""
        names = [u.identity for u in self.units.values() if u.tag == tag]
        names += [v.volume_id for v in self.volumes.values() if v.tag == tag]
        names += [p for p, t in self.net_policies.items() if t == tag]
        return sorted(names)

    # -- placement ------------------------------------------------------------------

    def _enqueue(self, unit: Unit) -> None:
        unit.state = UnitState.QUEUED
        unit.queued_since = self.sim.now
        self._enqueue_seq += 1
        unit.enqueue_seq = self._enqueue_seq
        self._pending.append(unit)

    def _schedule_pending(self) -> None:
        # Oldest first, but smaller units may pass one that does not fit yet.
        placed_any = True
        while placed_any:
            placed_any = False
            for unit in sorted(self._pending, key=lambda u: u.enqueue_seq):
                node = self._first_fit(unit.gpus)
                if node is None:
                    continue
                self._pending.remove(unit)
                self._start_on(unit, node)
                placed_any = True
                break

    def _first_fit(self, gpus: int) -> Node | None:
        for node in self.nodes:
            if node.up and node.free >= gpus:
                return node
        return None

    def _start_on(self, unit: Unit, node: Node) -> None:
        node.used += unit.gpus
        unit.node = node
        unit.state = UnitState.RUNNING
        unit.execution_count += 1
        self.sim.log("unit_started", unit.identity,
                     f"node={node.name} execution={unit.execution_count}")
        unit.process = self.sim.spawn(
            unit.identity, unit.payload_factory(),
            on_exit=lambda proc, exc, u=unit: self._on_payload_exit(u, exc),
        )

    def _release(self, unit: Unit) -> None:
        if unit.node is not None:
            unit.node.used -= unit.gpus
            unit.node = None

    def _on_payload_exit(self, unit: Unit, exc: BaseException | None) -> None:
        if self.units.get(unit.identity) is not unit:
            return  # destroyed while its last event was in flight
        unit.process = None
        self._release(unit)
        if exc is not None:
            # A payload bug is indistinguishable from a container crash.
            self.sim.log("unit_error", unit.identity, f"error={type(exc).__name__}")
            self._schedule_restart(unit)
            self._schedule_pending()
            return
        if unit.kind == "task":
            unit.state = UnitState.COMPLETED
            if not unit.completed_once:
                unit.completed_once = True
                self.sim.log("unit_completed", unit.identity,
                             f"executions={unit.execution_count}")
        else:
            unit.state = UnitState.EXITED
            self.sim.log("unit_exited", unit.identity, "")
        self._schedule_pending()

    def _schedule_restart(self, unit: Unit) -> None:
        unit.state = UnitState.RESTART_WAIT
        self.sim.log("restart_scheduled", unit.identity, f"delay={unit.restart_delay:.3f}")

        def requeue() -> None:
            if self.units.get(unit.identity) is not unit:
                return
            if unit.state is not UnitState.RESTART_WAIT:
                return
            self._enqueue(unit)
            self._schedule_pending()

        self.sim.call_after(unit.restart_delay, requeue)

    # -- faults --------------------------------------------------------------------

    def crash_unit(self, identity: str) -> bool:
        """Kill a running unit's payload; it restarts after its delay.

        Returns False when there is nothing to crash (already waiting,
        finished, or never created), which callers log as a miss.
        """
        unit = self.units.get(identity)
        if unit is None or unit.state is not UnitState.RUNNING:
            return False
        assert unit.process is not None
        unit.process.kill()
        unit.process = None
        self._release(unit)
        self.sim.log("unit_crashed", identity, f"execution={unit.execution_count}")
        self._schedule_restart(unit)
        self._schedule_pending()
        return True

    def crash_node(self, name: str) -> bool:
        node = next((n for n in self.nodes if n.name == name), None)
        if node is None or not node.up:
            return False
        node.up = False
        self.sim.log("node_down", name, "")
        for unit in list(self.units.values()):
            if unit.node is node and unit.state is UnitState.RUNNING:
                assert unit.process is not None
                unit.process.kill()
                unit.process = None
                self._release(unit)
                self.sim.log("unit_crashed", unit.identity,
                             f"execution={unit.execution_count} cause=node")
                self._schedule_restart(unit)
        node.used = 0

        def back_up() -> None:
            node.up = True
            self.sim.log("node_up", name, "")
            self._schedule_pending()

        self.sim.call_after(self.node_restart_delay, back_up)
        return True
