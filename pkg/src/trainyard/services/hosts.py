"""Crashable host wrapper for control-plane services.

A host owns its timers and background loops: crashing the host cancels
every pending timer (that is how an acknowledged-but-not-yet-delivered
notification gets dropped) and kills its loops.  Restoration brings the
loops back; one-shot timers stay lost, which is the whole point.
"""

from __future__ import annotations

from typing import Callable

from trainyard.cluster.sim import Handle, Payload, Process, Simulator
from trainyard.errors import ServiceUnavailable


class ServiceHost:
    def __init__(self, sim: Simulator, name: str, restart_delay: float):
        self.sim = sim
        self.name = name
        self.restart_delay = restart_delay
        self.up = True
        self._handles: list[Handle] = []
        self._procs: list[Process] = []
        self._loops: list[tuple[str, Callable[[], Payload]]] = []

    def check(self) -> None:
        if not self.up:
            raise ServiceUnavailable(f"{self.name} is down")

    def own_loop(self, name: str, factory: Callable[[], Payload]) -> None:
        """Register a background loop that lives and dies with the host."""
        self._loops.append((name, factory))
        if self.up:
            self._procs.append(self.sim.spawn(f"{self.name}.{name}", factory()))

    def call_after(self, delay: float, fn: Callable[[], None]) -> None:
        """Schedule work that is forgotten if the host crashes first."""

        def run() -> None:
            if handle in self._handles:
                self._handles.remove(handle)
            if self.up:
                fn()

        handle = self.sim.call_after(delay, run)
        self._handles.append(handle)

    def crash(self) -> bool:
        if not self.up:
            return False
        self.up = False
        self.sim.log("service_down", self.name, "")
        for handle in self._handles:
            handle.cancel()
        self._handles.clear()
        for proc in self._procs:
            proc.kill()
        self._procs.clear()
        self.sim.call_after(self.restart_delay, self._restore)
        return True

    def _restore(self) -> None:
        self.up = True
        self.sim.log("service_up", self.name, "")
        for name, factory in self._loops:
            self._procs.append(self.sim.spawn(f"{self.name}.{name}", factory()))
