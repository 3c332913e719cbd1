"""Discrete-event simulator that drives everything in the platform.

Components are generator payloads: each ``yield <seconds>`` suspends the
component for that much simulated time, and whatever it does between
yields happens atomically within one event.  Crashing a component means
killing its generator between yields, which is exactly the process-crash
model the durability contracts are written against.

Two ways to advance time share one event queue:

* virtual mode runs events back to back, jumping the clock; fully
  deterministic given a seed and identical call order.
* wall mode paces the same queue against the real clock on a background
  thread, so external threads (an HTTP server) can inject work with
  ``call_sync``.
"""

from __future__ import annotations

import heapq
import random
import threading
import time
from typing import Callable, Generator, Iterable

Payload = Generator[float, None, None]


class Handle:
    """Cancellation token for one scheduled callback."""

    __slots__ = ("cancelled",)

    def __init__(self):
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True


class Process:
    """A running generator payload; killing it models a crash."""

    def __init__(self, sim: "Simulator", name: str, gen: Payload,
                 on_exit: Callable[["Process", BaseException | None], None] | None = None):
        self.sim = sim
        self.name = name
        self.gen = gen
        self.on_exit = on_exit
        self.alive = True
        self._pending: Handle | None = None

    def kill(self) -> None:
        """Stop the payload where it stands; on_exit is not invoked."""
        if not self.alive:
            return
        self.alive = False
        if self._pending is not None:
            self._pending.cancel()
            self._pending = None
        self.gen.close()

    def _step(self) -> None:
        if not self.alive:
            return
        self._pending = None
        try:
            delay = next(self.gen)
        except StopIteration:
            self.alive = False
            if self.on_exit is not None:
                self.on_exit(self, None)
            return
        except Exception as exc:  # payload bug or injected error
            self.alive = False
            if self.on_exit is not None:
                self.on_exit(self, exc)
            return
        if delay < 0:
            delay = 0.0
        self._pending = self.sim.call_after(delay, self._step)


class Simulator:
    def __init__(self, seed: int = 0):
        self.seed = seed
        self.rng = random.Random(seed)
        self.now = 0.0
        self.events: list[str] = []
        self._queue: list[tuple[float, int, Handle, Callable[[], None]]] = []
        self._seq = 0
        # wall-mode machinery, unused in virtual runs
        self._lock = threading.RLock()
        self._cond = threading.Condition(self._lock)
        self._thread: threading.Thread | None = None
        self._thread_stop = False
        self._rate = 1.0
        self._epoch = 0.0

    # -- scheduling -----------------------------------------------------------

    def call_at(self, t: float, fn: Callable[[], None]) -> Handle:
        handle = Handle()
        with self._lock:
            if t < self.now:
                t = self.now
            self._seq += 1
            heapq.heappush(self._queue, (t, self._seq, handle, fn))
            self._cond.notify_all()
        return handle

    def call_after(self, delay: float, fn: Callable[[], None]) -> Handle:
        return self.call_at(self.now + max(delay, 0.0), fn)

    def spawn(self, name: str, gen: Payload,
              on_exit: Callable[[Process, BaseException | None], None] | None = None,
              delay: float = 0.0) -> Process:
        proc = Process(self, name, gen, on_exit)
        proc._pending = self.call_after(delay, proc._step)
        return proc

    def log(self, kind: str, target: str, detail: str = "") -> None:
        self.events.append(f"t={self.now:.3f} kind={kind} target={target} detail={detail}")

    # -- virtual-time driving ---------------------------------------------------

    def _pop(self) -> tuple[float, Callable[[], None]] | None:
        while self._queue:
            t, _, handle, fn = heapq.heappop(self._queue)
            if handle.cancelled:
                continue
            return t, fn
        return None

    def step(self) -> bool:
        """Run the next event; False when the queue is drained."""
        popped = self._pop()
        if popped is None:
            return False
        self.now, fn = popped[0], popped[1]
        fn()
        return True

    def peek_time(self) -> float | None:
        while self._queue:
            if self._queue[0][2].cancelled:
                heapq.heappop(self._queue)
                continue
            return self._queue[0][0]
        return None

    def run_until(self, t: float) -> None:
        """Run every event scheduled at or before ``t``; clock lands on ``t``."""
        while True:
            nxt = self.peek_time()
            if nxt is None or nxt > t:
                break
            self.step()
        if self.now < t:
            self.now = t

    def run(self, stop_when: Callable[[], bool] | None = None,
            horizon: float | None = None) -> str:
        """Drive until the queue drains, the horizon passes, or the predicate
        turns true (checked between events).  Returns which one happened."""
        if stop_when is not None and stop_when():
            return "stopped"
        while True:
            nxt = self.peek_time()
            if nxt is None:
                return "drained"
            if horizon is not None and nxt > horizon:
                self.now = horizon
                return "horizon"
            self.step()
            if stop_when is not None and stop_when():
                return "stopped"

    # -- wall-clock driving -------------------------------------------------------

    def start_thread(self, rate: float = 1.0) -> None:
        """Pace the event queue against the real clock on a daemon thread.

        ``rate`` is simulated seconds per real second.
        """
        assert self._thread is None, "already running"
        self._rate = rate
        self._epoch = time.monotonic() - self.now / rate
        self._thread_stop = False
        self._thread = threading.Thread(target=self._wall_loop, name="sim-loop", daemon=True)
        self._thread.start()

    def stop_thread(self) -> None:
        with self._cond:
            self._thread_stop = True
            self._cond.notify_all()
        if self._thread is not None:
            self._thread.join()
            self._thread = None

    def _wall_now(self) -> float:
        return (time.monotonic() - self._epoch) * self._rate

    def _wall_loop(self) -> None:
        while True:
            with self._cond:
                if self._thread_stop:
                    return
                nxt = self.peek_time()
                wall = self._wall_now()
                if nxt is None:
                    self.now = wall
                    self._cond.wait(timeout=0.05)
                    continue
                if nxt > wall:
                    self.now = wall
                    self._cond.wait(timeout=min((nxt - wall) / self._rate, 0.05))
                    continue
                self.step()

    def call_sync(self, fn: Callable[[], object]) -> object:
        """Run ``fn`` inside the event loop and return its result.

        In virtual mode (no loop thread) the call runs inline, since tests
        drive the loop from the same thread.
        """
        if self._thread is None or threading.current_thread() is self._thread:
            return fn()
        done = threading.Event()
        box: dict[str, object] = {}

        def run() -> None:
            try:
                box["value"] = fn()
            except BaseException as exc:
                box["error"] = exc
            done.set()

        with self._cond:
            self.now = max(self.now, self._wall_now())
            self.call_at(self.now, run)
        done.wait()
        if "error" in box:
            raise box["error"]  # type: ignore[misc]
        return box.get("value")


def drain(sim: Simulator, gens: Iterable[Payload]) -> None:
    """Convenience for tests: spawn payloads and run the queue dry."""
    for i, gen in enumerate(gens):
        sim.spawn(f"proc{i}", gen)
    sim.run()
