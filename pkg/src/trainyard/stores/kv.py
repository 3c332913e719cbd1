"""Coordination key-value store with revisions and resumable watches.

Every successful put or delete bumps a global revision counter and is
recorded in the event history, so a watcher that crashed can reconnect
at its last delivered revision and see every change exactly once, in
order.  All history is retained by default; ``compact`` exists for
callers that want to bound it, and watchers that fall behind a compact
get a COMPACTED error rather than silently missing events.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass
from pathlib import Path

from trainyard.errors import Compacted, NotFound, StoreUnavailable
from trainyard.stores.wal import RecordLog


@dataclass(frozen=True)
class KvEntry:
    key: str
    value: bytes
    revision: int  # revision of the write that produced this value


@dataclass(frozen=True)
class WatchEvent:
    kind: str  # "PUT" or "DELETE"
    key: str
    value: bytes  # b"" for deletes
    revision: int


class Watch:
    """Cursor over the event history for one key prefix."""

    def __init__(self, store: "CoordKv", prefix: str, from_revision: int):
        self._store = store
        self.prefix = prefix
        self.next_revision = from_revision

    def poll(self, limit: int | None = None) -> list[WatchEvent]:
        """Events at or after the cursor, oldest first; advances the cursor."""
        events = self._store.events_since(self.next_revision, self.prefix, limit)
        if events:
            self.next_revision = events[-1].revision + 1
        else:
            self.next_revision = max(self.next_revision, self._store.revision + 1)
        return events


class CoordKv:
    """Crash-durable KV with global revisions; think etcd, radically less of it."""

    name = "kv"

    def __init__(self, path: str | Path, fsync: bool = False):
        self._path = Path(path)
        self._fsync = fsync
        self.available = True
        self._log = RecordLog(self._path, fsync=fsync)
        self._data: dict[str, KvEntry] = {}
        self._events: list[WatchEvent] = []
        self._revision = 0
        self._compacted_before = 1  # lowest revision still in history
        self._replay()

    # -- fault-injection surface -------------------------------------------

    def _guard(self) -> None:
        if not self.available:
            raise StoreUnavailable("coordination store unavailable")

    def crash(self) -> None:
        self.available = False
        self._data = {}
        self._events = []
        self._revision = 0
        self._log.close()

    def restore(self) -> None:
        self._log = RecordLog(self._path, fsync=self._fsync)
        self._replay()
        self.available = True

    def begin_outage(self) -> None:
        self.available = False

    def end_outage(self) -> None:
        self.available = True

    def close(self) -> None:
        """Release the log file handle; the store stays readable on disk."""
        self._log.close()

    def _replay(self) -> None:
        self._data = {}
        self._events = []
        self._revision = 0
        self._compacted_before = 1
        for rec in self._log.replay():
            op = rec["op"]
            if op == "put":
                value = base64.b64decode(rec["value"])
                self._apply_put(rec["key"], value)
            elif op == "delete":
                self._apply_delete(rec["key"])
            elif op == "compact":
                self._apply_compact(rec["up_to"])

    # -- mutations ----------------------------------------------------------

    def _apply_put(self, key: str, value: bytes) -> int:
        self._revision += 1
        self._data[key] = KvEntry(key=key, value=value, revision=self._revision)
        self._events.append(WatchEvent("PUT", key, value, self._revision))
        return self._revision

    def _apply_delete(self, key: str) -> int:
        self._revision += 1
        self._data.pop(key, None)
        self._events.append(WatchEvent("DELETE", key, b"", self._revision))
        return self._revision

    def _apply_compact(self, up_to: int) -> None:
        keep = [e for e in self._events if e.revision >= up_to]
        self._events = keep
        self._compacted_before = max(self._compacted_before, up_to)

    def put(self, key: str, value: bytes) -> int:
        self._guard()
        self._log.append({"op": "put", "key": key, "value": base64.b64encode(value).decode("ascii")})
        return self._apply_put(key, value)

    def delete(self, key: str) -> int:
        """Delete a key; deleting an absent key is a no-op (revision unchanged)."""
        self._guard()
        if key not in self._data:
            return self._revision
        self._log.append({"op": "delete", "key": key})
        return self._apply_delete(key)

    def compact(self, up_to: int) -> None:
        """Discard event history below ``up_to``; lagging watchers will error."""
        self._guard()
        if up_to <= self._compacted_before:
            return
        self._log.append({"op": "compact", "up_to": up_to})
        self._apply_compact(up_to)

    # -- reads ---------------------------------------------------------------

    @property
    def revision(self) -> int:
        return self._revision

    def get(self, key: str) -> KvEntry:
        self._guard()
        entry = self._data.get(key)
        if entry is None:
            raise NotFound(f"key {key}")
        return entry

    def get_or_none(self, key: str) -> KvEntry | None:
        self._guard()
        return self._data.get(key)

    def list_prefix(self, prefix: str) -> list[KvEntry]:
        self._guard()
        found = [e for e in self._data.values() if e.key.startswith(prefix)]
        found.sort(key=lambda e: e.key)
        return found

    def events_since(self, from_revision: int, prefix: str, limit: int | None = None) -> list[WatchEvent]:
        self._guard()
        if from_revision < self._compacted_before:
            raise Compacted(
                f"revision {from_revision} compacted (oldest retained: {self._compacted_before})"
            )
        if not self._events:
            return []
        # Every revision produced exactly one event and compaction drops a
        # prefix, so the list stays revision-consecutive and we can index in.
        start = max(0, from_revision - self._events[0].revision)
        out = []
        for event in self._events[start:]:
            if event.key.startswith(prefix):
                out.append(event)
                if limit is not None and len(out) >= limit:
                    break
        return out

    def watch(self, prefix: str, from_revision: int = 1) -> Watch:
        self._guard()
        if from_revision < self._compacted_before:
            raise Compacted(
                f"revision {from_revision} compacted (oldest retained: {self._compacted_before})"
            )
        return Watch(self, prefix, from_revision)
