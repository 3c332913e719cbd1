"""Checksummed append-only record log.

On-disk format (version 1), little-endian:

    [4-byte magic "TYL1"]
    repeated records:
        u32 payload length
        u32 crc32 of payload
        payload bytes (JSON document, utf-8)

Replay reads the longest valid prefix: a truncated or checksum-corrupt tail
record (torn write from a crash) is ignored, which matches the durability
contract that a write is durable only once fully on disk.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from pathlib import Path
from typing import Iterator

MAGIC = b"TYL1"
_HEADER = struct.Struct("<II")


class RecordLog:
    """Append-only JSON-record log with CRC framing.

    ``fsync=True`` forces an fsync per append for power-loss durability;
    the default relies on flushed process buffers, which is the crash model
    the simulator uses (component crash, not host power loss).
    """

    def __init__(self, path: str | Path, fsync: bool = False):
        self.path = Path(path)
        self.fsync = fsync
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fresh = not self.path.exists() or self.path.stat().st_size == 0
        self._fh = open(self.path, "ab")
        if fresh:
            self._fh.write(MAGIC)
            self._flush()

    def append(self, record: dict) -> None:
        payload = json.dumps(record, sort_keys=True, separators=(",", ":")).encode()
        self._fh.write(_HEADER.pack(len(payload), zlib.crc32(payload)))
        self._fh.write(payload)
        self._flush()

    def _flush(self) -> None:
        self._fh.flush()
        if self.fsync:
            os.fsync(self._fh.fileno())

    def replay(self) -> Iterator[dict]:
        """Yield every intact record in order, stopping at the first torn one."""
        self._fh.flush()
        with open(self.path, "rb") as fh:
            if fh.read(len(MAGIC)) != MAGIC:
                return
            while True:
                header = fh.read(_HEADER.size)
                if len(header) < _HEADER.size:
                    return
                length, crc = _HEADER.unpack(header)
                payload = fh.read(length)
                if len(payload) < length or zlib.crc32(payload) != crc:
                    return
                try:
                    yield json.loads(payload)
                except ValueError:
                    return

    def close(self) -> None:
        self._fh.close()
