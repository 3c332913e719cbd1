"""Bucketed object store backed by real files.

Layout on disk is one directory per bucket holding a ``meta.json`` with
the bucket's tenant and credential, plus one file per object whose name
is the percent-escaped object key.  Puts write a temp file and rename it
into place, so a concurrent (or post-crash) reader sees either the old
complete object or the new complete object, never a torn one.
"""

from __future__ import annotations

import json
import os
import urllib.parse
from dataclasses import dataclass
from pathlib import Path

from trainyard.errors import AccessDenied, DuplicateId, NotFound, StoreUnavailable

_META = "meta.json"


def _escape(key: str) -> str:
    return urllib.parse.quote(key, safe="")


def _unescape(name: str) -> str:
    return urllib.parse.unquote(name)


@dataclass
class BucketInfo:
    name: str
    tenant: str
    credential: str
    read_latency: float = 0.0  # consulted by simulated readers, not enforced here


class ObjectStore:
    """Crash-durable blob store; object data lives as plain files."""

    name = "objects"

    def __init__(self, root: str | Path):
        self._root = Path(root)
        self._root.mkdir(parents=True, exist_ok=True)
        self.available = True
        self._buckets: dict[str, BucketInfo] = {}
        self._versions: dict[tuple[str, str], int] = {}
        self._temp_seq = 0
        self._scan()

    # -- fault-injection surface -------------------------------------------

    def _guard(self) -> None:
        if not self.available:
            raise StoreUnavailable("object store unavailable")

    def crash(self) -> None:
        self.available = False
        self._buckets = {}
        self._versions = {}

    def restore(self) -> None:
        self._scan()
        self.available = True

    def begin_outage(self) -> None:
        self.available = False

    def end_outage(self) -> None:
        self.available = True

    def _scan(self) -> None:
        """Rebuild bucket registry from disk; drop any in-flight temp files."""
        self._buckets = {}
        self._versions = {}
        for bucket_dir in sorted(self._root.iterdir()):
            if not bucket_dir.is_dir():
                continue
            meta_path = bucket_dir / _META
            if not meta_path.exists():
                continue
            meta = json.loads(meta_path.read_text())
            info = BucketInfo(
                name=meta["name"],
                tenant=meta["tenant"],
                credential=meta["credential"],
                read_latency=meta.get("read_latency", 0.0),
            )
            self._buckets[info.name] = info
            for obj in bucket_dir.iterdir():
                if obj.name == _META:
                    continue
                if ".tmp-" in obj.name:
                    obj.unlink()  # torn write from a crash mid-put
                    continue
                self._versions[(info.name, _unescape(obj.name))] = 1

    # -- buckets --------------------------------------------------------------

    def create_bucket(self, name: str, tenant: str, credential: str, read_latency: float = 0.0) -> None:
        self._guard()
        if name in self._buckets:
            raise DuplicateId(f"bucket {name} already exists")
        info = BucketInfo(name=name, tenant=tenant, credential=credential, read_latency=read_latency)
        bucket_dir = self._root / name
        bucket_dir.mkdir(parents=True, exist_ok=True)
        meta = {
            "name": name,
            "tenant": tenant,
            "credential": credential,
            "read_latency": read_latency,
        }
        self._write_file(bucket_dir / _META, json.dumps(meta, sort_keys=True).encode())
        self._buckets[name] = info

    def bucket_info(self, name: str) -> BucketInfo | None:
        self._guard()
        return self._buckets.get(name)

    def _authorize(self, bucket: str, credential: str) -> BucketInfo:
        info = self._buckets.get(bucket)
        if info is None:
            raise NotFound(f"bucket {bucket}")
        if credential != info.credential:
            raise AccessDenied(f"credential rejected for bucket {bucket}")
        return info

    # -- objects ---------------------------------------------------------------

    def put_object(self, bucket: str, credential: str, key: str, data: bytes) -> int:
        self._guard()
        self._authorize(bucket, credential)
        path = self._root / bucket / _escape(key)
        self._write_file(path, data)
        version = self._versions.get((bucket, key), 0) + 1
        self._versions[(bucket, key)] = version
        return version

    def get_object(self, bucket: str, credential: str, key: str) -> bytes:
        self._guard()
        self._authorize(bucket, credential)
        path = self._root / bucket / _escape(key)
        if not path.exists():
            raise NotFound(f"object {bucket}/{key}")
        return path.read_bytes()

    def object_exists(self, bucket: str, credential: str, key: str) -> bool:
        self._guard()
        self._authorize(bucket, credential)
        return (self._root / bucket / _escape(key)).exists()

    def list_objects(self, bucket: str, credential: str, prefix: str = "") -> list[str]:
        self._guard()
        self._authorize(bucket, credential)
        keys = []
        for obj in (self._root / bucket).iterdir():
            if obj.name == _META or ".tmp-" in obj.name:
                continue
            key = _unescape(obj.name)
            if key.startswith(prefix):
                keys.append(key)
        return sorted(keys)

    def read_latency(self, bucket: str) -> float:
        self._guard()
        info = self._buckets.get(bucket)
        return info.read_latency if info else 0.0

    # -- internals ---------------------------------------------------------------

    def _write_file(self, path: Path, data: bytes) -> None:
        self._temp_seq += 1
        temp = path.parent / f"{path.name}.tmp-{self._temp_seq}"
        temp.write_bytes(data)
        os.replace(temp, path)

    def abandon_put(self, bucket: str, credential: str, key: str, data: bytes) -> None:
        """Write only the temp file, as a put that crashed before its rename.

        Exists for fault injection: the durable object must be untouched and
        the leftover temp must vanish on restore.
        """
        self._guard()
        self._authorize(bucket, credential)
        path = self._root / bucket / _escape(key)
        self._temp_seq += 1
        temp = path.parent / f"{path.name}.tmp-{self._temp_seq}"
        temp.write_bytes(data)
