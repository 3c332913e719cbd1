"""Durable backing stores: record log, job metadata, coordination KV, objects."""

from trainyard.stores.kv import CoordKv, KvEntry, Watch, WatchEvent
from trainyard.stores.metadata import JobRecord, MetadataStore
from trainyard.stores.objects import BucketInfo, ObjectStore
from trainyard.stores.wal import RecordLog

__all__ = [
    "BucketInfo",
    "CoordKv",
    "JobRecord",
    "KvEntry",
    "MetadataStore",
    "ObjectStore",
    "RecordLog",
    "Watch",
    "WatchEvent",
]
