from trainyard.jobs.lifecycle import (
    JobStatus,
    LifecycleEvent,
    StatusHistory,
    StatusRecord,
    aggregate_status,
    is_terminal,
    legal_append,
    next_status,
    phase_rank,
)
from trainyard.jobs.manifest import MANIFEST_VERSION, JobManifest, StoreRef, parse_manifest

__all__ = [
    "JobStatus",
    "LifecycleEvent",
    "StatusHistory",
    "StatusRecord",
    "aggregate_status",
    "is_terminal",
    "legal_append",
    "next_status",
    "phase_rank",
    "JobManifest",
    "StoreRef",
    "parse_manifest",
    "MANIFEST_VERSION",
]
