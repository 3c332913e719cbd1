"""Durable job-metadata and status-history store.

This is the platform's source of truth for everything users read: job
records, current status, and the append-only status history.  State is
kept in memory and every mutation is written to a checksummed record log
first, so an acknowledged write survives a crash/replay cycle.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

from trainyard.errors import DuplicateId, NotFound, StoreUnavailable
from trainyard.jobs import JobManifest, JobStatus, StatusHistory, StatusRecord, is_terminal
from trainyard.stores.wal import RecordLog


@dataclass
class JobRecord:
    job_id: str
    tenant: str
    manifest: JobManifest
    created_at: float
    history: StatusHistory = field(default_factory=StatusHistory)

    @property
    def current_status(self) -> JobStatus:
        status = self.history.current
        assert status is not None, "a job record always has at least one status"
        return status

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "tenant": self.tenant,
            "manifest": self.manifest.to_dict(),
            "created_at": self.created_at,
            "history": [r.to_dict() for r in self.history.records],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "JobRecord":
        rec = cls(
            job_id=d["job_id"],
            tenant=d["tenant"],
            manifest=JobManifest.from_dict(d["manifest"]),
            created_at=d["created_at"],
        )
        for r in d["history"]:
            rec.history.records.append(StatusRecord.from_dict(r))
        return rec


class MetadataStore:
    """Crash-durable job store; writes are acked only once logged."""

    name = "metadata"

    def __init__(self, path: str | Path, fsync: bool = False):
        self._path = Path(path)
        self._fsync = fsync
        self.available = True
        self._log = RecordLog(self._path, fsync=fsync)
        self._jobs: dict[str, JobRecord] = {}
        self._requests: dict[str, str] = {}  # request_id -> job_id
        self._replay()

    # -- fault-injection surface -------------------------------------------

    def _guard(self) -> None:
        if not self.available:
            raise StoreUnavailable("metadata store unavailable")

    def crash(self) -> None:
        """Drop all in-memory state; only the log survives."""
        self.available = False
        self._jobs = {}
        self._requests = {}
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
        self._jobs = {}
        self._requests = {}
        for rec in self._log.replay():
            if rec["op"] == "put_job":
                job = JobRecord.from_dict(rec["job"])
                self._jobs[job.job_id] = job
                if rec.get("request_id"):
                    self._requests[rec["request_id"]] = job.job_id
            elif rec["op"] == "append_status":
                job = self._jobs.get(rec["job_id"])
                if job is not None:
                    job.history.records.append(StatusRecord.from_dict(rec["record"]))

    # -- operations ---------------------------------------------------------

    def put_job(self, record: JobRecord, request_id: str | None = None) -> None:
        self._guard()
        if record.job_id in self._jobs:
            raise DuplicateId(f"job {record.job_id} already exists")
        if not record.history.records:
            raise ValueError("job record must carry an initial status")
        self._log.append({"op": "put_job", "job": record.to_dict(), "request_id": request_id})
        self._jobs[record.job_id] = copy.deepcopy(record)
        if request_id:
            self._requests[request_id] = record.job_id

    def lookup_request(self, request_id: str) -> str | None:
        """Job id previously created for this request id, if any."""
        self._guard()
        return self._requests.get(request_id)

    def append_status(self, job_id: str, record: StatusRecord) -> None:
        """Append one history entry; idempotent by (status, restart_count).

        Terminal statuses are idempotent by status alone: a writer retrying
        its final verdict after a crash may carry a different restart count,
        and the verdict must still land exactly once.
        """
        self._guard()
        job = self._jobs.get(job_id)
        if job is None:
            raise NotFound(f"job {job_id}")
        if job.history.has_entry(record.status, record.restart_count):
            return  # duplicate delivery of the same transition
        if is_terminal(record.status) and any(
            r.status is record.status for r in job.history.records
        ):
            return
        probe = StatusHistory(records=list(job.history.records))
        probe.append(record)  # raises IllegalTransition on a bad move
        self._log.append({"op": "append_status", "job_id": job_id, "record": record.to_dict()})
        job.history.records.append(record)

    def get_job(self, job_id: str) -> JobRecord:
        self._guard()
        job = self._jobs.get(job_id)
        if job is None:
            raise NotFound(f"job {job_id}")
        return copy.deepcopy(job)

    def has_job(self, job_id: str) -> bool:
        self._guard()
        return job_id in self._jobs

    def list_jobs(self, tenant: str) -> list[JobRecord]:
        self._guard()
        mine = [j for j in self._jobs.values() if j.tenant == tenant]
        mine.sort(key=lambda j: (j.created_at, j.job_id))
        return [copy.deepcopy(j) for j in mine]

    def scan_jobs(self) -> list[JobRecord]:
        """Every job, all tenants; for internal control loops only."""
        self._guard()
        every = sorted(self._jobs.values(), key=lambda j: (j.created_at, j.job_id))
        return [copy.deepcopy(j) for j in every]

    def job_count(self) -> int:
        self._guard()
        return len(self._jobs)
