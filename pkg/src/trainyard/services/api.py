"""User-facing API: submit, inspect, fetch logs, halt.

Ack-implies-durable is the submit contract: the 201 goes out only after
the job record is in the metadata store, and the deploy notification is
fired afterwards, asynchronously, precisely so that losing it (API crash,
LCM down) can never un-acknowledge the job.  Reads answer purely from
the stores, so they are correct straight after an API restart.
"""

from __future__ import annotations

import json

from trainyard.cluster.sim import Simulator
from trainyard.errors import (
    AccessDenied,
    NotFound,
    Terminal,
    TrainyardError,
    Unauthenticated,
)
from trainyard.jobs import JobStatus, StatusRecord, StoreRef, is_terminal, parse_manifest
from trainyard.services.hosts import ServiceHost
from trainyard.services.lcm import LifecycleManager
from trainyard.stores import CoordKv, JobRecord, MetadataStore, ObjectStore


class ApiService:
    def __init__(self, sim: Simulator, metadata: MetadataStore, kv: CoordKv,
                 objects: ObjectStore, lcm: LifecycleManager, host: ServiceHost,
                 tokens: dict[str, str]):
        self.sim = sim
        self.metadata = metadata
        self.kv = kv
        self.objects = objects
        self.lcm = lcm
        self.host = host
        self.tokens = dict(tokens)  # bearer token -> tenant

    # -- helpers -----------------------------------------------------------------

    def _auth(self, token: str | None) -> str:
        self.host.check()
        if token is None or token not in self.tokens:
            raise Unauthenticated("unknown or missing token")
        return self.tokens[token]

    def _owned_job(self, tenant: str, job_id: str) -> JobRecord:
        job = self.metadata.get_job(job_id)
        if job.tenant != tenant:
            raise AccessDenied(f"job {job_id} belongs to another tenant")
        return job

    def _check_bucket(self, tenant: str, ref: StoreRef, role: str) -> None:
        info = self.objects.bucket_info(ref.bucket)
        if info is None or info.tenant != tenant or info.credential != ref.credential:
            # One answer for missing bucket, foreign bucket, and bad
            # credential: nothing about other tenants' buckets leaks.
            raise AccessDenied(f"{role} bucket {ref.bucket!r} not accessible")

    @staticmethod
    def _summary(job: JobRecord) -> dict:
        return {
            "job_id": job.job_id,
            "name": job.manifest.name,
            "status": job.current_status.value,
            "created_at": job.created_at,
        }

    # -- operations ---------------------------------------------------------------

    def ping(self) -> dict:
        self.host.check()
        return {"ok": True}

    def submit(self, token: str | None, manifest_text: str,
               request_id: str | None = None) -> dict:
        tenant = self._auth(token)
        manifest = parse_manifest(manifest_text)
        self._check_bucket(tenant, manifest.data_store, "data")
        self._check_bucket(tenant, manifest.result_store, "result")

        if request_id:
            existing = self.metadata.lookup_request(request_id)
            if existing is not None:
                return self._summary(self.metadata.get_job(existing))

        job_id = f"j{self.metadata.job_count() + 1}"
        record = JobRecord(job_id=job_id, tenant=tenant, manifest=manifest,
                           created_at=self.sim.now)
        record.history.append(StatusRecord(JobStatus.PENDING, self.sim.now))
        self.metadata.put_job(record, request_id=request_id)
        self.sim.log("job_created", job_id, f"tenant={tenant} learners={manifest.learners}")

        # Fire-and-forget: dies with this host, and that is fine because the
        # reconciler redelivers anything still PENDING.
        self.host.call_after(0.0, lambda: self._notify(job_id))
        return self._summary(record)

    def _notify(self, job_id: str) -> None:
        try:
            self.lcm.deliver_deploy(job_id)
        except TrainyardError as exc:
            self.sim.log("notify_dropped", job_id, f"code={exc.code}")

    def get_status(self, token: str | None, job_id: str) -> dict:
        tenant = self._auth(token)
        job = self._owned_job(tenant, job_id)
        body = self._summary(job)
        body["history"] = [r.to_dict() for r in job.history.records]
        body["manifest"] = job.manifest.to_dict()
        return body

    def list_jobs(self, token: str | None) -> dict:
        tenant = self._auth(token)
        return {"jobs": [self._summary(j) for j in self.metadata.list_jobs(tenant)]}

    def get_logs(self, token: str | None, job_id: str,
                 from_line: int | None = None, to_line: int | None = None) -> dict:
        """Shipped training logs per learner, optionally sliced by 1-based
        inclusive line numbers."""
        tenant = self._auth(token)
        job = self._owned_job(tenant, job_id)
        ctx = self.lcm.ctx_factory(job_id, job.manifest)
        store = job.manifest.result_store
        out: dict[str, list[dict]] = {}
        for lid in ctx.learner_ids:
            try:
                raw = self.objects.get_object(store.bucket, store.credential,
                                              ctx.shipped_log_key(lid))
            except NotFound:
                out[lid] = []
                continue
            lines = raw.decode().splitlines()
            start = (from_line - 1) if from_line else 0
            end = to_line if to_line is not None else len(lines)
            out[lid] = [
                {"line": i + 1, "text": text}
                for i, text in enumerate(lines)
            ][max(start, 0):end]
        return {"job_id": job_id, "logs": out}

    def halt(self, token: str | None, job_id: str) -> dict:
        tenant = self._auth(token)
        job = self._owned_job(tenant, job_id)
        if is_terminal(job.current_status):
            raise Terminal(f"job {job_id} is already {job.current_status.value}")
        ctx = self.lcm.ctx_factory(job_id, job.manifest)
        claim = self.kv.get_or_none(ctx.claim_key)
        if claim is None or json.loads(claim.value).get("halted"):
            # Not claimed yet (or a previous halt died before the verdict):
            # stamp the claim so no guardian ever starts, then settle it.
            if claim is None:
                self.kv.put(ctx.claim_key, json.dumps({"halted": True}).encode())
            self.metadata.append_status(job_id, StatusRecord(
                JobStatus.HALTED, self.sim.now, detail="halted before deploy"))
            self.sim.log("halt_requested", job_id, "stage=preclaim")
        else:
            self.kv.put(ctx.halt_key, json.dumps({"requested_at": self.sim.now}).encode())
            self.sim.log("halt_requested", job_id, "stage=deployed")
        return {"job_id": job_id, "halting": True}
