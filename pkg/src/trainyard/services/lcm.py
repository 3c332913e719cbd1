"""Lifecycle manager: turns accepted jobs into exactly one guardian each.

The protocol against duplicate guardians is a durable claim written
before the create, plus tolerance of the create already having happened.
Any number of deliveries for the same job (the submit notification, the
reconciler, retries after crashes) collapse to one guardian:

    claim absent             write claim, create guardian
    claim present, unit too  done, duplicate delivery
    claim present, unit gone my own earlier crash; create the guardian now
    claim says halted        finish the halt instead (verdict may be owed)

The reconciler owns the gap nobody else covers: a job acknowledged as
PENDING whose deploy notification died with the API. Every cycle it
re-delivers any job still PENDING, which is safe because delivery is
idempotent.
"""

from __future__ import annotations

import json
from typing import Callable

from trainyard.cluster.resources import Cluster
from trainyard.cluster.sim import Payload, Simulator
from trainyard.errors import DuplicateId, NotFound, TrainyardError
from trainyard.jobs import JobManifest, JobStatus, StatusRecord, is_terminal
from trainyard.runtime.context import JobCtx
from trainyard.runtime.guardian import guardian_payload
from trainyard.services.hosts import ServiceHost
from trainyard.stores import CoordKv, MetadataStore


class LifecycleManager:
    def __init__(self, sim: Simulator, cluster: Cluster, kv: CoordKv,
                 metadata: MetadataStore, host: ServiceHost,
                 ctx_factory: Callable[[str, JobManifest], JobCtx],
                 reconcile_interval: float = 10.0):
        self.sim = sim
        self.cluster = cluster
        self.kv = kv
        self.metadata = metadata
        self.host = host
        self.ctx_factory = ctx_factory
        self.reconcile_interval = reconcile_interval
        host.own_loop("reconciler", self._reconciler)

    def deliver_deploy(self, job_id: str) -> str:
        """Idempotent deploy delivery; returns what it decided, for logs."""
        self.host.check()
        meta = self.metadata.get_job(job_id)
        ctx = self.ctx_factory(job_id, meta.manifest)
        claim = self.kv.get_or_none(ctx.claim_key)

        if claim is not None and json.loads(claim.value).get("halted"):
            # A halt won the race; make sure the verdict actually landed.
            if not is_terminal(meta.current_status):
                self.metadata.append_status(job_id, StatusRecord(
                    JobStatus.HALTED, self.sim.now, detail="halted before deploy"))
                self.sim.log("status_appended", job_id,
                             f"status={JobStatus.HALTED.value} rc=0")
            return "halted"
        if claim is not None and ctx.guardian_id in self.cluster.units:
            return "duplicate"
        if is_terminal(meta.current_status):
            return "terminal"

        if claim is None:
            self.kv.put(ctx.claim_key, json.dumps({"guardian": ctx.guardian_id}).encode())
        try:
            self.cluster.create_task(
                ctx.guardian_id, tag=job_id,
                payload_factory=lambda: guardian_payload(ctx),
                restart_delay=ctx.config.guardian_restart_delay)
        except DuplicateId:
            return "duplicate"
        self.sim.log("guardian_created", job_id, f"unit={ctx.guardian_id}")
        return "created"

    def _reconciler(self) -> Payload:
        """Sweep for PENDING jobs that never got their deploy delivered."""
        while True:
            yield self.reconcile_interval
            try:
                pending = [j for j in self.metadata.scan_jobs()
                           if j.current_status is JobStatus.PENDING]
            except TrainyardError:
                continue  # store is down; next cycle will see it
            for job in pending:
                try:
                    verdict = self.deliver_deploy(job.job_id)
                except (TrainyardError, NotFound):
                    continue
                if verdict == "created":
                    self.sim.log("reconciled", job.job_id, "")
