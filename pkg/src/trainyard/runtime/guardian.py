"""Per-job guardian: deploys the job's resources, watches its learners,
reaches the verdict, and cleans up after itself.

The guardian assumes it can die between any two steps, so the protocol
is built on write-ahead intent: before creating anything it records in
the coordination store what it is about to create (ids are deterministic,
so they can be named before they exist).  A restarted guardian reads that
record, destroys whatever subset may exist, and deploys fresh.  The one
exception is the shared volume, which survives redeploys on purpose:
staged data, learner attempt counters, and logs live there, and only
final teardown removes it.

Progress marks in the phase record:

    volume/helpers/learners/policy/marker   mid-deploy, attempt counts
    deployed                                monitoring
    tearing_down                            destroys in progress, ids listed
    torn_down                               destroys done, terminal pending
"""

from __future__ import annotations

import json

from trainyard.cluster.sim import Payload
from trainyard.errors import DuplicateId, NotFound, Unschedulable
from trainyard.jobs import JobStatus, StatusRecord, aggregate_status, is_terminal, phase_rank
from trainyard.runtime import volume_layout as vl
from trainyard.runtime.context import HELPER_NAMES, JobCtx, retrying
from trainyard.runtime.helpers import (
    controller_payload,
    flush_logs,
    load_data_payload,
    log_collector_payload,
    store_results_payload,
)
from trainyard.runtime.learner import learner_payload


class DeployFailed(Exception):
    """One deployment attempt came apart; rollback and maybe retry."""


def guardian_payload(ctx: JobCtx) -> Payload:
    cfg = ctx.config

    meta = yield from retrying(lambda: ctx.metadata.get_job(ctx.job_id), cfg.retry_interval)
    if is_terminal(meta.current_status):
        yield from _ensure_teardown(ctx, meta.current_status)
        ctx.cluster.destroy_unit(ctx.guardian_id)
        return

    yield from _append(ctx, JobStatus.DEPLOYING, 0, "")

    record = yield from _read_phase(ctx)
    if record is not None and record["phase"] == "tearing_down":
        yield from _finish(ctx, JobStatus(record["terminal"]), record.get("detail", ""),
                           record["resource_ids"])
        return
    if record is not None and record["phase"] == "torn_down":
        yield from _append_terminal(ctx, JobStatus(record["terminal"]), record.get("detail", ""))
        ctx.cluster.destroy_unit(ctx.guardian_id)
        return

    if record is None or record["phase"] != "deployed":
        deployed = yield from _deploy_with_retries(ctx, record)
        if not deployed:
            return

    yield from _monitor(ctx)


# -- deployment ------------------------------------------------------------------


def _deploy_with_retries(ctx: JobCtx, record: dict | None) -> Payload:
    """Returns True once deployed; False when the job was failed instead."""
    sim = ctx.sim
    cfg = ctx.config
    attempt = 0
    if record is not None:
        # Evidence of an attempt that died mid-deploy: clear its remains.
        attempt = record["attempt"]
        sim.log("rollback", ctx.job_id, f"attempt={attempt} phase={record['phase']}")
        yield from _rollback(ctx, record["resource_ids"], keep_volume=True)

    while True:
        attempt += 1
        if attempt > cfg.max_deploy_attempts:
            yield from _finish(ctx, JobStatus.FAILED,
                               f"deploy failed after {cfg.max_deploy_attempts} attempts", [])
            return False
        try:
            yield from _deploy_once(ctx, attempt)
            return True
        except DeployFailed as exc:
            sim.log("deploy_failed", ctx.job_id, f"attempt={attempt} reason={exc}")
            record = yield from _read_phase(ctx)
            ids = record["resource_ids"] if record else []
            yield from _rollback(ctx, ids, keep_volume=True)
        except Unschedulable as exc:
            sim.log("deploy_failed", ctx.job_id, f"attempt={attempt} reason=unschedulable")
            record = yield from _read_phase(ctx)
            ids = record["resource_ids"] if record else []
            yield from _rollback(ctx, ids, keep_volume=True)
            yield from _finish(ctx, JobStatus.FAILED, f"unschedulable: {exc}", [])
            return False


def _deploy_once(ctx: JobCtx, attempt: int) -> Payload:
    sim = ctx.sim
    cfg = ctx.config
    manifest = ctx.manifest
    ids: list[str] = []

    def mark(phase: str) -> Payload:
        sim.log("phase_started", ctx.job_id, f"phase={phase} attempt={attempt}")
        yield from _write_phase(ctx, {"attempt": attempt, "phase": phase,
                                      "resource_ids": list(ids)})
        yield cfg.phase_step_time

    # volume: reused if an earlier attempt already made it
    ids.append(f"volume:{ctx.volume_id}")
    yield from mark("volume")
    try:
        ctx.cluster.create_volume(ctx.volume_id, tag=ctx.job_id)
    except DuplicateId:
        pass

    # helper group
    ids.extend(f"unit:{ctx.helper_id(name)}" for name in HELPER_NAMES)
    yield from mark("helpers")
    factories = {
        "load-data": lambda: load_data_payload(ctx),
        "store-results": lambda: store_results_payload(ctx),
        "log-collector": lambda: log_collector_payload(ctx),
        "controller": lambda: controller_payload(ctx),
    }
    for name in HELPER_NAMES:
        try:
            ctx.cluster.create_task(ctx.helper_id(name), tag=ctx.job_id,
                                    payload_factory=factories[name],
                                    restart_delay=cfg.helper_restart_delay)
        except DuplicateId:
            pass

    # learner replica set
    ids.extend(f"unit:{ctx.learner_id(i)}" for i in range(manifest.learners))
    yield from mark("learners")
    if attempt <= _scripted_deploy_failures(manifest):
        raise DeployFailed("scripted resource shortage")
    try:
        ctx.cluster.create_replicas(
            ctx.learner_set_id, tag=ctx.job_id, count=manifest.learners,
            gpus_each=manifest.gpus_per_learner,
            payload_factory=lambda i: (lambda: learner_payload(ctx, i)),
            restart_delay=cfg.learner_restart_delay)
    except DuplicateId:
        pass

    # network policy fencing the job's units off from other tenants
    ids.append(f"policy:{ctx.policy_id}")
    yield from mark("policy")
    try:
        ctx.cluster.create_net_policy(ctx.policy_id, tag=ctx.job_id)
    except DuplicateId:
        pass

    # deployed marker, then the durable "deployed" mark
    ids.append(f"marker:{ctx.deployed_key}")
    yield from mark("marker")
    yield from retrying(
        lambda: ctx.kv.put(ctx.deployed_key, json.dumps({"attempt": attempt}).encode()),
        cfg.retry_interval)
    yield from _write_phase(ctx, {"attempt": attempt, "phase": "deployed",
                                  "resource_ids": list(ids)})
    sim.log("deploy_done", ctx.job_id, f"attempt={attempt}")


def _scripted_deploy_failures(manifest) -> int:
    return int(manifest.extra_hyperparameters.get("deploy_fail_attempts", "0"))


def _rollback(ctx: JobCtx, resource_ids: list[str], keep_volume: bool) -> Payload:
    """Destroy recorded resources, newest first.  Every step tolerates the
    resource never having been created, so this is safe after a crash at
    any point of the deploy sequence."""
    for rid in reversed(resource_ids):
        kind, _, name = rid.partition(":")
        if kind == "unit":
            ctx.cluster.destroy_unit(name)
        elif kind == "volume":
            if not keep_volume:
                ctx.cluster.destroy_volume(name)
        elif kind == "policy":
            ctx.cluster.destroy_net_policy(name)
        elif kind == "marker":
            yield from retrying(lambda n=name: ctx.kv.delete(n), ctx.config.retry_interval)
    yield 0.0


# -- monitoring ---------------------------------------------------------------------


def _monitor(ctx: JobCtx) -> Payload:
    sim = ctx.sim
    cfg = ctx.config
    learners = ctx.manifest.learners

    meta = yield from retrying(lambda: ctx.metadata.get_job(ctx.job_id), cfg.retry_interval)
    last_status = meta.current_status
    notified = max((r.restart_count for r in meta.history.records), default=0)
    seen: dict[int, dict] = {}
    watch = yield from retrying(lambda: ctx.kv.watch(ctx.learner_key_prefix, 1),
                                cfg.retry_interval)
    storing = last_status is JobStatus.STORING

    while True:
        halt = yield from retrying(lambda: ctx.kv.get_or_none(ctx.halt_key), cfg.retry_interval)
        if halt is not None:
            record = yield from _read_phase(ctx)
            yield from _finish(ctx, JobStatus.HALTED, "halt requested",
                               record["resource_ids"] if record else [])
            return

        events = yield from retrying(watch.poll, cfg.retry_interval)
        for event in events:
            if event.kind != "PUT":
                continue
            index = _learner_index(ctx, event.key)
            if index is None:
                continue
            seen[index] = json.loads(event.value)

            statuses = [
                JobStatus(seen[i]["status"]) if i in seen else JobStatus.DEPLOYING
                for i in range(learners)
            ]
            agg = aggregate_status(statuses)
            total_rc = sum(r.get("restart_count", 0) for r in seen.values())

            if agg is JobStatus.FAILED:
                culprit = min(i for i in seen
                              if seen[i]["status"] == JobStatus.FAILED.value)
                detail = f"learner={culprit} exit={seen[culprit].get('exit_code', 'na')}"
                record = yield from _read_phase(ctx)
                yield from _finish(ctx, JobStatus.FAILED, detail,
                                   record["resource_ids"] if record else [])
                return

            if total_rc > notified and not is_terminal(agg):
                notice = agg if phase_rank(agg) >= phase_rank(last_status) else last_status
                yield from _append(ctx, notice, total_rc, "learner restarted")
                sim.log("restart_notice", ctx.job_id, f"total={total_rc}")
                notified = total_rc

            if phase_rank(agg) > phase_rank(last_status) and not storing:
                advance = agg if agg is not JobStatus.COMPLETED else JobStatus.STORING
                if phase_rank(advance) > phase_rank(last_status):
                    yield from _append(ctx, advance, notified, "")
                    last_status = advance
                if advance is JobStatus.STORING:
                    storing = True

        if storing:
            volume = ctx.cluster.get_volume(ctx.volume_id)
            marker = vl.read_json(volume, vl.STORE_RESULTS_MARKER)
            if marker is not None and marker.get("ok"):
                record = yield from _read_phase(ctx)
                yield from _finish(ctx, JobStatus.COMPLETED, "",
                                   record["resource_ids"] if record else [])
                return

        yield cfg.monitor_poll


def _learner_index(ctx: JobCtx, key: str) -> int | None:
    prefix = ctx.learner_key_prefix
    if not key.startswith(prefix) or not key.endswith("/status"):
        return None
    middle = key[len(prefix):-len("/status")]
    return int(middle) if middle.isdigit() else None


# -- teardown and terminal bookkeeping ---------------------------------------------


def _finish(ctx: JobCtx, terminal: JobStatus, detail: str, resource_ids: list[str]) -> Payload:
    """Drain, destroy everything recorded, then append the verdict."""
    sim = ctx.sim
    # The volume outlives redeploy rollbacks, so it may not be in the recorded
    # ids (e.g. all attempts exhausted); teardown must get it regardless.
    volume_entry = f"volume:{ctx.volume_id}"
    if volume_entry not in resource_ids:
        resource_ids = [volume_entry] + list(resource_ids)
    yield ctx.config.drain_grace  # let in-flight work settle before the flush
    yield from flush_logs(ctx)  # the collector itself may be mid-restart
    yield from _write_phase(ctx, {"phase": "tearing_down", "terminal": terminal.value,
                                  "detail": detail, "resource_ids": resource_ids,
                                  "attempt": 0})
    yield from _rollback(ctx, resource_ids, keep_volume=False)
    yield from retrying(lambda: ctx.kv.delete(ctx.halt_key), ctx.config.retry_interval)
    yield from _write_phase(ctx, {"phase": "torn_down", "terminal": terminal.value,
                                  "detail": detail, "resource_ids": [], "attempt": 0})
    sim.log("teardown_done", ctx.job_id, f"terminal={terminal.value}")
    yield from _append_terminal(ctx, terminal, detail)
    ctx.cluster.destroy_unit(ctx.guardian_id)


def _ensure_teardown(ctx: JobCtx, terminal: JobStatus) -> Payload:
    """Startup path when the job is already terminal: make cleanup stick."""
    record = yield from _read_phase(ctx)
    if record is None or record["phase"] == "torn_down":
        return
    yield from flush_logs(ctx)
    yield from _rollback(ctx, record["resource_ids"], keep_volume=False)
    yield from retrying(lambda: ctx.kv.delete(ctx.halt_key), ctx.config.retry_interval)
    yield from _write_phase(ctx, {"phase": "torn_down", "terminal": terminal.value,
                                  "detail": record.get("detail", ""), "resource_ids": [],
                                  "attempt": 0})
    ctx.sim.log("teardown_done", ctx.job_id, f"terminal={terminal.value}")


# -- small durable helpers ------------------------------------------------------------


def _read_phase(ctx: JobCtx) -> Payload:
    entry = yield from retrying(lambda: ctx.kv.get_or_none(ctx.phase_key),
                                ctx.config.retry_interval)
    return json.loads(entry.value) if entry is not None else None


def _write_phase(ctx: JobCtx, doc: dict) -> Payload:
    yield from retrying(
        lambda: ctx.kv.put(ctx.phase_key, json.dumps(doc, sort_keys=True).encode()),
        ctx.config.retry_interval)


def _append(ctx: JobCtx, status: JobStatus, restart_count: int, detail: str) -> Payload:
    record = StatusRecord(status, ctx.sim.now, detail=detail, restart_count=restart_count)
    yield from retrying(lambda: ctx.metadata.append_status(ctx.job_id, record),
                        ctx.config.retry_interval)
    ctx.sim.log("status_appended", ctx.job_id, f"status={status.value} rc={restart_count}")


def _append_terminal(ctx: JobCtx, terminal: JobStatus, detail: str) -> Payload:
    meta = yield from retrying(lambda: ctx.metadata.get_job(ctx.job_id),
                               ctx.config.retry_interval)
    rc = max((r.restart_count for r in meta.history.records), default=0)
    yield from _append(ctx, terminal, rc, detail)
