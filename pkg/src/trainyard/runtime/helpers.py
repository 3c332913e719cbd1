"""Helper payloads that run alongside the learners.

Each helper is deliberately stateless across restarts: whatever it needs
to continue, it re-derives from the shared volume or the stores it
writes to.  That is the whole crash-safety story and it keeps every one
of them safe to restart at any moment.
"""

from __future__ import annotations

import json

from trainyard.cluster.sim import Payload
from trainyard.errors import NotFound
from trainyard.jobs import JobStatus
from trainyard.runtime import volume_layout as vl
from trainyard.runtime.context import JobCtx, retrying
from trainyard.runtime.learner import EXIT_OK


def controller_payload(ctx: JobCtx) -> Payload:
    """Relay learner state from the volume into the coordination store.

    Publishes one record per learner at ``.../learners/<i>/status`` whenever
    what the volume says differs from what was last published.  The cache of
    published values is in memory only; after a restart everything gets
    republished, which watchers must (and do) treat as old news.
    """
    volume = ctx.cluster.get_volume(ctx.volume_id)
    published: dict[int, str] = {}
    while True:
        for index in range(ctx.manifest.learners):
            record = _learner_record(ctx, volume, index)
            if record is None:
                continue
            encoded = json.dumps(record, sort_keys=True)
            if published.get(index) != encoded:
                yield from retrying(
                    lambda e=encoded, i=index: ctx.kv.put(ctx.learner_status_key(i), e.encode()),
                    ctx.config.retry_interval)
                published[index] = encoded
        yield ctx.config.controller_poll


def _learner_record(ctx: JobCtx, volume, index: int) -> dict | None:
    status_doc = vl.read_json(volume, vl.status_path(ctx.learner_id(index)))
    if status_doc is None:
        return None  # learner has not started yet
    exit_doc = vl.read_json(volume, vl.exit_path(ctx.learner_id(index)))
    record = {
        "status": status_doc["status"],
        "timestamp": status_doc["timestamp"],
        "restart_count": status_doc["attempt"] - 1,
    }
    if exit_doc is not None:
        record["exit_code"] = exit_doc["code"]
        record["timestamp"] = exit_doc["timestamp"]
        if exit_doc["code"] == EXIT_OK:
            record["status"] = JobStatus.COMPLETED.value
        else:
            record["status"] = JobStatus.FAILED.value
    return record


def load_data_payload(ctx: JobCtx) -> Payload:
    """Stage the data bucket onto the volume, then drop the ready marker.

    Re-runs skip everything once the marker says ok, so a crash halfway
    just repeats some copies (same bytes, same names) and moves on.
    """
    sim = ctx.sim
    volume = ctx.cluster.get_volume(ctx.volume_id)
    marker = vl.read_json(volume, vl.LOAD_DATA_MARKER)
    if marker is not None and marker.get("ok"):
        return
    store = ctx.manifest.data_store
    try:
        keys = yield from retrying(
            lambda: ctx.objects.list_objects(store.bucket, store.credential, store.prefix),
            ctx.config.retry_interval)
        for key in keys:
            data = yield from retrying(
                lambda k=key: ctx.objects.get_object(store.bucket, store.credential, k),
                ctx.config.retry_interval)
            name = key[len(store.prefix):] if key.startswith(store.prefix) else key
            volume.write(f"{vl.DATA_DIR}{name}", data)
            yield ctx.config.data_copy_time_per_object
    except Exception as exc:
        vl.write_json(volume, vl.LOAD_DATA_MARKER,
                      {"ok": False, "timestamp": sim.now, "detail": type(exc).__name__})
        sim.log("marker_written", ctx.job_id, "marker=load-data ok=False")
        return
    vl.write_json(volume, vl.LOAD_DATA_MARKER, {"ok": True, "timestamp": sim.now, "detail": ""})
    sim.log("marker_written", ctx.job_id, "marker=load-data ok=True")


def store_results_payload(ctx: JobCtx) -> Payload:
    """Wait for every learner to exit cleanly, then stow /results/* in the
    result bucket and drop the done marker."""
    sim = ctx.sim
    volume = ctx.cluster.get_volume(ctx.volume_id)
    while True:
        exits = [vl.read_json(volume, vl.exit_path(lid)) for lid in ctx.learner_ids]
        if all(e is not None for e in exits):
            break
        yield ctx.config.monitor_poll
    if any(e["code"] != EXIT_OK for e in exits):
        return  # failed jobs keep their partial results on the volume only
    store = ctx.manifest.result_store
    for path in volume.list_dir(vl.RESULTS_DIR):
        name = path[len(vl.RESULTS_DIR):]
        data = volume.read(path)
        yield from retrying(
            lambda n=name, d=data: ctx.objects.put_object(
                store.bucket, store.credential, ctx.result_key(n), d),
            ctx.config.retry_interval)
        yield ctx.config.data_copy_time_per_object
    vl.write_json(volume, vl.STORE_RESULTS_MARKER, {"ok": True, "timestamp": sim.now})
    sim.log("marker_written", ctx.job_id, "marker=store-results ok=True")


def log_collector_payload(ctx: JobCtx) -> Payload:
    """Ship complete log lines to the result bucket as they appear.

    The shipped-line counts live in memory, rebuilt on restart from what is
    already in the bucket, so no line is lost and none shipped twice.
    """
    volume = ctx.cluster.get_volume(ctx.volume_id)
    store = ctx.manifest.result_store
    shipped: dict[str, int] = {}
    for lid in ctx.learner_ids:
        existing = yield from retrying(
            lambda l=lid: _shipped_lines(ctx, l), ctx.config.retry_interval)
        shipped[lid] = existing
    while True:
        for lid in ctx.learner_ids:
            lines = vl.read_log_lines(volume, lid)
            if len(lines) > shipped[lid]:
                payload = ("\n".join(lines) + "\n").encode()
                yield from retrying(
                    lambda l=lid, p=payload: ctx.objects.put_object(
                        store.bucket, store.credential, ctx.shipped_log_key(l), p),
                    ctx.config.retry_interval)
                shipped[lid] = len(lines)
        yield ctx.config.collector_poll


def _shipped_lines(ctx: JobCtx, learner_id: str) -> int:
    store = ctx.manifest.result_store
    try:
        raw = ctx.objects.get_object(store.bucket, store.credential,
                                     ctx.shipped_log_key(learner_id))
    except NotFound:
        return 0
    return len(raw.decode().splitlines())


def flush_logs(ctx: JobCtx) -> Payload:
    """One complete shipping pass, re-deriving progress from the bucket.

    The guardian runs this right before teardown: the collector may be
    sitting out a restart delay at that moment, and whatever it has not
    shipped yet would otherwise be destroyed with the volume.
    """
    try:
        volume = ctx.cluster.get_volume(ctx.volume_id)
    except NotFound:
        return  # repeat teardown after a crash; the volume is already gone
    store = ctx.manifest.result_store
    for lid in ctx.learner_ids:
        lines = vl.read_log_lines(volume, lid)
        if not lines:
            continue
        already = yield from retrying(
            lambda l=lid: _shipped_lines(ctx, l), ctx.config.retry_interval)
        if len(lines) > already:
            payload = ("\n".join(lines) + "\n").encode()
            yield from retrying(
                lambda l=lid, p=payload: ctx.objects.put_object(
                    store.bucket, store.credential, ctx.shipped_log_key(l), p),
                ctx.config.retry_interval)
