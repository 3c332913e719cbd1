"""Learner payload: the (stand-in) training process.

Work is a deterministic digest chain: the state after iteration k is
sha256(state_{k-1} | k), seeded from the job id, learner id, and a
fingerprint of the staged data.  Real gradients would not be checkable;
this chain is, which lets tests prove that a learner resuming from a
checkpoint ends at bit-identical state to one that never crashed.

The learner talks to the world exactly three ways, all crash-safe:

* whole-file writes on the shared volume (status, exit code, logs),
* checkpoint objects in the result bucket at every interval boundary,
* nothing else.  Restart counting needs no coordinator: each start
  reads its own previous status file and bumps the attempt.
"""

from __future__ import annotations

import hashlib
import json

from trainyard.cluster.sim import Payload
from trainyard.jobs import JobStatus
from trainyard.runtime import volume_layout as vl
from trainyard.runtime.context import JobCtx, retrying

# orderly exit codes recorded in /exit/<learner_id>
EXIT_OK = 0
EXIT_TRAINING_FAILED = 1
EXIT_DATA_FAILED = 2
EXIT_DATA_TIMEOUT = 3


def seed_digest(job_id: str, learner_id: str, fingerprint: str) -> str:
    return hashlib.sha256(f"{job_id}|{learner_id}|{fingerprint}".encode()).hexdigest()


def advance_digest(digest: str, iteration: int) -> str:
    return hashlib.sha256(f"{digest}|{iteration}".encode()).hexdigest()


def data_fingerprint(volume) -> str:
    h = hashlib.sha256()
    for path in volume.list_dir(vl.DATA_DIR):
        h.update(path.encode())
        h.update(volume.read(path))
    return h.hexdigest()


def checkpoint_key(ctx: JobCtx, learner_id: str, iteration: int) -> str:
    return f"{ctx.checkpoint_prefix(learner_id)}{iteration:08d}"


def latest_checkpoint(ctx: JobCtx, learner_id: str) -> dict | None:
    """Newest checkpoint for this learner, or None before the first one."""
    store = ctx.manifest.result_store
    keys = ctx.objects.list_objects(store.bucket, store.credential,
                                    prefix=ctx.checkpoint_prefix(learner_id))
    if not keys:
        return None
    raw = ctx.objects.get_object(store.bucket, store.credential, max(keys))
    return json.loads(raw)


def learner_payload(ctx: JobCtx, index: int) -> Payload:
    sim = ctx.sim
    cfg = ctx.config
    manifest = ctx.manifest
    learner_id = ctx.learner_id(index)
    volume = ctx.cluster.get_volume(ctx.volume_id)

    # Restart accounting: my own previous status file tells me who I was.
    prev = vl.read_json(volume, vl.status_path(learner_id))
    attempt = (prev["attempt"] if prev else 0) + 1
    if attempt > 1:
        sim.log("learner_resumed", learner_id, f"attempt={attempt}")

    volume.delete(vl.exit_path(learner_id))  # stale exit from a previous attempt

    def set_status(status: JobStatus) -> None:
        vl.write_json(volume, vl.status_path(learner_id), {
            "status": status.value, "timestamp": sim.now, "attempt": attempt,
        })

    def record_exit(code: int) -> None:
        vl.write_json(volume, vl.exit_path(learner_id), {"code": code, "timestamp": sim.now})
        sim.log("learner_exit", learner_id, f"code={code}")

    # -- wait for staged data -------------------------------------------------
    marker = vl.read_json(volume, vl.LOAD_DATA_MARKER)
    if marker is None:
        set_status(JobStatus.DOWNLOADING)
        waited = 0.0
        while marker is None:
            if waited >= cfg.data_wait_timeout:
                record_exit(EXIT_DATA_TIMEOUT)
                return
            yield 0.2
            waited += 0.2
            marker = vl.read_json(volume, vl.LOAD_DATA_MARKER)
    if not marker.get("ok"):
        record_exit(EXIT_DATA_FAILED)
        return

    # -- resume point ------------------------------------------------------------
    checkpoint = yield from retrying(lambda: latest_checkpoint(ctx, learner_id),
                                     cfg.retry_interval)
    if checkpoint is not None:
        iteration = checkpoint["iteration"]
        digest = checkpoint["digest"]
    else:
        iteration = 0
        digest = seed_digest(ctx.job_id, learner_id, data_fingerprint(volume))

    set_status(JobStatus.PROCESSING)

    fail_at = _planned_failure(manifest, index)

    # -- training loop --------------------------------------------------------------
    store = manifest.result_store
    while iteration < manifest.total_iterations:
        yield cfg.learner_iteration_time
        iteration += 1
        digest = advance_digest(digest, iteration)
        vl.append_log_line(volume, learner_id,
                           f"iter={iteration}/{manifest.total_iterations} digest={digest[:12]}")
        sim.log("learner_iter", learner_id, f"iteration={iteration}")
        if fail_at is not None and iteration >= fail_at:
            record_exit(EXIT_TRAINING_FAILED)
            return
        if iteration % manifest.checkpoint_interval == 0 or iteration == manifest.total_iterations:
            body = json.dumps({"iteration": iteration, "digest": digest}).encode()
            yield from retrying(
                lambda: ctx.objects.put_object(store.bucket, store.credential,
                                               checkpoint_key(ctx, learner_id, iteration), body),
                cfg.retry_interval)
            sim.log("learner_checkpoint", learner_id, f"iteration={iteration}")

    volume.write(f"{vl.RESULTS_DIR}{learner_id}", digest.encode())
    record_exit(EXIT_OK)
    set_status(JobStatus.COMPLETED)


def _planned_failure(manifest, index: int) -> int | None:
    """Scripted training failure, driven by hyperparameters so scenarios can
    exercise the job-failure path without touching platform code."""
    raw = manifest.extra_hyperparameters.get("fail_at_iteration")
    if raw is None:
        return None
    on = int(manifest.extra_hyperparameters.get("fail_on_learner", "0"))
    return int(raw) if index == on else None
