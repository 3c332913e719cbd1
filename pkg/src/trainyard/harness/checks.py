"""Assertions a scenario can make about a finished run.

Each check inspects the platform from the outside (metadata, buckets,
the coordination store's event history, the simulator log) and returns
pass/fail plus a human message.  Checks never raise out of the runner: a
crashing check is itself a failure.
"""

from __future__ import annotations

import json
import re

from trainyard.errors import NotFound, ScriptInvalid
from trainyard.jobs import JobStatus, aggregate_status, is_terminal, phase_rank

_ITER = re.compile(r"iter=(\d+)/")


class _CheckDef:
    def __init__(self, fn, required):
        self.fn = fn
        self.required = frozenset(required)


CHECKS: dict[str, _CheckDef] = {}


def check(name: str, required: tuple[str, ...] = ()):
    def wrap(fn):
        CHECKS[name] = _CheckDef(fn, required)
        return fn
    return wrap


def validate_check(raw: dict) -> None:
    name = raw["check"]
    if name not in CHECKS:
        raise ScriptInvalid(f"unknown check {name!r}; known: {sorted(CHECKS)}")
    missing = CHECKS[name].required - set(raw)
    if missing:
        raise ScriptInvalid(f"check {name!r}: missing params {sorted(missing)}")


def run_checks(checks: list[dict], plat) -> list[dict]:
    out = []
    for raw in checks:
        name = raw["check"]
        params = {k: v for k, v in raw.items() if k != "check"}
        try:
            ok, message = CHECKS[name].fn(plat, params)
        except Exception as exc:  # noqa: BLE001 - a broken check is a failed check
            ok, message = False, f"check raised {type(exc).__name__}: {exc}"
        out.append({"check": name, "params": params, "ok": bool(ok), "message": message})
    return out


# -- helpers shared by several checks ----------------------------------------------


def _job(plat, job_id: str):
    return plat.metadata.get_job(job_id)


def _shipped_log(plat, ctx, learner_id: str) -> str:
    store = ctx.manifest.result_store
    try:
        raw = plat.objects.get_object(store.bucket, store.credential,
                                      ctx.shipped_log_key(learner_id))
    except NotFound:
        return ""
    return raw.decode()


def _iterations(text: str) -> list[int]:
    return [int(m.group(1)) for m in _ITER.finditer(text)]


# -- the registry -------------------------------------------------------------------


@check("all_jobs_terminal")
def _all_jobs_terminal(plat, params):
    stuck = [j.job_id for j in plat.metadata.scan_jobs()
             if not is_terminal(j.current_status)]
    if stuck:
        return False, f"non-terminal jobs: {stuck}"
    return True, "every job reached a terminal status"


@check("job_status", required=("job", "equals"))
def _job_status(plat, params):
    status = _job(plat, params["job"]).current_status.value
    if status != params["equals"]:
        return False, f"{params['job']} is {status}, wanted {params['equals']}"
    return True, f"{params['job']} is {status}"


@check("job_detail_contains", required=("job", "fragment"))
def _job_detail(plat, params):
    record = _job(plat, params["job"]).history.records[-1]
    if params["fragment"] not in record.detail:
        return False, f"final detail {record.detail!r} lacks {params['fragment']!r}"
    return True, f"final detail mentions {params['fragment']!r}"


@check("inventory_clean")
def _inventory_clean(plat, params):
    leftovers = {j.job_id: plat.cluster.inventory(j.job_id)
                 for j in plat.metadata.scan_jobs()}
    dirty = {k: v for k, v in leftovers.items() if v}
    if dirty:
        return False, f"resources outlived their jobs: {dirty}"
    return True, "no job left resources behind"


@check("results_present", required=("job",))
def _results_present(plat, params):
    record = _job(plat, params["job"])
    ctx = plat.make_ctx(record.job_id, record.manifest)
    store = record.manifest.result_store
    missing = []
    for lid in ctx.learner_ids:
        if not plat.objects.object_exists(store.bucket, store.credential,
                                          ctx.result_key(lid)):
            missing.append(lid)
    if missing:
        return False, f"no result object for {missing}"
    return True, f"results stored for all {record.manifest.learners} learners"


@check("no_missing_log_lines", required=("job",))
def _no_missing_log_lines(plat, params):
    record = _job(plat, params["job"])
    ctx = plat.make_ctx(record.job_id, record.manifest)
    total = record.manifest.total_iterations
    gaps = {}
    for lid in ctx.learner_ids:
        seen = set(_iterations(_shipped_log(plat, ctx, lid)))
        missing = sorted(set(range(1, total + 1)) - seen)
        if missing:
            gaps[lid] = missing
    if gaps:
        return False, f"iterations absent from shipped logs: {gaps}"
    return True, f"shipped logs cover all {total} iterations for every learner"


@check("lost_work_bound", required=("job", "max_redone"))
def _lost_work_bound(plat, params):
    record = _job(plat, params["job"])
    ctx = plat.make_ctx(record.job_id, record.manifest)
    bound = int(params["max_redone"])
    worst = {}
    for lid in ctx.learner_ids:
        iters = _iterations(_shipped_log(plat, ctx, lid))
        redone = len(iters) - len(set(iters))
        if redone > bound:
            worst[lid] = redone
    if worst:
        return False, f"redone iterations exceed {bound}: {worst}"
    return True, f"every learner redid at most {bound} iterations"


@check("history_consistent", required=("job",))
def _history_consistent(plat, params):
    """The recorded status history must equal a replay of the learner status
    stream under the aggregation rules (restart notices included)."""
    record = _job(plat, params["job"])
    prefix = f"/jobs/{record.job_id}/learners/"
    events = plat.kv.events_since(1, prefix)
    fold = _fold_learner_events(events, prefix, record.manifest.learners)
    base = [("PENDING", 0), ("DEPLOYING", 0)] + fold
    got = [(r.status.value, r.restart_count) for r in record.history.records]

    if fold and fold[-1][0] == "FAILED":
        expected = base
    elif record.current_status is JobStatus.COMPLETED:
        expected = base + [("COMPLETED", max((rc for _, rc in fold), default=0))]
    else:
        # Halts and deploy-level failures end the job somewhere mid-stream;
        # everything before the verdict must still replay exactly.
        body = got[:-1]
        if got and is_terminal(JobStatus(got[-1][0])) and body == base[:len(body)]:
            return True, "status history matches a replay of the learner stream"
        return False, f"history {got} is not a terminated prefix of replay {base}"

    if got != expected:
        return False, f"history {got} != replay {expected}"
    return True, "status history matches a replay of the learner stream"


def _fold_learner_events(events, prefix: str, learners: int) -> list[tuple[str, int]]:
    seen: dict[int, dict] = {}
    last = JobStatus.DEPLOYING
    notified = 0
    out: list[tuple[str, int]] = []
    for event in events:
        if event.kind != "PUT" or not event.key.endswith("/status"):
            continue
        middle = event.key[len(prefix):-len("/status")]
        if not middle.isdigit():
            continue
        seen[int(middle)] = json.loads(event.value)
        statuses = [JobStatus(seen[i]["status"]) if i in seen else JobStatus.DEPLOYING
                    for i in range(learners)]
        agg = aggregate_status(statuses)
        total_rc = sum(r.get("restart_count", 0) for r in seen.values())
        if agg is JobStatus.FAILED:
            out.append((JobStatus.FAILED.value, notified))
            return out
        if total_rc > notified and not is_terminal(agg):
            notice = agg if phase_rank(agg) >= phase_rank(last) else last
            out.append((notice.value, total_rc))
            notified = total_rc
        if phase_rank(agg) > phase_rank(last):
            advance = agg if agg is not JobStatus.COMPLETED else JobStatus.STORING
            if phase_rank(advance) > phase_rank(last):
                out.append((advance.value, notified))
                last = advance
    return out


_RECOVERY_EVENT = [
    (("replica:", "task:", "helper:"), "unit_started", lambda t: t.split(":", 1)[1]),
    (("node:",), "node_up", lambda t: t.split(":", 1)[1]),
    (("store:",), "store_restored", lambda t: t),
    (("api", "lcm"), "service_up", lambda t: t),
]


@check("recovery_within", required=("target", "within"))
def _recovery_within(plat, params):
    """Every injected fault on ``target`` must be followed by the matching
    recovery event no more than ``within`` simulated seconds later."""
    target = params["target"]
    within = float(params["within"])
    for prefixes, kind, extract in _RECOVERY_EVENT:
        if any(target == p or target.startswith(p) for p in prefixes):
            recovery_kind, recovery_target = kind, extract(target)
            break
    else:
        return False, f"no recovery signal defined for target {target!r}"

    parsed = [_parse_event(line) for line in plat.sim.events]
    hits = [t for t, k, tgt, detail in parsed
            if k == "fault_injected" and tgt == target and "kind=CRASH" in detail]
    if not hits:
        return False, f"no CRASH fault ever hit {target}"
    recoveries = [t for t, k, tgt, _ in parsed
                  if k == recovery_kind and tgt == recovery_target]
    slow = []
    for fault_t in hits:
        after = [t for t in recoveries if t >= fault_t]
        if not after or after[0] - fault_t > within:
            took = (after[0] - fault_t) if after else None
            slow.append((fault_t, took))
    if slow:
        return False, f"recovery of {target} missed {within}s bound: {slow}"
    return True, f"{target} recovered within {within}s of every crash"


def _parse_event(line: str) -> tuple[float, str, str, str]:
    t_field, kind_field, target_field, detail_field = line.split(" ", 3)
    return (float(t_field[len("t="):]), kind_field[len("kind="):],
            target_field[len("target="):], detail_field[len("detail="):])
