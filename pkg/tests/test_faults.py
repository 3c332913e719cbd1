"""Fault-injection integration tests.

Every test drives a full platform through a scripted failure and checks
the externally observable promises: jobs still reach a correct verdict,
resumed work is bit-identical to never-crashed work, logs and results
survive, and nothing acknowledged is lost.  Timing-sensitive crash points
come from a fault-free probe run of the same seed, which works because
runs are deterministic.
"""

import pytest

from trainyard.cluster.faults import FaultSpec
from trainyard.config import PlatformConfig

from conftest import MANIFEST, build_platform
from oracles import (
    event_time,
    event_times,
    expected_history,
    history_pairs as records,
    iterations_in_log,
)

TOTAL_ITERS = 20
CHECKPOINT_INTERVAL = 5


def auth(token="tok-acme"):
    return {"Authorization": f"Bearer {token}"}


def launch(plat, manifest=MANIFEST, token="tok-acme"):
    status, body = plat.gateway.handle("POST", "/v1/jobs", headers=auth(token),
                                       body=manifest.encode())
    assert status == 201, body
    return body["job_id"]


def settle(plat, horizon=600.0):
    outcome = plat.run_until_settled(horizon=horizon)
    assert outcome == "stopped", plat.sim.events[-25:]


def crash(plat, target, at):
    plat.injector.schedule(FaultSpec(at=at, target=target))


def statuses(plat, job_id):
    return [s for s, _ in records(plat, job_id)]


def result_digests(plat, job_id="j1"):
    keys = plat.objects.list_objects("acme-results", "rkey", prefix="out/results/")
    return {k: plat.objects.get_object("acme-results", "rkey", k) for k in keys
            if f"{job_id}-learners" in k}


def shipped_iterations(plat, learner_id):
    raw = plat.objects.get_object("acme-results", "rkey", f"out/logs/{learner_id}.log")
    return iterations_in_log(raw.decode())


def run_clean(tmp_path, subdir="clean", config=None, seed=1):
    plat = build_platform(tmp_path, seed=seed, config=config, subdir=subdir)
    launch(plat)
    settle(plat)
    return plat


# -- learner crashes ---------------------------------------------------------------


def test_learner_crash_resumes_from_checkpoint_bit_identical(tmp_path):
    clean = run_clean(tmp_path)

    faulty = build_platform(tmp_path, subdir="faulty")
    crash(faulty, "replica:j1-learners-0", at=1.5)
    launch(faulty)
    settle(faulty)

    assert statuses(faulty, "j1")[-1] == "COMPLETED"
    assert event_times(faulty.sim.events, "learner_resumed", "j1-learners-0")

    # Work resumed from the last checkpoint is indistinguishable from work
    # that never stopped.
    assert result_digests(faulty) == result_digests(clean)

    # The same replica identity ran twice; nothing else was spun up for it.
    starts = event_times(faulty.sim.events, "unit_started", "j1-learners-0")
    assert len(starts) == 2

    # Redone work is bounded by the checkpoint interval: iterations logged
    # more than once are exactly the ones past the checkpoint the crash ate.
    iters = shipped_iterations(faulty, "j1-learners-0")
    assert sorted(set(iters)) == list(range(1, TOTAL_ITERS + 1))
    redone = len(iters) - len(set(iters))
    assert 0 < redone <= CHECKPOINT_INTERVAL

    # History carries a restart notice and a nondecreasing restart count.
    rcs = [rc for _, rc in records(faulty, "j1")]
    assert rcs == sorted(rcs) and rcs[-1] == 1
    assert records(faulty, "j1") == expected_history(faulty, "j1")


def test_two_learner_crashes_both_recover(tmp_path):
    clean = run_clean(tmp_path)

    faulty = build_platform(tmp_path, subdir="faulty")
    crash(faulty, "replica:j1-learners-0", at=1.5)
    crash(faulty, "replica:j1-learners-1", at=1.0)
    launch(faulty)
    settle(faulty)

    assert statuses(faulty, "j1")[-1] == "COMPLETED"
    assert result_digests(faulty) == result_digests(clean)
    final = records(faulty, "j1")[-1]
    assert final == ("COMPLETED", 2)
    assert records(faulty, "j1") == expected_history(faulty, "j1")
    # Each learner still ships a complete log.
    for lid in ("j1-learners-0", "j1-learners-1"):
        assert sorted(set(shipped_iterations(faulty, lid))) == list(range(1, TOTAL_ITERS + 1))


def test_learner_crash_during_final_iteration_window(tmp_path):
    # Crash after the iteration-15 checkpoint: at most 5 iterations redone,
    # results still exactly once.
    clean = run_clean(tmp_path)
    probe_t = event_time(clean.sim.events, "learner_checkpoint", "j1-learners-0",
                         detail_fragment="iteration=15")

    faulty = build_platform(tmp_path, subdir="faulty")
    crash(faulty, "replica:j1-learners-0", at=probe_t + 0.12)
    launch(faulty)
    settle(faulty)

    assert statuses(faulty, "j1")[-1] == "COMPLETED"
    assert result_digests(faulty) == result_digests(clean)
    assert len(result_digests(faulty)) == 2


# -- guardian crashes -------------------------------------------------------------


def test_guardian_crash_swept_across_deploy_phases(tmp_path):
    probe = run_clean(tmp_path, subdir="probe")
    marks = [event_time(probe.sim.events, "phase_started", "j1",
                        detail_fragment=f"phase={p} ")
             for p in ("volume", "helpers", "learners", "policy", "marker")]
    done = event_time(probe.sim.events, "deploy_done", "j1")
    crash_points = [(a + b) / 2 for a, b in zip(marks, marks[1:] + [done])]

    for n, at in enumerate(crash_points):
        plat = build_platform(tmp_path, subdir=f"sweep{n}")
        crash(plat, "task:j1-guardian", at=at)
        launch(plat)
        settle(plat)

        assert statuses(plat, "j1")[-1] == "COMPLETED", at
        # The interrupted attempt was rolled back and a fresh one deployed.
        assert event_times(plat.sim.events, "rollback", "j1"), at
        assert event_times(plat.sim.events, "deploy_done", "j1",
                           detail_fragment="attempt=2"), at
        assert plat.cluster.inventory("j1") == [], at
        assert records(plat, "j1") == expected_history(plat, "j1"), at
        assert result_digests(plat) == result_digests(probe), at


def test_guardian_crash_after_deploy_resumes_monitoring(tmp_path):
    probe = run_clean(tmp_path, subdir="probe")
    done = event_time(probe.sim.events, "deploy_done", "j1")

    plat = build_platform(tmp_path, subdir="faulty")
    crash(plat, "task:j1-guardian", at=done + 0.8)
    launch(plat)
    settle(plat)

    assert statuses(plat, "j1")[-1] == "COMPLETED"
    # No redeploy: attempt 1 stayed deployed while the guardian was away.
    assert len(event_times(plat.sim.events, "deploy_done", "j1")) == 1
    assert not event_times(plat.sim.events, "rollback", "j1")
    # Refolding the learner stream after restart added no duplicate entries.
    recs = records(plat, "j1")
    assert len(recs) == len(set(recs))
    assert recs == expected_history(plat, "j1")
    assert result_digests(plat) == result_digests(probe)


def test_guardian_crash_while_waiting_for_results_flush(tmp_path):
    probe = run_clean(tmp_path, subdir="probe")
    storing_at = event_time(probe.sim.events, "status_appended", "j1",
                            detail_fragment="status=STORING")

    plat = build_platform(tmp_path, subdir="faulty")
    crash(plat, "task:j1-guardian", at=storing_at + 0.1)
    launch(plat)
    settle(plat)

    assert statuses(plat, "j1")[-1] == "COMPLETED"
    assert records(plat, "j1") == expected_history(plat, "j1")
    assert plat.cluster.inventory("j1") == []


FAIL_MANIFEST = MANIFEST + """\
extra_hyperparameters:
  fail_at_iteration: "7"
"""


def test_guardian_crash_during_drain_re_reaches_failed_verdict(tmp_path):
    probe = build_platform(tmp_path, subdir="probe")
    launch(probe, manifest=FAIL_MANIFEST)
    settle(probe)
    teardown_at = event_time(probe.sim.events, "teardown_done", "j1")

    plat = build_platform(tmp_path, subdir="faulty")
    crash(plat, "task:j1-guardian", at=teardown_at - 0.5)
    launch(plat, manifest=FAIL_MANIFEST)
    settle(plat)

    recs = records(plat, "j1")
    assert [s for s, _ in recs].count("FAILED") == 1
    assert recs[-1][0] == "FAILED"
    detail = plat.metadata.get_job("j1").history.records[-1].detail
    assert detail == "learner=0 exit=1"
    assert plat.cluster.inventory("j1") == []


def test_guardian_crash_between_teardown_records_resumes_teardown(tmp_path):
    # Land the crash after destroys began but before the torn_down record:
    # schedule it mid-run so it sequences after the already queued teardown
    # step at the same instant.
    probe = build_platform(tmp_path, subdir="probe")
    launch(probe, manifest=FAIL_MANIFEST)
    settle(probe)
    teardown_at = event_time(probe.sim.events, "teardown_done", "j1")

    plat = build_platform(tmp_path, subdir="faulty")
    launch(plat, manifest=FAIL_MANIFEST)
    plat.sim.run_until(teardown_at - 0.3)
    crash(plat, "task:j1-guardian", at=teardown_at)
    settle(plat)

    recs = records(plat, "j1")
    assert [s for s, _ in recs].count("FAILED") == 1
    assert recs[-1][0] == "FAILED"
    assert plat.cluster.inventory("j1") == []
    # Teardown ran to completion on the retry.
    assert event_times(plat.sim.events, "teardown_done", "j1")


# -- control-plane crashes ----------------------------------------------------------


def test_api_crash_after_ack_reconciler_picks_job_up(tmp_path):
    plat = build_platform(tmp_path)
    crash(plat, "api", at=0.0)  # scheduled first, so it beats the deploy notify
    job_id = launch(plat)

    # The 201 was durable even though the API died before notifying anyone.
    plat.sim.run_until(2.0)
    assert plat.metadata.get_job(job_id).current_status.value == "PENDING"
    code, body = plat.gateway.handle("GET", f"/v1/jobs/{job_id}", headers=auth())
    assert code == 503 and body["code"] == "SERVICE_UNAVAILABLE"

    settle(plat)
    created = event_time(plat.sim.events, "guardian_created", job_id)
    assert created == pytest.approx(10.0)  # first reconciler pass
    assert event_times(plat.sim.events, "reconciled", job_id)
    assert statuses(plat, job_id)[-1] == "COMPLETED"
    code, body = plat.gateway.handle("GET", f"/v1/jobs/{job_id}", headers=auth())
    assert code == 200 and body["status"] == "COMPLETED"


def test_lcm_down_at_submit_notify_dropped_then_reconciled(tmp_path):
    plat = build_platform(tmp_path)
    crash(plat, "lcm", at=0.0)
    job_id = launch(plat)
    settle(plat)

    assert event_times(plat.sim.events, "notify_dropped", job_id)
    # Back at 5.0, first reconciler pass ten seconds later.
    created = event_time(plat.sim.events, "guardian_created", job_id)
    assert created == pytest.approx(15.0)
    assert statuses(plat, job_id)[-1] == "COMPLETED"


def test_lcm_crash_midrun_does_not_disturb_running_job(tmp_path):
    clean = run_clean(tmp_path)

    plat = build_platform(tmp_path, subdir="faulty")
    crash(plat, "lcm", at=1.0)
    launch(plat)
    settle(plat)
    assert statuses(plat, "j1")[-1] == "COMPLETED"
    assert result_digests(plat) == result_digests(clean)
    # Exactly one guardian ever created for the job.
    assert len(event_times(plat.sim.events, "guardian_created", "j1")) == 1


# -- store faults -----------------------------------------------------------------


@pytest.mark.parametrize("store", ["metadata", "kv", "objects"])
def test_store_crash_midrun_is_bridged_by_retries(tmp_path, store):
    clean = run_clean(tmp_path, subdir=f"clean-{store}")

    plat = build_platform(tmp_path, subdir=f"faulty-{store}")
    crash(plat, f"store:{store}", at=1.7)
    launch(plat)
    settle(plat)

    assert event_times(plat.sim.events, "store_crash", f"store:{store}")
    assert event_times(plat.sim.events, "store_restored", f"store:{store}")
    assert statuses(plat, "j1")[-1] == "COMPLETED"
    assert result_digests(plat) == result_digests(clean)
    assert records(plat, "j1") == expected_history(plat, "j1")
    for lid in ("j1-learners-0", "j1-learners-1"):
        assert sorted(set(shipped_iterations(plat, lid))) == list(range(1, TOTAL_ITERS + 1))


@pytest.mark.parametrize("store", ["metadata", "kv", "objects"])
def test_store_outage_midrun_is_bridged_by_retries(tmp_path, store):
    plat = build_platform(tmp_path)
    plat.injector.schedule(FaultSpec(at=1.3, target=f"store:{store}",
                                     kind="OUTAGE", duration=2.0))
    launch(plat)
    settle(plat)
    assert statuses(plat, "j1")[-1] == "COMPLETED"
    assert records(plat, "j1") == expected_history(plat, "j1")


def test_metadata_outage_rejects_submission_until_over(tmp_path):
    plat = build_platform(tmp_path)
    plat.injector.schedule(FaultSpec(at=0.0, target="store:metadata",
                                     kind="OUTAGE", duration=3.0))
    plat.sim.run_until(1.0)

    code, body = plat.gateway.handle("POST", "/v1/jobs", headers=auth(),
                                     body=MANIFEST.encode())
    assert code == 503 and body["code"] == "STORE_UNAVAILABLE"

    plat.sim.run_until(3.5)
    # Nothing was half-created by the rejected attempt.
    assert plat.metadata.job_count() == 0

    job_id = launch(plat)
    settle(plat)
    assert statuses(plat, job_id)[-1] == "COMPLETED"


# -- node and helper crashes ---------------------------------------------------------


def test_node_crash_relocates_everything_and_job_finishes(tmp_path):
    clean = run_clean(tmp_path)

    plat = build_platform(tmp_path, subdir="faulty")
    crash(plat, "node:node0", at=1.5)
    launch(plat)
    settle(plat)

    assert event_times(plat.sim.events, "node_down", "node0")
    assert event_times(plat.sim.events, "node_up", "node0")
    assert statuses(plat, "j1")[-1] == "COMPLETED"
    assert result_digests(plat) == result_digests(clean)
    assert plat.cluster.inventory("j1") == []
    # The guardian came back well before the learners and found its state.
    restarts = event_times(plat.sim.events, "unit_started", "j1-guardian")
    assert len(restarts) == 2


def test_log_collector_crash_loses_no_lines(tmp_path):
    plat = build_platform(tmp_path)
    crash(plat, "helper:j1-helpers-log-collector", at=2.0)
    launch(plat)
    settle(plat)

    assert statuses(plat, "j1")[-1] == "COMPLETED"
    for lid in ("j1-learners-0", "j1-learners-1"):
        iters = shipped_iterations(plat, lid)
        assert sorted(set(iters)) == list(range(1, TOTAL_ITERS + 1))
        assert len(iters) == len(set(iters))  # and none shipped twice


def test_controller_crash_delays_but_does_not_corrupt_history(tmp_path):
    plat = build_platform(tmp_path)
    crash(plat, "helper:j1-helpers-controller", at=1.2)
    launch(plat)
    settle(plat)

    assert statuses(plat, "j1")[-1] == "COMPLETED"
    assert records(plat, "j1") == expected_history(plat, "j1")


def test_load_data_crash_restages_from_scratch(tmp_path):
    config = PlatformConfig(data_copy_time_per_object=1.0)
    clean = run_clean(tmp_path, config=config)

    plat = build_platform(tmp_path, subdir="faulty", config=config)
    crash(plat, "helper:j1-helpers-load-data", at=1.5)  # one object staged, no marker
    launch(plat)
    settle(plat)

    assert statuses(plat, "j1")[-1] == "COMPLETED"
    volume_was_restaged = event_times(plat.sim.events, "marker_written", "j1",
                                      detail_fragment="marker=load-data ok=True")
    assert len(volume_was_restaged) == 1
    assert result_digests(plat) == result_digests(clean)


def test_store_results_crash_retries_and_completes(tmp_path):
    clean = run_clean(tmp_path)
    second_exit = event_times(clean.sim.events, "learner_exit", detail_fragment="code=0")[-1]

    plat = build_platform(tmp_path, subdir="faulty")
    crash(plat, "helper:j1-helpers-store-results", at=second_exit + 0.05)
    launch(plat)
    settle(plat)

    assert statuses(plat, "j1")[-1] == "COMPLETED"
    assert result_digests(plat) == result_digests(clean)


# -- cross-job and determinism --------------------------------------------------------


def test_faults_in_one_job_leave_the_other_untouched(tmp_path):
    plat = build_platform(tmp_path)
    launch(plat)  # j1
    launch(plat)  # j2
    crash(plat, "replica:j1-learners-0", at=1.5)
    settle(plat)

    assert statuses(plat, "j1")[-1] == "COMPLETED"
    assert statuses(plat, "j2")[-1] == "COMPLETED"
    # The crashed job reports restarts; the healthy one reports none.
    assert records(plat, "j1")[-1][1] == 1
    assert all(rc == 0 for _, rc in records(plat, "j2"))
    assert records(plat, "j1") == expected_history(plat, "j1")
    assert records(plat, "j2") == expected_history(plat, "j2")


def test_fault_schedule_replays_byte_identical(tmp_path):
    def run(subdir):
        plat = build_platform(tmp_path, subdir=subdir, seed=7)
        crash(plat, "replica:j1-learners-0", at=1.5)
        crash(plat, "store:kv", at=2.2)
        crash(plat, "helper:j1-helpers-log-collector", at=2.6)
        launch(plat)
        settle(plat)
        return plat.sim.events

    assert run("run-a") == run("run-b")
