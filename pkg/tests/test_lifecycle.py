"""Job/learner state machine tests, including the brute-force aggregation oracle."""

import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from trainyard.errors import IllegalTransition
from trainyard.jobs import (
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

ALL_STATUSES = list(JobStatus)
ALL_EVENTS = list(LifecycleEvent)

# Independent restatement of the lattice used as the oracle below: the five
# phases in order, then the terminal outcomes.  Kept deliberately separate
# from the implementation's rank table.
ORACLE_PHASES = ["PENDING", "DEPLOYING", "DOWNLOADING", "PROCESSING", "STORING", "COMPLETED"]


def oracle_aggregate(statuses):
    """Failure dominates, then halt, else the slowest phase; all-done -> STORING."""
    names = [s.value for s in statuses]
    if "FAILED" in names:
        return JobStatus.FAILED
    if "HALTED" in names:
        return JobStatus.HALTED
    slowest = min(names, key=ORACLE_PHASES.index)
    if slowest == "COMPLETED":
        return JobStatus.STORING
    return JobStatus(slowest)


class TestNextStatus:
    def test_submit_creates_pending(self):
        assert next_status(None, LifecycleEvent.SUBMITTED) == JobStatus.PENDING

    def test_guardian_created(self):
        assert next_status(JobStatus.PENDING, LifecycleEvent.GUARDIAN_CREATED) == JobStatus.DEPLOYING

    def test_deploy_retries_exhausted(self):
        assert (
            next_status(JobStatus.DEPLOYING, LifecycleEvent.DEPLOY_RETRIES_EXHAUSTED)
            == JobStatus.FAILED
        )

    def test_learner_restarted_keeps_status(self):
        assert (
            next_status(JobStatus.PROCESSING, LifecycleEvent.LEARNER_RESTARTED)
            == JobStatus.PROCESSING
        )

    def test_happy_path_chain(self):
        chain = [
            (LifecycleEvent.SUBMITTED, JobStatus.PENDING),
            (LifecycleEvent.GUARDIAN_CREATED, JobStatus.DEPLOYING),
            (LifecycleEvent.DATA_LOAD_STARTED, JobStatus.DOWNLOADING),
            (LifecycleEvent.ALL_LEARNERS_RUNNING, JobStatus.PROCESSING),
            (LifecycleEvent.ALL_LEARNERS_DONE, JobStatus.STORING),
            (LifecycleEvent.RESULTS_STORED, JobStatus.COMPLETED),
        ]
        current = None
        for event, expected in chain:
            current = next_status(current, event)
            assert current == expected

    def test_halt_from_any_nonterminal(self):
        for s in ALL_STATUSES:
            if is_terminal(s):
                continue
            assert next_status(s, LifecycleEvent.USER_HALT) == JobStatus.HALTED

    def test_terminal_states_accept_nothing(self):
        for s in (JobStatus.COMPLETED, JobStatus.FAILED, JobStatus.HALTED):
            for e in ALL_EVENTS:
                with pytest.raises(IllegalTransition):
                    next_status(s, e)

    def test_exhaustive_no_panics_and_monotone(self):
        # Every (state, event) pair either yields a legal state or raises
        # IllegalTransition; legal results never regress the phase order.
        for s, e in itertools.product([None] + ALL_STATUSES, ALL_EVENTS):
            try:
                out = next_status(s, e)
            except IllegalTransition:
                continue
            assert isinstance(out, JobStatus)
            if s is not None and not is_terminal(out):
                assert phase_rank(out) >= phase_rank(s)


class TestAggregateStatus:
    def test_unanimous(self):
        assert aggregate_status([JobStatus.PROCESSING, JobStatus.PROCESSING]) == JobStatus.PROCESSING

    def test_min_rule(self):
        assert aggregate_status([JobStatus.PROCESSING, JobStatus.DOWNLOADING]) == JobStatus.DOWNLOADING

    def test_failure_dominates(self):
        assert aggregate_status([JobStatus.COMPLETED, JobStatus.FAILED]) == JobStatus.FAILED

    def test_all_completed_is_storing(self):
        assert aggregate_status([JobStatus.COMPLETED, JobStatus.COMPLETED]) == JobStatus.STORING

    def test_exhaustive_pairs_match_oracle(self):
        for a, b in itertools.product(ALL_STATUSES, repeat=2):
            assert aggregate_status([a, b]) == oracle_aggregate([a, b]), (a, b)

    def test_exhaustive_triples_match_oracle(self):
        for combo in itertools.product(ALL_STATUSES, repeat=3):
            assert aggregate_status(list(combo)) == oracle_aggregate(list(combo))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            aggregate_status([])

    @given(
        st.lists(st.sampled_from(ALL_STATUSES), min_size=1, max_size=6),
        st.data(),
    )
    def test_monotone_improvement_never_decreases(self, statuses, data):
        # Improving one learner's status (within the phase order) never
        # decreases the aggregate.
        improvable = [
            i
            for i, s in enumerate(statuses)
            if s not in (JobStatus.FAILED, JobStatus.HALTED) and phase_rank(s) < 5
        ]
        if not improvable:
            return
        idx = data.draw(st.sampled_from(improvable))
        before = aggregate_status(statuses)
        if before in (JobStatus.FAILED, JobStatus.HALTED):
            return
        improved = list(statuses)
        target_rank = data.draw(st.integers(phase_rank(improved[idx]) + 1, 5))
        improved[idx] = JobStatus(ORACLE_PHASES[target_rank])
        after = aggregate_status(improved)
        if after not in (JobStatus.FAILED, JobStatus.HALTED):
            assert phase_rank(after) >= phase_rank(before)


class TestStatusHistory:
    def test_forward_appends(self):
        h = StatusHistory()
        h.append(StatusRecord(JobStatus.PENDING, 1.0))
        h.append(StatusRecord(JobStatus.DEPLOYING, 2.0))
        h.append(StatusRecord(JobStatus.PROCESSING, 3.0))  # skipping a phase is fine
        assert h.current == JobStatus.PROCESSING

    def test_regression_rejected(self):
        h = StatusHistory()
        h.append(StatusRecord(JobStatus.PROCESSING, 1.0))
        with pytest.raises(IllegalTransition):
            h.append(StatusRecord(JobStatus.DOWNLOADING, 2.0))

    def test_terminal_is_final(self):
        h = StatusHistory()
        h.append(StatusRecord(JobStatus.COMPLETED, 1.0))
        with pytest.raises(IllegalTransition):
            h.append(StatusRecord(JobStatus.PROCESSING, 2.0))

    def test_restart_notice_same_status(self):
        h = StatusHistory()
        h.append(StatusRecord(JobStatus.PROCESSING, 1.0))
        h.append(StatusRecord(JobStatus.PROCESSING, 2.0, "learner 0 restarted", 1))
        assert h.has_entry(JobStatus.PROCESSING, 1)
        assert not h.has_entry(JobStatus.PROCESSING, 2)

    def test_timestamps_nondecreasing(self):
        h = StatusHistory()
        h.append(StatusRecord(JobStatus.PENDING, 5.0))
        with pytest.raises(IllegalTransition):
            h.append(StatusRecord(JobStatus.DEPLOYING, 4.0))

    @given(st.lists(st.sampled_from(ALL_STATUSES), min_size=1, max_size=12))
    def test_any_accepted_sequence_is_monotone_with_one_terminal(self, sequence):
        h = StatusHistory()
        t = 0.0
        for s in sequence:
            t += 1.0
            try:
                h.append(StatusRecord(s, t))
            except IllegalTransition:
                pass
        phases = [r.status for r in h.records]
        terminals = [s for s in phases if is_terminal(s)]
        assert len(terminals) <= 1
        if terminals:
            assert is_terminal(phases[-1])
        nonterm = [phase_rank(s) for s in phases if not is_terminal(s)]
        assert nonterm == sorted(nonterm)


class TestLegalAppend:
    def test_same_status_allowed_for_notices(self):
        assert legal_append(JobStatus.PROCESSING, JobStatus.PROCESSING)

    def test_terminal_always_appendable_from_nonterminal(self):
        for s in ALL_STATUSES:
            if is_terminal(s):
                continue
            assert legal_append(s, JobStatus.FAILED)
            assert legal_append(s, JobStatus.HALTED)
            assert legal_append(s, JobStatus.COMPLETED)
