"""Job and learner lifecycle state machine.

The status lattice has five totally ordered non-terminal phases and three
terminal outcomes.  A job's non-terminal status never decreases, and at
most one terminal status is ever reached.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from trainyard.errors import IllegalTransition


class JobStatus(str, Enum):
    PENDING = "PENDING"
    DEPLOYING = "DEPLOYING"
    DOWNLOADING = "DOWNLOADING"
    PROCESSING = "PROCESSING"
    STORING = "STORING"
    COMPLETED = "COMPLETED"
    FAILED = "FAILED"
    HALTED = "HALTED"


# Rank of each non-terminal phase; COMPLETED ranks past STORING so that the
# minimum-phase aggregation rule stays total when some learners are done.
_PHASE_RANK = {
    JobStatus.PENDING: 0,
    JobStatus.DEPLOYING: 1,
    JobStatus.DOWNLOADING: 2,
    JobStatus.PROCESSING: 3,
    JobStatus.STORING: 4,
    JobStatus.COMPLETED: 5,
}

TERMINAL = frozenset({JobStatus.COMPLETED, JobStatus.FAILED, JobStatus.HALTED})

NON_TERMINAL_ORDER = (
    JobStatus.PENDING,
    JobStatus.DEPLOYING,
    JobStatus.DOWNLOADING,
    JobStatus.PROCESSING,
    JobStatus.STORING,
)


def is_terminal(status: JobStatus) -> bool:
    return status in TERMINAL


def phase_rank(status: JobStatus) -> int:
    """Position in the non-terminal order (COMPLETED counts as beyond STORING)."""
    try:
        return _PHASE_RANK[status]
    except KeyError:
        raise ValueError(f"{status} has no phase rank") from None


class LifecycleEvent(str, Enum):
    SUBMITTED = "SUBMITTED"
    GUARDIAN_CREATED = "GUARDIAN_CREATED"
    DATA_LOAD_STARTED = "DATA_LOAD_STARTED"
    ALL_LEARNERS_RUNNING = "ALL_LEARNERS_RUNNING"
    ALL_LEARNERS_DONE = "ALL_LEARNERS_DONE"
    RESULTS_STORED = "RESULTS_STORED"
    LEARNER_RESTARTED = "LEARNER_RESTARTED"
    DEPLOY_RETRIES_EXHAUSTED = "DEPLOY_RETRIES_EXHAUSTED"
    LEARNER_FAILED_TERMINAL = "LEARNER_FAILED_TERMINAL"
    USER_HALT = "USER_HALT"


@dataclass(frozen=True)
class StatusRecord:
    """One entry in a job's append-only status history."""

    status: JobStatus
    timestamp: float
    detail: str = ""
    restart_count: int = 0

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "timestamp": self.timestamp,
            "detail": self.detail,
            "restart_count": self.restart_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StatusRecord":
        return cls(
            status=JobStatus(d["status"]),
            timestamp=d["timestamp"],
            detail=d.get("detail", ""),
            restart_count=d.get("restart_count", 0),
        )


# Phase-advancing transitions keyed by (current, event).
_ADVANCES = {
    (None, LifecycleEvent.SUBMITTED): JobStatus.PENDING,
    (JobStatus.PENDING, LifecycleEvent.GUARDIAN_CREATED): JobStatus.DEPLOYING,
    (JobStatus.DEPLOYING, LifecycleEvent.DATA_LOAD_STARTED): JobStatus.DOWNLOADING,
    (JobStatus.DOWNLOADING, LifecycleEvent.ALL_LEARNERS_RUNNING): JobStatus.PROCESSING,
    (JobStatus.PROCESSING, LifecycleEvent.ALL_LEARNERS_DONE): JobStatus.STORING,
    (JobStatus.STORING, LifecycleEvent.RESULTS_STORED): JobStatus.COMPLETED,
}

# Events that terminate the job from any non-terminal state.
_TERMINATORS = {
    LifecycleEvent.LEARNER_FAILED_TERMINAL: JobStatus.FAILED,
    LifecycleEvent.USER_HALT: JobStatus.HALTED,
}


def next_status(current: JobStatus | None, event: LifecycleEvent) -> JobStatus:
    """Transition function of the job state machine.

    ``current=None`` stands for "no job yet"; only SUBMITTED is legal there.
    LEARNER_RESTARTED keeps the current status (callers record a restart
    notice alongside).  Undefined pairs raise IllegalTransition; terminal
    states accept no event at all.
    """
    if current is not None and is_terminal(current):
        raise IllegalTransition(f"{current.value} is terminal; no event applies")
    if event is LifecycleEvent.LEARNER_RESTARTED:
        if current is None:
            raise IllegalTransition("no job to restart")
        return current
    if event is LifecycleEvent.DEPLOY_RETRIES_EXHAUSTED:
        if current is JobStatus.DEPLOYING:
            return JobStatus.FAILED
        raise IllegalTransition(
            f"DEPLOY_RETRIES_EXHAUSTED only applies while DEPLOYING, not {current}"
        )
    if current is not None and event in _TERMINATORS:
        return _TERMINATORS[event]
    try:
        return _ADVANCES[(current, event)]
    except KeyError:
        raise IllegalTransition(f"no transition for ({current}, {event.value})") from None


def aggregate_status(per_learner: list[JobStatus]) -> JobStatus:
    """Fold per-learner statuses into one job status.

    Failure dominates, then halt; otherwise the job is only as far along as
    its slowest learner (minimum phase rank).  All learners COMPLETED maps
    to STORING: the results flush is still pending at that point.
    """
    if not per_learner:
        raise ValueError("aggregate_status requires at least one learner status")
    if JobStatus.FAILED in per_learner:
        return JobStatus.FAILED
    if JobStatus.HALTED in per_learner:
        return JobStatus.HALTED
    lowest = min(per_learner, key=phase_rank)
    if lowest is JobStatus.COMPLETED:
        return JobStatus.STORING
    return lowest


def legal_append(current: JobStatus, new: JobStatus, *, same_ok: bool = True) -> bool:
    """Whether appending ``new`` after ``current`` respects monotonicity.

    Forward phase moves (of any distance) and terminal outcomes are legal;
    re-appending the same status is legal when ``same_ok`` (restart notices
    and idempotent retries).  Anything that would regress is not.
    """
    if is_terminal(current):
        return False
    if new == current:
        return same_ok
    if is_terminal(new):
        return True
    return phase_rank(new) > phase_rank(current)


@dataclass
class StatusHistory:
    """Append-only status history enforcing the lattice invariants."""

    records: list[StatusRecord] = field(default_factory=list)

    @property
    def current(self) -> JobStatus | None:
        return self.records[-1].status if self.records else None

    def append(self, record: StatusRecord) -> None:
        if self.records:
            last = self.records[-1]
            if not legal_append(last.status, record.status):
                raise IllegalTransition(
                    f"cannot append {record.status.value} after {last.status.value}"
                )
            if record.timestamp < last.timestamp:
                raise IllegalTransition("timestamps must be nondecreasing")
            if record.restart_count < last.restart_count:
                raise IllegalTransition("restart_count must be nondecreasing")
        self.records.append(record)

    def has_entry(self, status: JobStatus, restart_count: int) -> bool:
        """Idempotency probe: is (status, restart_count) already recorded?"""
        return any(
            r.status == status and r.restart_count == restart_count for r in self.records
        )
