"""Workloads that run on the cluster for each job: guardian, learners, helpers."""

from trainyard.runtime.context import HELPER_NAMES, JobCtx, retrying
from trainyard.runtime.guardian import guardian_payload
from trainyard.runtime.helpers import (
    controller_payload,
    load_data_payload,
    log_collector_payload,
    store_results_payload,
)
from trainyard.runtime.learner import learner_payload

__all__ = [
    "HELPER_NAMES",
    "JobCtx",
    "controller_payload",
    "guardian_payload",
    "learner_payload",
    "load_data_payload",
    "log_collector_payload",
    "retrying",
    "store_results_payload",
]
