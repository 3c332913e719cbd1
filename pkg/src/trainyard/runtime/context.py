"""Shared context handed to everything that runs on behalf of one job."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Generator, TypeVar

from trainyard.config import PlatformConfig
from trainyard.errors import ServiceUnavailable, StoreUnavailable
from trainyard.jobs import JobManifest

if TYPE_CHECKING:
    from trainyard.cluster import Cluster, Simulator
    from trainyard.stores import CoordKv, MetadataStore, ObjectStore

T = TypeVar("T")

HELPER_NAMES = ("load-data", "store-results", "log-collector", "controller")


@dataclass
class JobCtx:
    sim: "Simulator"
    cluster: "Cluster"
    kv: "CoordKv"
    metadata: "MetadataStore"
    objects: "ObjectStore"
    config: PlatformConfig
    job_id: str
    manifest: JobManifest

    # -- deterministic resource names ---------------------------------------

    @property
    def volume_id(self) -> str:
        return f"{self.job_id}-vol"

    @property
    def learner_set_id(self) -> str:
        return f"{self.job_id}-learners"

    def learner_id(self, index: int) -> str:
        return f"{self.learner_set_id}-{index}"

    @property
    def learner_ids(self) -> list[str]:
        return [self.learner_id(i) for i in range(self.manifest.learners)]

    @property
    def helper_group_id(self) -> str:
        return f"{self.job_id}-helpers"

    def helper_id(self, name: str) -> str:
        return f"{self.helper_group_id}-{name}"

    @property
    def policy_id(self) -> str:
        return f"{self.job_id}-policy"

    @property
    def guardian_id(self) -> str:
        return f"{self.job_id}-guardian"

    # -- coordination keys ------------------------------------------------------

    @property
    def claim_key(self) -> str:
        return f"/jobs/{self.job_id}/guardian/claim"

    @property
    def phase_key(self) -> str:
        return f"/jobs/{self.job_id}/guardian/phase"

    @property
    def deployed_key(self) -> str:
        return f"/jobs/{self.job_id}/guardian/deployed"

    @property
    def halt_key(self) -> str:
        return f"/jobs/{self.job_id}/halt"

    @property
    def learner_key_prefix(self) -> str:
        return f"/jobs/{self.job_id}/learners/"

    def learner_status_key(self, index: int) -> str:
        return f"{self.learner_key_prefix}{index}/status"

    # -- result-bucket keys -------------------------------------------------------

    def checkpoint_prefix(self, learner_id: str) -> str:
        return f"{self.manifest.result_store.prefix}checkpoints/{learner_id}/"

    def result_key(self, name: str) -> str:
        return f"{self.manifest.result_store.prefix}results/{name}"

    def shipped_log_key(self, learner_id: str) -> str:
        return f"{self.manifest.result_store.prefix}logs/{learner_id}.log"


def retrying(fn: Callable[[], T], interval: float = 0.5) -> Generator[float, None, T]:
    """Call ``fn`` until a backing store or service answers.

    Payload usage: ``value = yield from retrying(...)``.  Unavailability is
    the only thing retried; real errors propagate.
    """
    while True:
        try:
            return fn()
        except (StoreUnavailable, ServiceUnavailable):
            yield interval
