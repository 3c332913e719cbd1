"""Tunable timing and policy knobs, with defaults used across the tests.

Restart delays are the midpoints of the recovery bands the platform is
expected to hit, and the deploy retry budget matches the default
max-attempts policy for failed deployments.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class PlatformConfig:
    # component restart delays, seconds
    api_restart_delay: float = 4.0
    lcm_restart_delay: float = 5.0
    guardian_restart_delay: float = 1.5
    helper_restart_delay: float = 3.5
    learner_restart_delay: float = 15.0
    node_restart_delay: float = 10.0
    store_restart_delay: float = 2.0

    # control loops, seconds
    reconcile_interval: float = 10.0
    controller_poll: float = 1.0
    collector_poll: float = 0.25
    monitor_poll: float = 0.5
    retry_interval: float = 0.5

    # guardian policy
    max_deploy_attempts: int = 3
    phase_step_time: float = 0.05
    drain_grace: float = 1.0

    # learner behavior
    learner_iteration_time: float = 0.1
    data_wait_timeout: float = 60.0
    data_copy_time_per_object: float = 0.05

    # durability
    fsync: bool = False

    # cluster shape (overridden by scenarios)
    node_gpus: list[int] = field(default_factory=lambda: [4, 4])

    @classmethod
    def from_dict(cls, d: dict) -> "PlatformConfig":
        cfg = cls()
        for key, value in d.items():
            if not hasattr(cfg, key):
                raise ValueError(f"unknown config key {key!r}")
            setattr(cfg, key, value)
        return cfg
