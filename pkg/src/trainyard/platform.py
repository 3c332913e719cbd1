"""Assembly of one complete platform instance over one simulator.

This is the composition root: stores, cluster, fault routing, the two
control-plane hosts, and the services.  Tests and the scenario harness
both build everything through here so wiring differences can't creep in.
"""

from __future__ import annotations

from pathlib import Path

from trainyard.cluster import Cluster, FaultInjector, Simulator
from trainyard.config import PlatformConfig
from trainyard.jobs import JobManifest
from trainyard.runtime.context import JobCtx
from trainyard.services.api import ApiService
from trainyard.services.hosts import ServiceHost
from trainyard.services.http import HttpGateway
from trainyard.services.lcm import LifecycleManager
from trainyard.stores import CoordKv, MetadataStore, ObjectStore


class Platform:
    def __init__(self, data_dir: str | Path, config: PlatformConfig | None = None,
                 seed: int = 0, tokens: dict[str, str] | None = None):
        self.config = config or PlatformConfig()
        self.data_dir = Path(data_dir)
        self.sim = Simulator(seed=seed)

        cfg = self.config
        self.metadata = MetadataStore(self.data_dir / "metadata.log", fsync=cfg.fsync)
        self.kv = CoordKv(self.data_dir / "kv.log", fsync=cfg.fsync)
        self.objects = ObjectStore(self.data_dir / "objects")
        self.cluster = Cluster(self.sim, node_gpus=list(cfg.node_gpus),
                               node_restart_delay=cfg.node_restart_delay)

        self.api_host = ServiceHost(self.sim, "api", cfg.api_restart_delay)
        self.lcm_host = ServiceHost(self.sim, "lcm", cfg.lcm_restart_delay)
        self.lcm = LifecycleManager(self.sim, self.cluster, self.kv, self.metadata,
                                    self.lcm_host, self.make_ctx,
                                    reconcile_interval=cfg.reconcile_interval)
        self.api = ApiService(self.sim, self.metadata, self.kv, self.objects,
                              self.lcm, self.api_host, tokens or {})
        self.gateway = HttpGateway(self.api, self.sim)

        self.injector = FaultInjector(self.sim, self.cluster)
        self.injector.register_service("api", self.api_host.crash)
        self.injector.register_service("lcm", self.lcm_host.crash)
        for name, store in (("metadata", self.metadata), ("kv", self.kv),
                            ("objects", self.objects)):
            self.injector.register_store(
                name,
                crash=lambda s=store, n=name: self._crash_store(n, s),
                outage=lambda d, s=store, n=name: self._store_outage(n, s, d),
            )

    # -- tenancy and data ------------------------------------------------------

    def add_tenant(self, token: str, tenant: str) -> None:
        self.api.tokens[token] = tenant

    def add_bucket(self, name: str, tenant: str, credential: str,
                   objects: dict[str, bytes] | None = None,
                   read_latency: float = 0.0) -> None:
        self.objects.create_bucket(name, tenant, credential, read_latency=read_latency)
        for key, data in (objects or {}).items():
            self.objects.put_object(name, credential, key, data)

    def make_ctx(self, job_id: str, manifest: JobManifest) -> JobCtx:
        return JobCtx(sim=self.sim, cluster=self.cluster, kv=self.kv,
                      metadata=self.metadata, objects=self.objects,
                      config=self.config, job_id=job_id, manifest=manifest)

    # -- store fault plumbing -----------------------------------------------------

    def _crash_store(self, name: str, store) -> None:
        store.crash()
        self.sim.log("store_crash", f"store:{name}", "")

        def back() -> None:
            store.restore()
            self.sim.log("store_restored", f"store:{name}", "")

        self.sim.call_after(self.config.store_restart_delay, back)

    def _store_outage(self, name: str, store, duration: float) -> None:
        store.begin_outage()
        self.sim.log("outage_begin", f"store:{name}", f"duration={duration:.3f}")

        def over() -> None:
            store.end_outage()
            self.sim.log("outage_end", f"store:{name}", "")

        self.sim.call_after(duration, over)

    def close(self) -> None:
        """Release file handles.  Needed when one process builds many
        platforms back to back; a platform is not usable afterwards."""
        self.metadata.close()
        self.kv.close()

    # -- conveniences for tests and the harness --------------------------------------

    def all_jobs_terminal(self) -> bool:
        from trainyard.jobs import is_terminal

        try:
            jobs = self.metadata.scan_jobs()
        except Exception:
            return False
        return bool(jobs) and all(is_terminal(j.current_status) for j in jobs)

    def run_until_settled(self, horizon: float) -> str:
        """Drive the sim until every submitted job is terminal and all of its
        cluster resources are gone, or the horizon passes."""

        def settled() -> bool:
            if not self.all_jobs_terminal():
                return False
            try:
                jobs = self.metadata.scan_jobs()
            except Exception:
                return False
            return all(not self.cluster.inventory(j.job_id) for j in jobs)

        return self.sim.run(stop_when=settled, horizon=horizon)
