"""Scripted end-to-end scenarios.

A scenario file is YAML describing one platform run: cluster shape,
tenants, buckets, job submissions, a fault schedule, and the checks the
run must satisfy.  Runs are deterministic for a given file and seed, so a
scenario doubles as a regression test and as a reproducible incident
script.

Top-level keys::

    name        free-form label (defaults to the file stem)
    seed        int, default 0
    mode        virtual (default) | wall
    rate        wall mode only: simulated seconds per real second
    horizon     give-up time in simulated seconds, default 600
    config      PlatformConfig overrides, e.g. {node_gpus: [4, 4]}
    tenants     {token: tenant}
    buckets     [{name, tenant, credential, objects: {key: str|bytes}, read_latency}]
    jobs        [{at, token, manifest, request_id}]
    faults      [{at, target, kind, duration}]
    checks      [{check: <registered name>, ...params}]
"""

from __future__ import annotations

import pathlib
import time
from dataclasses import dataclass, field

import yaml

from trainyard.cluster.faults import FaultSpec
from trainyard.config import PlatformConfig
from trainyard.errors import ScriptInvalid, TrainyardError, UnknownTarget
from trainyard.harness.checks import run_checks, validate_check
from trainyard.harness.report import build_report
from trainyard.jobs import is_terminal
from trainyard.platform import Platform

_TOP_KEYS = {"name", "seed", "mode", "rate", "horizon", "config", "tenants",
             "buckets", "jobs", "faults", "checks"}
_BUCKET_KEYS = {"name", "tenant", "credential", "objects", "read_latency"}
_JOB_KEYS = {"at", "token", "manifest", "request_id"}


@dataclass
class Submission:
    at: float
    token: str
    manifest: str
    request_id: str | None = None


@dataclass
class Scenario:
    name: str
    seed: int = 0
    mode: str = "virtual"
    rate: float = 20.0
    horizon: float = 600.0
    config: PlatformConfig = field(default_factory=PlatformConfig)
    tenants: dict[str, str] = field(default_factory=dict)
    buckets: list[dict] = field(default_factory=list)
    jobs: list[Submission] = field(default_factory=list)
    faults: list[FaultSpec] = field(default_factory=list)
    checks: list[dict] = field(default_factory=list)


def load_scenario(path: str | pathlib.Path) -> Scenario:
    path = pathlib.Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ScriptInvalid(f"{path}: not valid yaml: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScriptInvalid(f"{path}: top level must be a mapping")
    return parse_scenario(doc, default_name=path.stem)


def parse_scenario(doc: dict, default_name: str = "scenario") -> Scenario:
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ScriptInvalid(f"unknown scenario keys: {sorted(unknown)}")

    mode = str(doc.get("mode", "virtual"))
    if mode not in ("virtual", "wall"):
        raise ScriptInvalid(f"mode must be virtual or wall, not {mode!r}")

    try:
        config = PlatformConfig.from_dict(doc.get("config") or {})
    except (TypeError, ValueError) as exc:
        raise ScriptInvalid(f"bad config block: {exc}") from exc

    scenario = Scenario(
        name=str(doc.get("name", default_name)),
        seed=int(doc.get("seed", 0)),
        mode=mode,
        rate=float(doc.get("rate", 20.0)),
        horizon=float(doc.get("horizon", 600.0)),
        config=config,
        tenants={str(k): str(v) for k, v in (doc.get("tenants") or {}).items()},
    )

    for i, raw in enumerate(doc.get("buckets") or []):
        unknown = set(raw) - _BUCKET_KEYS
        if unknown:
            raise ScriptInvalid(f"buckets[{i}]: unknown keys {sorted(unknown)}")
        for required in ("name", "tenant", "credential"):
            if required not in raw:
                raise ScriptInvalid(f"buckets[{i}]: missing {required}")
        objects = {}
        for key, value in (raw.get("objects") or {}).items():
            objects[str(key)] = value if isinstance(value, bytes) else str(value).encode()
        scenario.buckets.append({
            "name": str(raw["name"]), "tenant": str(raw["tenant"]),
            "credential": str(raw["credential"]), "objects": objects,
            "read_latency": float(raw.get("read_latency", 0.0)),
        })

    for i, raw in enumerate(doc.get("jobs") or []):
        unknown = set(raw) - _JOB_KEYS
        if unknown:
            raise ScriptInvalid(f"jobs[{i}]: unknown keys {sorted(unknown)}")
        if "token" not in raw or "manifest" not in raw:
            raise ScriptInvalid(f"jobs[{i}]: token and manifest are required")
        scenario.jobs.append(Submission(
            at=float(raw.get("at", 0.0)),
            token=str(raw["token"]),
            manifest=str(raw["manifest"]),
            request_id=str(raw["request_id"]) if raw.get("request_id") else None,
        ))

    for i, raw in enumerate(doc.get("faults") or []):
        try:
            scenario.faults.append(FaultSpec.from_dict(raw))
        except (KeyError, TypeError, ValueError, UnknownTarget) as exc:
            raise ScriptInvalid(f"faults[{i}]: {exc}") from exc

    for i, raw in enumerate(doc.get("checks") or []):
        if not isinstance(raw, dict) or "check" not in raw:
            raise ScriptInvalid(f"checks[{i}]: each check needs a 'check' key")
        validate_check(raw)
        scenario.checks.append(dict(raw))

    return scenario


def build_platform_from(scenario: Scenario, data_dir: str | pathlib.Path) -> Platform:
    plat = Platform(pathlib.Path(data_dir), config=scenario.config, seed=scenario.seed)
    for token, tenant in scenario.tenants.items():
        plat.add_tenant(token, tenant)
    for bucket in scenario.buckets:
        plat.add_bucket(bucket["name"], bucket["tenant"], bucket["credential"],
                        objects=bucket["objects"], read_latency=bucket["read_latency"])
    # Faults validate against the injector's target grammar here, so a typo
    # fails the run at setup instead of silently missing forever.
    plat.injector.schedule_all(scenario.faults)
    return plat


def run_scenario(scenario: Scenario, data_dir: str | pathlib.Path) -> dict:
    """Execute one scenario and return its report dict."""
    return run_scenario_capturing(scenario, data_dir)[0]


def run_scenario_capturing(scenario: Scenario,
                           data_dir: str | pathlib.Path) -> tuple[dict, Platform]:
    """Like run_scenario, but also hands back the finished platform so the
    caller can dump the event log or poke at stores."""
    plat = build_platform_from(scenario, data_dir)
    submissions: list[dict] = []

    def make_submit(job: Submission):
        def do() -> None:
            headers = {"Authorization": f"Bearer {job.token}"}
            if job.request_id:
                headers["Idempotency-Key"] = job.request_id
            code, body = plat.gateway.handle("POST", "/v1/jobs", headers=headers,
                                             body=job.manifest.encode())
            submissions.append({"at": plat.sim.now, "code": code, "body": body})
        return do

    for job in scenario.jobs:
        plat.sim.call_at(job.at, make_submit(job))

    def settled() -> bool:
        if len(submissions) < len(scenario.jobs):
            return False
        try:
            jobs = plat.metadata.scan_jobs()
            return all(is_terminal(j.current_status)
                       and plat.cluster.inventory(j.job_id) == [] for j in jobs)
        except TrainyardError:
            return False  # a store is down or out; keep running

    if scenario.mode == "virtual":
        outcome = plat.sim.run(stop_when=settled, horizon=scenario.horizon)
    else:
        outcome = _run_wall(plat, settled, scenario.horizon, scenario.rate)

    checks = run_checks(scenario.checks, plat)
    return build_report(scenario, outcome, plat, submissions, checks), plat


def _run_wall(plat: Platform, settled, horizon: float, rate: float) -> str:
    plat.sim.start_thread(rate=rate)
    try:
        deadline = time.monotonic() + horizon / rate + 2.0
        while time.monotonic() < deadline:
            if plat.sim.call_sync(settled):
                return "stopped"
            if plat.sim.call_sync(lambda: plat.sim.now) >= horizon:
                return "horizon"
            time.sleep(0.02)
        return "horizon"
    finally:
        plat.sim.stop_thread()
