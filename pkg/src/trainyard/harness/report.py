"""Run reports: one JSON document per scenario run, plus a text rendering.

The JSON is fully deterministic for a deterministic run (sorted keys,
fixed float precision, no wall-clock timestamps), so two reports can be
diffed byte for byte to prove reproducibility.
"""

from __future__ import annotations

import hashlib
import json
import pathlib


def build_report(scenario, outcome: str, plat, submissions: list[dict],
                 checks: list[dict]) -> dict:
    jobs = []
    for record in plat.metadata.scan_jobs():
        jobs.append({
            "job_id": record.job_id,
            "tenant": record.tenant,
            "name": record.manifest.name,
            "status": record.current_status.value,
            "restart_count": max((r.restart_count for r in record.history.records),
                                 default=0),
            "history": [
                {"status": r.status.value, "t": round(r.timestamp, 3),
                 "restart_count": r.restart_count, "detail": r.detail}
                for r in record.history.records
            ],
        })
    digest = hashlib.sha256("\n".join(plat.sim.events).encode()).hexdigest()
    return {
        "scenario": scenario.name,
        "seed": scenario.seed,
        "mode": scenario.mode,
        "outcome": outcome,
        "sim_time": round(plat.sim.now, 3),
        "submissions": [
            {"at": round(s["at"], 3), "code": s["code"], "body": s["body"]}
            for s in submissions
        ],
        "jobs": jobs,
        "checks": checks,
        "events": {"count": len(plat.sim.events), "sha256": digest},
        "passed": all(c["ok"] for c in checks),
    }


def write_report(report: dict, path: str | pathlib.Path) -> None:
    pathlib.Path(path).write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")


def render_report(report: dict) -> str:
    lines = [
        f"scenario: {report['scenario']}  seed={report['seed']}  mode={report['mode']}",
        f"outcome: {report['outcome']} at t={report['sim_time']:.3f}  "
        f"events={report['events']['count']}  sha256={report['events']['sha256'][:12]}",
        "",
        f"{'job':<8}{'tenant':<10}{'status':<12}{'restarts':<10}name",
    ]
    for job in report["jobs"]:
        lines.append(f"{job['job_id']:<8}{job['tenant']:<10}{job['status']:<12}"
                     f"{job['restart_count']:<10}{job['name']}")
    if report["submissions"] and not report["jobs"]:
        lines.append("(no jobs were accepted)")
    lines.append("")
    for c in report["checks"]:
        verdict = "PASS" if c["ok"] else "FAIL"
        lines.append(f"[{verdict}] {c['check']}: {c['message']}")
    if report["checks"]:
        lines.append("")
    lines.append("PASSED" if report["passed"] else "FAILED")
    return "\n".join(lines)
