"""Command line front end.

Two halves: ``scenario`` and ``serve`` run a platform (scripted batch run
vs. a live HTTP server paced against the wall clock), and the client
commands (``submit``, ``status``, ``logs``, ``halt``, ``list``) talk to a
running server over HTTP.
"""

from __future__ import annotations

import json
import pathlib
import sys
import tempfile

import click
import requests

from trainyard.errors import TrainyardError
from trainyard.harness.report import render_report, write_report
from trainyard.harness.scenario import (
    build_platform_from,
    load_scenario,
    run_scenario_capturing,
)
from trainyard.services.http import serve as http_serve


@click.group()
def main() -> None:
    """Training-job orchestration platform over a simulated cluster."""


@main.command()
@click.argument("scenario_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--report", "report_path", type=click.Path(dir_okay=False),
              help="Write the JSON run report here.")
@click.option("--events", "events_path", type=click.Path(dir_okay=False),
              help="Write the full simulator event log here.")
@click.option("--data-dir", type=click.Path(file_okay=False),
              help="Durable store directory (default: a fresh temp dir).")
@click.option("--quiet", is_flag=True, help="Only print the final verdict.")
def scenario(scenario_file, report_path, events_path, data_dir, quiet):
    """Run a scripted scenario to completion and evaluate its checks."""
    try:
        spec = load_scenario(scenario_file)
    except TrainyardError as exc:
        raise click.ClickException(str(exc)) from exc

    if data_dir:
        report, events = _run(spec, data_dir)
    else:
        with tempfile.TemporaryDirectory(prefix="trainyard-") as tmp:
            report, events = _run(spec, tmp)

    if report_path:
        write_report(report, report_path)
    if events_path:
        pathlib.Path(events_path).write_text("\n".join(events) + "\n")
    click.echo("PASSED" if report["passed"] else "FAILED") if quiet \
        else click.echo(render_report(report))
    if not report["passed"] or report["outcome"] == "horizon":
        sys.exit(1)


def _run(spec, data_dir):
    report, plat = run_scenario_capturing(spec, data_dir)
    return report, plat.sim.events


@main.command()
@click.argument("scenario_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8080, show_default=True)
@click.option("--rate", default=None, type=float,
              help="Simulated seconds per real second (default: scenario's rate).")
@click.option("--data-dir", type=click.Path(file_okay=False),
              help="Durable store directory (default: a fresh temp dir).")
def serve(scenario_file, host, port, rate, data_dir):
    """Serve the HTTP API live, pacing the simulated cluster in real time.

    The scenario file provides tenants, buckets, config, and any scripted
    jobs or faults; the server then accepts real requests on top.
    """
    try:
        spec = load_scenario(scenario_file)
    except TrainyardError as exc:
        raise click.ClickException(str(exc)) from exc
    tmp = None
    if not data_dir:
        tmp = tempfile.TemporaryDirectory(prefix="trainyard-")
        data_dir = tmp.name
    plat = build_platform_from(spec, data_dir)
    plat.sim.start_thread(rate=rate if rate is not None else spec.rate)
    server = http_serve(plat.gateway, host=host, port=port)
    bound = server.server_address
    click.echo(f"listening on http://{bound[0]}:{bound[1]} "
               f"(rate={rate if rate is not None else spec.rate}x, seed={spec.seed})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        click.echo("shutting down")
    finally:
        server.shutdown()
        plat.sim.stop_thread()
        if tmp is not None:
            tmp.cleanup()


def _client_opts(fn):
    fn = click.option("--url", default="http://127.0.0.1:8080", show_default=True,
                      help="Base URL of a running server.")(fn)
    fn = click.option("--token", required=True, help="Tenant bearer token.")(fn)
    return fn


def _request(method, url, token, **kw):
    headers = kw.pop("headers", {})
    headers["Authorization"] = f"Bearer {token}"
    try:
        resp = requests.request(method, url, headers=headers, timeout=30, **kw)
    except requests.RequestException as exc:
        raise click.ClickException(f"request failed: {exc}") from exc
    try:
        body = resp.json()
    except ValueError:
        body = {"raw": resp.text}
    return resp.status_code, body


def _emit(code, body):
    click.echo(json.dumps(body, indent=2, sort_keys=True))
    if code >= 400:
        sys.exit(1)


@main.command()
@click.argument("manifest_file", type=click.Path(exists=True, dir_okay=False))
@_client_opts
@click.option("--request-id", help="Idempotency key: retries with the same id return the same job.")
def submit(manifest_file, url, token, request_id):
    """Submit a job manifest."""
    headers = {"Idempotency-Key": request_id} if request_id else {}
    code, body = _request("POST", f"{url}/v1/jobs", token,
                          data=pathlib.Path(manifest_file).read_bytes(), headers=headers)
    _emit(code, body)


@main.command()
@click.argument("job_id")
@_client_opts
def status(job_id, url, token):
    """Show a job's status and full history."""
    code, body = _request("GET", f"{url}/v1/jobs/{job_id}", token)
    _emit(code, body)


@main.command()
@click.argument("job_id")
@_client_opts
@click.option("--from", "from_line", type=int, help="First log line (1-based).")
@click.option("--to", "to_line", type=int, help="Last log line (inclusive).")
def logs(job_id, url, token, from_line, to_line):
    """Fetch shipped training logs, optionally a line range."""
    params = {}
    if from_line is not None:
        params["from"] = from_line
    if to_line is not None:
        params["to"] = to_line
    code, body = _request("GET", f"{url}/v1/jobs/{job_id}/logs", token, params=params)
    _emit(code, body)


@main.command()
@click.argument("job_id")
@_client_opts
def halt(job_id, url, token):
    """Ask the platform to stop a job and tear it down."""
    code, body = _request("DELETE", f"{url}/v1/jobs/{job_id}", token)
    _emit(code, body)


@main.command(name="list")
@_client_opts
def list_jobs(url, token):
    """List this tenant's jobs."""
    code, body = _request("GET", f"{url}/v1/jobs", token)
    _emit(code, body)


if __name__ == "__main__":
    main()
