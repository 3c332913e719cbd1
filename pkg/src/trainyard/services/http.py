"""HTTP facade over the API service.

``HttpGateway.handle`` is transport-free: (method, path, query, headers,
body) in, (status, json-able dict) out.  Tests call it directly; the
``serve`` entry point hangs it behind a stdlib threading HTTP server and
funnels every request through the simulator's loop so handler threads
never race the event queue.
"""

from __future__ import annotations

import json
import re
import urllib.parse
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from trainyard.cluster.sim import Simulator
from trainyard.errors import (
    AccessDenied,
    DuplicateId,
    ManifestInvalid,
    NotFound,
    ServiceUnavailable,
    StoreUnavailable,
    Terminal,
    TrainyardError,
    Unauthenticated,
)
from trainyard.services.api import ApiService

_STATUS_BY_CODE = {
    ManifestInvalid.code: 400,
    Unauthenticated.code: 401,
    AccessDenied.code: 403,
    NotFound.code: 404,
    Terminal.code: 409,
    DuplicateId.code: 409,
    StoreUnavailable.code: 503,
    ServiceUnavailable.code: 503,
}

_JOB_PATH = re.compile(r"^/v1/jobs/([A-Za-z0-9_-]+)$")
_LOGS_PATH = re.compile(r"^/v1/jobs/([A-Za-z0-9_-]+)/logs$")


def _bearer(headers: dict) -> str | None:
    auth = {k.lower(): v for k, v in headers.items()}.get("authorization", "")
    if auth.startswith("Bearer "):
        return auth[len("Bearer "):]
    return None


class HttpGateway:
    def __init__(self, api: ApiService, sim: Simulator):
        self.api = api
        self.sim = sim

    def handle(self, method: str, path: str, query: dict[str, str] | None = None,
               headers: dict[str, str] | None = None, body: bytes = b"") -> tuple[int, dict]:
        query = query or {}
        headers = headers or {}
        request_id = headers.get("Idempotency-Key") or headers.get("idempotency-key")
        try:
            result = self.sim.call_sync(
                lambda: self._dispatch(method, path, query, headers, body, request_id))
            status = 201 if (method, path) == ("POST", "/v1/jobs") else 200
            return status, result
        except TrainyardError as exc:
            status = _STATUS_BY_CODE.get(exc.code, 400)
            return status, {"code": exc.code, "message": exc.message,
                            "request_id": request_id or ""}

    def _dispatch(self, method: str, path: str, query: dict, headers: dict,
                  body: bytes, request_id: str | None) -> dict:
        token = _bearer(headers)
        if method == "GET" and path == "/v1/ping":
            return self.api.ping()
        if method == "POST" and path == "/v1/jobs":
            return self.api.submit(token, body.decode(), request_id=request_id)
        if method == "GET" and path == "/v1/jobs":
            return self.api.list_jobs(token)
        match = _LOGS_PATH.match(path)
        if match and method == "GET":
            return self.api.get_logs(
                token, match.group(1),
                from_line=_int_param(query, "from"),
                to_line=_int_param(query, "to"))
        match = _JOB_PATH.match(path)
        if match and method == "GET":
            return self.api.get_status(token, match.group(1))
        if match and method == "DELETE":
            return self.api.halt(token, match.group(1))
        raise NotFound(f"no route {method} {path}")


def _int_param(query: dict, name: str) -> int | None:
    raw = query.get(name)
    return int(raw) if raw not in (None, "") else None


class _Handler(BaseHTTPRequestHandler):
    gateway: HttpGateway  # set by serve()

    def _run(self, method: str) -> None:
        parsed = urllib.parse.urlsplit(self.path)
        query = dict(urllib.parse.parse_qsl(parsed.query))
        length = int(self.headers.get("Content-Length") or 0)
        body = self.rfile.read(length) if length else b""
        status, doc = self.gateway.handle(method, parsed.path, query,
                                          dict(self.headers.items()), body)
        payload = json.dumps(doc, sort_keys=True).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def do_GET(self) -> None:
        self._run("GET")

    def do_POST(self) -> None:
        self._run("POST")

    def do_DELETE(self) -> None:
        self._run("DELETE")

    def log_message(self, fmt: str, *args) -> None:
        pass  # keep request noise out of the console


def serve(gateway: HttpGateway, host: str = "127.0.0.1", port: int = 8080) -> ThreadingHTTPServer:
    """Start the HTTP front end; caller owns shutdown."""
    handler = type("BoundHandler", (_Handler,), {"gateway": gateway})
    server = ThreadingHTTPServer((host, port), handler)
    return server
