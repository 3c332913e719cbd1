"""File layout on a job's shared volume.

Everything the job's units exchange goes through these paths:

    /status/<learner_id>    JSON {status, timestamp, attempt}
    /exit/<learner_id>      JSON {code, timestamp}
    /logs/<learner_id>.log  newline-terminated text, append-only
    /markers/load-data      JSON {ok, timestamp, detail}
    /markers/store-results  JSON {ok, timestamp}
    /data/<name>            training data staged by the load-data helper
    /results/<name>         artifacts picked up by the store-results helper

Volume writes replace whole files atomically, so every reader sees a
complete JSON document or nothing.
"""

from __future__ import annotations

import json

from trainyard.cluster.resources import Volume

LOAD_DATA_MARKER = "/markers/load-data"
STORE_RESULTS_MARKER = "/markers/store-results"
DATA_DIR = "/data/"
RESULTS_DIR = "/results/"


def status_path(learner_id: str) -> str:
    return f"/status/{learner_id}"


def exit_path(learner_id: str) -> str:
    return f"/exit/{learner_id}"


def log_path(learner_id: str) -> str:
    return f"/logs/{learner_id}.log"


def write_json(volume: Volume, path: str, doc: dict) -> None:
    volume.write(path, json.dumps(doc, sort_keys=True).encode())


def read_json(volume: Volume, path: str) -> dict | None:
    if not volume.exists(path):
        return None
    return json.loads(volume.read(path))


def append_log_line(volume: Volume, learner_id: str, line: str) -> None:
    path = log_path(learner_id)
    existing = volume.read(path) if volume.exists(path) else b""
    volume.write(path, existing + line.encode() + b"\n")


def read_log_lines(volume: Volume, learner_id: str) -> list[str]:
    path = log_path(learner_id)
    if not volume.exists(path):
        return []
    return volume.read(path).decode().splitlines()
