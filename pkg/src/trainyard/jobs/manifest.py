"""Training-job manifest: the public, versioned submission contract.

A manifest is a single YAML/JSON document (YAML is a superset) carrying a
``manifest_version: 1`` field.  Field names and types are fixed; unknown
fields are rejected so that typos fail loudly at submission time.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import yaml

from trainyard.errors import ManifestInvalid

MANIFEST_VERSION = 1

_IDENTIFIER = re.compile(r"^[a-z][a-z0-9_-]*$")

_STORE_FIELDS = {"bucket", "prefix", "credential"}
_TOP_FIELDS = {
    "manifest_version",
    "name",
    "framework",
    "framework_version",
    "learners",
    "gpus_per_learner",
    "data_store",
    "result_store",
    "checkpoint_interval",
    "total_iterations",
    "learning_rate",
    "extra_hyperparameters",
}
_OPTIONAL_FIELDS = {"extra_hyperparameters"}


@dataclass(frozen=True)
class StoreRef:
    """Reference to a bucket plus the credential used to access it."""

    bucket: str
    prefix: str
    credential: str

    def to_dict(self) -> dict:
        return {"bucket": self.bucket, "prefix": self.prefix, "credential": self.credential}


@dataclass(frozen=True)
class JobManifest:
    name: str
    framework: str
    framework_version: str
    learners: int
    gpus_per_learner: int
    data_store: StoreRef
    result_store: StoreRef
    checkpoint_interval: int
    total_iterations: int
    learning_rate: str  # opaque hyperparameter, carried not interpreted
    extra_hyperparameters: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "manifest_version": MANIFEST_VERSION,
            "name": self.name,
            "framework": self.framework,
            "framework_version": self.framework_version,
            "learners": self.learners,
            "gpus_per_learner": self.gpus_per_learner,
            "data_store": self.data_store.to_dict(),
            "result_store": self.result_store.to_dict(),
            "checkpoint_interval": self.checkpoint_interval,
            "total_iterations": self.total_iterations,
            "learning_rate": self.learning_rate,
            "extra_hyperparameters": dict(self.extra_hyperparameters),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "JobManifest":
        return _build(d)


def _fail(msg: str) -> None:
    raise ManifestInvalid(msg)


def _require_str(doc: dict, name: str, nonempty: bool = True) -> str:
    value = doc.get(name)
    if not isinstance(value, str):
        _fail(f"{name} required (string)")
    if nonempty and not value:
        _fail(f"{name} must be nonempty")
    return value


def _require_int(doc: dict, name: str, minimum: int) -> int:
    value = doc.get(name)
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(f"{name} required (integer)")
    if value < minimum:
        _fail(f"{name} ≥ {minimum}")
    return value


def _parse_store(doc: dict, name: str) -> StoreRef:
    raw = doc.get(name)
    if not isinstance(raw, dict):
        _fail(f"{name} required (mapping with bucket/prefix/credential)")
    unknown = set(raw) - _STORE_FIELDS
    if unknown:
        _fail(f"{name}: unknown fields {sorted(unknown)}")
    bucket = raw.get("bucket")
    if not isinstance(bucket, str) or not bucket:
        _fail(f"{name}.bucket must be a nonempty string")
    prefix = raw.get("prefix", "")
    if not isinstance(prefix, str):
        _fail(f"{name}.prefix must be a string")
    credential = raw.get("credential")
    if not isinstance(credential, str):
        _fail(f"{name}.credential required (string)")
    return StoreRef(bucket=bucket, prefix=prefix, credential=credential)


def _build(doc: dict) -> JobManifest:
    if not isinstance(doc, dict):
        _fail("manifest must be a mapping")
    unknown = set(doc) - _TOP_FIELDS
    if unknown:
        _fail(f"unknown fields {sorted(unknown)}")
    missing = _TOP_FIELDS - _OPTIONAL_FIELDS - set(doc)
    if missing:
        _fail(f"{sorted(missing)[0]} required")
    if doc["manifest_version"] != MANIFEST_VERSION:
        _fail(f"manifest_version must be {MANIFEST_VERSION}")

    framework = _require_str(doc, "framework")
    if not _IDENTIFIER.match(framework):
        _fail("framework must match [a-z][a-z0-9_-]*")

    lr = doc.get("learning_rate")
    if isinstance(lr, bool) or not isinstance(lr, (str, int, float)):
        _fail("learning_rate required (number or string)")

    extra = doc.get("extra_hyperparameters", {})
    if not isinstance(extra, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in extra.items()
    ):
        _fail("extra_hyperparameters must be a string→string map")

    return JobManifest(
        name=_require_str(doc, "name"),
        framework=framework,
        framework_version=_require_str(doc, "framework_version"),
        learners=_require_int(doc, "learners", 1),
        gpus_per_learner=_require_int(doc, "gpus_per_learner", 0),
        data_store=_parse_store(doc, "data_store"),
        result_store=_parse_store(doc, "result_store"),
        checkpoint_interval=_require_int(doc, "checkpoint_interval", 1),
        total_iterations=_require_int(doc, "total_iterations", 1),
        learning_rate=str(lr),
        extra_hyperparameters=dict(extra),
    )


def parse_manifest(text: str) -> JobManifest:
    """Parse and validate a manifest document.

    Raises ManifestInvalid with a field-level message on any violation.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ManifestInvalid(f"not a valid document: {e}") from None
    return _build(doc)
