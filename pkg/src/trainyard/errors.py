"""Error taxonomy shared across the platform.

Every error carries a stable ``code`` string; the API layer maps codes to
HTTP statuses, the CLI prints them verbatim.
"""

from __future__ import annotations


class TrainyardError(Exception):
    """Base class for all platform errors."""

    code = "INTERNAL"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)
        self.message = message or self.code


class ManifestInvalid(TrainyardError):
    code = "MANIFEST_INVALID"


class IllegalTransition(TrainyardError):
    code = "ILLEGAL_TRANSITION"


class DuplicateId(TrainyardError):
    code = "DUPLICATE_ID"


class NotFound(TrainyardError):
    code = "NOT_FOUND"


class StoreUnavailable(TrainyardError):
    """Raised while a store is crashed or inside an injected outage window."""

    code = "STORE_UNAVAILABLE"


class ServiceUnavailable(TrainyardError):
    """Raised when a crashed service (API/LCM) is called before it restarts."""

    code = "SERVICE_UNAVAILABLE"


class Unauthenticated(TrainyardError):
    """No token, or a token the platform does not know."""

    code = "UNAUTHENTICATED"


class AccessDenied(TrainyardError):
    code = "ACCESS_DENIED"


class AlreadyExists(TrainyardError):
    code = "ALREADY_EXISTS"


class AlreadyClaimed(TrainyardError):
    """Benign: a Guardian claim for the job is already present."""

    code = "ALREADY_CLAIMED"


class Unschedulable(TrainyardError):
    """Aggregate demand exceeds total cluster capacity; never queued."""

    code = "UNSCHEDULABLE"


class UnknownTarget(TrainyardError):
    code = "UNKNOWN_TARGET"


class Compacted(TrainyardError):
    """Watch start revision predates retained history."""

    code = "COMPACTED"


class Terminal(TrainyardError):
    """Operation rejected because the job is in a terminal status."""

    code = "TERMINAL"


class ScriptInvalid(TrainyardError):
    code = "SCRIPT_INVALID"
