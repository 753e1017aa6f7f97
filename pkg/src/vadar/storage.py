"""Content-addressed blob storage with honest and adversarial backends.

A blob's address is the SHA-256 of its bytes, so an honest backend can
never return the wrong content undetected: every read is re-verified
against the requested id. The adversarial wrappers (tampering,
withholding, flaky) exist for the security-game harnesses; `get_any`
treats them exactly like buggy or malicious remote gateways and falls
through to the next replica.
"""
from __future__ import annotations

import hashlib
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol


class NotFound(Exception):
    """No blob stored under this content id."""


class BackendUnavailable(Exception):
    """Backend refused or failed to serve the request."""


class AllBackendsFailed(Exception):
    """No backend produced a blob matching the requested content id."""


@dataclass(frozen=True)
class ContentId:
    """SHA-256 of the stored bytes; address and integrity anchor in one."""

    bytes: bytes

    def __post_init__(self) -> None:
        if len(self.bytes) != 32:
            raise ValueError("content id must be 32 bytes")

    @property
    def hex(self) -> str:
        return self.bytes.hex()

    @classmethod
    def for_blob(cls, blob: bytes) -> "ContentId":
        return cls(hashlib.sha256(blob).digest())


class StorageBackend(Protocol):
    name: str

    def put(self, blob: bytes) -> ContentId: ...

    def get(self, cid: ContentId) -> bytes: ...


class MemoryBackend:
    """In-process store; safe for concurrent use."""

    def __init__(self, name: str = "memory"):
        self.name = name
        self._blobs: dict[bytes, bytes] = {}
        self._lock = threading.Lock()

    def put(self, blob: bytes) -> ContentId:
        cid = ContentId.for_blob(blob)
        with self._lock:
            self._blobs[cid.bytes] = blob
        return cid

    def get(self, cid: ContentId) -> bytes:
        with self._lock:
            blob = self._blobs.get(cid.bytes)
        if blob is None:
            raise NotFound(cid.hex)
        return _verified(blob, cid)


class FileBackend:
    """One file per blob, named by hex content id; writes are tmp+rename."""

    def __init__(self, root: Path | str, name: str = "file"):
        self.name = name
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, cid: ContentId) -> Path:
        return self.root / cid.hex

    def put(self, blob: bytes) -> ContentId:
        cid = ContentId.for_blob(blob)
        dest = self._path(cid)
        if dest.exists():
            return cid
        tmp = dest.with_name(f".{cid.hex}.{os.getpid()}.{threading.get_ident()}.tmp")
        try:
            tmp.write_bytes(blob)
            os.replace(tmp, dest)
        except OSError as e:
            tmp.unlink(missing_ok=True)
            raise BackendUnavailable(f"{self.name}: {e}") from e
        return cid

    def get(self, cid: ContentId) -> bytes:
        try:
            blob = self._path(cid).read_bytes()
        except FileNotFoundError:
            raise NotFound(cid.hex) from None
        except OSError as e:
            raise BackendUnavailable(f"{self.name}: {e}") from e
        return _verified(blob, cid)


def _verified(blob: bytes, cid: ContentId) -> bytes:
    if hashlib.sha256(blob).digest() != cid.bytes:
        raise BackendUnavailable("stored blob does not match content id")
    return blob


# ---------------------------------------------------------------------------
# Adversarial backends (game harness only)
# ---------------------------------------------------------------------------

class TamperingBackend:
    """Serves modified bytes, or a substitute blob, for every get."""

    def __init__(self, inner: StorageBackend, name: str = "tampering",
                 substitute: bytes | None = None):
        self.name = name
        self._inner = inner
        self._substitute = substitute

    def put(self, blob: bytes) -> ContentId:
        return self._inner.put(blob)

    def get(self, cid: ContentId) -> bytes:
        if self._substitute is not None:
            return self._substitute
        blob = bytearray(self._inner.get(cid))
        blob[0] ^= 0x01
        return bytes(blob)


class WithholdingBackend:
    """Pretends never to have heard of any blob."""

    def __init__(self, name: str = "withholding"):
        self.name = name

    def put(self, blob: bytes) -> ContentId:
        return ContentId.for_blob(blob)

    def get(self, cid: ContentId) -> bytes:
        raise NotFound(cid.hex)


# ---------------------------------------------------------------------------
# Multi-backend reads and replication
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Attempt:
    backend: str
    outcome: str  # "ok" | "not-found" | "unavailable" | "hash-mismatch"


@dataclass(frozen=True)
class FetchResult:
    blob: bytes
    served_by: str
    attempts: tuple[Attempt, ...]

    @property
    def suspicious(self) -> tuple[Attempt, ...]:
        return tuple(a for a in self.attempts if a.outcome != "ok")


def get_any(cid: ContentId, backends: list[StorageBackend]) -> FetchResult:
    """Try backends in order; accept only bytes that hash to the requested id.

    Lying backends are recorded as hash mismatches and skipped, so one
    honest replica is enough.
    """
    attempts: list[Attempt] = []
    for backend in backends:
        try:
            blob = backend.get(cid)
        except NotFound:
            attempts.append(Attempt(backend.name, "not-found"))
            continue
        except BackendUnavailable:
            attempts.append(Attempt(backend.name, "unavailable"))
            continue
        if hashlib.sha256(blob).digest() != cid.bytes:
            attempts.append(Attempt(backend.name, "hash-mismatch"))
            continue
        attempts.append(Attempt(backend.name, "ok"))
        return FetchResult(blob=blob, served_by=backend.name,
                           attempts=tuple(attempts))
    raise AllBackendsFailed(
        f"{cid.hex}: " + ", ".join(f"{a.backend}={a.outcome}" for a in attempts))


@dataclass
class ReplicationReport:
    cid: ContentId
    source: str | None = None
    copied_to: list[str] = field(default_factory=list)
    already_had: list[str] = field(default_factory=list)
    failed: list[Attempt] = field(default_factory=list)


def replicate(cid: ContentId, backends: list[StorageBackend]) -> ReplicationReport:
    """Copy a blob to every backend that lacks it, sourcing from any holder."""
    report = ReplicationReport(cid=cid)
    blob: bytes | None = None
    missing: list[StorageBackend] = []
    for backend in backends:
        try:
            candidate = backend.get(cid)
        except (NotFound, BackendUnavailable) as e:
            outcome = "not-found" if isinstance(e, NotFound) else "unavailable"
            report.failed.append(Attempt(backend.name, outcome))
            missing.append(backend)
            continue
        if hashlib.sha256(candidate).digest() != cid.bytes:
            report.failed.append(Attempt(backend.name, "hash-mismatch"))
            missing.append(backend)
            continue
        report.already_had.append(backend.name)
        if blob is None:
            blob = candidate
            report.source = backend.name
    if blob is None:
        raise AllBackendsFailed(f"no backend holds {cid.hex}")
    for backend in missing:
        try:
            backend.put(blob)
            report.copied_to.append(backend.name)
        except BackendUnavailable:
            report.failed.append(Attempt(backend.name, "unavailable"))
    return report
