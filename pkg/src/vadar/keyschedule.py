"""Passphrase-rooted key schedule with strict domain separation.

Two derivation stages share one passphrase:

* Stage A (lookup root) is computable from the identifier and passphrase
  alone, before anything is fetched. It feeds the discovery-index and
  registry-auth keys.
* Stage B (seal root) is bound to the per-artifact random salt carried
  inside a backup artifact, so it can only be computed after the artifact
  is in hand. It feeds the sealing key.

Every derived key is tagged with its stage or domain, and the
stage-domain pairing is enforced at derivation time: there is no code
path that turns a lookup root into a sealing key.
"""
from __future__ import annotations

import hashlib
import json
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Iterator

from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.kdf.argon2 import Argon2id
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .framing import frame

if TYPE_CHECKING:
    from .identity import NormalizedIdentifier

KEY_LEN = 32
LOOKUP_SALT_TAG = b"va-dar:lookup:v1"

# Hard floor for embedded parameters, enforced even when opening artifacts
# created elsewhere: blocks a tampered artifact from downgrading the
# passphrase-guessing cost.
DEV_FLOOR_KIB = 8192
PRODUCTION_FLOOR_KIB = 65536

# Ceilings reject absurd embedded parameters before they turn into a
# memory/CPU denial of service on open.
MAX_MEMORY_KIB = 4 * 1024 * 1024
MAX_TIME_COST = 16
MAX_PARALLELISM = 16


class KdfParamsOutOfRange(Exception):
    """Argon2id parameters outside the accepted range."""


class KdfParamsBelowFloor(KdfParamsOutOfRange):
    """Argon2id parameters below the active cost floor (misconfiguration)."""


class IllegalStageDomainPair(Exception):
    """A key was requested for a domain its root stage must not feed."""


class WrongKeyDomain(Exception):
    """Operation received a key tagged for a different domain."""


class EmptySecret(Exception):
    """Secret material must be non-empty."""


class Stage(Enum):
    LOOKUP_ROOT = "lookup-root"
    SEAL_ROOT = "seal-root"
    DEVICE_ROOT = "device-root"


class Domain(Enum):
    SEAL = "seal"
    INDEX = "index"
    REGISTRY_AUTH = "registry-auth"
    LOCAL_SEAL = "local-seal"


DOMAIN_INFO: dict[Domain, bytes] = {
    Domain.SEAL: b"acegf:sa2:seal",
    Domain.INDEX: b"va-dar:discovery:index",
    Domain.REGISTRY_AUTH: b"va-dar:registry:auth",
    Domain.LOCAL_SEAL: b"acegf:local:seal",
}

LEGAL_PAIRS: dict[Stage, frozenset[Domain]] = {
    Stage.LOOKUP_ROOT: frozenset({Domain.INDEX, Domain.REGISTRY_AUTH}),
    Stage.SEAL_ROOT: frozenset({Domain.SEAL}),
    Stage.DEVICE_ROOT: frozenset({Domain.LOCAL_SEAL}),
}


# ---------------------------------------------------------------------------
# Wipeable secret containers
# ---------------------------------------------------------------------------

_tracking = threading.local()


@contextmanager
def track_secrets() -> Iterator[list["SecretBytes"]]:
    """Collect every secret created in this scope, for zeroization checks.

    Test hook: after a flow completes, the caller can assert that each
    tracked secret (minus any it intentionally kept) has been wiped.
    """
    stack = getattr(_tracking, "stack", None)
    if stack is None:
        stack = _tracking.stack = []
    collected: list[SecretBytes] = []
    stack.append(collected)
    try:
        yield collected
    finally:
        stack.pop()


def _register(secret: "SecretBytes") -> None:
    for collected in getattr(_tracking, "stack", ()):
        collected.append(secret)


class SecretBytes:
    """Byte secret held in a mutable buffer that can be zero-filled.

    `.bytes` hands out transient immutable copies for primitive calls;
    the wipeable buffer is the auditable container. Python cannot scrub
    those transient copies, so `wipe` is best effort by nature, but the
    buffer check is exact.
    """

    __slots__ = ("_buf", "_wiped")

    def __init__(self, data: bytes | bytearray):
        if len(data) == 0:
            raise EmptySecret("secret material must be non-empty")
        self._buf = bytearray(data)
        self._wiped = False
        _register(self)

    @property
    def bytes(self) -> bytes:
        if self._wiped:
            raise ValueError("secret already wiped")
        return bytes(self._buf)

    def wipe(self) -> None:
        for i in range(len(self._buf)):
            self._buf[i] = 0
        self._wiped = True

    @property
    def is_wiped(self) -> bool:
        return self._wiped and all(b == 0 for b in self._buf)

    def __len__(self) -> int:
        return len(self._buf)

    def __repr__(self) -> str:  # never echo contents
        state = "wiped" if self._wiped else f"{len(self._buf)} bytes"
        return f"<{type(self).__name__} {state}>"


class Passphrase(SecretBytes):
    """User-memorized recovery secret (UTF-8 bytes)."""

    @classmethod
    def from_text(cls, text: str) -> "Passphrase":
        return cls(text.encode("utf-8"))


class RootKey(SecretBytes):
    """Stage-tagged 32-byte root derived by Argon2id (or the device PRF)."""

    __slots__ = ("stage",)

    def __init__(self, data: bytes | bytearray, stage: Stage):
        if len(data) != KEY_LEN:
            raise ValueError(f"root key must be {KEY_LEN} bytes")
        self.stage = stage
        super().__init__(data)


class DomainKey(SecretBytes):
    """Domain-tagged 32-byte working key derived from a root via HKDF."""

    __slots__ = ("domain",)

    def __init__(self, data: bytes | bytearray, domain: Domain):
        if len(data) != KEY_LEN:
            raise ValueError(f"domain key must be {KEY_LEN} bytes")
        self.domain = domain
        super().__init__(data)


# ---------------------------------------------------------------------------
# KDF parameters and profiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KdfParams:
    """Argon2id cost parameters; output length is fixed at 32 bytes."""

    memory_kib: int
    time_cost: int
    parallelism: int
    output_len: int = KEY_LEN

    def __post_init__(self) -> None:
        if self.output_len != KEY_LEN:
            raise KdfParamsOutOfRange(f"output_len must be {KEY_LEN}")
        if self.time_cost < 1 or self.parallelism < 1:
            raise KdfParamsOutOfRange("time_cost and parallelism must be >= 1")
        if self.memory_kib < 8 * self.parallelism:
            raise KdfParamsOutOfRange("memory_kib must be >= 8 * parallelism")

    def ensure_floor(self, floor_kib: int) -> None:
        if self.memory_kib < floor_kib:
            raise KdfParamsBelowFloor(
                f"memory_kib={self.memory_kib} below floor {floor_kib}")

    def ensure_embedded_sane(self) -> None:
        """Range checks applied to parameters read out of an artifact."""
        self.ensure_floor(DEV_FLOOR_KIB)
        if (self.memory_kib > MAX_MEMORY_KIB or self.time_cost > MAX_TIME_COST
                or self.parallelism > MAX_PARALLELISM):
            raise KdfParamsOutOfRange(
                f"embedded params (m={self.memory_kib} t={self.time_cost} "
                f"p={self.parallelism}) exceed supported ceiling")


@dataclass(frozen=True)
class KdfProfile:
    """Named pair of Stage-A/Stage-B parameter sets with a cost floor."""

    name: str
    stage_a: KdfParams
    stage_b: KdfParams
    floor_kib: int

    def __post_init__(self) -> None:
        self.stage_a.ensure_floor(self.floor_kib)
        self.stage_b.ensure_floor(self.floor_kib)

    def to_json(self) -> str:
        doc = {
            "profile": self.name,
            "stage_a": _params_doc(self.stage_a),
            "stage_b": _params_doc(self.stage_b),
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "KdfProfile":
        doc = json.loads(text)
        name = doc["profile"]
        return cls(
            name=name,
            stage_a=_params_from_doc(doc["stage_a"]),
            stage_b=_params_from_doc(doc["stage_b"]),
            floor_kib=DEV_FLOOR_KIB if name == "dev" else PRODUCTION_FLOOR_KIB,
        )

    def save(self, path: Path | str) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: Path | str) -> "KdfProfile":
        return cls.from_json(Path(path).read_text())


def _params_doc(p: KdfParams) -> dict:
    return {"m_kib": p.memory_kib, "t": p.time_cost, "p": p.parallelism}


def _params_from_doc(doc: dict) -> KdfParams:
    return KdfParams(memory_kib=doc["m_kib"], time_cost=doc["t"], parallelism=doc["p"])


# dev exists for tests and simulations only; its floor is the hard minimum.
PROFILES: dict[str, KdfProfile] = {
    "dev": KdfProfile(
        name="dev",
        stage_a=KdfParams(8192, 1, 1),
        stage_b=KdfParams(8192, 1, 1),
        floor_kib=DEV_FLOOR_KIB,
    ),
    "mobile": KdfProfile(
        name="mobile",
        stage_a=KdfParams(65536, 2, 1),
        stage_b=KdfParams(131072, 3, 1),
        floor_kib=PRODUCTION_FLOOR_KIB,
    ),
    "desktop": KdfProfile(
        name="desktop",
        stage_a=KdfParams(131072, 3, 1),
        stage_b=KdfParams(262144, 3, 1),
        floor_kib=PRODUCTION_FLOOR_KIB,
    ),
}


def get_profile(name: str) -> KdfProfile:
    try:
        return PROFILES[name]
    except KeyError:
        raise KeyError(f"unknown KDF profile {name!r}; "
                       f"available: {sorted(PROFILES)}") from None


# ---------------------------------------------------------------------------
# Derivations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LookupSalt:
    """Deterministic 32-byte salt derived from the normalized identifier."""

    bytes: bytes

    def __post_init__(self) -> None:
        if len(self.bytes) != 32:
            raise ValueError("lookup salt must be 32 bytes")


def derive_lookup_salt(identifier: "NormalizedIdentifier") -> LookupSalt:
    """Hash the tagged, framed identifier into the Stage-A salt."""
    return LookupSalt(hashlib.sha256(frame(LOOKUP_SALT_TAG, identifier.bytes)).digest())


def _argon2id(secret: bytes, salt: bytes, params: KdfParams) -> bytes:
    # Single seam for the memory-hard KDF; tests monkeypatch this to memoize
    # repeated derivations without touching the call sites.
    return Argon2id(
        salt=salt,
        length=params.output_len,
        iterations=params.time_cost,
        lanes=params.parallelism,
        memory_cost=params.memory_kib,
    ).derive(secret)


def derive_lookup_root(passphrase: Passphrase, salt: LookupSalt,
                       params: KdfParams,
                       floor_kib: int = DEV_FLOOR_KIB) -> RootKey:
    """Stage A: memory-hard root computable before any artifact is fetched."""
    params.ensure_floor(floor_kib)
    return RootKey(_argon2id(passphrase.bytes, salt.bytes, params), Stage.LOOKUP_ROOT)


def derive_sealroot(passphrase: Passphrase, salt_pw: bytes,
                    params_pw: KdfParams) -> RootKey:
    """Stage B: memory-hard root bound to the artifact-local random salt.

    The embedded parameters are range-checked regardless of caller profile:
    an artifact that decodes cleanly must still not be allowed to lower the
    guessing cost or inflate it into a denial of service.
    """
    if len(salt_pw) != 16:
        raise ValueError("salt_pw must be 16 bytes")
    params_pw.ensure_embedded_sane()
    return RootKey(_argon2id(passphrase.bytes, salt_pw, params_pw), Stage.SEAL_ROOT)


def hkdf32(ikm: bytes, info: bytes) -> bytes:
    """HKDF-SHA-256, empty salt, 32-byte output."""
    return HKDF(algorithm=hashes.SHA256(), length=KEY_LEN, salt=None,
                info=info).derive(ikm)


def derive_domain_key(root: RootKey, domain: Domain) -> DomainKey:
    """Expand a root into one of the four role keys.

    Raises IllegalStageDomainPair when the requested pairing would reuse key
    material across roles (for example a lookup root asked to seal).
    """
    if domain not in LEGAL_PAIRS[root.stage]:
        raise IllegalStageDomainPair(
            f"stage {root.stage.value} must not derive domain {domain.value}")
    return DomainKey(hkdf32(root.bytes, DOMAIN_INFO[domain]), domain)
