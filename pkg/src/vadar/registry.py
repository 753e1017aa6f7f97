"""Versioned, owner-authorized discovery registry.

The registry maps a discovery id to {cid, ver, commit, pk_owner} with three
rules that do all the security work:

* initialize-if-empty: the first write to a slot atomically binds the
  owner's public key; concurrent duplicates lose cleanly.
* signature-gated mutation: every later update or tombstone must carry an
  Ed25519 signature by the bound owner key over the exact framed message
  (did, cid, ver, commit).
* per-key version monotonicity: an update is accepted only with a version
  strictly above the stored one, which kills replayed stale writes.

The keyed-MAC authorization variant is provided as a standalone off-chain
verifier (`verify_option_a`); the in-process registry itself accepts only
signatures, mirroring a deployment where the verifier cannot hold secrets.

Tombstoning is terminal. A tombstoned slot optionally names a successor
discovery id so clients can report a migration, but it accepts no further
writes, ever — re-binding a retired slot would reopen it to squatting.
"""
from __future__ import annotations

import hmac as hmac_mod
import hashlib
import json
import os
import struct
import threading
import time
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .artifact import Commitment
from .framing import frame
from .identity import DiscoveryId
from .keyschedule import Domain, DomainKey, RootKey, Stage, WrongKeyDomain, hkdf32
from .storage import ContentId

SIG_ALG_ED25519 = 1
OWNER_SEED_INFO = b"va-dar:registry:ownerseed"
_ZERO32 = bytes(32)


class SlotOccupied(Exception):
    """Initialize hit a slot that already holds a record."""


class RecordNotFound(Exception):
    """No record under this discovery id."""


class Tombstoned(Exception):
    """Slot is tombstoned; it accepts no further writes."""


class AlreadyTombstoned(Exception):
    """Tombstone requested twice."""


class BadAuth(Exception):
    """Authorization proof did not verify under the bound owner key."""


class BadVersion(Exception):
    """Initialize must carry version 1."""


class StaleVersion(Exception):
    """Update version is not strictly above the stored version."""


class RegistryMismatch(Exception):
    """Registry instance does not match the canonical binding."""


class RecordState(Enum):
    ACTIVE = "active"
    TOMBSTONED = "tombstoned"


class AuthKind(Enum):
    SIGNATURE_B = "signature-b"
    HMAC_A = "hmac-a"


@dataclass(frozen=True)
class AuthProof:
    kind: AuthKind
    payload: bytes


@dataclass(frozen=True)
class AuthMessage:
    """The exact byte string that owner authorization signs or MACs."""

    discovery_id: DiscoveryId
    cid: ContentId
    ver: int
    commit: Commitment

    def encode(self) -> bytes:
        return frame(self.discovery_id.bytes, self.cid.bytes,
                     struct.pack(">Q", self.ver), self.commit.bytes)


def encode_tombstone_message(did: DiscoveryId, ver: int,
                             redirect: DiscoveryId | None) -> bytes:
    """Tombstone authorization reuses the update message with zero
    sentinels for cid and commit, plus the redirect as a fifth field
    (empty when no redirect is set)."""
    return frame(did.bytes, _ZERO32, struct.pack(">Q", ver), _ZERO32,
                 redirect.bytes if redirect is not None else b"")


@dataclass(frozen=True)
class RegistryRecord:
    cid: ContentId
    ver: int
    commit: Commitment
    pk_owner: bytes
    sig_alg: int
    state: RecordState = RecordState.ACTIVE
    redirect: DiscoveryId | None = None
    migrated_at: float | None = None
    auth: AuthProof | None = None  # carried on submission, not persisted

    def __post_init__(self) -> None:
        if self.ver < 1:
            raise ValueError("ver must be >= 1")
        if len(self.pk_owner) != 32:
            raise ValueError("pk_owner must be 32 raw Ed25519 bytes")


# ---------------------------------------------------------------------------
# Owner keys
# ---------------------------------------------------------------------------

@dataclass
class OwnerKey:
    """Ed25519 owner keypair used to authorize registry mutations."""

    sig_alg: int
    _sk: Ed25519PrivateKey

    @classmethod
    def generate(cls) -> "OwnerKey":
        return cls(SIG_ALG_ED25519, Ed25519PrivateKey.generate())

    @classmethod
    def from_seed(cls, seed: bytes) -> "OwnerKey":
        return cls(SIG_ALG_ED25519, Ed25519PrivateKey.from_private_bytes(seed))

    @classmethod
    def derive(cls, lookup_root: RootKey) -> "OwnerKey":
        """Deterministic owner key (model D): seeded from the lookup root.

        Convenient — nothing to store — but it ties mutation authority to
        passphrase-guessing hardness on top of signature unforgeability.
        """
        if lookup_root.stage is not Stage.LOOKUP_ROOT:
            raise WrongKeyDomain("owner key derivation requires a lookup root")
        return cls.from_seed(hkdf32(lookup_root.bytes, OWNER_SEED_INFO))

    @property
    def public_bytes(self) -> bytes:
        return self._sk.public_key().public_bytes_raw()

    @property
    def seed(self) -> bytes:
        return self._sk.private_bytes_raw()

    def sign(self, message: bytes) -> bytes:
        return self._sk.sign(message)


def verify_signature(pk_owner: bytes, sig_alg: int, message: bytes,
                     signature: bytes) -> bool:
    if sig_alg != SIG_ALG_ED25519:
        return False
    try:
        Ed25519PublicKey.from_public_bytes(pk_owner).verify(signature, message)
        return True
    except (InvalidSignature, ValueError):
        return False


class MemoryOwnerKeyStore:
    """Volatile owner-key storage (model R) for tests and simulations."""

    def __init__(self) -> None:
        self._seeds: dict[bytes, bytes] = {}

    def save(self, did: DiscoveryId, key: OwnerKey) -> None:
        self._seeds[did.bytes] = key.seed

    def load(self, did: DiscoveryId) -> OwnerKey | None:
        seed = self._seeds.get(did.bytes)
        return OwnerKey.from_seed(seed) if seed is not None else None


class FileOwnerKeyStore:
    """Owner keys in per-slot files with restrictive permissions (model R)."""

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, did: DiscoveryId) -> Path:
        return self.root / f"{did.hex}.ownerkey.json"

    def save(self, did: DiscoveryId, key: OwnerKey) -> None:
        path = self._path(did)
        doc = {"seed_hex": key.seed.hex(), "sig_alg": key.sig_alg}
        fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
        with os.fdopen(fd, "w") as fh:
            fh.write(json.dumps(doc, sort_keys=True) + "\n")

    def load(self, did: DiscoveryId) -> OwnerKey | None:
        path = self._path(did)
        if not path.exists():
            return None
        doc = json.loads(path.read_text())
        return OwnerKey.from_seed(bytes.fromhex(doc["seed_hex"]))


# ---------------------------------------------------------------------------
# Off-chain keyed-MAC authorization (Option A verifier)
# ---------------------------------------------------------------------------

def make_option_a_tag(k_reg: DomainKey, msg: AuthMessage) -> bytes:
    """Client-side authorization tag under the registry-auth key."""
    if k_reg.domain is not Domain.REGISTRY_AUTH:
        raise WrongKeyDomain(
            f"option A requires a registry-auth key, got {k_reg.domain.value}")
    return hmac_mod.new(k_reg.bytes, msg.encode(), hashlib.sha256).digest()


def verify_option_a(k_reg: DomainKey, msg: AuthMessage, tag: bytes) -> bool:
    """Constant-time check of a keyed-MAC authorization tag.

    A standalone verifier for deployments with an off-chain validator; the
    in-process registry's accept path never calls this.
    """
    return hmac_mod.compare_digest(make_option_a_tag(k_reg, msg), tag)


# ---------------------------------------------------------------------------
# Canonical binding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegistryIdentity:
    """What a registry instance claims to be: (app, chain, contract)."""

    app_id: str
    chain_id: int
    contract_address: bytes


@dataclass(frozen=True)
class CanonicalBinding:
    """Client-side pin of the one registry deployment it will talk to.

    Anyone can clone a registry and its public metadata; the binding is the
    client's authenticated answer to "which one is real". Operations
    fail closed when instance and binding disagree.
    """

    app_id: str
    chain_id: int
    contract_address: bytes
    norm_policy_id: str
    kdf_profile_id: str
    config_signature: bytes | None = None

    def to_json(self) -> str:
        doc = {
            "app_id": self.app_id,
            "chain_id": self.chain_id,
            "config_signature": (self.config_signature.hex()
                                 if self.config_signature else None),
            "contract_address": self.contract_address.hex(),
            "kdf_profile_id": self.kdf_profile_id,
            "norm_policy_id": self.norm_policy_id,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CanonicalBinding":
        doc = json.loads(text)
        sig = doc.get("config_signature")
        return cls(
            app_id=doc["app_id"],
            chain_id=doc["chain_id"],
            contract_address=bytes.fromhex(doc["contract_address"]),
            norm_policy_id=doc["norm_policy_id"],
            kdf_profile_id=doc["kdf_profile_id"],
            config_signature=bytes.fromhex(sig) if sig else None,
        )

    def save(self, path: Path | str) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: Path | str) -> "CanonicalBinding":
        return cls.from_json(Path(path).read_text())


def check_binding(instance: RegistryIdentity, binding: CanonicalBinding) -> None:
    mismatches = []
    if instance.app_id != binding.app_id:
        mismatches.append("app_id")
    if instance.chain_id != binding.chain_id:
        mismatches.append("chain_id")
    if instance.contract_address != binding.contract_address:
        mismatches.append("contract_address")
    if mismatches:
        raise RegistryMismatch(
            "registry instance does not match canonical binding: "
            + ", ".join(mismatches))


# ---------------------------------------------------------------------------
# The registry state machine
# ---------------------------------------------------------------------------

class Registry:
    """In-process registry with the same acceptance rules as the public one.

    Mutations are serialized under one lock, which is the simulation of the
    ledger's atomic conditional writes. Records are immutable, so lock-free
    lookups observe either the pre- or post-state of a mutation, never a
    partial record.
    """

    def __init__(self, identity: RegistryIdentity):
        self.identity = identity
        self._records: dict[bytes, RegistryRecord] = {}
        self._lock = threading.Lock()

    # -- mutations ---------------------------------------------------------

    def initialize(self, did: DiscoveryId, record: RegistryRecord) -> None:
        if record.ver != 1:
            raise BadVersion(f"initialize requires ver=1, got {record.ver}")
        if record.state is not RecordState.ACTIVE:
            raise BadVersion("initialize requires an active record")
        if record.auth is None or record.auth.kind is not AuthKind.SIGNATURE_B:
            raise BadAuth("initialize requires signature authorization")
        msg = AuthMessage(did, record.cid, record.ver, record.commit).encode()
        if not verify_signature(record.pk_owner, record.sig_alg, msg,
                                record.auth.payload):
            raise BadAuth("initialize signature does not verify")
        stored = replace(record, auth=None)
        with self._lock:
            if did.bytes in self._records:
                raise SlotOccupied(did.hex)
            self._records[did.bytes] = stored

    def update(self, did: DiscoveryId, new_cid: ContentId, new_ver: int,
               new_commit: Commitment, signature: bytes) -> None:
        with self._lock:
            current = self._records.get(did.bytes)
            if current is None:
                raise RecordNotFound(did.hex)
            if current.state is RecordState.TOMBSTONED:
                raise Tombstoned(did.hex)
            msg = AuthMessage(did, new_cid, new_ver, new_commit).encode()
            if not verify_signature(current.pk_owner, current.sig_alg, msg,
                                    signature):
                raise BadAuth("update signature does not verify")
            if new_ver <= current.ver:
                raise StaleVersion(
                    f"new ver {new_ver} not above current {current.ver}")
            self._records[did.bytes] = replace(
                current, cid=new_cid, ver=new_ver, commit=new_commit)

    def tombstone(self, did: DiscoveryId, redirect: DiscoveryId | None,
                  signature: bytes) -> None:
        with self._lock:
            current = self._records.get(did.bytes)
            if current is None:
                raise RecordNotFound(did.hex)
            if current.state is RecordState.TOMBSTONED:
                raise AlreadyTombstoned(did.hex)
            new_ver = current.ver + 1
            msg = encode_tombstone_message(did, new_ver, redirect)
            if not verify_signature(current.pk_owner, current.sig_alg, msg,
                                    signature):
                raise BadAuth("tombstone signature does not verify")
            self._records[did.bytes] = replace(
                current, ver=new_ver, state=RecordState.TOMBSTONED,
                redirect=redirect, migrated_at=time.time())

    # -- reads -------------------------------------------------------------

    def lookup(self, did: DiscoveryId) -> RegistryRecord | None:
        """Absent slots and never-written slots are indistinguishable."""
        return self._records.get(did.bytes)

    def __len__(self) -> int:
        return len(self._records)

    def discovery_ids(self) -> list[DiscoveryId]:
        """Public view of all registry keys (the registry is public)."""
        return [DiscoveryId(b) for b in self._records.keys()]

    # -- persistence -------------------------------------------------------

    def to_snapshot(self) -> dict:
        records = {}
        for did_bytes, rec in self._records.items():
            doc: dict = {
                "cid_hex": rec.cid.hex,
                "commit_hex": rec.commit.hex,
                "pk_owner_hex": rec.pk_owner.hex(),
                "sig_alg": rec.sig_alg,
                "state": rec.state.value,
                "ver": rec.ver,
            }
            if rec.redirect is not None:
                doc["redirect"] = rec.redirect.hex
            if rec.migrated_at is not None:
                doc["migrated_at"] = rec.migrated_at
            records[did_bytes.hex()] = doc
        return {
            "identity": {
                "app_id": self.identity.app_id,
                "chain_id": self.identity.chain_id,
                "contract_address": self.identity.contract_address.hex(),
            },
            "records": records,
        }

    def save_snapshot(self, path: Path | str) -> None:
        path = Path(path)
        with self._lock:
            doc = self.to_snapshot()
        tmp = path.with_name(path.name + f".{os.getpid()}.tmp")
        tmp.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        os.replace(tmp, path)

    @classmethod
    def from_snapshot(cls, doc: dict) -> "Registry":
        ident = doc["identity"]
        reg = cls(RegistryIdentity(
            app_id=ident["app_id"],
            chain_id=ident["chain_id"],
            contract_address=bytes.fromhex(ident["contract_address"]),
        ))
        for did_hex, rec in doc["records"].items():
            redirect = rec.get("redirect")
            reg._records[bytes.fromhex(did_hex)] = RegistryRecord(
                cid=ContentId(bytes.fromhex(rec["cid_hex"])),
                ver=rec["ver"],
                commit=Commitment(bytes.fromhex(rec["commit_hex"])),
                pk_owner=bytes.fromhex(rec["pk_owner_hex"]),
                sig_alg=rec["sig_alg"],
                state=RecordState(rec["state"]),
                redirect=DiscoveryId(bytes.fromhex(redirect)) if redirect else None,
                migrated_at=rec.get("migrated_at"),
            )
        return reg

    @classmethod
    def load_snapshot(cls, path: Path | str) -> "Registry":
        return cls.from_snapshot(json.loads(Path(path).read_text()))
