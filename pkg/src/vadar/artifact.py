"""Sealed artifact formats: the portable backup and device-local envelopes.

The backup artifact is self-describing: it carries the KDF salt and cost
parameters, the AEAD algorithm id and nonce, and the associated data, so
opening it needs nothing but the artifact bytes and the passphrase. That
property is what makes recovery on a brand-new device possible.

Local artifacts are sealed under a device-bound PRF instead of the
passphrase. They exist for cheap day-to-day unlock and are never consulted
by recovery.

Both formats are byte-exact: encode(decode(encode(x))) is the identity,
and the 32-byte commitment is the SHA-256 of the exact encoded bytes.
"""
from __future__ import annotations

import hashlib
import hmac as hmac_mod
import os
import re
import struct
from dataclasses import dataclass
from typing import Callable

from . import aead
from .keyschedule import (
    Domain,
    KdfParams,
    KdfParamsOutOfRange,
    Passphrase,
    RootKey,
    SecretBytes,
    Stage,
    derive_domain_key,
    derive_sealroot,
)

BACKUP_MAGIC = b"VADARSA2"
LOCAL_MAGIC = b"VADARSA1"
FORMAT_VERSION = 1
SALT_PW_LEN = 16
REV_LEN = 32

EntropySource = Callable[[int], bytes]

# Conservative screen for identifying material in associated data: anything
# email-shaped is rejected at seal time, whatever the deployment put there.
_EMAIL_SHAPE = re.compile(rb"[^@\s]+@[^@\s]+\.[^@\s]+")


class MalformedArtifact(Exception):
    """Artifact bytes do not parse as the declared format."""


class WrongPassphraseOrTampered(Exception):
    """AEAD verification failed.

    Deliberately one error for both causes: the AEAD cannot tell a wrong
    passphrase from a modified ciphertext, and distinguishing them would
    hand an attacker a guessing oracle.
    """


class WrongDeviceOrTampered(Exception):
    """Local artifact did not verify under this device's PRF."""


class EntropyFailure(Exception):
    """Injected entropy source misbehaved."""


class AadPolicyViolation(Exception):
    """Associated data may not carry identifying material."""


class RootEntityValue(SecretBytes):
    """The 32-byte root secret sealed inside artifacts."""

    def __init__(self, data: bytes | bytearray):
        if len(data) != REV_LEN:
            raise ValueError(f"root entity value must be {REV_LEN} bytes")
        super().__init__(data)


@dataclass(frozen=True)
class Commitment:
    """SHA-256 of exact artifact bytes; the registry's integrity anchor."""

    bytes: bytes

    def __post_init__(self) -> None:
        if len(self.bytes) != 32:
            raise ValueError("commitment must be 32 bytes")

    @property
    def hex(self) -> str:
        return self.bytes.hex()


def commit(artifact_bytes: bytes) -> Commitment:
    return Commitment(hashlib.sha256(artifact_bytes).digest())


# ---------------------------------------------------------------------------
# Backup artifact (password-sealed, portable)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BackupArtifact:
    version: int
    salt_pw: bytes
    params_pw: KdfParams
    aead_alg: int
    nonce: bytes
    aad: bytes
    ct: bytes

    def __post_init__(self) -> None:
        if len(self.salt_pw) != SALT_PW_LEN:
            raise ValueError(f"salt_pw must be {SALT_PW_LEN} bytes")


def _draw(rng: EntropySource, n: int) -> bytes:
    try:
        out = rng(n)
    except Exception as e:
        raise EntropyFailure(f"entropy source failed: {e}") from e
    if not isinstance(out, (bytes, bytearray)) or len(out) != n:
        raise EntropyFailure(f"entropy source returned {len(out) if out else 0} "
                             f"bytes, wanted {n}")
    return bytes(out)


def seal_backup(rev: RootEntityValue, passphrase: Passphrase,
                params_pw: KdfParams, aad: bytes,
                rng: EntropySource = os.urandom,
                floor_kib: int | None = None) -> BackupArtifact:
    """Seal the root secret under the passphrase with fresh salt and nonce.

    The sealing key never comes from Stage A: a fresh 16-byte salt is drawn
    here, the seal root is derived from it, and the key is expanded in the
    seal domain. Associated data is bound into the AEAD tag and screened
    for identifying material.
    """
    if _EMAIL_SHAPE.search(aad):
        raise AadPolicyViolation("aad contains an email-shaped substring")
    if floor_kib is not None:
        params_pw.ensure_floor(floor_kib)
    salt_pw = _draw(rng, SALT_PW_LEN)
    nonce = _draw(rng, aead.nonce_length(aead.XCHACHA20_POLY1305))
    sealroot = derive_sealroot(passphrase, salt_pw, params_pw)
    k_sa = derive_domain_key(sealroot, Domain.SEAL)
    try:
        ct = aead.seal(aead.XCHACHA20_POLY1305, k_sa.bytes, nonce, rev.bytes, aad)
    finally:
        sealroot.wipe()
        k_sa.wipe()
    return BackupArtifact(
        version=FORMAT_VERSION,
        salt_pw=salt_pw,
        params_pw=params_pw,
        aead_alg=aead.XCHACHA20_POLY1305,
        nonce=nonce,
        aad=aad,
        ct=ct,
    )


def open_backup(artifact_bytes: bytes, passphrase: Passphrase) -> RootEntityValue:
    """Recover the root secret from artifact bytes and the passphrase alone."""
    art = decode_backup(artifact_bytes)
    sealroot = derive_sealroot(passphrase, art.salt_pw, art.params_pw)
    k_sa = derive_domain_key(sealroot, Domain.SEAL)
    try:
        rev = aead.open_(art.aead_alg, k_sa.bytes, art.nonce, art.ct, art.aad)
    except aead.AuthenticationFailure as e:
        raise WrongPassphraseOrTampered(str(e)) from e
    except aead.UnsupportedAlgorithm as e:
        raise MalformedArtifact(str(e)) from e
    finally:
        sealroot.wipe()
        k_sa.wipe()
    return RootEntityValue(rev)


class _Reader:
    """Cursor with position-tagged errors for format diagnostics."""

    def __init__(self, data: bytes, what: str):
        self.data = data
        self.pos = 0
        self.what = what

    def take(self, n: int, field: str) -> bytes:
        if self.pos + n > len(self.data):
            raise MalformedArtifact(
                f"{self.what}: truncated {field} at offset {self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self, field: str) -> int:
        return self.take(1, field)[0]

    def u16(self, field: str) -> int:
        return struct.unpack(">H", self.take(2, field))[0]

    def u32(self, field: str) -> int:
        return struct.unpack(">I", self.take(4, field))[0]

    def finish(self) -> None:
        if self.pos != len(self.data):
            raise MalformedArtifact(
                f"{self.what}: {len(self.data) - self.pos} trailing bytes "
                f"at offset {self.pos}")


def encode_backup(art: BackupArtifact) -> bytes:
    return b"".join([
        BACKUP_MAGIC,
        struct.pack(">H", art.version),
        art.salt_pw,
        struct.pack(">I", art.params_pw.memory_kib),
        struct.pack(">I", art.params_pw.time_cost),
        struct.pack(">I", art.params_pw.parallelism),
        struct.pack(">H", art.aead_alg),
        struct.pack(">B", len(art.nonce)),
        art.nonce,
        struct.pack(">I", len(art.aad)),
        art.aad,
        struct.pack(">I", len(art.ct)),
        art.ct,
    ])


def decode_backup(data: bytes) -> BackupArtifact:
    r = _Reader(data, "backup artifact")
    magic = r.take(8, "magic")
    if magic != BACKUP_MAGIC:
        raise MalformedArtifact(f"backup artifact: bad magic {magic!r}")
    version = r.u16("version")
    salt_pw = r.take(SALT_PW_LEN, "salt_pw")
    m_kib = r.u32("memory_kib")
    t = r.u32("time_cost")
    p = r.u32("parallelism")
    aead_alg = r.u16("aead_alg")
    nonce = r.take(r.u8("nonce_len"), "nonce")
    aad = r.take(r.u32("aad_len"), "aad")
    ct = r.take(r.u32("ct_len"), "ct")
    r.finish()
    try:
        params = KdfParams(memory_kib=m_kib, time_cost=t, parallelism=p)
    except KdfParamsOutOfRange as e:
        raise MalformedArtifact(f"backup artifact: bad kdf params: {e}") from e
    return BackupArtifact(version=version, salt_pw=salt_pw, params_pw=params,
                          aead_alg=aead_alg, nonce=nonce, aad=aad, ct=ct)


# ---------------------------------------------------------------------------
# Local artifacts (device-PRF-sealed)
# ---------------------------------------------------------------------------

@dataclass
class DevicePrf:
    """Deterministic keyed stand-in for a hardware-gated device PRF.

    The PRF output is consumed directly by local-seal key derivation and is
    never handed out of this module.
    """

    device_id: str
    prf_key: bytes

    def _evaluate(self, label: str) -> bytes:
        return hmac_mod.new(self.prf_key, label.encode("utf-8"),
                            hashlib.sha256).digest()

    def root_for(self, label: str) -> RootKey:
        return RootKey(self._evaluate(label), Stage.DEVICE_ROOT)


@dataclass(frozen=True)
class LocalArtifact:
    version: int
    label: str
    aead_alg: int
    nonce: bytes
    ct: bytes


def seal_local(rev: RootEntityValue, prf: DevicePrf, label: str,
               rng: EntropySource = os.urandom) -> LocalArtifact:
    """Seal under the device PRF for local unlock; label is bound as AAD."""
    nonce = _draw(rng, aead.nonce_length(aead.XCHACHA20_POLY1305))
    root = prf.root_for(label)
    k_local = derive_domain_key(root, Domain.LOCAL_SEAL)
    try:
        ct = aead.seal(aead.XCHACHA20_POLY1305, k_local.bytes, nonce,
                       rev.bytes, label.encode("utf-8"))
    finally:
        root.wipe()
        k_local.wipe()
    return LocalArtifact(version=FORMAT_VERSION, label=label,
                         aead_alg=aead.XCHACHA20_POLY1305, nonce=nonce, ct=ct)


def open_local(art: LocalArtifact, prf: DevicePrf) -> RootEntityValue:
    root = prf.root_for(art.label)
    k_local = derive_domain_key(root, Domain.LOCAL_SEAL)
    try:
        rev = aead.open_(art.aead_alg, k_local.bytes, art.nonce, art.ct,
                         art.label.encode("utf-8"))
    except aead.AuthenticationFailure as e:
        raise WrongDeviceOrTampered(str(e)) from e
    except aead.UnsupportedAlgorithm as e:
        raise MalformedArtifact(str(e)) from e
    finally:
        root.wipe()
        k_local.wipe()
    return RootEntityValue(rev)


def encode_local(art: LocalArtifact) -> bytes:
    label = art.label.encode("utf-8")
    return b"".join([
        LOCAL_MAGIC,
        struct.pack(">H", art.version),
        struct.pack(">I", len(label)),
        label,
        struct.pack(">H", art.aead_alg),
        struct.pack(">B", len(art.nonce)),
        art.nonce,
        struct.pack(">I", len(art.ct)),
        art.ct,
    ])


def decode_local(data: bytes) -> LocalArtifact:
    r = _Reader(data, "local artifact")
    magic = r.take(8, "magic")
    if magic != LOCAL_MAGIC:
        raise MalformedArtifact(f"local artifact: bad magic {magic!r}")
    version = r.u16("version")
    label_raw = r.take(r.u32("label_len"), "label")
    aead_alg = r.u16("aead_alg")
    nonce = r.take(r.u8("nonce_len"), "nonce")
    ct = r.take(r.u32("ct_len"), "ct")
    r.finish()
    try:
        label = label_raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise MalformedArtifact("local artifact: label is not valid UTF-8") from e
    return LocalArtifact(version=version, label=label, aead_alg=aead_alg,
                         nonce=nonce, ct=ct)
