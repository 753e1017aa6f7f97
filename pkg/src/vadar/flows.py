"""End-to-end protocol flows: registration, recovery, update and rotation.

Each flow composes the key schedule, artifact sealing, storage, and the
registry in a fixed order. Two ordering details matter for security and
are pinned by tests:

* Recovery verifies the registry commitment against the fetched bytes
  *before* running the memory-hard Stage-B derivation, so tampered blobs
  cannot burn the client's KDF budget.
* Registration computes everything derivable from (identifier, passphrase)
  first, seals with a fresh artifact-local salt, uploads, and only then
  touches the registry, binding the owner key atomically on first write.

Recovery deliberately cannot tell "never registered" from "wrong
passphrase": a wrong passphrase walks to an unregistered discovery id, and
disambiguating the two would reintroduce the directory oracle the keyed
ids exist to remove.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from enum import Enum
from typing import Callable

from . import artifact as artifact_mod
from . import registry as registry_mod
from . import storage as storage_mod
from .artifact import DevicePrf, LocalArtifact, RootEntityValue
from .identity import (
    DiscoveryContext,
    DiscoveryId,
    NormalizedIdentifier,
    discovery_id,
    encode_context,
    normalize,
)
from .keyschedule import (
    Domain,
    KdfProfile,
    Passphrase,
    SecretBytes,
    derive_domain_key,
    derive_lookup_root,
    derive_lookup_salt,
)
from .registry import (
    AuthKind,
    AuthMessage,
    AuthProof,
    CanonicalBinding,
    OwnerKey,
    RecordState,
    Registry,
    RegistryRecord,
    check_binding,
    encode_tombstone_message,
)
from .storage import ContentId, StorageBackend

DISCOVERY_CONTEXT_VERSION = 1

TraceHook = Callable[[str], None]


class NotRegistered(Exception):
    """No record under the discovery id derived from this input pair."""


class CommitMismatch(Exception):
    """Fetched artifact bytes do not hash to the registry commitment."""


class StorageUnavailable(Exception):
    """No storage backend produced the artifact."""


class RedirectLoop(Exception):
    """Tombstone redirect does not resolve to an active record."""


class NotRecoverableWithThisPassphrase(Exception):
    """Slot is tombstoned; if it names a successor, that id is attached."""

    def __init__(self, message: str, redirect: DiscoveryId | None = None):
        super().__init__(message)
        self.redirect = redirect


class OwnerKeyUnavailable(Exception):
    """Model R owner key for this slot is missing from the key store."""


class OwnerKeyModel(Enum):
    RANDOM_KEY = "random"          # generated once, kept in a key store
    PASSPHRASE_DERIVED = "derived"  # re-derived from the lookup root


@dataclass
class FlowConfig:
    binding: CanonicalBinding
    kdf_profile: KdfProfile
    owner_key_model: OwnerKeyModel
    storage_backends: list[StorageBackend]
    registry: Registry
    owner_key_store: registry_mod.MemoryOwnerKeyStore | registry_mod.FileOwnerKeyStore | None = None
    redirect_on_rotate: bool = False
    context_version: int = DISCOVERY_CONTEXT_VERSION
    rng: artifact_mod.EntropySource = os.urandom

    def context(self) -> DiscoveryContext:
        return DiscoveryContext(
            app_id=self.binding.app_id,
            chain_id=self.binding.chain_id,
            contract_address=self.binding.contract_address,
            version=self.context_version,
        )


@dataclass
class RecoveryOutcome:
    rev: RootEntityValue
    record_ver: int
    redirect_followed: DiscoveryId | None = None
    local_artifact: LocalArtifact | None = None


def _trace(hook: TraceHook | None, step: str) -> None:
    if hook is not None:
        hook(step)


def _wipe_all(secrets: list[SecretBytes]) -> None:
    for s in secrets:
        if not s.is_wiped:
            s.wipe()


def _put_everywhere(blob: bytes, backends: list[StorageBackend]) -> ContentId:
    cid = ContentId.for_blob(blob)
    stored = 0
    errors = []
    for backend in backends:
        try:
            backend.put(blob)
            stored += 1
        except storage_mod.BackendUnavailable as e:
            errors.append(f"{backend.name}: {e}")
    if stored == 0:
        raise StorageUnavailable("no backend accepted the artifact: "
                                 + "; ".join(errors))
    return cid


def _owner_key_for_new_slot(config: FlowConfig, lookup_root) -> OwnerKey:
    if config.owner_key_model is OwnerKeyModel.PASSPHRASE_DERIVED:
        return OwnerKey.derive(lookup_root)
    return OwnerKey.generate()


def _owner_key_for_slot(config: FlowConfig, did: DiscoveryId,
                        lookup_root) -> OwnerKey:
    if config.owner_key_model is OwnerKeyModel.PASSPHRASE_DERIVED:
        return OwnerKey.derive(lookup_root)
    if config.owner_key_store is None:
        raise OwnerKeyUnavailable("model R requires an owner key store")
    key = config.owner_key_store.load(did)
    if key is None:
        raise OwnerKeyUnavailable(f"no owner key stored for {did.hex}")
    return key


def _normalized(identifier: str | NormalizedIdentifier) -> NormalizedIdentifier:
    if isinstance(identifier, NormalizedIdentifier):
        return identifier
    return normalize(identifier)


# ---------------------------------------------------------------------------
# Registration
# ---------------------------------------------------------------------------

def register(identifier: str | NormalizedIdentifier, passphrase: Passphrase,
             rev: RootEntityValue, config: FlowConfig,
             trace: TraceHook | None = None) -> tuple[DiscoveryId, ContentId, int]:
    """First-time registration; returns (discovery id, content id, version 1).

    Wipes the passphrase, the root secret, and every derived key before
    returning — callers keep plain copies of anything they still need.
    """
    check_binding(config.registry.identity, config.binding)
    _trace(trace, "check_binding")
    ident = _normalized(identifier)
    profile = config.kdf_profile
    ctx = config.context()
    secrets: list[SecretBytes] = []
    try:
        salt = derive_lookup_salt(ident)
        _trace(trace, "derive_lookup_salt")
        k_lookup = derive_lookup_root(passphrase, salt, profile.stage_a,
                                      floor_kib=profile.floor_kib)
        secrets.append(k_lookup)
        _trace(trace, "derive_lookup_root")
        k_idx = derive_domain_key(k_lookup, Domain.INDEX)
        k_reg = derive_domain_key(k_lookup, Domain.REGISTRY_AUTH)
        secrets.extend([k_idx, k_reg])
        _trace(trace, "derive_domain_keys")

        art = artifact_mod.seal_backup(rev, passphrase, profile.stage_b,
                                       aad=encode_context(ctx), rng=config.rng,
                                       floor_kib=profile.floor_kib)
        blob = artifact_mod.encode_backup(art)
        _trace(trace, "seal_backup")
        cid = _put_everywhere(blob, config.storage_backends)
        _trace(trace, "put")

        did = discovery_id(k_idx, ctx, ident)
        _trace(trace, "discovery_id")

        owner = _owner_key_for_new_slot(config, k_lookup)
        commitment = artifact_mod.commit(blob)
        msg = AuthMessage(did, cid, 1, commitment)
        record = RegistryRecord(
            cid=cid, ver=1, commit=commitment, pk_owner=owner.public_bytes,
            sig_alg=owner.sig_alg, state=RecordState.ACTIVE,
            auth=AuthProof(AuthKind.SIGNATURE_B, owner.sign(msg.encode())),
        )
        config.registry.initialize(did, record)
        _trace(trace, "initialize")
        if (config.owner_key_model is OwnerKeyModel.RANDOM_KEY
                and config.owner_key_store is not None):
            config.owner_key_store.save(did, owner)
    finally:
        _wipe_all(secrets)
    passphrase.wipe()
    rev.wipe()
    _trace(trace, "zeroize")
    return did, cid, 1


# ---------------------------------------------------------------------------
# Recovery
# ---------------------------------------------------------------------------

def recover(identifier: str | NormalizedIdentifier, passphrase: Passphrase,
            config: FlowConfig, device_prf: DevicePrf | None = None,
            local_label: str = "vadar:local",
            trace: TraceHook | None = None) -> RecoveryOutcome:
    """Recover the root secret from (identifier, passphrase) and public state.

    Requires no device-bound material: the optional device PRF is used only
    to seal a fresh local artifact after recovery succeeds.
    """
    check_binding(config.registry.identity, config.binding)
    _trace(trace, "check_binding")
    ident = _normalized(identifier)
    profile = config.kdf_profile
    ctx = config.context()
    secrets: list[SecretBytes] = []
    try:
        salt = derive_lookup_salt(ident)
        k_lookup = derive_lookup_root(passphrase, salt, profile.stage_a,
                                      floor_kib=profile.floor_kib)
        secrets.append(k_lookup)
        k_idx = derive_domain_key(k_lookup, Domain.INDEX)
        secrets.append(k_idx)
        did = discovery_id(k_idx, ctx, ident)
        _trace(trace, "discovery_id")

        record = config.registry.lookup(did)
        _trace(trace, "lookup")
        if record is None:
            raise NotRegistered(
                "no record for this identifier/passphrase pair")
        if record.state is RecordState.TOMBSTONED:
            _resolve_tombstone(record, config, trace)

        try:
            fetched = storage_mod.get_any(record.cid, config.storage_backends)
        except storage_mod.AllBackendsFailed as e:
            raise StorageUnavailable(str(e)) from e
        _trace(trace, "fetch")

        if artifact_mod.commit(fetched.blob).bytes != record.commit.bytes:
            raise CommitMismatch(
                f"artifact hash does not match registry commitment for ver "
                f"{record.ver}")
        _trace(trace, "verify_commit")

        rev = artifact_mod.open_backup(fetched.blob, passphrase)
        _trace(trace, "open_backup")

        local = None
        if device_prf is not None:
            try:
                local = artifact_mod.seal_local(rev, device_prf, local_label,
                                                rng=config.rng)
            except BaseException:
                rev.wipe()
                raise
            _trace(trace, "seal_local")
    finally:
        _wipe_all(secrets)
    passphrase.wipe()
    _trace(trace, "zeroize")
    return RecoveryOutcome(rev=rev, record_ver=record.ver,
                           redirect_followed=None, local_artifact=local)


def _resolve_tombstone(record: RegistryRecord, config: FlowConfig,
                       trace: TraceHook | None) -> None:
    """Report migration for a tombstoned slot; never opens the successor.

    The successor artifact is sealed under a different passphrase by
    construction, so attempting it with the presented one can only fail;
    we verify the migration target is alive (one hop, no chains) and
    surface it instead.
    """
    if record.redirect is None:
        raise NotRecoverableWithThisPassphrase(
            "slot is tombstoned with no successor")
    target = config.registry.lookup(record.redirect)
    _trace(trace, "follow_redirect")
    if target is None or target.state is not RecordState.ACTIVE:
        raise RedirectLoop(
            f"redirect target {record.redirect.hex} is not an active record")
    raise NotRecoverableWithThisPassphrase(
        f"slot migrated to {record.redirect.hex}; recover with the "
        f"passphrase that owns the successor",
        redirect=record.redirect)


# ---------------------------------------------------------------------------
# Update and rotation
# ---------------------------------------------------------------------------

def update_backup(identifier: str | NormalizedIdentifier,
                  old_passphrase: Passphrase, new_passphrase: Passphrase,
                  rev: RootEntityValue, config: FlowConfig,
                  trace: TraceHook | None = None) -> tuple[DiscoveryId, int]:
    """Re-seal the root secret, updating in place or migrating slots.

    Same passphrase: fresh artifact, same discovery id, version + 1.
    Rotated passphrase: fresh slot at the new discovery id (version 1),
    then the old slot is tombstoned, optionally pointing at the successor.
    Returns the active (discovery id, version).
    """
    check_binding(config.registry.identity, config.binding)
    _trace(trace, "check_binding")
    ident = _normalized(identifier)
    profile = config.kdf_profile
    ctx = config.context()
    rotated = new_passphrase.bytes != old_passphrase.bytes
    secrets: list[SecretBytes] = []
    try:
        salt = derive_lookup_salt(ident)
        old_lookup = derive_lookup_root(old_passphrase, salt, profile.stage_a,
                                        floor_kib=profile.floor_kib)
        secrets.append(old_lookup)
        old_idx = derive_domain_key(old_lookup, Domain.INDEX)
        secrets.append(old_idx)
        old_did = discovery_id(old_idx, ctx, ident)
        _trace(trace, "discovery_id")

        current = config.registry.lookup(old_did)
        if current is None:
            raise NotRegistered("nothing registered under the old passphrase")
        if current.state is RecordState.TOMBSTONED:
            raise registry_mod.Tombstoned(old_did.hex)

        seal_passphrase = new_passphrase if rotated else old_passphrase
        art = artifact_mod.seal_backup(rev, seal_passphrase, profile.stage_b,
                                       aad=encode_context(ctx), rng=config.rng,
                                       floor_kib=profile.floor_kib)
        blob = artifact_mod.encode_backup(art)
        _trace(trace, "seal_backup")
        cid = _put_everywhere(blob, config.storage_backends)
        commitment = artifact_mod.commit(blob)
        _trace(trace, "put")

        if not rotated:
            owner = _owner_key_for_slot(config, old_did, old_lookup)
            new_ver = current.ver + 1
            msg = AuthMessage(old_did, cid, new_ver, commitment)
            config.registry.update(old_did, cid, new_ver, commitment,
                                   owner.sign(msg.encode()))
            _trace(trace, "update")
            result = (old_did, new_ver)
        else:
            new_lookup = derive_lookup_root(new_passphrase, salt,
                                            profile.stage_a,
                                            floor_kib=profile.floor_kib)
            secrets.append(new_lookup)
            new_idx = derive_domain_key(new_lookup, Domain.INDEX)
            secrets.append(new_idx)
            new_did = discovery_id(new_idx, ctx, ident)
            _trace(trace, "new_discovery_id")

            new_owner = _owner_key_for_new_slot(config, new_lookup)
            msg = AuthMessage(new_did, cid, 1, commitment)
            record = RegistryRecord(
                cid=cid, ver=1, commit=commitment,
                pk_owner=new_owner.public_bytes, sig_alg=new_owner.sig_alg,
                state=RecordState.ACTIVE,
                auth=AuthProof(AuthKind.SIGNATURE_B,
                               new_owner.sign(msg.encode())),
            )
            config.registry.initialize(new_did, record)
            _trace(trace, "initialize_new_slot")
            if (config.owner_key_model is OwnerKeyModel.RANDOM_KEY
                    and config.owner_key_store is not None):
                config.owner_key_store.save(new_did, new_owner)

            old_owner = _owner_key_for_slot(config, old_did, old_lookup)
            redirect = new_did if config.redirect_on_rotate else None
            tomb_msg = encode_tombstone_message(old_did, current.ver + 1,
                                                redirect)
            config.registry.tombstone(old_did, redirect,
                                      old_owner.sign(tomb_msg))
            _trace(trace, "tombstone_old_slot")
            result = (new_did, 1)
    finally:
        _wipe_all(secrets)
    old_passphrase.wipe()
    if not new_passphrase.is_wiped:
        new_passphrase.wipe()
    rev.wipe()
    _trace(trace, "zeroize")
    return result
