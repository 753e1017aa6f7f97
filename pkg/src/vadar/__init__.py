"""Keyed discovery-and-recovery protocol.

A passphrase-rooted key schedule derives separate keys for artifact
sealing, discovery indexing, and registry authorization; backup artifacts
are password-sealed envelopes in content-addressed storage; a versioned,
owner-authorized registry maps enumeration-resistant discovery identifiers
to artifact commitments. Recovery on a brand-new device needs exactly two
inputs: the identifier and the passphrase.
"""
from .artifact import (
    BackupArtifact,
    Commitment,
    DevicePrf,
    LocalArtifact,
    RootEntityValue,
    commit,
    decode_backup,
    encode_backup,
    open_backup,
    seal_backup,
)
from .flows import (
    FlowConfig,
    OwnerKeyModel,
    RecoveryOutcome,
    recover,
    register,
    update_backup,
)
from .games import GameReport, run_enum_game, run_map_game, run_roll_game
from .identity import (
    DiscoveryContext,
    DiscoveryId,
    NormalizedIdentifier,
    decode_discovery_id,
    discovery_id,
    encode_context,
    encode_discovery_id,
    normalize,
)
from .keyschedule import (
    Domain,
    DomainKey,
    KdfParams,
    KdfProfile,
    Passphrase,
    PROFILES,
    RootKey,
    Stage,
    derive_domain_key,
    derive_lookup_root,
    derive_lookup_salt,
    derive_sealroot,
    get_profile,
)
from .registry import (
    AuthMessage,
    CanonicalBinding,
    OwnerKey,
    Registry,
    RegistryIdentity,
    RegistryRecord,
    check_binding,
    verify_option_a,
)
from .storage import ContentId, FileBackend, MemoryBackend, get_any, replicate

__version__ = "0.1.0"
