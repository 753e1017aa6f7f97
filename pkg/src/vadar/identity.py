"""Identifier normalization and keyed discovery identifiers.

The discovery identifier is an HMAC over the deployment context and the
normalized identifier, keyed by the index-domain key. Without that key the
registry's keys reveal nothing about which identifiers are enrolled, which
is the whole point: the registry must not be usable as a public directory.

Normalization is deliberately minimal and locale-independent: trim, NFC,
lowercase, NFC again. No provider-specific rewriting (no plus-tag
stripping, no dot collapsing) — an identifier is an opaque label, not an
email route.
"""
from __future__ import annotations

import base64
import hmac
import hashlib
import string
import struct
import unicodedata
from dataclasses import dataclass

from .framing import FramingError, frame, unframe
from .keyschedule import Domain, DomainKey, WrongKeyDomain

NORM_POLICY_ID = "trim-nfc-lower-v1"
DID_LEN = 32
MAX_APP_ID_LEN = 255
MAX_CONTRACT_ADDRESS_LEN = 64


class EmptyIdentifier(Exception):
    """Identifier is empty after trimming."""


class FieldTooLong(Exception):
    """A discovery-context field exceeds its size bound."""


class MalformedEncoding(Exception):
    """String or byte encoding does not decode to a valid value."""


@dataclass(frozen=True)
class NormalizedIdentifier:
    """Canonical form of a user identifier. Construct via `normalize`."""

    text: str

    @property
    def bytes(self) -> bytes:
        return self.text.encode("utf-8")


def normalize(raw: str) -> NormalizedIdentifier:
    """Trim, NFC-normalize, and lowercase an identifier.

    Idempotent: normalize(normalize(x).text) == normalize(x). The second
    NFC pass keeps that true for the rare lowercase mappings that produce
    combining sequences.
    """
    text = unicodedata.normalize("NFC", raw.strip()).lower()
    text = unicodedata.normalize("NFC", text)
    if not text:
        raise EmptyIdentifier("identifier is empty after trimming")
    return NormalizedIdentifier(text)


@dataclass(frozen=True)
class DiscoveryContext:
    """Public domain-separation context bound into every discovery id.

    The pair (chain_id, contract_address) names the registry deployment;
    app_id and version separate applications and protocol revisions.
    """

    app_id: str
    chain_id: int
    contract_address: bytes
    version: int

    def __post_init__(self) -> None:
        if not 0 <= self.chain_id < 1 << 64:
            raise FieldTooLong("chain_id must fit in 8 bytes")
        if not 0 <= self.version < 1 << 32:
            raise FieldTooLong("version must fit in 4 bytes")
        if len(self.app_id.encode("utf-8")) > MAX_APP_ID_LEN:
            raise FieldTooLong(f"app_id exceeds {MAX_APP_ID_LEN} bytes")
        if len(self.contract_address) > MAX_CONTRACT_ADDRESS_LEN:
            raise FieldTooLong(
                f"contract_address exceeds {MAX_CONTRACT_ADDRESS_LEN} bytes")


def encode_context(ctx: DiscoveryContext) -> bytes:
    """Injective encoding: framed app_id, chain_id (be64), address, version (be32)."""
    return frame(
        ctx.app_id.encode("utf-8"),
        struct.pack(">Q", ctx.chain_id),
        ctx.contract_address,
        struct.pack(">I", ctx.version),
    )


def decode_context(data: bytes) -> DiscoveryContext:
    try:
        app_id, chain, addr, version = unframe(data, 4)
    except FramingError as e:
        raise MalformedEncoding(str(e)) from e
    if len(chain) != 8:
        raise MalformedEncoding("chain_id field must be 8 bytes")
    if len(version) != 4:
        raise MalformedEncoding("version field must be 4 bytes")
    try:
        app_text = app_id.decode("utf-8")
    except UnicodeDecodeError as e:
        raise MalformedEncoding("app_id is not valid UTF-8") from e
    return DiscoveryContext(
        app_id=app_text,
        chain_id=struct.unpack(">Q", chain)[0],
        contract_address=addr,
        version=struct.unpack(">I", version)[0],
    )


@dataclass(frozen=True)
class DiscoveryId:
    """32-byte keyed identifier; the registry lookup key."""

    bytes: bytes

    def __post_init__(self) -> None:
        if len(self.bytes) != DID_LEN:
            raise MalformedEncoding(f"discovery id must be {DID_LEN} bytes")

    @property
    def hex(self) -> str:
        return self.bytes.hex()


def discovery_id(k_idx: DomainKey, ctx: DiscoveryContext,
                 identifier: NormalizedIdentifier) -> DiscoveryId:
    """HMAC-SHA-256 over the framed (context, identifier) pair.

    Only an index-domain key is accepted; sealing or registry-auth keys are
    rejected so a key can never serve two roles.
    """
    if k_idx.domain is not Domain.INDEX:
        raise WrongKeyDomain(
            f"discovery_id requires an index key, got {k_idx.domain.value}")
    msg = frame(encode_context(ctx), identifier.bytes)
    return DiscoveryId(hmac.new(k_idx.bytes, msg, hashlib.sha256).digest())


# ---------------------------------------------------------------------------
# String encodings
# ---------------------------------------------------------------------------

_HEX_CHARS = frozenset("0123456789abcdef")
_B64URL_CHARS = frozenset(string.ascii_letters + string.digits + "-_")


def encode_discovery_id(did: DiscoveryId, form: str = "hex") -> str:
    """Render as lowercase hex (canonical) or unpadded base64url."""
    if form == "hex":
        return did.bytes.hex()
    if form == "base64url":
        return base64.urlsafe_b64encode(did.bytes).rstrip(b"=").decode("ascii")
    raise ValueError(f"unknown encoding form {form!r}")


def decode_discovery_id(text: str) -> DiscoveryId:
    """Accept 64-char lowercase hex or 43-char unpadded base64url."""
    if len(text) == 64:
        if not set(text) <= _HEX_CHARS:
            raise MalformedEncoding("hex discovery id must be lowercase hex")
        return DiscoveryId(bytes.fromhex(text))
    if len(text) == 43:
        if not set(text) <= _B64URL_CHARS:
            raise MalformedEncoding("invalid base64url character")
        raw = base64.urlsafe_b64decode(text + "=")
        if len(raw) != DID_LEN:
            raise MalformedEncoding("base64url discovery id has wrong length")
        return DiscoveryId(raw)
    raise MalformedEncoding(
        f"discovery id must be 64 hex or 43 base64url chars, got {len(text)}")
