"""Authenticated encryption for sealed artifacts.

Algorithm 1 is XChaCha20-Poly1305: a 32-byte key, a 24-byte nonce, and a
16-byte tag. The 24-byte nonce space makes fresh random nonces safe per
key, which is exactly how artifacts use it. The extended nonce is handled
by the standard construction: HChaCha20 compresses the key and the first
16 nonce bytes into a subkey, and the remaining 8 bytes ride in a regular
ChaCha20-Poly1305 nonce.
"""
from __future__ import annotations

import struct

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305

XCHACHA20_POLY1305 = 1

KEY_LEN = 32
NONCE_LEN = 24
TAG_LEN = 16

_M32 = 0xFFFFFFFF
_CONSTS = struct.unpack("<4I", b"expand 32-byte k")


class UnsupportedAlgorithm(Exception):
    """AEAD algorithm id is not implemented."""


class AuthenticationFailure(Exception):
    """Tag verification failed: wrong key or modified ciphertext."""


def nonce_length(alg: int) -> int:
    if alg != XCHACHA20_POLY1305:
        raise UnsupportedAlgorithm(f"aead_alg={alg}")
    return NONCE_LEN


def _rotl32(x: int, n: int) -> int:
    return ((x << n) | (x >> (32 - n))) & _M32


def _quarter(st: list[int], a: int, b: int, c: int, d: int) -> None:
    st[a] = (st[a] + st[b]) & _M32
    st[d] = _rotl32(st[d] ^ st[a], 16)
    st[c] = (st[c] + st[d]) & _M32
    st[b] = _rotl32(st[b] ^ st[c], 12)
    st[a] = (st[a] + st[b]) & _M32
    st[d] = _rotl32(st[d] ^ st[a], 8)
    st[c] = (st[c] + st[d]) & _M32
    st[b] = _rotl32(st[b] ^ st[c], 7)


def _hchacha20(key: bytes, nonce16: bytes) -> bytes:
    """HChaCha20 subkey derivation (one ChaCha20 permutation, no feed-forward)."""
    st = (list(_CONSTS) + list(struct.unpack("<8I", key))
          + list(struct.unpack("<4I", nonce16)))
    for _ in range(10):
        _quarter(st, 0, 4, 8, 12)
        _quarter(st, 1, 5, 9, 13)
        _quarter(st, 2, 6, 10, 14)
        _quarter(st, 3, 7, 11, 15)
        _quarter(st, 0, 5, 10, 15)
        _quarter(st, 1, 6, 11, 12)
        _quarter(st, 2, 7, 8, 13)
        _quarter(st, 3, 4, 9, 14)
    return struct.pack("<8I", *(st[0:4] + st[12:16]))


def _subcipher(key: bytes, nonce: bytes) -> tuple[ChaCha20Poly1305, bytes]:
    if len(key) != KEY_LEN:
        raise ValueError(f"key must be {KEY_LEN} bytes")
    if len(nonce) != NONCE_LEN:
        raise ValueError(f"nonce must be {NONCE_LEN} bytes")
    subkey = _hchacha20(key, nonce[:16])
    return ChaCha20Poly1305(subkey), b"\x00" * 4 + nonce[16:]


def seal(alg: int, key: bytes, nonce: bytes, plaintext: bytes, aad: bytes) -> bytes:
    """Encrypt and authenticate; returns ciphertext with appended tag."""
    if alg != XCHACHA20_POLY1305:
        raise UnsupportedAlgorithm(f"aead_alg={alg}")
    cipher, n12 = _subcipher(key, nonce)
    return cipher.encrypt(n12, plaintext, aad)


def open_(alg: int, key: bytes, nonce: bytes, ciphertext: bytes, aad: bytes) -> bytes:
    """Verify and decrypt; raises AuthenticationFailure on any mismatch."""
    if alg != XCHACHA20_POLY1305:
        raise UnsupportedAlgorithm(f"aead_alg={alg}")
    cipher, n12 = _subcipher(key, nonce)
    try:
        return cipher.decrypt(n12, ciphertext, aad)
    except InvalidTag as e:
        raise AuthenticationFailure("AEAD tag verification failed") from e
