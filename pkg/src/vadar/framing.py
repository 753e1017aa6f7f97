"""Length-prefixed field framing.

Every multi-field byte string the protocol hashes, MACs, or signs is built
with `frame`: each field is preceded by its 4-byte big-endian length. The
prefix makes the encoding injective, so no two distinct field tuples can
produce the same concatenation.
"""
from __future__ import annotations

import struct

MAX_FIELD_LEN = 0xFFFFFFFF


class FramingError(Exception):
    """Malformed framed byte string."""


def frame(*fields: bytes) -> bytes:
    """Concatenate fields, each prefixed with its 4-byte big-endian length."""
    parts = []
    for f in fields:
        if len(f) > MAX_FIELD_LEN:
            raise FramingError("field exceeds 4-byte length prefix range")
        parts.append(struct.pack(">I", len(f)))
        parts.append(f)
    return b"".join(parts)


def unframe(data: bytes, count: int) -> list[bytes]:
    """Split a framed byte string into exactly `count` fields.

    Rejects truncated input and trailing bytes.
    """
    fields = []
    pos = 0
    for i in range(count):
        if pos + 4 > len(data):
            raise FramingError(f"truncated length prefix for field {i} at offset {pos}")
        (length,) = struct.unpack_from(">I", data, pos)
        pos += 4
        if pos + length > len(data):
            raise FramingError(f"field {i} runs past end of input at offset {pos}")
        fields.append(data[pos:pos + length])
        pos += length
    if pos != len(data):
        raise FramingError(f"{len(data) - pos} trailing bytes after field {count - 1}")
    return fields
