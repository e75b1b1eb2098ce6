"""Byte-level encodings shared by key files and the wire protocol.

Every integer is written as a 4-byte big-endian length followed by its
big-endian magnitude (zero is the empty byte string).  A sequence of values
is just the concatenation of such items, so a reader always knows how many
bytes to consume without any out-of-band schema.
"""
from __future__ import annotations

import struct
from typing import Iterable

_LEN = struct.Struct(">I")
LEN_SIZE = _LEN.size


class DecodeError(ValueError):
    """Raised when a byte string does not parse as the expected items."""


def pack_bytes(items: Iterable[bytes]) -> bytes:
    out = bytearray()
    for item in items:
        out += _LEN.pack(len(item))
        out += item
    return bytes(out)


def unpack_bytes(data: bytes, count: int | None = None) -> list[bytes]:
    items = []
    pos = 0
    view = memoryview(data)
    while pos < len(data):
        if pos + LEN_SIZE > len(data):
            raise DecodeError("truncated length prefix")
        (size,) = _LEN.unpack_from(view, pos)
        pos += LEN_SIZE
        if pos + size > len(data):
            raise DecodeError(f"item declares {size} bytes, {len(data) - pos} left")
        items.append(bytes(view[pos:pos + size]))
        pos += size
    if count is not None and len(items) != count:
        raise DecodeError(f"expected {count} items, got {len(items)}")
    return items


def int_to_bytes(value: int) -> bytes:
    if value < 0:
        raise ValueError("only non-negative integers are serialisable")
    value = int(value)
    return value.to_bytes((value.bit_length() + 7) // 8, "big")


def int_from_bytes(raw: bytes) -> int:
    return int.from_bytes(raw, "big")


def pack_ints(values: Iterable[int]) -> bytes:
    return pack_bytes(int_to_bytes(v) for v in values)


def unpack_ints(data: bytes, count: int | None = None) -> list[int]:
    return [int_from_bytes(b) for b in unpack_bytes(data, count)]
