"""Wire frames exchanged between CP and CSP.

Layout (all integers big-endian)::

    u32  length of everything that follows
    16B  session id
    u8   protocol id
    u8   step index within the session
    ...  payload: sequence of u32-length-prefixed items

Payload items are integers (ciphertext = c1 then c2) except for CONTROL
ERROR frames, whose single item is a UTF-8 diagnostic.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

from .. import codec

VERSION = 1
SESSION_ID_SIZE = 16
_HEADER = struct.Struct(">I16sBB")
HEADER_SIZE = _HEADER.size
MAX_FRAME = 64 * 1024 * 1024
CONTROL_SESSION = bytes(SESSION_ID_SIZE)


class ProtocolId(IntEnum):
    CONTROL = 0
    SAD = 1
    SMD = 2
    CMP = 3
    SET = 4
    SUT = 5
    SRC = 6
    SSM = 7
    SMIN = 8
    BPSK = 9
    PGENE = 10


class ControlStep(IntEnum):
    HELLO = 1
    HELLO_ACK = 2
    BYE = 3
    ERROR = 0xFF


class FrameError(codec.DecodeError):
    pass


@dataclass(frozen=True)
class Frame:
    session_id: bytes
    protocol: int
    step: int
    payload: bytes = b""

    @classmethod
    def of_ints(cls, session_id: bytes, protocol: int, step: int, values) -> "Frame":
        return cls(session_id, protocol, step, codec.pack_ints(values))

    def ints(self, count: int | None = None) -> list[int]:
        try:
            return codec.unpack_ints(self.payload, count)
        except codec.DecodeError as exc:
            raise FrameError(str(exc)) from None

    @property
    def is_error(self) -> bool:
        return self.protocol == ProtocolId.CONTROL and self.step == ControlStep.ERROR

    def error_text(self) -> str:
        items = codec.unpack_bytes(self.payload)
        return items[0].decode("utf-8", "replace") if items else ""


def error_frame(session_id: bytes, message: str) -> Frame:
    return Frame(session_id, ProtocolId.CONTROL, ControlStep.ERROR,
                 codec.pack_bytes([message.encode("utf-8")]))


def encode(frame: Frame) -> bytes:
    if len(frame.session_id) != SESSION_ID_SIZE:
        raise FrameError("session id must be 16 bytes")
    body_len = HEADER_SIZE - 4 + len(frame.payload)
    return _HEADER.pack(body_len, frame.session_id, frame.protocol, frame.step) + frame.payload


def decode(raw: bytes) -> Frame:
    """Parse one complete frame, length prefix included."""
    if len(raw) < HEADER_SIZE:
        raise FrameError(f"frame too short ({len(raw)} bytes)")
    body_len, sid, proto, step = _HEADER.unpack_from(raw)
    if body_len + 4 != len(raw):
        raise FrameError(f"length prefix says {body_len + 4} bytes, got {len(raw)}")
    payload = raw[HEADER_SIZE:]
    try:
        codec.unpack_bytes(payload)
    except codec.DecodeError as exc:
        raise FrameError(f"malformed payload: {exc}") from None
    return Frame(sid, proto, step, payload)


def read_frame(recv_exactly) -> bytes:
    """Read one raw frame using ``recv_exactly(n) -> bytes``."""
    prefix = recv_exactly(4)
    (body_len,) = struct.unpack(">I", prefix)
    if body_len > MAX_FRAME:
        raise FrameError(f"frame of {body_len} bytes exceeds limit")
    return prefix + recv_exactly(body_len)
