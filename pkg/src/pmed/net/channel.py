"""CP-side transports.

A channel moves one raw request frame to CSP and returns the raw response.
Both transports keep an optional transcript of ``(request, response)``
pairs so runs over different transports can be compared byte for byte.
"""
from __future__ import annotations

import logging
import queue
import socket
import threading

from .frame import (CONTROL_SESSION, VERSION, ControlStep, Frame, FrameError, ProtocolId,
                    decode, encode, read_frame)

log = logging.getLogger(__name__)


class SessionAbort(RuntimeError):
    """CSP rejected a step, or the connection went away mid-session."""


class _Base:
    def __init__(self, record: bool = False):
        self.record = record
        self.transcript: list[tuple[bytes, bytes]] = []
        self._tlock = threading.Lock()

    def _roundtrip(self, raw: bytes) -> bytes:
        raise NotImplementedError

    def request(self, frame: Frame) -> Frame:
        raw = encode(frame)
        reply_raw = self._roundtrip(raw)
        if self.record:
            with self._tlock:
                self.transcript.append((raw, reply_raw))
        try:
            reply = decode(reply_raw)
        except FrameError as exc:
            raise SessionAbort(f"malformed reply: {exc}") from None
        if reply.is_error:
            raise SessionAbort(reply.error_text())
        if reply.session_id != frame.session_id:
            raise SessionAbort("reply for a different session")
        return reply

    def send_raw(self, raw: bytes) -> bytes:
        """Ship pre-encoded bytes (used to exercise CSP error handling)."""
        return self._roundtrip(raw)

    def hello(self, pk_sigma: int, role: int = 0) -> None:
        reply = self.request(Frame.of_ints(CONTROL_SESSION, ProtocolId.CONTROL,
                                           ControlStep.HELLO, [VERSION, role, pk_sigma]))
        if reply.step != ControlStep.HELLO_ACK:
            raise SessionAbort("CSP did not acknowledge HELLO")

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class InProcessChannel(_Base):
    """Calls a ``CspResponder`` directly; deterministic and dependency free."""

    def __init__(self, responder, record: bool = False):
        super().__init__(record)
        self.responder = responder

    def _roundtrip(self, raw: bytes) -> bytes:
        return self.responder.handle(raw)


class TcpChannel(_Base):
    """One persistent connection multiplexing many sessions.

    Each session has at most one request in flight, so replies are routed
    back to the waiting caller by session id.
    """

    def __init__(self, address: tuple[str, int], record: bool = False, timeout: float | None = None,
                 source_address: tuple[str, int] | None = None):
        super().__init__(record)
        self.sock = socket.create_connection(address, timeout=timeout, source_address=source_address)
        self.sock.settimeout(None)
        self._wlock = threading.Lock()
        self._plock = threading.Lock()
        self._pending: dict[bytes, queue.Queue] = {}
        self._closed = False
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _recv_exactly(self, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            chunk = self.sock.recv(n - len(buf))
            if not chunk:
                raise ConnectionError("connection closed by CSP")
            buf += chunk
        return bytes(buf)

    def _read_loop(self) -> None:
        try:
            while True:
                raw = read_frame(self._recv_exactly)
                sid = raw[4:20]
                with self._plock:
                    waiter = self._pending.pop(sid, None)
                if waiter is None:
                    log.warning("dropping reply for unknown session %s", sid.hex())
                    continue
                waiter.put(raw)
        except (OSError, ConnectionError, FrameError) as exc:
            with self._plock:
                waiters = list(self._pending.values())
                self._pending.clear()
                self._closed = True
            for w in waiters:
                w.put(exc)

    def _roundtrip(self, raw: bytes) -> bytes:
        sid = raw[4:20]
        box: queue.Queue = queue.Queue(maxsize=1)
        with self._plock:
            if self._closed:
                raise SessionAbort("connection to CSP is closed")
            if sid in self._pending:
                raise SessionAbort("session already has a request in flight")
            self._pending[sid] = box
        try:
            with self._wlock:
                self.sock.sendall(raw)
        except OSError as exc:
            with self._plock:
                self._pending.pop(sid, None)
            raise SessionAbort(f"send failed: {exc}") from None
        result = box.get()
        if isinstance(result, BaseException):
            raise SessionAbort(f"connection lost: {result}")
        return result

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()
        self._reader.join(timeout=5)
