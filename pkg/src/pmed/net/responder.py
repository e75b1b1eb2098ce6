"""CSP side: session bookkeeping and dispatch of frames to protocol steps."""
from __future__ import annotations

import logging
import threading
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable

from .. import pctd
from .frame import (CONTROL_SESSION, VERSION, ControlStep, Frame, FrameError, ProtocolId,
                    decode, encode, error_frame)

log = logging.getLogger(__name__)

MAX_SESSIONS = 4096


@dataclass(frozen=True)
class _Handler:
    fn: Callable
    arity: int | None


HANDLERS: dict[int, _Handler] = {}


def csp_handler(protocol: ProtocolId, arity: int | None = None):
    """Register the CSP step for ``protocol``.

    The handler is called as ``fn(responder, values) -> list[int]``.  When
    ``arity`` is given, frames carrying a different number of items are
    rejected before the handler runs.
    """
    def register(fn):
        HANDLERS[int(protocol)] = _Handler(fn, arity)
        return fn
    return register


def _load_handlers():
    # registration happens as a side effect of importing the protocol modules
    from .. import pgene, pipeline, protocols  # noqa: F401


class SessionError(Exception):
    pass


class CspResponder:
    """Per-connection CSP state.

    ``rng`` drives CSP's own encryptions and refreshes.  With ``debug`` set,
    handlers append the plaintexts they recover to ``debug_log`` so tests can
    inspect exactly what CSP learns.
    """

    def __init__(self, pp: pctd.PublicParams, share: pctd.PartialKeyShare, rng=None,
                 debug: bool = False):
        if share.role != pctd.Role.CSP:
            raise ValueError("CSP responder needs the CSP key share")
        _load_handlers()
        self.pp = pp
        self.share = share
        self.rng = rng or pctd.default_rng()
        self.pk_sigma: int | None = None
        self.debug = debug
        self.debug_log: list[tuple] = []
        self._sessions: OrderedDict[bytes, int] = OrderedDict()
        self._lock = threading.Lock()

    # helpers used by protocol handlers
    def ciphertext(self, c1: int, c2: int) -> pctd.Ciphertext:
        # CSP never needs the encrypting key: PD2 only touches C1
        return pctd.Ciphertext(c1, c2, 0, self.pp)

    def pd2(self, c1: int, c2: int, partial: int) -> int:
        return pctd.partial_decrypt_2(self.pp, self.share, self.ciphertext(c1, c2), partial)

    def encrypt_sigma(self, m: int) -> pctd.Ciphertext:
        if self.pk_sigma is None:
            raise SessionError("no authorization key announced (missing HELLO)")
        return pctd.encrypt(self.pp, self.pk_sigma, m % self.pp.n, self.rng)

    def refresh(self, c1: int, c2: int) -> pctd.Ciphertext:
        ct = pctd.Ciphertext(c1, c2, self.pk_sigma, self.pp)
        return pctd.refresh(self.pp, ct, self.rng)

    def record(self, *entry) -> None:
        if self.debug:
            self.debug_log.append(entry)

    # dispatch
    def handle(self, raw: bytes) -> bytes:
        try:
            frame = decode(raw)
        except FrameError as exc:
            sid = raw[4:20] if len(raw) >= 20 else CONTROL_SESSION
            return encode(error_frame(sid, f"malformed frame: {exc}"))
        return encode(self.handle_frame(frame))

    def handle_frame(self, frame: Frame) -> Frame:
        if frame.protocol == ProtocolId.CONTROL:
            return self._control(frame)
        sid = frame.session_id
        with self._lock:
            expected = self._sessions.get(sid, 0)
            if frame.step != expected:
                self._sessions.pop(sid, None)
                return error_frame(sid, f"out-of-order step {frame.step}, expected {expected}")
            self._sessions[sid] = (expected + 1) % 256
            self._sessions.move_to_end(sid)
            while len(self._sessions) > MAX_SESSIONS:
                self._sessions.popitem(last=False)
        handler = HANDLERS.get(frame.protocol)
        if handler is None:
            return error_frame(sid, f"no CSP step for protocol {frame.protocol}")
        try:
            values = frame.ints(handler.arity)
            out = handler.fn(self, values)
        except (FrameError, SessionError, pctd.PCTDError, ValueError) as exc:
            log.warning("session %s aborted: %s", sid.hex(), exc)
            with self._lock:
                self._sessions.pop(sid, None)
            return error_frame(sid, f"{type(exc).__name__}: {exc}")
        return Frame.of_ints(sid, frame.protocol, frame.step, out)

    def _control(self, frame: Frame) -> Frame:
        if frame.step == ControlStep.HELLO:
            try:
                version, role, pk_sigma = frame.ints(3)
            except FrameError as exc:
                return error_frame(frame.session_id, f"bad HELLO: {exc}")
            if version != VERSION:
                return error_frame(frame.session_id, f"unsupported version {version}")
            self.pk_sigma = pk_sigma
            return Frame.of_ints(frame.session_id, ProtocolId.CONTROL, ControlStep.HELLO_ACK,
                                 [VERSION])
        if frame.step == ControlStep.BYE:
            return Frame.of_ints(frame.session_id, ProtocolId.CONTROL, ControlStep.BYE, [])
        return error_frame(frame.session_id, f"unknown control step {frame.step}")
