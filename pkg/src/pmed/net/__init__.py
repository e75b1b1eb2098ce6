"""Two-server transport: framing, CSP responder, channels and key bootstrap."""
from .channel import InProcessChannel, SessionAbort, TcpChannel
from .frame import Frame, FrameError, ProtocolId
from .kgc import AuthorizationRecord, KeyBundle, RegistrationError, kgc_bootstrap
from .responder import CspResponder
from .server import CspServer, serve_csp


def connect_cp(address, pp, share, pk_sigma, rng=None, record=False, debug_master=None,
               source_address=None):
    """Open a TCP connection to CSP and return ``(channel, make_context)``.

    ``make_context(rng=None)`` builds a protocol context bound to this
    connection; contexts created this way share the connection.
    """
    from ..protocols import ProtocolContext

    channel = TcpChannel(tuple(address), record=record, source_address=source_address)
    channel.hello(pk_sigma)

    def make_context(ctx_rng=None):
        return ProtocolContext(pp, share, pk_sigma, channel, rng=ctx_rng or rng,
                               debug_master=debug_master)

    return channel, make_context


def local_pair(pp, cp_share, csp_share, pk_sigma, rng=None, csp_rng=None, record=False,
               debug=False, debug_master=None):
    """In-process CP context wired to a fresh CSP responder."""
    from ..protocols import ProtocolContext

    responder = CspResponder(pp, csp_share, rng=csp_rng, debug=debug)
    channel = InProcessChannel(responder, record=record)
    channel.hello(pk_sigma)
    return ProtocolContext(pp, cp_share, pk_sigma, channel, rng=rng, debug_master=debug_master)


__all__ = [
    "AuthorizationRecord", "CspResponder", "CspServer", "Frame", "FrameError",
    "InProcessChannel", "KeyBundle", "ProtocolId", "RegistrationError", "SessionAbort",
    "TcpChannel", "connect_cp", "kgc_bootstrap", "local_pair", "serve_csp",
]
