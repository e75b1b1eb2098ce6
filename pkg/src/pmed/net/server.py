"""TCP front end for the CSP responder."""
from __future__ import annotations

import logging
import socketserver
import threading
from concurrent.futures import ThreadPoolExecutor

from .frame import FrameError, read_frame
from .responder import CspResponder

log = logging.getLogger(__name__)


class _ConnectionHandler(socketserver.BaseRequestHandler):
    def handle(self):
        srv = self.server
        responder = CspResponder(srv.pp, srv.share, rng=srv.rng_factory(), debug=srv.debug)
        srv.responders.append(responder)
        wlock = threading.Lock()
        sock = self.request

        def recv_exactly(n):
            buf = bytearray()
            while len(buf) < n:
                chunk = sock.recv(n - len(buf))
                if not chunk:
                    raise ConnectionError("peer closed")
                buf += chunk
            return bytes(buf)

        def work(raw):
            reply = responder.handle(raw)
            with wlock:
                try:
                    sock.sendall(reply)
                except OSError:
                    pass

        with ThreadPoolExecutor(max_workers=srv.workers) as pool:
            while True:
                try:
                    raw = read_frame(recv_exactly)
                except (ConnectionError, OSError, FrameError) as exc:
                    log.debug("connection ended: %s", exc)
                    break
                if srv.workers == 1:
                    work(raw)
                else:
                    pool.submit(work, raw)


class CspServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address, pp, share, rng_factory=None, debug=False, workers=8):
        self.pp = pp
        self.share = share
        self.rng_factory = rng_factory or (lambda: None)
        self.debug = debug
        self.workers = workers
        self.responders: list[CspResponder] = []
        super().__init__(address, _ConnectionHandler)
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self.server_address[:2]

    def start(self) -> "CspServer":
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.shutdown()
        self.server_close()
        if self._thread:
            self._thread.join(timeout=5)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def serve_csp(address, pp, share, rng_factory=None, debug=False, workers=8) -> CspServer:
    """Start a CSP responder listening on ``address`` in a background thread.

    Every accepted connection gets its own responder; ``rng_factory`` is
    called once per connection (pass a seeded factory for reproducible runs).
    """
    return CspServer(address, pp, share, rng_factory, debug, workers).start()
