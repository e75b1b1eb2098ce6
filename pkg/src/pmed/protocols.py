"""Two-party protocols between CP (holds λ1) and CSP (holds λ2).

Every public function runs on CP, talks to CSP through ``ctx`` and returns
a ciphertext under the authorization key ``pk_σ``.  Inputs may be encrypted
under any user key.  CSP's half of each exchange is registered with
``csp_handler`` and runs inside ``net.responder.CspResponder``.
"""
from __future__ import annotations

import contextlib
import random
import threading
from collections import Counter
from dataclasses import dataclass
from enum import Enum

from . import pctd
from .net.frame import Frame, ProtocolId
from .net.responder import csp_handler


class PreconditionError(pctd.DomainError):
    """An operand is too large for the comparison protocols (debug mode only)."""


class ComparisonMode(str, Enum):
    GE = "GE"
    LE = "LE"
    LT = "LT"
    GT = "GT"


@dataclass(frozen=True)
class ComparisonBounds:
    r1_lo: int
    r1_hi: int
    r2_hi: int


def comparison_bounds(pp: pctd.PublicParams) -> ComparisonBounds:
    """Ranges for the comparison blinding factors, r1 in [r1_lo, r1_hi), r2 in [1, r2_hi).

    Full-size keys: L(r2) < L(N)/8 and L(N)/8 <= L(r1) < L(N)/4 - 1.
    Toy keys widen the operand range instead (``PublicParams.operand_bits``)
    and use 4-bit r2 / 8-bit r1, which keeps r1*(2x+1) + r2 below 2^(L(N)/2).
    In both cases r1 > r2, so a masked difference of 0 or 1 keeps its sign.
    """
    bits = pp.bits
    if bits >= pctd.FULL_BOUNDS_MIN_BITS:
        return ComparisonBounds(1 << (bits // 8), 1 << (bits // 4 - 1), 1 << (bits // 8))
    return ComparisonBounds(1 << 4, 1 << 8, 1 << 4)


class ProtocolContext:
    """CP's handle on a CSP connection.

    A context runs one session at a time.  Public protocol functions open a
    session if none is active, so composite protocols (SET, SSM, ...) run
    all of their sub-steps in a single session.  Use ``fork`` to get an
    independent context for concurrent work on the same channel.

    ``debug_master`` (tests only) enables operand checks and lets
    ``debug_records`` capture CP's blinding choices.
    """

    def __init__(self, pp: pctd.PublicParams, share: pctd.PartialKeyShare, pk_sigma: int,
                 channel, rng=None, debug_master: pctd.MasterKey | None = None,
                 _stats=None):
        if share.role != pctd.Role.CP:
            raise ValueError("a CP context needs the CP key share")
        self.pp = pp
        self.share = share
        self.pk_sigma = pk_sigma
        self.channel = channel
        self.rng = rng or pctd.default_rng()
        self.debug_master = debug_master
        self.debug_records: list[tuple] = []
        self._stats = _stats or _Stats()
        self._sid: bytes | None = None
        self._step = 0
        self.force_coin: int | None = None

    # accounting shared between a context and its forks
    @property
    def counters(self) -> Counter:
        return self._stats.calls

    @property
    def round_trips(self) -> int:
        return self._stats.round_trips

    def count(self, name: str) -> None:
        self._stats.bump(name)

    def fork(self, rng=None) -> "ProtocolContext":
        if rng is None:
            rng = random.Random(self.rng.getrandbits(64))
        child = ProtocolContext(self.pp, self.share, self.pk_sigma, self.channel, rng,
                                self.debug_master, self._stats)
        child.force_coin = self.force_coin
        return child

    @contextlib.contextmanager
    def session(self):
        if self._sid is not None:
            yield self
            return
        self._sid = self.rng.getrandbits(128).to_bytes(16, "big")
        self._step = 0
        try:
            yield self
        finally:
            self._sid = None

    def exchange(self, protocol: ProtocolId, values) -> list[int]:
        if self._sid is None:
            raise RuntimeError("exchange outside a session")
        frame = Frame.of_ints(self._sid, protocol, self._step, values)
        self._step = (self._step + 1) % 256
        self._stats.trip()
        return self.channel.request(frame).ints()

    # ciphertext helpers
    def enc(self, pk: int, m: int) -> pctd.Ciphertext:
        return pctd.encrypt(self.pp, pk, m % self.pp.n, self.rng)

    def enc_sigma(self, m: int) -> pctd.Ciphertext:
        return self.enc(self.pk_sigma, m)

    def sigma(self, c1: int, c2: int) -> pctd.Ciphertext:
        return pctd.Ciphertext(c1, c2, self.pk_sigma, self.pp)

    def pd1(self, ct: pctd.Ciphertext) -> int:
        return pctd.partial_decrypt_1(self.pp, self.share, ct)

    def refresh(self, ct: pctd.Ciphertext) -> pctd.Ciphertext:
        return pctd.refresh(self.pp, ct, self.rng)

    def coin(self) -> int:
        if self.force_coin is not None:
            return self.force_coin
        return self.rng.getrandbits(1)

    def peek(self, ct: pctd.Ciphertext) -> int | None:
        """Plaintext of ``ct`` in debug mode, else None."""
        if self.debug_master is None:
            return None
        return pctd.strong_decrypt(self.pp, self.debug_master, ct)


class _Stats:
    def __init__(self):
        self.calls: Counter = Counter()
        self.round_trips = 0
        self._lock = threading.Lock()

    def bump(self, name):
        with self._lock:
            self.calls[name] += 1

    def trip(self):
        with self._lock:
            self.round_trips += 1


def _ints(*cts: pctd.Ciphertext):
    out = []
    for ct in cts:
        out += (ct.c1, ct.c2)
    return out


# -- SAD ---------------------------------------------------------------------

def sad(ctx: ProtocolContext, x: pctd.Ciphertext, y: pctd.Ciphertext) -> pctd.Ciphertext:
    """[x + y] under pk_σ from [x]_pkA and [y]_pkB."""
    ctx.count("sad")
    n = ctx.pp.n
    with ctx.session():
        rx, ry = ctx.rng.randrange(n), ctx.rng.randrange(n)
        bx = x + ctx.enc(x.pk, rx)
        by = y + ctx.enc(y.pk, ry)
        c1, c2 = ctx.exchange(ProtocolId.SAD, _ints(bx, by) + [ctx.pd1(bx), ctx.pd1(by)])
    return ctx.sigma(c1, c2) - ctx.enc_sigma((rx + ry) % n)


@csp_handler(ProtocolId.SAD, arity=6)
def _csp_sad(csp, v):
    xc1, xc2, yc1, yc2, x1, y1 = v
    s = csp.pd2(xc1, xc2, x1) + csp.pd2(yc1, yc2, y1)
    out = csp.encrypt_sigma(s)
    return [out.c1, out.c2]


# -- SMD ---------------------------------------------------------------------

def smd(ctx: ProtocolContext, x: pctd.Ciphertext, y: pctd.Ciphertext) -> pctd.Ciphertext:
    """[x * y] under pk_σ from [x]_pkA and [y]_pkB."""
    ctx.count("smd")
    n = ctx.pp.n
    rng = ctx.rng
    with ctx.session():
        rx, ry, big_rx, big_ry = (rng.randrange(n) for _ in range(4))
        bx = x + ctx.enc(x.pk, rx)
        by = y + ctx.enc(y.pk, ry)
        s = ctx.enc(x.pk, big_rx) + x * (n - ry)
        t = ctx.enc(y.pk, big_ry) + y * (n - rx)
        reply = ctx.exchange(ProtocolId.SMD,
                             _ints(bx, by, s, t) + [ctx.pd1(c) for c in (bx, by, s, t)])
    h, s3, t3 = (ctx.sigma(*reply[i:i + 2]) for i in (0, 2, 4))
    s4 = ctx.enc_sigma(rx * ry % n) * (n - 1)
    s5 = ctx.enc_sigma(big_rx) * (n - 1)
    s6 = ctx.enc_sigma(big_ry) * (n - 1)
    return h + t3 + s3 + s4 + s5 + s6


@csp_handler(ProtocolId.SMD, arity=12)
def _csp_smd(csp, v):
    cts = [(v[0], v[1]), (v[2], v[3]), (v[4], v[5]), (v[6], v[7])]
    plain = [csp.pd2(c1, c2, part) for (c1, c2), part in zip(cts, v[8:12])]
    h = plain[0] * plain[1]
    out = []
    for m in (h, plain[2], plain[3]):
        ct = csp.encrypt_sigma(m)
        out += (ct.c1, ct.c2)
    return out


# -- comparisons ---------------------------------------------------------------

def _check_operand(ctx: ProtocolContext, ct: pctd.Ciphertext) -> None:
    value = ctx.peek(ct)
    if value is not None and value >= 1 << ctx.pp.operand_bits:
        raise PreconditionError(
            f"comparison operand has {value.bit_length()} bits; limit is {ctx.pp.operand_bits}")


def compare(ctx: ProtocolContext, mode: ComparisonMode | str, x: pctd.Ciphertext,
            y: pctd.Ciphertext, coin: int | None = None) -> pctd.Ciphertext:
    """Encrypted comparison bit under pk_σ.

    GE: [x >= y], LE: [x <= y], LT: [x < y], GT: [x > y].  ``coin`` forces
    CP's random branch s (tests use it to cover both branches).
    """
    mode = ComparisonMode(mode)
    ctx.count("cmp")
    _check_operand(ctx, x)
    _check_operand(ctx, y)
    n = ctx.pp.n
    bounds = comparison_bounds(ctx.pp)
    with ctx.session():
        if mode in (ComparisonMode.GE, ComparisonMode.LT):
            xp = x * 2 + ctx.enc(x.pk, 1)
            yp = y * 2
        else:
            xp = x * 2
            yp = y * 2 + ctx.enc(y.pk, 1)
        r1 = ctx.rng.randrange(bounds.r1_lo, bounds.r1_hi)
        r2 = ctx.rng.randrange(1, bounds.r2_hi)
        s = ctx.coin() if coin is None else coin
        # arrange the operands so that, for s = 1, a non-negative masked
        # difference means the GE/LE predicate holds
        if mode in (ComparisonMode.GE, ComparisonMode.LT):
            first, second = (xp, yp) if s == 1 else (yp, xp)
        else:
            first, second = (yp, xp) if s == 1 else (xp, yp)
        gamma = sad(ctx, first * r1, second * (n - r1))
        ell = gamma + ctx.enc_sigma(r2)
        if ctx.debug_master is not None:
            ctx.debug_records.append(("cmp", mode.value, r1, r2, s))
        c1, c2 = ctx.exchange(ProtocolId.CMP, [ell.c1, ell.c2, ctx.pd1(ell)])
    u = ctx.sigma(c1, c2)
    keep = (s == 1) == (mode in (ComparisonMode.GE, ComparisonMode.LE))
    if keep:
        return ctx.refresh(u)
    return ctx.enc_sigma(1) + u * (n - 1)


@csp_handler(ProtocolId.CMP, arity=3)
def _csp_cmp(csp, v):
    c1, c2, partial = v
    l2 = csp.pd2(c1, c2, partial)
    csp.record("cmp", l2)
    u = 0 if l2.bit_length() > csp.pp.bits // 2 else 1
    out = csp.encrypt_sigma(u)
    return [out.c1, out.c2]


def sge(ctx, x, y, coin=None):
    return compare(ctx, ComparisonMode.GE, x, y, coin)


def sle(ctx, x, y, coin=None):
    return compare(ctx, ComparisonMode.LE, x, y, coin)


def slt(ctx, x, y, coin=None):
    return compare(ctx, ComparisonMode.LT, x, y, coin)


def sgt(ctx, x, y, coin=None):
    return compare(ctx, ComparisonMode.GT, x, y, coin)


# -- compositions ----------------------------------------------------------------

def set_eq(ctx: ProtocolContext, x: pctd.Ciphertext, y: pctd.Ciphertext) -> pctd.Ciphertext:
    """[1] if x == y else [0], as SLE(x, y) * SLE(y, x)."""
    ctx.count("set")
    with ctx.session():
        u1 = sle(ctx, x, y)
        u2 = sle(ctx, y, x)
        return smd(ctx, u1, u2)


def sut_neq(ctx: ProtocolContext, x: pctd.Ciphertext, y: pctd.Ciphertext) -> pctd.Ciphertext:
    """[1] if x != y else [0]: one minus the equality bit."""
    ctx.count("sut")
    eq = set_eq(ctx, x, y)
    return ctx.enc_sigma(1) + eq * (ctx.pp.n - 1)


def src_range(ctx: ProtocolContext, x: pctd.Ciphertext, y1: pctd.Ciphertext,
              y2: pctd.Ciphertext) -> pctd.Ciphertext:
    """[1] if y1 <= x <= y2 else [0]."""
    ctx.count("src")
    with ctx.session():
        return smd(ctx, sge(ctx, x, y1), sle(ctx, x, y2))
