"""Treatment recommendation over the encrypted model.

CP enumerates treatment procedures (``tpt``), scores each one against the
patient's encrypted recent states (``ssm`` / ``tpw``), pads them to a common
length (``expand``) and obliviously selects the k lowest weights with CSP's
help (``smin`` / ``smin_n`` / ``bps_k``).  The patient decrypts the winners
with ``recover_result``.
"""
from __future__ import annotations

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import pctd
from .model import EPSILON, ModelError, OPERAND_COUNT, bottom_code, k2c_encode
from .net.frame import ProtocolId
from .net.responder import csp_handler
from .protocols import (ProtocolContext, comparison_bounds, sad, set_eq, sgt, slt, smd,
                        src_range)

log = logging.getLogger(__name__)


class PipelineError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineParams:
    mvisit: int = 2
    mstate: int = 8
    mweight: int = 10000
    k: int = 3

    def validate(self, model=None, operand_bits: int | None = None) -> None:
        if self.mvisit < 1 or self.mstate < 1 or self.k < 1:
            raise PipelineError("MVisit, MState and k must be positive")
        if self.mweight < 1:
            raise PipelineError("MWeight must be positive")
        if operand_bits is not None and self.mweight >= 1 << operand_bits:
            raise PipelineError(f"MWeight does not fit in {operand_bits} bits")
        if model is None:
            return
        from .oracle import path_weights, plain_paths

        sums = [sum(path_weights(model, p)) for p in plain_paths(model, self.mvisit, self.mstate)]
        worst = max(sums, default=0)
        if self.mweight <= worst:
            raise PipelineError(f"MWeight={self.mweight} must exceed every path weight sum (max {worst})")
        if operand_bits is not None and self.mweight * worst >= 1 << operand_bits:
            raise PipelineError(
                f"MWeight*{worst} overflows the {operand_bits}-bit comparison range")


@dataclass
class TreatmentProcedure:
    states: list
    symbols: list
    tweights: list
    index_path: tuple


@dataclass
class WeightedProcedure:
    states: list
    symbols: list
    weight: pctd.Ciphertext
    index_path: tuple = ()


@dataclass
class ExpandedProcedure:
    states: list
    symbols: list
    weight: pctd.Ciphertext
    index_path: tuple = field(default=(), compare=False)


# -- state match -------------------------------------------------------------------

def _field(enc_state, name):
    try:
        return enc_state[name]
    except KeyError:
        raise ModelError(f"patient record has no field {name!r}") from None


def ssm(ctx: ProtocolContext, enc_state: dict, enc_descriptor) -> pctd.Ciphertext:
    """[1] iff the patient's state satisfies every predicate of the descriptor."""
    ctx.count("ssm")
    with ctx.session():
        u = ctx.enc_sigma(1)
        for pred in enc_descriptor:
            ops = pred.operands
            if OPERAND_COUNT.get(pred.kind) != len(ops):
                raise ModelError(f"{pred.kind} predicate carries {len(ops)} operands")
            x = _field(enc_state, pred.fields[0])
            if pred.kind == "range":
                ui = src_range(ctx, x, ops[0], ops[1])
            elif pred.kind == "range_pair":
                x2 = _field(enc_state, pred.fields[1])
                ui = smd(ctx, src_range(ctx, x, ops[0], ops[2]), src_range(ctx, x2, ops[1], ops[3]))
            elif pred.kind == "gt":
                ui = sgt(ctx, x, ops[0])
            elif pred.kind == "lt":
                ui = slt(ctx, x, ops[0])
            else:
                ui = set_eq(ctx, x, ops[0])
            u = smd(ctx, u, ui)
        return u


# -- traversal --------------------------------------------------------------------

def tpt(value, weight, accept, labels, mvisit: int, mstate: int) -> list[TreatmentProcedure]:
    """Enumerate procedures q0 -> accept by depth-first search over the clear adjacency.

    ``value``/``weight`` are the (n1+1)^2 tables from ``build_transition_arrays``
    (None marks a missing transition), ``labels`` the encrypted state labels.
    Successors are tried in ascending id order, at most one per step; a
    state's per-occurrence visit flags are cleared when it is popped.
    """
    n = len(value)
    accept = set(accept)
    if 0 in accept:
        return [TreatmentProcedure([labels[0]], [], [], (0,))]
    if mstate < 2:
        return []
    count = [0] * n
    visit = [[[False] * n for _ in range(n)] for _ in range(mvisit + 1)]
    q, y, w = [0], [], []
    count[0] = 1
    found = []
    while q:
        alpha = q[-1]
        beta = -1
        flags = visit[count[alpha]][alpha]
        for i in range(1, n):
            if value[alpha][i] is not None and not flags[i]:
                beta = i
                flags[i] = True
                break
        if beta == -1:
            for j in range(n):
                flags[j] = False
            q.pop()
            count[alpha] -= 1
            if y:
                y.pop()
                w.pop()
        elif count[beta] < mvisit:
            y.append(value[alpha][beta])
            w.append(weight[alpha][beta])
            q.append(beta)
            count[beta] += 1
        if q:
            top = q[-1]
            if top in accept:
                found.append(TreatmentProcedure([labels[s] for s in q], list(y), list(w), tuple(q)))
                q.pop()
                y.pop()
                w.pop()
                count[top] -= 1
            elif len(q) == mstate:
                q.pop()
                y.pop()
                w.pop()
                count[top] -= 1
    return found


# -- weights ----------------------------------------------------------------------

class _SsmCache:
    def __init__(self):
        self._d = {}
        self._lock = threading.Lock()

    def get(self, key):
        with self._lock:
            return self._d.get(key)

    def put(self, key, value):
        with self._lock:
            self._d.setdefault(key, value)


def _procedure_weight(ctx, mweight, enc_phi, tp, descriptors, cache):
    m = len(enc_phi)
    path = tp.index_path
    T = len(path) - 1
    if T < m:
        return ctx.enc_sigma(mweight)
    with ctx.session():
        W = ctx.enc_sigma(0)
        v_acc = ctx.enc_sigma(0)
        zero = ctx.enc_sigma(0)
        # windows over non-initial states p_t..p_{t+m-1}, t = 1..T-m+1; the
        # suffix after a window is v_{t+m}..v_T (tweights[t+m-1:] zero-based)
        for t in range(1, T - m + 2):
            a = ctx.enc_sigma(0)
            for k in range(m):
                state = path[t + k]
                key = (k, state)
                u = cache.get(key) if cache is not None else None
                if u is None:
                    u = ssm(ctx, enc_phi[k], descriptors.get(state, ()))
                    if cache is not None:
                        cache.put(key, u)
                a = a + u
            s1 = set_eq(ctx, a, ctx.enc_sigma(m))
            gate = set_eq(ctx, v_acc, zero)
            v_acc = v_acc + s1
            s2 = ctx.enc_sigma(0)
            for wt in tp.tweights[t + m - 1:]:
                s2 = sad(ctx, s2, wt)
            W = W + smd(ctx, smd(ctx, s1, s2), gate)
        v = set_eq(ctx, v_acc, zero)
        return W + v * mweight


def tpw(ctx: ProtocolContext, mweight: int, enc_phi, tps, descriptors, threads: int = 1,
        memoize: bool = True) -> list[WeightedProcedure]:
    """Score every procedure: suffix weight after the first window matching Φ, else MWeight.

    ``descriptors`` maps state id to its encrypted descriptor.  With
    ``memoize`` each (query position, state) match is computed once and
    reused across windows and procedures.
    """
    if not enc_phi:
        raise PipelineError("the query must contain at least one state")
    cache = _SsmCache() if memoize else None
    if threads <= 1:
        weights = [_procedure_weight(ctx, mweight, enc_phi, tp, descriptors, cache) for tp in tps]
    else:
        forks = [ctx.fork() for _ in tps]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            weights = list(pool.map(
                lambda pair: _procedure_weight(pair[0], mweight, enc_phi, pair[1], descriptors, cache),
                zip(forks, tps)))
    return [WeightedProcedure(tp.states, tp.symbols, w, tp.index_path) for tp, w in zip(tps, weights)]


def expand(wtps, mstate: int, pp: pctd.PublicParams, pk: int, rng=None) -> list[ExpandedProcedure]:
    """Pad states to ``mstate`` and symbols to ``mstate - 1`` with encrypted dummies."""
    bot = bottom_code(pp.operand_bits)
    out = []
    for p in wtps:
        if len(p.states) > mstate:
            raise PipelineError(f"procedure has {len(p.states)} states, more than MState={mstate}")
        states = list(p.states) + [pctd.encrypt(pp, pk, bot, rng) for _ in range(mstate - len(p.states))]
        symbols = list(p.symbols) + [pctd.encrypt(pp, pk, bot, rng)
                                     for _ in range(mstate - 1 - len(p.symbols))]
        out.append(ExpandedProcedure(states, symbols, p.weight, p.index_path))
    return out


# -- selection ----------------------------------------------------------------------

def smin(ctx: ProtocolContext, e1: ExpandedProcedure, e2: ExpandedProcedure,
         coin: int | None = None) -> ExpandedProcedure:
    """The procedure with the smaller weight (e2 on ties), re-encrypted under pk_σ."""
    if len(e1.states) != len(e2.states) or len(e1.symbols) != len(e2.symbols):
        raise PipelineError("procedures must be expanded to the same length")
    ctx.count("smin")
    n = ctx.pp.n
    rng = ctx.rng
    bounds = comparison_bounds(ctx.pp)
    with ctx.session():
        s = ctx.coin() if coin is None else coin
        pair = (e1, e2)
        lo, hi = pair[1 - s], pair[s]  # ETP_{2-s}, ETP_{s+1}
        w_lo2 = lo.weight * 2 + (ctx.enc_sigma(1) if lo is e1 else ctx.enc_sigma(0))
        w_hi2 = hi.weight * 2 + (ctx.enc_sigma(1) if hi is e1 else ctx.enc_sigma(0))
        r0p = rng.randrange(bounds.r1_lo, bounds.r1_hi)
        r0 = rng.randrange(1, bounds.r2_hi)
        r1 = rng.randrange(n)
        l0 = w_lo2 * r0p + w_hi2 * (n - r0p) + ctx.enc_sigma(r0)
        l1 = hi.weight + lo.weight * (n - 1) + ctx.enc_sigma(r1)
        r2 = [rng.randrange(n) for _ in range(len(lo.states) - 1)]
        r3 = [rng.randrange(n) for _ in range(len(lo.symbols))]
        l2 = [sad(ctx, hi.states[i + 1] + lo.states[i + 1] * (n - 1), ctx.enc_sigma(r))
              for i, r in enumerate(r2)]
        l3 = [sad(ctx, hi.symbols[i] + lo.symbols[i] * (n - 1), ctx.enc_sigma(r))
              for i, r in enumerate(r3)]
        if ctx.debug_master is not None:
            ctx.debug_records.append(("smin", r0p, r0, s))
        payload = [l0.c1, l0.c2, ctx.pd1(l0), l1.c1, l1.c2]
        for ct in l2 + l3:
            payload += (ct.c1, ct.c2)
        reply = ctx.exchange(ProtocolId.SMIN, payload)
        cts = [ctx.sigma(reply[i], reply[i + 1]) for i in range(0, len(reply), 2)]
        t, l4 = cts[0], cts[1]
        l5 = cts[2:2 + len(r2)]
        l6 = cts[2 + len(r2):]
        weight = lo.weight + l4 + t * (n - r1)
        states = [sad(ctx, lo.states[0], ctx.enc_sigma(0))]
        states += [sad(ctx, lo.states[i + 1], l5[i]) + t * (n - r) for i, r in enumerate(r2)]
        symbols = [sad(ctx, lo.symbols[i], l6[i]) + t * (n - r) for i, r in enumerate(r3)]
    return ExpandedProcedure(states, symbols, weight)


@csp_handler(ProtocolId.SMIN)
def _csp_smin(csp, v):
    if len(v) < 5 or (len(v) - 5) % 4:
        raise ValueError(f"SMin step carries {len(v)} values")
    l0 = csp.pd2(v[0], v[1], v[2])
    csp.record("smin", l0)
    rest = [(v[i], v[i + 1]) for i in range(3, len(v), 2)]
    out = []
    if l0.bit_length() > csp.pp.bits // 2:
        t = csp.encrypt_sigma(0)
        fresh = [csp.encrypt_sigma(0) for _ in rest]
    else:
        t = csp.encrypt_sigma(1)
        fresh = [csp.refresh(c1, c2) for c1, c2 in rest]
    for ct in [t] + fresh:
        out += (ct.c1, ct.c2)
    return out


def _promote(ctx, e: ExpandedProcedure) -> ExpandedProcedure:
    zero = lambda: ctx.enc_sigma(0)  # noqa: E731
    return ExpandedProcedure([sad(ctx, s, zero()) for s in e.states],
                             [sad(ctx, y, zero()) for y in e.symbols],
                             sad(ctx, e.weight, zero()))


def smin_n(ctx: ProtocolContext, etps) -> ExpandedProcedure:
    """Tournament of adjacent pairs; an unpaired last element moves up re-encrypted."""
    if not etps:
        raise PipelineError("no procedures to select from")
    ctx.count("smin_n")
    layer = list(etps)
    with ctx.session():
        if len(layer) == 1:
            return _promote(ctx, layer[0])
        while len(layer) > 1:
            nxt = [smin(ctx, layer[i], layer[i + 1]) for i in range(0, len(layer) - 1, 2)]
            if len(layer) % 2:
                nxt.append(_promote(ctx, layer[-1]))
            layer = nxt
    return layer[0]


def bps_k(ctx: ProtocolContext, etps, k: int, mweight: int, permutation=None,
          observer=None) -> list[ExpandedProcedure]:
    """k lowest-weight procedures in ascending order.

    After each round the chosen weight is multiplied by MWeight through a
    permuted zero test at CSP.  ``permutation(round, n)`` may supply the
    shuffle (a list of indices); ``observer(round, weights)`` sees the
    encrypted weights after each round (tests decrypt them).
    """
    n = len(etps)
    if not 1 <= k <= n:
        raise PipelineError(f"k={k} must lie in [1, {n}]")
    ctx.count("bps_k")
    pp = ctx.pp
    rbound = 1 << (pp.bits // 4 - 1)
    current = [ExpandedProcedure(e.states, e.symbols, e.weight, e.index_path) for e in etps]
    chosen = []
    with ctx.session():
        for rnd in range(k):
            best = smin_n(ctx, current)
            chosen.append(best)
            masked = []
            for e in current:
                r = ctx.rng.randrange(1, rbound)
                masked.append(best.weight * r + e.weight * (pp.n - r))
            if permutation is not None:
                perm = list(permutation(rnd, n))
            else:
                perm = list(range(n))
                ctx.rng.shuffle(perm)
            if sorted(perm) != list(range(n)):
                raise PipelineError("permutation is not a rearrangement of 0..n-1")
            payload = [mweight]
            for j in perm:
                ct = masked[j]
                payload += (ct.c1, ct.c2, ctx.pd1(ct))
            reply = ctx.exchange(ProtocolId.BPSK, payload)
            flags = [None] * n
            for pos, j in enumerate(perm):
                flags[j] = ctx.sigma(reply[2 * pos], reply[2 * pos + 1])
            for j, e in enumerate(current):
                current[j] = ExpandedProcedure(e.states, e.symbols, smd(ctx, e.weight, flags[j]),
                                               e.index_path)
            if observer is not None:
                observer(rnd, [e.weight for e in current])
    return chosen


@csp_handler(ProtocolId.BPSK)
def _csp_bpsk(csp, v):
    if len(v) < 4 or (len(v) - 1) % 3:
        raise ValueError(f"BPS-k step carries {len(v)} values")
    mweight = v[0]
    out = []
    seen = []
    for i in range(1, len(v), 3):
        l2 = csp.pd2(v[i], v[i + 1], v[i + 2])
        seen.append(l2)
        ct = csp.encrypt_sigma(mweight if l2 == 0 else 1)
        out += (ct.c1, ct.c2)
    csp.record("bps", tuple(seen))
    return out


# -- patient side ----------------------------------------------------------------------

def recover_result(pp: pctd.PublicParams, sk_sigma: int, etp: ExpandedProcedure,
                   alphabet=(), state_names=None) -> dict:
    """Decrypt a selected procedure and drop the padding."""
    ob = pp.operand_bits
    bot = bottom_code(ob)
    words = {k2c_encode(w, ob): w for w in alphabet}
    words[k2c_encode(EPSILON, ob)] = EPSILON
    dec = lambda ct: pctd.weak_decrypt(pp, sk_sigma, ct)  # noqa: E731
    states = [x for x in map(dec, etp.states) if x != bot]
    codes = [x for x in map(dec, etp.symbols) if x != bot]
    names = state_names or (lambda s: f"q{s}")
    return {
        "weight": dec(etp.weight),
        "path": [names(s) for s in states],
        "therapies": [words.get(c, f"#{c}") for c in codes],
        "state_ids": states,
    }
