"""Timing harness: per-protocol cost against key size, and TPW cost against m and path length."""
from __future__ import annotations

import random
import statistics
import time
from dataclasses import asdict, dataclass

from . import model as M
from . import pipeline as PL
from . import protocols as P
from .net import kgc_bootstrap, local_pair
from .pgene import MatchMode, build_e, encrypt_sequence, pgene_match

PROTOCOLS = ("sad", "smd", "sge", "sle", "slt", "sgt", "set", "sut", "src", "ssm", "smin", "pgene")


@dataclass
class Row:
    operation: str
    bits: int
    param: str
    mean_ms: float
    min_ms: float
    trials: int


def _setup(kappa, seed):
    rng = random.Random(seed)
    b = kgc_bootstrap(kappa, ["hospital", "patient"], rng)
    rec, sk_sigma = b.issue_authorization("hospital", "patient")
    ctx = local_pair(b.pp, b.cp_share, b.csp_share, rec.pk_sigma,
                     rng=random.Random(seed + 1), csp_rng=random.Random(seed + 2))
    return b, ctx, rng


def _descriptor(pp, pk, rng, width=4):
    preds = [M.Range("BT", 365, 375), M.RangePair("SYS", "DIA", 90, 60, 140, 90),
             M.Gt("RR", 12), M.KeywordEq("S1", "fatigue")][:width]
    return M.encrypt_descriptor(pp, pk, preds, rng)


def _patient(pp, pk, rng):
    return M.encrypt_patient_state(pp, pk, {"BT": 370, "SYS": 120, "DIA": 80, "RR": 16,
                                            "S1": "fatigue"}, rng)


def _time(fn, trials):
    """(mean, min) wall time in ms."""
    samples = []
    for _ in range(trials):
        t = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - t) * 1000)
    return statistics.mean(samples), min(samples)


def bench_protocols(bits_list=(512, 1024), trials=3, seed=1, protocols=PROTOCOLS):
    rows = []
    for bits in bits_list:
        b, ctx, rng = _setup(bits // 2, seed)
        pp = b.pp
        A, B = b.users["hospital"].pk, b.users["patient"].pk
        x, y, z = (P.pctd.encrypt(pp, pk, v, rng) for pk, v in ((B, 17), (A, 9), (A, 40)))
        desc, state = _descriptor(pp, A, rng), _patient(pp, B, rng)
        mstate = 8
        bot = M.bottom_code(pp.operand_bits)
        etp1 = PL.ExpandedProcedure([P.pctd.encrypt(pp, A, bot, rng) for _ in range(mstate)],
                                    [P.pctd.encrypt(pp, A, bot, rng) for _ in range(mstate - 1)],
                                    ctx.enc_sigma(3))
        etp2 = PL.ExpandedProcedure(etp1.states, etp1.symbols, ctx.enc_sigma(7))
        E = build_e(pp, A, encrypt_sequence(pp, A, "GCT", rng), 1, rng)
        seq = encrypt_sequence(pp, B, "G", rng)
        ops = {
            "sad": lambda: P.sad(ctx, x, y),
            "smd": lambda: P.smd(ctx, x, y),
            "sge": lambda: P.sge(ctx, x, y),
            "sle": lambda: P.sle(ctx, x, y),
            "slt": lambda: P.slt(ctx, x, y),
            "sgt": lambda: P.sgt(ctx, x, y),
            "set": lambda: P.set_eq(ctx, x, y),
            "sut": lambda: P.sut_neq(ctx, x, y),
            "src": lambda: P.src_range(ctx, x, y, z),
            "ssm": lambda: PL.ssm(ctx, state, desc),
            "smin": lambda: PL.smin(ctx, etp1, etp2),
            "pgene": lambda: pgene_match(ctx, E, seq, MatchMode.SNAPSHOT),
        }
        for name in protocols:
            param = {"smin": f"MState={mstate}", "pgene": "m=3,mu=1,n=1",
                     "ssm": "4 predicates"}.get(name, "")
            rows.append(Row(name, pp.bits, param, *_time(ops[name], trials), trials))
    return rows


def _chain_tp(pp, A, rng, length):
    """Synthetic procedure q0 -> q1 -> ... -> q_length with unit weights."""
    labels = [P.pctd.encrypt(pp, A, i, rng) for i in range(length + 1)]
    syms = [P.pctd.encrypt(pp, A, 1, rng) for _ in range(length)]
    weights = [P.pctd.encrypt(pp, A, 1, rng) for _ in range(length)]
    return PL.TreatmentProcedure(labels, syms, weights, tuple(range(length + 1)))


def bench_tpw(bits=256, ms=(1, 2, 3), lengths=(8, 10, 12), trials=2, seed=1):
    """TPW over a synthetic chain.  A length-T path runs m(T-m+1) state matches,
    which grows with m only while T > 2m, so the default lengths keep T > 2*max(m)."""
    b, ctx, rng = _setup(bits // 2, seed)
    pp, A, B = b.pp, b.users["hospital"].pk, b.users["patient"].pk
    desc = _descriptor(pp, A, rng)
    rows = []
    for length in lengths:
        tp = _chain_tp(pp, A, rng, length)
        descriptors = {s: desc for s in range(1, length + 1)}
        for m in ms:
            phi = [_patient(pp, B, rng) for _ in range(m)]
            t = _time(lambda: PL.tpw(ctx, 1000, phi, [tp], descriptors, memoize=False), trials)
            rows.append(Row("tpw", pp.bits, f"m={m},T={length}", *t, trials))
    return rows


def monotonicity_violations(rows) -> list[str]:
    """Cost must grow with key size (per protocol) and with m (per path length).

    Compares the fastest trial, which is far less sensitive to scheduler noise than the mean.
    """
    bad = []
    by_op = {}
    for r in rows:
        if r.operation != "tpw":
            by_op.setdefault(r.operation, []).append(r)
    for op, rs in by_op.items():
        rs = sorted(rs, key=lambda r: r.bits)
        for a, b in zip(rs, rs[1:]):
            if b.min_ms <= a.min_ms:
                bad.append(f"{op}: {b.bits}-bit ({b.min_ms:.1f} ms) not slower than {a.bits}-bit ({a.min_ms:.1f} ms)")
    by_len = {}
    for r in rows:
        if r.operation == "tpw":
            params = dict(kv.split("=") for kv in r.param.split(","))
            by_len.setdefault(int(params["T"]), []).append((int(params["m"]), r))
    for length, rs in by_len.items():
        rs.sort(key=lambda t: t[0])
        for (m1, a), (m2, b) in zip(rs, rs[1:]):
            if b.min_ms <= a.min_ms:
                bad.append(f"tpw T={length}: m={m2} ({b.min_ms:.1f} ms) not slower than m={m1} ({a.min_ms:.1f} ms)")
    return bad


def run(bits_list=(512, 1024), tpw_bits=256, trials=3, seed=1):
    rows = bench_protocols(bits_list, trials, seed) + bench_tpw(tpw_bits, trials=trials, seed=seed)
    return {"rows": [asdict(r) for r in rows], "violations": monotonicity_violations(rows)}
