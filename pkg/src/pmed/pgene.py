"""Error-tolerant gene matching over an encrypted Ukkonen automaton.

The automaton for a pattern of length m tolerating mu edits is a
(mu+1) x (m+1) grid; row i means i edits so far.  Activation is tracked
in an encrypted matrix S where [0] marks an active state.  Two update
rules are offered:

``verbatim``
    the in-place update as originally published.  Kept for
    reproducibility; it never deactivates the start state and mixes
    current and previous values, so it is not an edit-distance test.
``snapshot``
    reads match, insertion and substitution sources from the previous
    step's matrix and deletion sources from the current one, i.e. the
    usual edit-distance automaton for whole-sequence matching.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

from . import pctd
from .model import k2c_encode
from .protocols import ProtocolContext, sad, smd, sut_neq


class MatchMode(str, enum.Enum):
    VERBATIM = "verbatim"
    SNAPSHOT = "snapshot"


@dataclass(frozen=True)
class UkkonenModel:
    m: int
    mu: int

    def cells(self):
        return [(i, j) for i in range(self.mu + 1) for j in range(self.m + 1)]

    @property
    def accept(self):
        return [(i, self.m) for i in range(self.mu + 1)]


class TransitionMatrix:
    """Entries e[(i,j) -> (i',j')]: ψ_{j'} for h-moves, 0 for v/d-moves, 1 elsewhere.

    Only the explicit entries are stored; every other pair shares one
    encryption of 1.
    """

    def __init__(self, entries: dict, one: pctd.Ciphertext, m: int, mu: int):
        self.entries = entries
        self.one = one
        self.m = m
        self.mu = mu

    def __getitem__(self, key):
        src, dst = key
        return self.entries.get((src, dst), self.one)


def build_e(pp: pctd.PublicParams, pk: int, enc_psi, mu: int, rng=None) -> TransitionMatrix:
    m = len(enc_psi)
    zero = lambda: pctd.encrypt(pp, pk, 0, rng)  # noqa: E731
    entries = {}
    for i in range(mu + 1):
        for j in range(m + 1):
            if j < m:
                entries[((i, j), (i, j + 1))] = enc_psi[j]
            if i < mu:
                entries[((i, j), (i + 1, j))] = zero()
                if j < m:
                    entries[((i, j), (i + 1, j + 1))] = zero()
    return TransitionMatrix(entries, pctd.encrypt(pp, pk, 1, rng), m, mu)


def init_s(ctx: ProtocolContext, m: int, mu: int, mode=MatchMode.VERBATIM):
    """Initial activation matrix under pk_σ.

    Verbatim: only q_{0,0} is active.  Snapshot: also every q_{i,i}, reached
    from the start by i deletions.
    """
    mode = MatchMode(mode)
    s = [[ctx.enc_sigma(1) for _ in range(m + 1)] for _ in range(mu + 1)]
    s[0][0] = ctx.enc_sigma(0)
    if mode is MatchMode.SNAPSHOT:
        for i in range(1, min(mu, m) + 1):
            s[i][i] = ctx.enc_sigma(0)
    return s


def pgene_match(ctx: ProtocolContext, E: TransitionMatrix, enc_phi, mode=MatchMode.SNAPSHOT,
                trace=None):
    """Run the matcher; returns the encrypted accept column (S_{0,m}, ..., S_{mu,m}).

    ``trace``, if given, receives a copy of the whole matrix after each symbol.
    """
    mode = MatchMode(mode)
    if not enc_phi:
        raise ValueError("the sequence must contain at least one symbol")
    m, mu = E.m, E.mu
    ctx.count("pgene")
    with ctx.session():
        S = init_s(ctx, m, mu, mode)
        for phi in enc_phi:
            if mode is MatchMode.VERBATIM:
                _step_verbatim(ctx, E, S, phi)
            else:
                S = _step_snapshot(ctx, E, S, phi)
            if trace is not None:
                trace.append([row[:] for row in S])
    return [S[i][m] for i in range(mu + 1)]


def _step_verbatim(ctx, E, S, phi):
    m, mu = E.m, E.mu
    for j in range(1, m + 1):
        b0 = sut_neq(ctx, phi, E[(0, j - 1), (0, j)])
        S[0][j] = sad(ctx, S[0][j - 1], b0)
    for i in range(1, mu + 1):
        for j in range(1, m + 1):
            b0 = sut_neq(ctx, phi, E[(i, j - 1), (i, j)])
            b1 = sad(ctx, S[i][j - 1], b0)
            b2 = smd(ctx, S[i - 1][j - 1], S[i - 1][j])
            b3 = smd(ctx, S[i][j - 1], b2)
            S[i][j] = smd(ctx, b1, b3)


def _step_snapshot(ctx, E, P, phi):
    m, mu = E.m, E.mu
    S = [[None] * (m + 1) for _ in range(mu + 1)]
    S[0][0] = ctx.enc_sigma(1)
    for j in range(1, m + 1):
        b0 = sut_neq(ctx, phi, E[(0, j - 1), (0, j)])
        S[0][j] = sad(ctx, P[0][j - 1], b0)
    for i in range(1, mu + 1):
        # column 0 is only reachable by insertions (v-moves)
        S[i][0] = ctx.refresh(P[i - 1][0])
        for j in range(1, m + 1):
            b0 = sut_neq(ctx, phi, E[(i, j - 1), (i, j)])
            b1 = sad(ctx, P[i][j - 1], b0)           # match
            b2 = smd(ctx, P[i - 1][j - 1], P[i - 1][j])  # substitution, insertion
            b3 = smd(ctx, S[i - 1][j - 1], b2)       # deletion
            S[i][j] = smd(ctx, b1, b3)
    return S


def accepted(pp: pctd.PublicParams, sk_sigma: int, f_s) -> int | None:
    """Smallest row whose accept state is active, or None."""
    for i, ct in enumerate(f_s):
        if pctd.weak_decrypt(pp, sk_sigma, ct) == 0:
            return i
    return None


# -- sequence input -----------------------------------------------------------------

def read_sequence(path) -> str:
    """Bases from a plain or FASTA-style file: '>' headers skipped, whitespace ignored."""
    with open(path, encoding="utf-8") as fh:
        return parse_sequence(fh.read())


def parse_sequence(text: str) -> str:
    out = []
    for line in text.splitlines():
        if line.startswith(">"):
            continue
        out.append("".join(line.split()))
    seq = "".join(out).upper()
    bad = sorted(set(seq) - set("ACGT"))
    if bad:
        raise ValueError(f"unexpected symbols in sequence: {''.join(bad)}")
    return seq


def encrypt_sequence(pp: pctd.PublicParams, pk: int, seq, rng=None):
    return [pctd.encrypt(pp, pk, k2c_encode(ch, pp.operand_bits), rng) for ch in seq]
