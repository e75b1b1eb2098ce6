"""Plaintext reference implementations used to check the encrypted engine.

These are deliberately written from the definitions (brute force where it
is cheap) rather than by copying the encrypted code paths.
"""
from __future__ import annotations

from collections import deque

from .model import EPSILON, WeightedNfaModel, k2c_encode
from .protocols import ComparisonMode, PreconditionError


def plain_compare(mode, x: int, y: int, operand_bits: int | None = None) -> int:
    if operand_bits is not None:
        for v in (x, y):
            if not 0 <= v < 1 << operand_bits:
                raise PreconditionError(f"operand {v} outside [0, 2^{operand_bits})")
    mode = ComparisonMode(mode)
    return int({"GE": x >= y, "LE": x <= y, "LT": x < y, "GT": x > y}[mode.value])


def plain_predicate(pred, state: dict) -> int:
    try:
        if pred.kind == "range":
            return int(pred.lo <= state[pred.field] <= pred.hi)
        if pred.kind == "range_pair":
            a, b = state[pred.field1], state[pred.field2]
            return int(pred.lo1 <= a <= pred.hi1 and pred.lo2 <= b <= pred.hi2)
        if pred.kind == "gt":
            return int(state[pred.field] > pred.threshold)
        if pred.kind == "lt":
            return int(state[pred.field] < pred.threshold)
        if pred.kind == "keyword":
            return int(state[pred.field] == pred.keyword)
    except KeyError as exc:
        raise ValueError(f"patient record lacks field {exc}") from None
    raise ValueError(f"unknown predicate kind {pred.kind!r}")


def plain_ssm(state: dict, descriptor) -> int:
    return int(all(plain_predicate(p, state) for p in descriptor))


def plain_paths(model: WeightedNfaModel, mvisit: int, mstate: int) -> set:
    """All walks q0 -> accept with each state at most ``mvisit`` times and at
    most ``mstate`` states; a walk ends at the first accept state it reaches
    and never re-enters q0.  Breadth-first, independent of the DFS in
    ``pipeline.tpt``.
    """
    if 0 in model.accept:
        return {(0,)}
    found = set()
    queue = deque([(0,)])
    while queue:
        walk = queue.popleft()
        if len(walk) >= mstate:
            continue
        for (f, t) in model.transitions:
            if f != walk[-1] or t == 0 or walk.count(t) >= mvisit:
                continue
            nxt = walk + (t,)
            if t in model.accept:
                found.add(nxt)
            else:
                queue.append(nxt)
    return found


def path_weights(model: WeightedNfaModel, path) -> list[int]:
    return [model.transitions[(a, b)].weight for a, b in zip(path, path[1:])]


def path_symbols(model: WeightedNfaModel, path) -> list[str]:
    return [model.transitions[(a, b)].symbol for a, b in zip(path, path[1:])]


def plain_tpw(mweight: int, phi, paths, model: WeightedNfaModel) -> list[int]:
    """Weight of each path: suffix weight after the first window matching Φ, else MWeight."""
    m = len(phi)
    out = []
    for path in paths:
        weights = path_weights(model, path)
        states = path[1:]
        w = mweight
        for t in range(len(states) - m + 1):
            if all(plain_ssm(phi[i], model.descriptors.get(states[t + i], ()))
                   for i in range(m)):
                w = sum(weights[t + m:])
                break
        out.append(w)
    return out


def plain_smin(w1: int, w2: int) -> int:
    """Index (0 or 1) of the pair element the secure minimum returns."""
    return 0 if w1 < w2 else 1


def plain_tournament(weights) -> int:
    idx = list(range(len(weights)))
    while len(idx) > 1:
        nxt = []
        for a in range(0, len(idx) - 1, 2):
            i, j = idx[a], idx[a + 1]
            nxt.append((i, j)[plain_smin(weights[i], weights[j])])
        if len(idx) % 2:
            nxt.append(idx[-1])
        idx = nxt
    return idx[0]


def plain_bps(weights, k: int, mweight: int):
    """Mirror of the top-k loop: returns (selected indices, weights after each round)."""
    w = list(weights)
    chosen, rounds = [], []
    for _ in range(k):
        i = plain_tournament(w)
        chosen.append(i)
        wmin = w[i]
        w = [x * mweight if x == wmin else x for x in w]
        rounds.append(tuple(w))
    return chosen, rounds


def plain_topk(weights, k: int) -> list[int]:
    return sorted(range(len(weights)), key=lambda i: (weights[i], i))[:k]


def levenshtein(a, b) -> int:
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def plain_pgene(mode: str, psi, phi, mu: int, modulus: int | None = None):
    """Activation grids (0 = active) after each symbol of ``phi``.

    ``verbatim`` replays the in-place update with ring arithmetic (pass
    ``modulus`` = N to reproduce decrypted cells exactly).  ``snapshot``
    uses activation semantics and returns 0/1 grids.
    """
    m = len(psi)
    red = (lambda v: v % modulus) if modulus else (lambda v: v)
    grids = []
    if mode == "verbatim":
        s = [[1] * (m + 1) for _ in range(mu + 1)]
        s[0][0] = 0
        for sym in phi:
            for j in range(1, m + 1):
                s[0][j] = red(s[0][j - 1] + int(sym != psi[j - 1]))
            for i in range(1, mu + 1):
                for j in range(1, m + 1):
                    b1 = red(s[i][j - 1] + int(sym != psi[j - 1]))
                    b2 = red(s[i - 1][j - 1] * s[i - 1][j])
                    b3 = red(s[i][j - 1] * b2)
                    s[i][j] = red(b1 * b3)
            grids.append([row[:] for row in s])
        return grids
    if mode != "snapshot":
        raise ValueError(f"unknown mode {mode!r}")
    active = {(i, i) for i in range(min(mu, m) + 1)}
    for sym in phi:
        cur = set()
        for i in range(mu + 1):
            if i > 0 and (i - 1, 0) in active:
                cur.add((i, 0))
            for j in range(1, m + 1):
                if (i, j - 1) in active and sym == psi[j - 1]:
                    cur.add((i, j))
                elif i > 0 and ((i - 1, j - 1) in active or (i - 1, j) in active
                                or (i - 1, j - 1) in cur):
                    cur.add((i, j))
        active = cur
        grids.append([[0 if (i, j) in active else 1 for j in range(m + 1)]
                      for i in range(mu + 1)])
    return grids


def plain_accept_row(grid) -> int | None:
    for i, row in enumerate(grid):
        if row[-1] == 0:
            return i
    return None


def symbol_codes(symbols, operand_bits: int) -> list[int]:
    return [k2c_encode(s, operand_bits) for s in symbols]


__all__ = [
    "EPSILON", "levenshtein", "path_symbols", "path_weights", "plain_accept_row",
    "plain_bps", "plain_compare", "plain_paths", "plain_pgene", "plain_predicate",
    "plain_smin", "plain_ssm", "plain_topk", "plain_tournament", "plain_tpw", "symbol_codes",
]
