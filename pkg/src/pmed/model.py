"""Weighted NFA medical model, illness-state descriptors and their encryption.

A model is a set of states ``0..n1`` (0 is the initial state), an accept
set, and at most one weighted, labelled transition per ordered state pair.
States may carry a descriptor: a conjunction of predicates over the
patient's vital signs and symptoms.  Decimal vitals are mapped to integers
with a per-field scale factor shared by hospital and patient.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Mapping, Union

from . import pctd

EPSILON = "EPSILON"
# Reserved tokens live outside the keyword namespace (a NUL prefix never
# appears in keywords read from model files).
_EPSILON_TOKEN = "\x00EPSILON"
_BOTTOM_TOKEN = "\x00BOTTOM"


class ModelError(ValueError):
    """Invalid model, descriptor or patient record."""


# -- encodings -------------------------------------------------------------------

def code_bits(operand_bits: int) -> int:
    return operand_bits - 8


def k2c_encode(keyword: str, operand_bits: int) -> int:
    """Map a keyword to a small integer code (digest truncated to operand_bits - 8 bits).

    ``EPSILON`` (the empty move) and the padding symbol have reserved codes.
    """
    if keyword == EPSILON:
        keyword = _EPSILON_TOKEN
    if not keyword:
        raise ModelError("keyword must be non-empty")
    nbits = code_bits(operand_bits)
    if nbits < 8:
        raise ModelError(f"operand range of {operand_bits} bits is too small for keyword codes")
    digest = hashlib.shake_256(keyword.encode("utf-8")).digest((nbits + 7) // 8)
    return int.from_bytes(digest, "big") >> (8 * len(digest) - nbits)


def bottom_code(operand_bits: int) -> int:
    """Code of the dummy symbol used to pad procedures."""
    return k2c_encode(_BOTTOM_TOKEN, operand_bits)


def scale_vital(value, factor: int = 1) -> int:
    """Scale a non-negative reading to an integer, rounding half up."""
    if factor not in (1, 10, 100):
        raise ModelError(f"scale factor must be 1, 10 or 100, got {factor}")
    d = Decimal(str(value))
    if d < 0:
        raise ModelError(f"vital sign readings must be non-negative, got {value}")
    return int((d * factor).quantize(Decimal(1), rounding=ROUND_HALF_UP))


# -- predicates ---------------------------------------------------------------------

@dataclass(frozen=True)
class Range:
    """lo <= patient[field] <= hi."""
    field: str
    lo: int
    hi: int
    kind = "range"

    @property
    def fields(self):
        return (self.field,)

    def operands(self, operand_bits):
        return (self.lo, self.hi)


@dataclass(frozen=True)
class RangePair:
    """Two joint ranges, e.g. systolic/diastolic pressure within lo1/lo2 .. hi1/hi2."""
    field1: str
    field2: str
    lo1: int
    lo2: int
    hi1: int
    hi2: int
    kind = "range_pair"

    @property
    def fields(self):
        return (self.field1, self.field2)

    def operands(self, operand_bits):
        return (self.lo1, self.lo2, self.hi1, self.hi2)


@dataclass(frozen=True)
class Gt:
    """patient[field] > threshold."""
    field: str
    threshold: int
    kind = "gt"

    @property
    def fields(self):
        return (self.field,)

    def operands(self, operand_bits):
        return (self.threshold,)


@dataclass(frozen=True)
class Lt:
    """patient[field] < threshold."""
    field: str
    threshold: int
    kind = "lt"

    @property
    def fields(self):
        return (self.field,)

    def operands(self, operand_bits):
        return (self.threshold,)


@dataclass(frozen=True)
class KeywordEq:
    """patient[field] is the given keyword."""
    field: str
    keyword: str
    kind = "keyword"

    @property
    def fields(self):
        return (self.field,)

    def operands(self, operand_bits):
        return (k2c_encode(self.keyword, operand_bits),)


Predicate = Union[Range, RangePair, Gt, Lt, KeywordEq]
OPERAND_COUNT = {"range": 2, "range_pair": 4, "gt": 1, "lt": 1, "keyword": 1}


@dataclass(frozen=True)
class Transition:
    symbol: str
    weight: int


@dataclass(frozen=True)
class WeightedNfaModel:
    n_states: int
    accept: frozenset
    alphabet: tuple
    transitions: Mapping[tuple, Transition]
    descriptors: Mapping[int, tuple] = field(default_factory=dict)
    names: Mapping[int, str] = field(default_factory=dict)
    scale_factors: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "accept", frozenset(self.accept))
        object.__setattr__(self, "alphabet", tuple(self.alphabet))
        self.validate()

    @property
    def states(self) -> range:
        return range(self.n_states)

    def name(self, state: int) -> str:
        return self.names.get(state, f"q{state}")

    def successors(self, state: int):
        return sorted(t for (f, t) in self.transitions if f == state)

    def validate(self, operand_bits: int | None = None) -> None:
        if self.n_states < 1:
            raise ModelError("a model needs at least the initial state")
        for s in self.accept:
            if not 0 <= s < self.n_states:
                raise ModelError(f"accept state {s} is not a state")
        for (f, t), tr in self.transitions.items():
            if not (0 <= f < self.n_states and 0 <= t < self.n_states):
                raise ModelError(f"transition {f}->{t} references an unknown state")
            if tr.symbol != EPSILON and tr.symbol not in self.alphabet:
                raise ModelError(f"transition {f}->{t} uses symbol {tr.symbol!r} outside the alphabet")
            if not isinstance(tr.weight, int) or tr.weight < 1:
                raise ModelError(f"transition {f}->{t} has weight {tr.weight!r}; weights must be >= 1")
        for s in self.descriptors:
            if not 0 <= s < self.n_states:
                raise ModelError(f"descriptor for unknown state {s}")
        if operand_bits is None:
            return
        bound = 1 << operand_bits
        for (f, t), tr in self.transitions.items():
            if tr.weight >= bound:
                raise ModelError(f"weight of {f}->{t} exceeds 2^{operand_bits}")
        for s, preds in self.descriptors.items():
            for p in preds:
                for v in p.operands(operand_bits):
                    if not 0 <= v < bound:
                        raise ModelError(f"descriptor operand {v} of state {s} is outside [0, 2^{operand_bits})")
        codes = {}
        for word in list(self.alphabet) + [EPSILON, _BOTTOM_TOKEN]:
            c = k2c_encode(word, operand_bits)
            if c in codes and codes[c] != word:
                raise ModelError(f"keywords {codes[c]!r} and {word!r} share a code at this key size")
            codes[c] = word


# -- JSON ----------------------------------------------------------------------

def _scaled(value, fieldname, factors):
    return scale_vital(value, factors.get(fieldname, 1))


def predicate_from_json(obj: dict, factors: Mapping[str, int]) -> Predicate:
    kind = obj.get("kind")
    try:
        if kind == "range":
            f = obj["field"]
            return Range(f, _scaled(obj["lo"], f, factors), _scaled(obj["hi"], f, factors))
        if kind == "range_pair":
            f1, f2 = obj["fields"]
            (lo1, lo2), (hi1, hi2) = obj["lo"], obj["hi"]
            return RangePair(f1, f2, _scaled(lo1, f1, factors), _scaled(lo2, f2, factors),
                             _scaled(hi1, f1, factors), _scaled(hi2, f2, factors))
        if kind in ("gt", "lt"):
            f = obj["field"]
            cls = Gt if kind == "gt" else Lt
            return cls(f, _scaled(obj["threshold"], f, factors))
        if kind == "keyword":
            return KeywordEq(obj["field"], str(obj["keyword"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"bad {kind} predicate {obj!r}: {exc}") from None
    raise ModelError(f"unknown predicate kind {kind!r}")


def model_from_dict(doc: dict) -> WeightedNfaModel:
    try:
        factors = {k: int(v) for k, v in doc.get("scale_factors", {}).items()}
        ids = [s["id"] for s in doc["states"]]
        if sorted(ids) != list(range(len(ids))):
            raise ModelError("state ids must be 0..n-1")
        descriptors, names = {}, {}
        for s in doc["states"]:
            if s.get("descriptor"):
                descriptors[s["id"]] = tuple(predicate_from_json(p, factors) for p in s["descriptor"])
            if "name" in s:
                names[s["id"]] = s["name"]
        transitions = {}
        for t in doc["transitions"]:
            key = (t["from"], t["to"])
            if key in transitions:
                raise ModelError(f"more than one transition from {key[0]} to {key[1]}")
            transitions[key] = Transition(t["symbol"], t["weight"])
        return WeightedNfaModel(len(ids), frozenset(doc["accept"]), tuple(doc["alphabet"]),
                                transitions, descriptors, names, factors)
    except KeyError as exc:
        raise ModelError(f"model document is missing {exc}") from None


def load_model(path) -> WeightedNfaModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def patient_from_dict(doc: Mapping, factors: Mapping[str, int]) -> dict:
    """Scale numeric readings; keywords are kept as text."""
    out = {}
    for k, v in doc.items():
        out[k] = v if isinstance(v, str) else _scaled(v, k, factors)
    return out


def fixture_path(name: str) -> Path:
    return Path(__file__).with_name("fixtures") / name


# -- encryption ----------------------------------------------------------------------

@dataclass(frozen=True)
class EncryptedPredicate:
    kind: str
    fields: tuple
    operands: tuple  # ciphertexts under the hospital key


@dataclass(frozen=True)
class EncryptedModel:
    """Ciphertext labels and weights; adjacency and accept positions stay in the clear."""
    pp: pctd.PublicParams
    pk: int
    n_states: int
    labels: tuple
    accept: frozenset
    accept_labels: tuple
    epsilon: pctd.Ciphertext
    alphabet: tuple
    transitions: Mapping[tuple, tuple]  # (from, to) -> (symbol ct, weight ct)
    descriptors: Mapping[int, tuple]


def _enc(pp, pk, m, rng):
    return pctd.encrypt(pp, pk, m, rng)


def _symbol_code(symbol: str, operand_bits: int) -> int:
    return k2c_encode(symbol, operand_bits)


def encrypt_descriptor(pp, pk, preds, rng) -> tuple:
    ob = pp.operand_bits
    return tuple(EncryptedPredicate(p.kind, p.fields,
                                    tuple(_enc(pp, pk, v, rng) for v in p.operands(ob)))
                 for p in preds)


def encrypt_model(pp: pctd.PublicParams, pk: int, model: WeightedNfaModel, rng=None) -> EncryptedModel:
    model.validate(pp.operand_bits)
    ob = pp.operand_bits
    labels = tuple(_enc(pp, pk, s, rng) for s in model.states)
    accept = sorted(model.accept)
    trans = {key: (_enc(pp, pk, _symbol_code(tr.symbol, ob), rng), _enc(pp, pk, tr.weight, rng))
             for key, tr in sorted(model.transitions.items())}
    desc = {s: encrypt_descriptor(pp, pk, preds, rng) for s, preds in model.descriptors.items()}
    return EncryptedModel(pp, pk, model.n_states, labels, frozenset(accept),
                          tuple(labels[s] for s in accept),
                          _enc(pp, pk, _symbol_code(EPSILON, ob), rng),
                          tuple(_enc(pp, pk, _symbol_code(w, ob), rng) for w in model.alphabet),
                          trans, desc)


def encrypt_patient_state(pp, pk, state: Mapping, rng=None) -> dict:
    out = {}
    bound = 1 << pp.operand_bits
    for k, v in state.items():
        value = k2c_encode(v, pp.operand_bits) if isinstance(v, str) else int(v)
        if not 0 <= value < bound:
            raise ModelError(f"reading {k}={v} is outside [0, 2^{pp.operand_bits})")
        out[k] = _enc(pp, pk, value, rng)
    return out


def encrypt_query(pp, pk, phi, rng=None) -> list:
    """Encrypt the patient's recent illness states Φ = (φ1, ..., φm)."""
    return [encrypt_patient_state(pp, pk, s, rng) for s in phi]


def build_transition_arrays(enc: EncryptedModel):
    """(n1+1) x (n1+1) tables of symbol and weight ciphertexts, None where no transition."""
    n = enc.n_states
    value = [[None] * n for _ in range(n)]
    weight = [[None] * n for _ in range(n)]
    for (f, t), (sym, w) in enc.transitions.items():
        value[f][t] = sym
        weight[f][t] = w
    return value, weight


def decrypt_model(pp, sk: int, enc: EncryptedModel, vocabulary) -> WeightedNfaModel:
    """Invert ``encrypt_model`` given the keywords that may appear (codes are one-way)."""
    ob = pp.operand_bits
    lookup = {k2c_encode(w, ob): w for w in list(vocabulary) + [EPSILON]}

    def dec(ct):
        return pctd.weak_decrypt(pp, sk, ct)

    def word(ct):
        code = dec(ct)
        if code not in lookup:
            raise ModelError(f"code {code} is not in the supplied vocabulary")
        return lookup[code]

    for i, lab in enumerate(enc.labels):
        if dec(lab) != i:
            raise ModelError(f"state label {i} does not decrypt to its index")
    trans = {key: Transition(word(s), dec(w)) for key, (s, w) in enc.transitions.items()}
    alphabet = tuple(word(c) for c in enc.alphabet)
    descriptors = {}
    for s, preds in enc.descriptors.items():
        out = []
        for p in preds:
            vals = [dec(c) for c in p.operands]
            if p.kind == "range":
                out.append(Range(p.fields[0], *vals))
            elif p.kind == "range_pair":
                out.append(RangePair(p.fields[0], p.fields[1], *vals))
            elif p.kind == "gt":
                out.append(Gt(p.fields[0], vals[0]))
            elif p.kind == "lt":
                out.append(Lt(p.fields[0], vals[0]))
            else:
                out.append(KeywordEq(p.fields[0], word(p.operands[0])))
        descriptors[s] = tuple(out)
    return WeightedNfaModel(enc.n_states, enc.accept, alphabet, trans, descriptors)
