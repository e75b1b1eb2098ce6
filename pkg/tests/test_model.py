import json
import random

import pytest

from pmed import model as M
from pmed import pctd

from helpers import random_model


@pytest.mark.parametrize("value,factor,want", [
    (36.5, 10, 365), (7.0, 1, 7), (5.55, 100, 555), (0.05, 10, 1), (118, 1, 118),
])
def test_scale_vital(value, factor, want):
    assert M.scale_vital(value, factor) == want


@pytest.mark.parametrize("value,factor", [(1.0, 3), (-1, 10)])
def test_scale_vital_rejects(value, factor):
    with pytest.raises(M.ModelError):
        M.scale_vital(value, factor)


def test_k2c_deterministic_and_distinct():
    assert M.k2c_encode("therapy A", 128) == M.k2c_encode("therapy A", 128)
    assert M.k2c_encode("therapy A", 128) != M.k2c_encode("therapy B", 128)


def test_k2c_reserved_codes_differ():
    codes = {M.k2c_encode(M.EPSILON, 22), M.bottom_code(22), M.k2c_encode("y1", 22)}
    assert len(codes) == 3


@pytest.mark.parametrize("operand_bits", [22, 128])
def test_k2c_corpus_fits_and_is_distinct(operand_bits):
    rng = random.Random(operand_bits)
    words = {"kw-%016x" % rng.getrandbits(64) for _ in range(10_000)}
    codes = [M.k2c_encode(w, operand_bits) for w in words]
    assert all(0 <= c < 1 << M.code_bits(operand_bits) for c in codes)
    if operand_bits == 128:
        assert len(set(codes)) == len(codes)


def test_k2c_rejects_empty_and_tiny_range():
    with pytest.raises(M.ModelError):
        M.k2c_encode("", 128)
    with pytest.raises(M.ModelError):
        M.k2c_encode("x", 10)


def test_diabetes_fixture_loads():
    m = M.load_model(M.fixture_path("fig3_model.json"))
    assert m.n_states == 8
    assert m.accept == {6, 7}
    assert len(m.transitions) == 12
    assert set(m.alphabet) == {"y1", "y2", "y3", "y4", "y5", "y6"}
    assert m.transitions[(4, 7)] == M.Transition(M.EPSILON, 100)
    assert m.successors(3) == [3, 4, 6]


@pytest.mark.parametrize("mutate,msg", [
    (lambda d: d["transitions"].append(dict(d["transitions"][0])), "more than one"),
    (lambda d: d["transitions"][0].update(weight=0), "weights must be"),
    (lambda d: d["transitions"][0].update(symbol="zz"), "outside the alphabet"),
    (lambda d: d.update(accept=[99]), "not a state"),
    (lambda d: d.pop("alphabet"), "missing"),
    (lambda d: d["states"][1]["descriptor"].append({"kind": "between"}), "unknown predicate"),
])
def test_invalid_models_rejected(mutate, msg):
    doc = json.loads(M.fixture_path("fig3_model.json").read_text())
    mutate(doc)
    with pytest.raises(M.ModelError, match=msg):
        M.model_from_dict(doc)


def test_operand_bound_checked():
    m = M.WeightedNfaModel(2, {1}, ("a",), {(0, 1): M.Transition("a", 1 << 30)})
    m.validate()
    with pytest.raises(M.ModelError):
        m.validate(22)


def _same(a, b):
    return (a.n_states, a.accept, a.alphabet, dict(a.transitions), dict(a.descriptors)) == \
           (b.n_states, b.accept, b.alphabet, dict(b.transitions), dict(b.descriptors))


def test_diabetes_round_trip(keys):
    m = M.load_model(M.fixture_path("fig3_model.json"))
    enc = M.encrypt_model(keys.pp, keys.A, m, random.Random(0))
    sk = keys.bundle.users["hospital"].sk
    vocab = list(m.alphabet) + ["fatigue", "thirst"]
    assert _same(M.decrypt_model(keys.pp, sk, enc, vocab), m)


def test_structure_in_clear_labels_hidden(keys):
    m = M.load_model(M.fixture_path("fig3_model.json"))
    enc = M.encrypt_model(keys.pp, keys.A, m, random.Random(0))
    assert set(enc.transitions) == set(m.transitions)
    assert enc.accept == m.accept
    assert all(isinstance(c, pctd.Ciphertext) for c in enc.labels)


def test_empty_model_table(keys):
    m = M.WeightedNfaModel(1, {0}, (), {})
    enc = M.encrypt_model(keys.pp, keys.A, m, random.Random(0))
    value, weight = M.build_transition_arrays(enc)
    assert value == [[None]] and weight == [[None]]


def test_random_models_round_trip(keys):
    rng = random.Random(10)
    sk = keys.bundle.users["hospital"].sk
    for _ in range(10):
        m = random_model(rng, n_states=10, descriptors=True)
        enc = M.encrypt_model(keys.pp, keys.A, m, rng)
        assert _same(M.decrypt_model(keys.pp, sk, enc, list(m.alphabet) + ["fatigue", "thirst"]), m)


def test_patient_scaling():
    state = M.patient_from_dict({"BT": 36.5, "HR": 88, "S1": "fatigue"}, {"BT": 10})
    assert state == {"BT": 365, "HR": 88, "S1": "fatigue"}


def test_patient_reading_out_of_range(keys):
    with pytest.raises(M.ModelError):
        M.encrypt_patient_state(keys.pp, keys.B, {"BT": 1 << 40})
