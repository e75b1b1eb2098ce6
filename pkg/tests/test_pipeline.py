import random

import pytest

from pmed import model as M
from pmed import oracle as O
from pmed import pctd
from pmed import pipeline as PL

from helpers import DIABETES_PATHS, DIABETES_WEIGHTS, diabetes, random_descriptor, random_model, random_state

MSTATE = 6


@pytest.fixture(scope="module")
def diabetes_run(keys):
    model, phi = diabetes()
    rng = random.Random(3)
    em = M.encrypt_model(keys.pp, keys.A, model, rng)
    value, weight = M.build_transition_arrays(em)
    tps = PL.tpt(value, weight, em.accept, em.labels, 2, 8)
    enc_phi = M.encrypt_query(keys.pp, keys.B, phi, rng)
    return model, phi, em, tps, enc_phi


def make_etp(keys, rng, weight, label=None):
    """Expanded procedure with recognisable contents.

    Every procedure starts at state 0 (SMin carries the initial state over
    without selecting it); then states label*10+i and symbols label*100+i.
    """
    label = rng.randrange(1, 1000) if label is None else label
    states = [keys.enc(keys.A, 0 if i == 0 else label * 10 + i, rng) for i in range(MSTATE)]
    symbols = [keys.enc(keys.A, label * 100 + i, rng) for i in range(MSTATE - 1)]
    return PL.ExpandedProcedure(states, symbols, keys.enc(keys.pk_sigma, weight, rng))


def content(keys, etp):
    return ([keys.dec(c) for c in etp.states], [keys.dec(c) for c in etp.symbols], keys.dec(etp.weight))


def plain_content(label, weight):
    return ([0] + [label * 10 + i for i in range(1, MSTATE)], [label * 100 + i for i in range(MSTATE - 1)], weight)


# -- SSM ---------------------------------------------------------------------

def test_ssm_diabetes_state(keys, ctx, diabetes_run):
    model, phi, em, _, enc_phi = diabetes_run
    assert O.plain_ssm(phi[0], model.descriptors[1]) == 1
    assert keys.dec(PL.ssm(ctx, enc_phi[0], em.descriptors[1])) == 1


def test_ssm_temperature_out_of_range(keys, ctx, diabetes_run):
    model, phi, em, _, _ = diabetes_run
    state = dict(phi[0], BT=400)
    assert O.plain_ssm(state, model.descriptors[1]) == 0
    enc = M.encrypt_patient_state(keys.pp, keys.B, state, random.Random(0))
    assert keys.dec(PL.ssm(ctx, enc, em.descriptors[1])) == 0


def test_ssm_empty_descriptor(keys, ctx):
    assert keys.dec(PL.ssm(ctx, {}, ())) == 1


def test_ssm_matches_oracle(keys, ctx):
    rng = random.Random(8)
    for _ in range(40):
        desc, state = random_descriptor(rng, 3), random_state(rng)
        enc_desc = M.encrypt_descriptor(keys.pp, keys.A, desc, rng)
        enc_state = M.encrypt_patient_state(keys.pp, keys.B, state, rng)
        assert keys.dec(PL.ssm(ctx, enc_state, enc_desc)) == O.plain_ssm(state, desc)


def test_ssm_missing_field(keys, ctx):
    desc = M.encrypt_descriptor(keys.pp, keys.A, [M.Gt("RR", 1)], random.Random(0))
    with pytest.raises(M.ModelError):
        PL.ssm(ctx, {}, desc)


# -- TPT ---------------------------------------------------------------------

def test_tpt_diabetes_order(diabetes_run):
    _, _, _, tps, _ = diabetes_run
    assert [tp.index_path for tp in tps] == DIABETES_PATHS


def test_tpt_procedure_shape(keys, diabetes_run):
    model, _, _, tps, _ = diabetes_run
    sk = keys.bundle.users["hospital"].sk
    for tp in tps:
        assert len(tp.symbols) == len(tp.tweights) == len(tp.states) - 1
        assert [pctd.weak_decrypt(keys.pp, sk, c) for c in tp.states] == list(tp.index_path)
        assert [pctd.weak_decrypt(keys.pp, sk, c) for c in tp.tweights] == O.path_weights(model, tp.index_path)


def test_tpt_initial_state_accepting(keys):
    m = M.WeightedNfaModel(1, {0}, (), {})
    em = M.encrypt_model(keys.pp, keys.A, m, random.Random(0))
    v, w = M.build_transition_arrays(em)
    assert [tp.index_path for tp in PL.tpt(v, w, em.accept, em.labels, 2, 8)] == [(0,)]


def test_tpt_matches_enumeration_with_loops(keys):
    rng = random.Random(12)
    for _ in range(30):
        m = random_model(rng, density=0.4)
        em = M.encrypt_model(keys.pp, keys.A, m, rng)
        v, w = M.build_transition_arrays(em)
        mv, ms = rng.randint(1, 2), rng.randint(2, 8)
        got = [tp.index_path for tp in PL.tpt(v, w, em.accept, em.labels, mv, ms)]
        assert len(got) == len(set(got))
        assert set(got) == O.plain_paths(m, mv, ms)


# -- TPW ---------------------------------------------------------------------

def test_tpw_diabetes(keys, ctx, diabetes_run):
    _, _, em, tps, enc_phi = diabetes_run
    wtps = PL.tpw(ctx, 10000, enc_phi, tps, em.descriptors)
    assert [keys.dec(w.weight) for w in wtps] == DIABETES_WEIGHTS


def test_tpw_memo_and_threads_agree(keys, diabetes_run):
    _, _, em, tps, enc_phi = diabetes_run
    sub = tps[3:7]
    plain = [keys.dec(w.weight) for w in PL.tpw(keys.context(1), 10000, enc_phi, sub, em.descriptors,
                                                 memoize=False)]
    threaded = [keys.dec(w.weight) for w in PL.tpw(keys.context(2), 10000, enc_phi, sub, em.descriptors,
                                                   threads=4)]
    assert plain == threaded == DIABETES_WEIGHTS[3:7]


def test_tpw_short_path_gets_mweight(keys, ctx, diabetes_run):
    _, _, em, tps, enc_phi = diabetes_run
    short = [tp for tp in tps if len(tp.index_path) - 1 < 5][:1]
    out = PL.tpw(ctx, 777, enc_phi * 2, short, em.descriptors)
    assert keys.dec(out[0].weight) == 777


def test_tpw_first_match_wins(keys, ctx, diabetes_run):
    # procedure 4 visits q1,q3,q4 twice; only the first occurrence counts
    _, _, em, tps, enc_phi = diabetes_run
    out = PL.tpw(ctx, 10000, enc_phi, [tps[3]], em.descriptors)
    assert keys.dec(out[0].weight) == 10


def test_tpw_random_models(keys, ctx):
    rng = random.Random(21)
    mweight = 1000
    checked = 0
    while checked < 12:
        m = random_model(rng, n_states=rng.randint(3, 6), density=0.35, descriptors=True)
        paths = sorted(O.plain_paths(m, 2, 6))
        if not paths:
            continue
        em = M.encrypt_model(keys.pp, keys.A, m, rng)
        v, w = M.build_transition_arrays(em)
        tps = PL.tpt(v, w, em.accept, em.labels, 2, 6)
        phi = [random_state(rng) for _ in range(rng.randint(1, 2))]
        enc_phi = M.encrypt_query(keys.pp, keys.B, phi, rng)
        got = [keys.dec(x.weight) for x in PL.tpw(ctx, mweight, enc_phi, tps, em.descriptors)]
        want = O.plain_tpw(mweight, phi, [tp.index_path for tp in tps], m)
        assert got == want
        for tp, wt in zip(tps, got):
            suffixes = {sum(O.path_weights(m, tp.index_path)[i:]) for i in range(len(tp.index_path))}
            assert wt == mweight or (wt in suffixes and wt < mweight)
        checked += 1


def test_tpw_needs_query(keys, ctx):
    with pytest.raises(PL.PipelineError):
        PL.tpw(ctx, 10, [], [], {})


# -- expansion -------------------------------------------------------------------

def test_expand_pads_with_bottom(keys, ctx, diabetes_run):
    _, _, em, tps, enc_phi = diabetes_run
    wtps = [PL.WeightedProcedure(tp.states, tp.symbols, keys.enc(keys.pk_sigma, 5), tp.index_path)
            for tp in (tps[10], tps[3])]
    etps = PL.expand(wtps, 8, keys.pp, keys.A, random.Random(0))
    sk = keys.bundle.users["hospital"].sk
    bot = M.bottom_code(keys.pp.operand_bits)
    short, full = etps
    assert len(short.states) == 8 and len(short.symbols) == 7
    assert [pctd.weak_decrypt(keys.pp, sk, c) for c in short.states[4:]] == [bot] * 4
    assert full.states == list(tps[3].states)
    assert keys.dec(short.weight) == 5


def test_expand_rejects_long_procedure(keys, diabetes_run):
    _, _, _, tps, _ = diabetes_run
    wtp = PL.WeightedProcedure(tps[3].states, tps[3].symbols, None)
    with pytest.raises(PL.PipelineError):
        PL.expand([wtp], 7, keys.pp, keys.A)


# -- SMin ------------------------------------------------------------------------

@pytest.mark.parametrize("coin", [0, 1])
def test_smin_picks_smaller(keys, ctx, coin):
    rng = random.Random(coin)
    e1, e2 = make_etp(keys, rng, 3, 1), make_etp(keys, rng, 9, 2)
    assert content(keys, PL.smin(ctx, e1, e2, coin=coin)) == plain_content(1, 3)
    assert content(keys, PL.smin(ctx, e2, e1, coin=coin)) == plain_content(1, 3)


@pytest.mark.parametrize("coin", [0, 1])
def test_smin_tie_takes_second(keys, ctx, coin):
    rng = random.Random(5)
    e1, e2 = make_etp(keys, rng, 5, 1), make_etp(keys, rng, 5, 2)
    assert content(keys, PL.smin(ctx, e1, e2, coin=coin)) == plain_content(2, 5)


def test_smin_random_pairs_both_coins(keys, ctx):
    rng = random.Random(17)
    for _ in range(25):
        w1, w2 = rng.randrange(50), rng.randrange(50)
        e = (make_etp(keys, rng, w1, 1), make_etp(keys, rng, w2, 2))
        want = plain_content((1, 2)[O.plain_smin(w1, w2)], min(w1, w2))
        for coin in (0, 1):
            assert content(keys, PL.smin(ctx, *e, coin=coin)) == want


def test_smin_output_under_sigma(keys, ctx):
    rng = random.Random(1)
    out = PL.smin(ctx, make_etp(keys, rng, 1), make_etp(keys, rng, 2))
    assert {c.pk for c in out.states + out.symbols + [out.weight]} == {keys.pk_sigma}


def test_smin_sends_masked_difference(keys):
    ctx = keys.context(seed=4)
    rng = random.Random(2)
    w1, w2 = 11, 4
    PL.smin(ctx, make_etp(keys, rng, w1, 1), make_etp(keys, rng, w2, 2))
    (_, r0p, r0, s), = [r for r in ctx.debug_records if r[0] == "smin"]
    (_, seen), = [r for r in ctx.channel.responder.debug_log if r[0] == "smin"]
    w = {1: 2 * w1 + 1, 2: 2 * w2}
    lo, hi = (2, 1) if s == 0 else (1, 2)
    assert seen == (r0p * (w[lo] - w[hi]) + r0) % keys.pp.n
    assert seen not in (w1, w2)


def test_smin_length_mismatch(keys, ctx):
    rng = random.Random(0)
    a = make_etp(keys, rng, 1)
    b = PL.ExpandedProcedure(a.states[:-1], a.symbols, a.weight)
    with pytest.raises(PL.PipelineError):
        PL.smin(ctx, a, b)


# -- SMin_n and BPS-k ----------------------------------------------------------------

def test_smin_n_single(keys, ctx):
    e = make_etp(keys, random.Random(0), 7, 3)
    assert content(keys, PL.smin_n(ctx, [e])) == plain_content(3, 7)


def test_smin_n_worked_example(keys, ctx):
    rng = random.Random(0)
    etps = [make_etp(keys, rng, w, i + 1) for i, w in enumerate((15, 8, 17, 5))]
    assert content(keys, PL.smin_n(ctx, etps)) == plain_content(4, 5)


def test_smin_n_random(keys, ctx):
    rng = random.Random(33)
    for _ in range(6):
        n = rng.randint(2, 16)
        weights = [rng.randrange(20) for _ in range(n)]
        etps = [make_etp(keys, rng, w, i + 1) for i, w in enumerate(weights)]
        i = O.plain_tournament(weights)
        assert content(keys, PL.smin_n(ctx, etps)) == plain_content(i + 1, weights[i])


def test_bps_worked_example_rounds(keys, ctx):
    rng = random.Random(0)
    etps = [make_etp(keys, rng, w, i + 1) for i, w in enumerate((15, 8, 17, 5))]
    rounds = []
    best = PL.bps_k(ctx, etps, 2, 100,
                    observer=lambda r, ws: rounds.append(tuple(keys.dec(w) for w in ws)))
    assert [content(keys, e) for e in best] == [plain_content(4, 5), plain_content(2, 8)]
    assert rounds == [(15, 8, 17, 500), (15, 800, 17, 500)]


def test_bps_permutation_independent(keys):
    rng = random.Random(9)
    weights = [9, 2, 14, 6, 3]
    etps = [make_etp(keys, rng, w, i + 1) for i, w in enumerate(weights)]
    results = []
    for perm in (lambda r, n: list(range(n)), lambda r, n: [(i * 2 + r) % n for i in range(n)]):
        best = PL.bps_k(keys.context(5), etps, 3, 100, permutation=perm)
        results.append([content(keys, e) for e in best])
    assert results[0] == results[1]
    assert [c[2] for c in results[0]] == [2, 3, 6]


def test_bps_random_distinct_weights(keys, ctx):
    rng = random.Random(41)
    for _ in range(3):
        n = rng.randint(2, 10)
        k = rng.randint(1, n)
        weights = rng.sample(range(1, 60), n)
        etps = [make_etp(keys, rng, w, i + 1) for i, w in enumerate(weights)]
        got = [content(keys, e) for e in PL.bps_k(ctx, etps, k, 100)]
        assert got == [plain_content(i + 1, weights[i]) for i in O.plain_topk(weights, k)]


def test_bps_zero_test_sees_only_masks(keys):
    ctx = keys.context(seed=6)
    rng = random.Random(1)
    weights = [12, 4, 30]
    PL.bps_k(ctx, [make_etp(keys, rng, w) for w in weights], 1, 100,
             permutation=lambda r, n: list(range(n)))
    (_, seen), = [r for r in ctx.channel.responder.debug_log if r[0] == "bps"]
    assert seen[1] == 0
    assert all(v not in (0, *weights) for i, v in enumerate(seen) if i != 1)


@pytest.mark.parametrize("k", [0, 4])
def test_bps_k_range(keys, ctx, k):
    rng = random.Random(0)
    with pytest.raises(PL.PipelineError):
        PL.bps_k(ctx, [make_etp(keys, rng, 1) for _ in range(3)], k, 100)


def test_bps_bad_permutation(keys, ctx):
    rng = random.Random(0)
    with pytest.raises(PL.PipelineError):
        PL.bps_k(ctx, [make_etp(keys, rng, 1) for _ in range(3)], 1, 100,
                 permutation=lambda r, n: [0, 0, 1])


# -- parameters and result recovery -------------------------------------------------------

@pytest.mark.parametrize("params,msg", [
    (PL.PipelineParams(mvisit=0), "positive"),
    (PL.PipelineParams(mweight=100), "exceed every path"),
    (PL.PipelineParams(mweight=100_000), "overflows"),
])
def test_params_validation(params, msg):
    model, _ = diabetes()
    with pytest.raises(PL.PipelineError, match=msg):
        params.validate(model, 22)


def test_params_defaults_valid():
    model, _ = diabetes()
    PL.PipelineParams().validate(model, 22)


def test_recover_result(keys, diabetes_run):
    model, _, em, tps, _ = diabetes_run
    tp = tps[6]
    sk = keys.bundle.users["hospital"].sk
    # re-encrypt the procedure under pk_sigma to stand in for a selected result
    relabel = lambda c: keys.enc(keys.pk_sigma, pctd.weak_decrypt(keys.pp, sk, c))  # noqa: E731
    wtp = PL.WeightedProcedure([relabel(c) for c in tp.states], [relabel(c) for c in tp.symbols],
                               keys.enc(keys.pk_sigma, 1))
    etp, = PL.expand([wtp], 8, keys.pp, keys.pk_sigma)
    r = PL.recover_result(keys.pp, keys.sk_sigma, etp, model.alphabet, model.name)
    assert r["path"] == ["q0", "q1", "q3", "q4", "q6"]
    assert r["therapies"] == [M.EPSILON, "y1", "y3", "y6"]
    assert r["weight"] == 1


def test_tpt_single_state_budget(keys):
    m = M.WeightedNfaModel(2, {1}, ("a",), {(0, 1): M.Transition("a", 1)})
    em = M.encrypt_model(keys.pp, keys.A, m, random.Random(0))
    v, w = M.build_transition_arrays(em)
    assert PL.tpt(v, w, em.accept, em.labels, 2, 1) == []
    assert [tp.index_path for tp in PL.tpt(v, w, em.accept, em.labels, 2, 2)] == [(0, 1)]
