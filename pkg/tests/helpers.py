"""Random instance generators shared by the test modules."""
import random

from pmed import model as M

FIELDS = ("BT", "HR", "RR")


def random_descriptor(rng: random.Random, max_preds=2):
    preds = []
    for _ in range(rng.randint(0, max_preds)):
        kind = rng.choice(["range", "gt", "lt", "keyword", "range_pair"])
        if kind == "range":
            lo = rng.randint(0, 20)
            preds.append(M.Range(rng.choice(FIELDS), lo, lo + rng.randint(0, 20)))
        elif kind == "range_pair":
            preds.append(M.RangePair("BT", "HR", rng.randint(0, 10), rng.randint(0, 10),
                                     rng.randint(10, 30), rng.randint(10, 30)))
        elif kind == "gt":
            preds.append(M.Gt(rng.choice(FIELDS), rng.randint(0, 30)))
        elif kind == "lt":
            preds.append(M.Lt(rng.choice(FIELDS), rng.randint(0, 30)))
        else:
            preds.append(M.KeywordEq("S1", rng.choice(["fatigue", "thirst"])))
    return tuple(preds)


def random_state(rng: random.Random):
    state = {f: rng.randint(0, 30) for f in FIELDS}
    state["S1"] = rng.choice(["fatigue", "thirst"])
    return state


def random_model(rng: random.Random, n_states=None, density=0.3, max_weight=9, descriptors=False):
    n = n_states or rng.randint(2, 8)
    alphabet = ("a", "b", "c")
    transitions = {}
    for f in range(n):
        for t in range(n):
            if rng.random() < density or (t == f + 1 and rng.random() < 0.5):
                sym = rng.choice(alphabet + (M.EPSILON,))
                transitions[(f, t)] = M.Transition(sym, rng.randint(1, max_weight))
    accept = frozenset(rng.sample(range(1, n), rng.randint(1, min(2, n - 1))))
    desc = {s: random_descriptor(rng) for s in range(1, n)} if descriptors else {}
    return M.WeightedNfaModel(n, accept, alphabet, transitions, desc)


# The toy model's eleven procedures (MVisit=2, MState=8) in their listed order.
DIABETES_PATHS = [
    (0, 1, 3, 3, 4, 6),
    (0, 1, 3, 3, 4, 7),
    (0, 1, 3, 3, 6),
    (0, 1, 3, 4, 1, 3, 4, 6),
    (0, 1, 3, 4, 1, 3, 4, 7),
    (0, 1, 3, 4, 1, 3, 6),
    (0, 1, 3, 4, 6),
    (0, 1, 3, 4, 7),
    (0, 1, 3, 6),
    (0, 2, 5, 5, 7),
    (0, 2, 5, 7),
]
DIABETES_WEIGHTS = [10000, 10000, 10000, 10, 109, 5, 1, 100, 10000, 10000, 10000]


def diabetes():
    model = M.load_model(M.fixture_path("fig3_model.json"))
    import json
    doc = json.loads(M.fixture_path("fig3_patient.json").read_text())
    phi = [M.patient_from_dict(s, model.scale_factors) for s in doc["phi"]]
    return model, phi


def brute_paths(model, mvisit, mstate):
    """Recursive enumeration used as a second opinion on the oracle."""
    if 0 in model.accept:
        return {(0,)}
    out = set()

    def walk(path):
        if len(path) >= mstate:
            return
        for t in range(1, model.n_states):
            if (path[-1], t) in model.transitions and path.count(t) < mvisit:
                if t in model.accept:
                    out.add(path + (t,))
                else:
                    walk(path + (t,))
    walk((0,))
    return out
