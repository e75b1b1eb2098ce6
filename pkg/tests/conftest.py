import random
from dataclasses import dataclass

import pytest

from pmed import pctd
from pmed.net import kgc_bootstrap, local_pair

TOY_KAPPA = 32


@dataclass
class Keys:
    bundle: object
    sk_sigma: int
    pk_sigma: int

    @property
    def pp(self):
        return self.bundle.pp

    @property
    def A(self):
        return self.bundle.users["hospital"].pk

    @property
    def B(self):
        return self.bundle.users["patient"].pk

    @property
    def master(self):
        return self.bundle.master

    def enc(self, pk, m, rng=None):
        return pctd.encrypt(self.pp, pk, m % self.pp.n, rng)

    def dec(self, ct):
        return pctd.weak_decrypt(self.pp, self.sk_sigma, ct)

    def context(self, seed=0, debug=True, record=False):
        return local_pair(self.pp, self.bundle.cp_share, self.bundle.csp_share, self.pk_sigma,
                          rng=random.Random(seed), csp_rng=random.Random(seed + 1),
                          record=record, debug=debug,
                          debug_master=self.master if debug else None)


def make_keys(kappa, seed):
    bundle = kgc_bootstrap(kappa, ["hospital", "patient"], random.Random(seed))
    rec, sk = bundle.issue_authorization("hospital", "patient", "2026")
    return Keys(bundle, sk, rec.pk_sigma)


@pytest.fixture(scope="session")
def keys():
    return make_keys(TOY_KAPPA, 1234)


@pytest.fixture
def ctx(keys):
    return keys.context(seed=99)


@pytest.fixture
def rng():
    return random.Random(2024)
