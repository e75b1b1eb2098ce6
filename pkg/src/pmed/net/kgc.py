"""Key generation centre: one-time key distribution and authorization records."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

from .. import codec, pctd


class RegistrationError(ValueError):
    pass


@dataclass(frozen=True)
class AuthorizationRecord:
    """Certificate binding a hospital/patient pair to an output key.

    Unsigned: certificate signatures are outside this package.
    """
    cn: int
    hospital: str
    patient: str
    service_period: str
    pk_sigma: int


@dataclass
class KeyBundle:
    pp: pctd.PublicParams
    cp_share: pctd.PartialKeyShare
    csp_share: pctd.PartialKeyShare
    users: dict[str, pctd.UserKeyPair]
    master: pctd.MasterKey = field(repr=False)
    rng: object = field(default=None, repr=False)
    records: list[AuthorizationRecord] = field(default_factory=list)
    _cn: itertools.count = field(default_factory=lambda: itertools.count(1), repr=False)

    def register(self, party: str) -> pctd.UserKeyPair:
        if party in self.users:
            raise RegistrationError(f"party {party!r} is already registered")
        kp = pctd.user_keypair(self.pp, self.rng)
        self.users[party] = kp
        return kp

    def issue_authorization(self, hospital: str, patient: str, service_period: str = ""):
        """Return ``(record, sk_sigma)``; sk_sigma goes to the patient only."""
        for who in (hospital, patient):
            if who not in self.users:
                raise RegistrationError(f"unknown party {who!r}")
        kp = pctd.user_keypair(self.pp, self.rng)
        rec = AuthorizationRecord(next(self._cn), hospital, patient, service_period, kp.pk)
        self.records.append(rec)
        return rec, kp.sk


def kgc_bootstrap(kappa: int, parties=(), rng=None) -> KeyBundle:
    """Generate system parameters, split λ for CP/CSP and issue user key pairs."""
    rng = rng or pctd.default_rng()
    pp, master, _ = pctd.keygen(kappa, rng)
    cp, csp = pctd.split_master(pp, master, rng)
    bundle = KeyBundle(pp, cp, csp, {}, master, rng)
    for party in parties:
        bundle.register(party)
    return bundle


# -- key files ------------------------------------------------------------------------
# Each file is a 4-byte ASCII tag followed by length-prefixed big-endian
# integers; keys.json indexes parties and authorization records.

def write_keyfile(path, tag: bytes, values) -> None:
    Path(path).write_bytes(tag + codec.pack_ints(values))


def read_keyfile(path, tag: bytes, count: int) -> list[int]:
    raw = Path(path).read_bytes()
    if raw[:4] != tag:
        raise codec.DecodeError(f"{path}: expected a {tag.decode()} key file")
    return codec.unpack_ints(raw[4:], count)


def save_bundle(bundle: KeyBundle, directory, sigma_keys: dict | None = None) -> Path:
    """Write every key to ``directory`` (the master key too: this is the KGC's copy)."""
    d = Path(directory)
    (d / "users").mkdir(parents=True, exist_ok=True)
    pp = bundle.pp
    write_keyfile(d / "params.key", b"PPUB", [pp.n, pp.g, pp.kappa])
    write_keyfile(d / "master.key", b"MSTR", [bundle.master.lam])
    write_keyfile(d / "cp.share", b"SHCP", [bundle.cp_share.share])
    write_keyfile(d / "csp.share", b"SHSP", [bundle.csp_share.share])
    for name, kp in bundle.users.items():
        write_keyfile(d / "users" / f"{name}.key", b"USER", [kp.sk, kp.pk])
    sigma_keys = sigma_keys or {}
    records = []
    for rec in bundle.records:
        records.append({"cn": rec.cn, "hospital": rec.hospital, "patient": rec.patient,
                        "service_period": rec.service_period})
        write_keyfile(d / f"auth-{rec.cn}.key", b"AUTH", [rec.cn, rec.pk_sigma])
        if rec.cn in sigma_keys:
            write_keyfile(d / "users" / f"{rec.patient}-sigma-{rec.cn}.key", b"SIGM",
                          [sigma_keys[rec.cn]])
    index = {"parties": sorted(bundle.users), "records": records}
    (d / "keys.json").write_text(json.dumps(index, indent=1), encoding="utf-8")
    return d


def load_bundle(directory, rng=None):
    """Inverse of ``save_bundle``; returns ``(bundle, {cn: sk_sigma})``."""
    d = Path(directory)
    n, g, kappa = read_keyfile(d / "params.key", b"PPUB", 3)
    pp = pctd.PublicParams(n, g, kappa)
    (lam,) = read_keyfile(d / "master.key", b"MSTR", 1)
    (s1,) = read_keyfile(d / "cp.share", b"SHCP", 1)
    (s2,) = read_keyfile(d / "csp.share", b"SHSP", 1)
    index = json.loads((d / "keys.json").read_text(encoding="utf-8"))
    users = {}
    for name in index["parties"]:
        sk, pk = read_keyfile(d / "users" / f"{name}.key", b"USER", 2)
        users[name] = pctd.UserKeyPair(sk, pk)
    bundle = KeyBundle(pp, pctd.PartialKeyShare(s1, pctd.Role.CP),
                       pctd.PartialKeyShare(s2, pctd.Role.CSP), users, pctd.MasterKey(lam),
                       rng or pctd.default_rng())
    sigma = {}
    for r in index["records"]:
        cn, pk_sigma = read_keyfile(d / f"auth-{r['cn']}.key", b"AUTH", 2)
        bundle.records.append(AuthorizationRecord(cn, r["hospital"], r["patient"],
                                                  r["service_period"], pk_sigma))
        sk_path = d / "users" / f"{r['patient']}-sigma-{cn}.key"
        if sk_path.exists():
            (sigma[cn],) = read_keyfile(sk_path, b"SIGM", 1)
    if bundle.records:
        bundle._cn = itertools.count(max(r.cn for r in bundle.records) + 1)
    return bundle, sigma


def load_public_params(directory) -> pctd.PublicParams:
    n, g, kappa = read_keyfile(Path(directory) / "params.key", b"PPUB", 3)
    return pctd.PublicParams(n, g, kappa)


def load_share(path, role: pctd.Role) -> pctd.PartialKeyShare:
    tag = b"SHCP" if role == pctd.Role.CP else b"SHSP"
    (s,) = read_keyfile(path, tag, 1)
    return pctd.PartialKeyShare(s, role)
