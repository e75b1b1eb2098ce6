"""Command-line entry points: key generation, CSP server, the toy demo, gene matching, benchmarks."""
from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import model as M
from . import pctd
from . import pipeline as PL
from .net import SessionAbort, connect_cp, kgc_bootstrap, local_pair
from .net.kgc import load_bundle, load_public_params, load_share, save_bundle
from .net.server import CspServer
from .pgene import MatchMode, accepted, build_e, encrypt_sequence, parse_sequence, pgene_match

EXIT_OK, EXIT_CONFIG, EXIT_ABORT, EXIT_FIXTURE = 0, 2, 3, 4

log = logging.getLogger("pmed")


class ConfigError(ValueError):
    pass


class FixtureError(ValueError):
    pass


def _addr(text):
    if text is None:
        return None
    host, _, port = text.rpartition(":")
    try:
        return (host or "127.0.0.1", int(port))
    except ValueError:
        raise ConfigError(f"bad address {text!r}, expected host:port") from None


@dataclass
class RunConfig:
    key_size: int = 32
    seed: int | None = None
    transport: str = "inproc"
    cp_addr: tuple | None = None
    csp_addr: tuple | None = None
    params: PL.PipelineParams = field(default_factory=PL.PipelineParams)
    mode: MatchMode = MatchMode.SNAPSHOT
    threads: int = 1
    keys: Path | None = None

    def validate(self):
        if self.transport not in ("inproc", "tcp"):
            raise ConfigError(f"unknown transport {self.transport!r}")
        if self.keys is None and self.key_size < 16:
            raise ConfigError("--key-size must be at least 16")
        if self.threads < 1:
            raise ConfigError("--threads must be positive")
        try:
            self.params.validate()
        except PL.PipelineError as exc:
            raise ConfigError(str(exc)) from None

    def rng(self, salt: int = 0) -> random.Random:
        if self.seed is None:
            return pctd.default_rng()
        return random.Random(self.seed * 1_000_003 + salt)


class _Session:
    """Key material plus a CP context over the configured transport."""

    def __init__(self, cfg: RunConfig, parties=("hospital", "patient")):
        self.cfg = cfg
        self._server = None
        self._channel = None
        rng = cfg.rng(0)
        if cfg.keys is not None:
            try:
                bundle, sigma = load_bundle(cfg.keys, rng)
            except (OSError, ValueError) as exc:
                raise FixtureError(f"cannot load keys from {cfg.keys}: {exc}") from None
            missing = [p for p in parties if p not in bundle.users]
            if missing:
                raise ConfigError(f"key directory lacks parties: {', '.join(missing)}")
            rec = next((r for r in bundle.records if r.hospital == parties[0]
                        and r.patient == parties[1] and r.cn in sigma), None)
            if rec is None:
                rec, sk = bundle.issue_authorization(*parties)
            else:
                sk = sigma[rec.cn]
        else:
            bundle = kgc_bootstrap(cfg.key_size, parties, rng)
            rec, sk = bundle.issue_authorization(*parties)
        self.bundle, self.record, self.sk_sigma = bundle, rec, sk
        self.pp = bundle.pp
        self.rng = rng
        if cfg.transport == "inproc":
            self.ctx = local_pair(self.pp, bundle.cp_share, bundle.csp_share, rec.pk_sigma,
                                  rng=cfg.rng(1), csp_rng=cfg.rng(2))
            return
        address = cfg.csp_addr
        if address is None:
            self._server = CspServer(("127.0.0.1", 0), self.pp, bundle.csp_share,
                                     rng_factory=lambda: cfg.rng(2), workers=cfg.threads)
            self._server.start()
            address = self._server.address
        try:
            self._channel, make = connect_cp(address, self.pp, bundle.cp_share, rec.pk_sigma,
                                             rng=cfg.rng(1), source_address=cfg.cp_addr)
        except OSError as exc:
            self.close()
            raise SessionAbort(f"cannot reach CSP at {address[0]}:{address[1]}: {exc}") from None
        self.ctx = make()

    def user_pk(self, name):
        return self.bundle.users[name].pk

    def close(self):
        if self._channel is not None:
            self._channel.close()
        if self._server is not None:
            self._server.stop()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# -- commands -------------------------------------------------------------------------

def _load_fig3(model_path, patient_path):
    try:
        model = M.load_model(model_path)
        doc = json.loads(Path(patient_path).read_text(encoding="utf-8"))
        phi = [M.patient_from_dict(s, model.scale_factors) for s in doc["phi"]]
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise FixtureError(f"bad fixture: {exc}") from None
    return model, phi


def run_fig3(cfg: RunConfig, model_path=None, patient_path=None) -> list[dict]:
    """Encrypt the toy model and query, run TPT, TPW, expansion and BPS-k, decrypt as the patient."""
    model, phi = _load_fig3(model_path or M.fixture_path("fig3_model.json"),
                            patient_path or M.fixture_path("fig3_patient.json"))
    p = cfg.params
    with _Session(cfg) as s:
        ob = s.pp.operand_bits
        try:
            model.validate(ob)
            p.validate(model, ob)
        except (M.ModelError, PL.PipelineError) as exc:
            raise ConfigError(str(exc)) from None
        em = M.encrypt_model(s.pp, s.user_pk("hospital"), model, s.rng)
        value, weight = M.build_transition_arrays(em)
        tps = PL.tpt(value, weight, em.accept, em.labels, p.mvisit, p.mstate)
        if p.k > len(tps):
            raise ConfigError(f"k={p.k} exceeds the {len(tps)} available procedures")
        enc_phi = M.encrypt_query(s.pp, s.user_pk("patient"), phi, s.rng)
        wtps = PL.tpw(s.ctx, p.mweight, enc_phi, tps, em.descriptors, threads=cfg.threads)
        etps = PL.expand(wtps, p.mstate, s.pp, s.user_pk("hospital"), s.rng)
        best = PL.bps_k(s.ctx, etps, p.k, p.mweight)
        numbering = {tp.index_path: i + 1 for i, tp in enumerate(tps)}
        out = []
        for rank, etp in enumerate(best, 1):
            r = PL.recover_result(s.pp, s.sk_sigma, etp, model.alphabet, model.name)
            out.append({"rank": rank, "weight": r["weight"], "path": r["path"],
                        "therapies": r["therapies"],
                        "procedure": numbering.get(tuple(r["state_ids"]))})
        return out


def cmd_demo_fig3(args, cfg: RunConfig) -> int:
    results = run_fig3(cfg, args.model, args.patient)
    if args.json:
        print(json.dumps([{k: r[k] for k in ("rank", "weight", "path", "therapies")}
                          for r in results]))
    else:
        for r in results:
            print(f"#{r['rank']}  TP{r['procedure']}  weight {r['weight']}  "
                  f"{' -> '.join(r['path'])}  therapies: {', '.join(r['therapies'])}")
    return EXIT_OK


def _text_or_file(value: str) -> str:
    path = Path(value)
    try:
        if path.is_file():
            return parse_sequence(path.read_text(encoding="utf-8"))
        return parse_sequence(value)
    except (OSError, ValueError) as exc:
        raise FixtureError(str(exc)) from None


def run_pgene(cfg: RunConfig, pattern: str, sequence: str, mu: int) -> dict:
    if mu < 0:
        raise ConfigError("--mu must be non-negative")
    if not pattern or not sequence:
        raise FixtureError("pattern and sequence must be non-empty")
    with _Session(cfg, ("hospital", "patient")) as s:
        E = build_e(s.pp, s.user_pk("hospital"), encrypt_sequence(s.pp, s.user_pk("hospital"), pattern, s.rng),
                    mu, s.rng)
        phi = encrypt_sequence(s.pp, s.user_pk("patient"), sequence, s.rng)
        row = accepted(s.pp, s.sk_sigma, pgene_match(s.ctx, E, phi, cfg.mode))
        return {"pattern": pattern, "sequence": sequence, "mu": mu, "mode": cfg.mode.value,
                "accepted": row is not None, "errors": row,
                "sut_calls": s.ctx.counters["sut"]}


def cmd_pgene(args, cfg: RunConfig) -> int:
    r = run_pgene(cfg, _text_or_file(args.pattern), _text_or_file(args.sequence), args.mu)
    if args.json:
        print(json.dumps(r))
    elif r["accepted"]:
        print(f"accepted, {r['errors']} errors")
    else:
        print("rejected")
    return EXIT_OK


def cmd_keygen(args, cfg: RunConfig) -> int:
    bundle = kgc_bootstrap(cfg.key_size, args.party, cfg.rng(0))
    sigma = {}
    for pair in args.authorize:
        hospital, _, patient = pair.partition(":")
        try:
            rec, sk = bundle.issue_authorization(hospital, patient)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        sigma[rec.cn] = sk
    out = save_bundle(bundle, args.out, sigma)
    print(f"wrote {bundle.pp.bits}-bit keys for {len(bundle.users)} parties to {out}")
    return EXIT_OK


def cmd_serve_csp(args, cfg: RunConfig) -> int:
    if cfg.keys is None:
        raise ConfigError("serve-csp needs --keys")
    try:
        pp = load_public_params(cfg.keys)
        share = load_share(cfg.keys / "csp.share", pctd.Role.CSP)
    except (OSError, ValueError) as exc:
        raise FixtureError(f"cannot load CSP keys: {exc}") from None
    address = cfg.csp_addr or ("127.0.0.1", 7700)
    server = CspServer(address, pp, share, workers=cfg.threads)
    print(f"CSP listening on {server.address[0]}:{server.address[1]}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


def cmd_bench(args, cfg: RunConfig) -> int:
    from . import bench

    bits = tuple(args.bits) if args.bits else (2 * cfg.key_size,)
    result = bench.run(bits, tpw_bits=args.tpw_bits, trials=args.trials, seed=cfg.seed or 1)
    if args.json:
        print(json.dumps(result, indent=1))
    else:
        print(f"{'operation':<10}{'bits':>6}  {'param':<16}{'mean ms':>10}{'min ms':>10}")
        for r in result["rows"]:
            print(f"{r['operation']:<10}{r['bits']:>6}  {r['param']:<16}{r['mean_ms']:>10.2f}{r['min_ms']:>10.2f}")
        for v in result["violations"]:
            print(f"non-monotone: {v}")
    return EXIT_OK


# -- parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--key-size", type=int, default=32, help="prime size in bits (L(N) is twice this)")
    common.add_argument("--seed", type=int, default=None, help="fix all randomness")
    common.add_argument("--transport", choices=("inproc", "tcp"), default="inproc")
    common.add_argument("--cp-addr", default=None, help="local host:port the CP binds when connecting")
    common.add_argument("--csp-addr", default=None, help="CSP host:port (tcp transport)")
    common.add_argument("--keys", type=Path, default=None, help="key directory written by keygen")
    common.add_argument("--threads", type=int, default=1, help="cap on concurrent sessions")
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="pmed", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", parents=[common], help="generate and write key material")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--party", action="append", default=None, help="party name (repeatable)")
    p.add_argument("--authorize", action="append", default=[], metavar="HOSPITAL:PATIENT")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("serve-csp", parents=[common], help="run the CSP server")
    p.set_defaults(func=cmd_serve_csp)

    p = sub.add_parser("demo-fig3", parents=[common], help="toy diabetes model end to end")
    p.add_argument("--mvisit", type=int, default=2)
    p.add_argument("--mstate", type=int, default=8)
    p.add_argument("--mweight", type=int, default=10000)
    p.add_argument("-k", type=int, default=3)
    p.add_argument("--model", type=Path, default=None)
    p.add_argument("--patient", type=Path, default=None)
    p.set_defaults(func=cmd_demo_fig3)

    p = sub.add_parser("pgene", parents=[common], help="error-tolerant gene matching")
    p.add_argument("pattern", help="pattern file or literal bases")
    p.add_argument("sequence", help="sequence file or literal bases")
    p.add_argument("--mu", type=int, default=1, help="edits tolerated")
    p.add_argument("--mode", choices=[m.value for m in MatchMode], default=MatchMode.SNAPSHOT.value)
    p.set_defaults(func=cmd_pgene)

    p = sub.add_parser("bench", parents=[common], help="timing table")
    p.add_argument("--bits", type=int, nargs="*", default=None, help="L(N) values (default 2*key-size)")
    p.add_argument("--tpw-bits", type=int, default=256)
    p.add_argument("--trials", type=int, default=3)
    p.set_defaults(func=cmd_bench)
    return ap


def config_from_args(args) -> RunConfig:
    params = PL.PipelineParams(getattr(args, "mvisit", 2), getattr(args, "mstate", 8),
                               getattr(args, "mweight", 10000), getattr(args, "k", 3))
    return RunConfig(args.key_size, args.seed, args.transport, _addr(args.cp_addr),
                     _addr(args.csp_addr), params, MatchMode(getattr(args, "mode", "snapshot")),
                     args.threads, args.keys)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "keygen" and not args.party:
        args.party = ["hospital", "patient"]
    try:
        cfg = config_from_args(args)
        cfg.validate()
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FixtureError as exc:
        print(f"fixture error: {exc}", file=sys.stderr)
        return EXIT_FIXTURE
    except SessionAbort as exc:
        print(f"protocol aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
